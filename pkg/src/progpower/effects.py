"""Scalar effect measures contrasting two counterfactual means.

A measure maps (psi1, psi0) to a single effect value, carries its no-effect
value, its admissible domain, and an analytic gradient.  The gradient signs
(nonnegative in psi1, nonpositive in psi0) are what downstream variance and
power formulas rely on, so custom measures are checked numerically on a grid
before use.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

__all__ = [
    "EffectDomainError",
    "EffectSolveError",
    "EffectMeasure",
    "MonotonicityReport",
    "DIFFERENCE",
    "RATIO",
    "ODDS_RATIO",
    "BUILTIN_EFFECTS",
    "get_effect",
    "make_custom_effect",
    "evaluate_effect",
    "effect_gradient",
    "solve_psi1",
    "check_monotonicity",
    "default_check_grid",
]


class EffectDomainError(ValueError):
    """Raised when (psi1, psi0) falls outside a measure's admissible domain."""


class EffectSolveError(ValueError):
    """Raised when no admissible psi1 attains the requested effect value."""


@dataclass(frozen=True)
class EffectMeasure:
    """An effect scale with its null value, domain, and analytic gradient.

    evaluate(psi1, psi0) -> effect value
    grad(psi1, psi0) -> (d/dpsi1, d/dpsi0)
    in_domain(psi1, psi0) -> bool, vectorized over numpy inputs
    """

    name: str
    null_value: float
    evaluate_fn: Callable[[float, float], float]
    grad_fn: Callable[[float, float], tuple[float, float]]
    in_domain_fn: Callable[[float, float], bool]
    domain_note: str

    def in_domain(self, psi1: float, psi0: float) -> bool:
        return bool(self.in_domain_fn(psi1, psi0))

    def _require_domain(self, psi1: float, psi0: float) -> None:
        if not self.in_domain(psi1, psi0):
            raise EffectDomainError(
                f"({psi1}, {psi0}) outside the domain of the {self.name} "
                f"measure ({self.domain_note})"
            )

    def evaluate(self, psi1: float, psi0: float) -> float:
        self._require_domain(psi1, psi0)
        return float(self.evaluate_fn(psi1, psi0))

    def gradient(self, psi1: float, psi0: float) -> tuple[float, float]:
        self._require_domain(psi1, psi0)
        g1, g0 = self.grad_fn(psi1, psi0)
        return float(g1), float(g0)


def evaluate_effect(effect: EffectMeasure, psi1: float, psi0: float) -> float:
    return effect.evaluate(psi1, psi0)


def effect_gradient(effect: EffectMeasure, psi1: float, psi0: float) -> tuple[float, float]:
    return effect.gradient(psi1, psi0)


DIFFERENCE = EffectMeasure(
    name="difference",
    null_value=0.0,
    evaluate_fn=lambda p1, p0: p1 - p0,
    grad_fn=lambda p1, p0: (1.0, -1.0),
    in_domain_fn=lambda p1, p0: np.isfinite(p1) and np.isfinite(p0),
    domain_note="any finite means",
)

RATIO = EffectMeasure(
    name="ratio",
    null_value=1.0,
    evaluate_fn=lambda p1, p0: p1 / p0,
    grad_fn=lambda p1, p0: (1.0 / p0, -p1 / p0**2),
    in_domain_fn=lambda p1, p0: np.isfinite(p1) and np.isfinite(p0) and p0 > 0.0 and p1 >= 0.0,
    domain_note="psi0 > 0 and psi1 >= 0",
)


def _odds(p: float) -> float:
    return p / (1.0 - p)


ODDS_RATIO = EffectMeasure(
    name="odds-ratio",
    null_value=1.0,
    evaluate_fn=lambda p1, p0: _odds(p1) / _odds(p0),
    grad_fn=lambda p1, p0: (
        (1.0 - p0) / (p0 * (1.0 - p1) ** 2),
        -p1 / ((1.0 - p1) * p0**2),
    ),
    in_domain_fn=lambda p1, p0: bool(0.0 < p1 < 1.0) and bool(0.0 < p0 < 1.0),
    domain_note="both means strictly inside (0, 1)",
)

BUILTIN_EFFECTS: dict[str, EffectMeasure] = {
    "difference": DIFFERENCE,
    "ratio": RATIO,
    "odds-ratio": ODDS_RATIO,
}


def get_effect(name: str) -> EffectMeasure:
    try:
        return BUILTIN_EFFECTS[name]
    except KeyError:
        known = ", ".join(sorted(BUILTIN_EFFECTS))
        raise EffectDomainError(f"unknown effect measure {name!r}; known: {known}") from None


def default_check_grid(effect: EffectMeasure, num: int = 12) -> list[tuple[float, float]]:
    """Admissible (psi1, psi0) pairs for numeric checks.

    Spans (0.05, 5)^2 plus a refinement of (0.05, 0.95)^2 so that measures
    confined to the unit interval still get a dense grid.
    """
    values = np.concatenate([np.linspace(0.05, 5.0, num), np.linspace(0.05, 0.95, num)])
    values = np.unique(values)
    return [
        (float(p1), float(p0))
        for p1 in values
        for p0 in values
        if effect.in_domain(p1, p0)
    ]


@dataclass(frozen=True)
class MonotonicityReport:
    """Grid check of the gradient-sign convention for an effect measure."""

    effect_name: str
    checked: int
    violations: tuple[tuple[float, float, float, float], ...]

    @property
    def ok(self) -> bool:
        return not self.violations


def check_monotonicity(
    effect: EffectMeasure, grid: list[tuple[float, float]] | None = None
) -> MonotonicityReport:
    """Flag grid points where d/dpsi1 < 0 or d/dpsi0 > 0."""
    if grid is None:
        grid = default_check_grid(effect)
    violations = []
    checked = 0
    for p1, p0 in grid:
        if not effect.in_domain(p1, p0):
            continue
        checked += 1
        g1, g0 = effect.gradient(p1, p0)
        if g1 < 0.0 or g0 > 0.0:
            violations.append((p1, p0, g1, g0))
    return MonotonicityReport(
        effect_name=effect.name, checked=checked, violations=tuple(violations)
    )


def _central_diff(f: Callable[[float], float], x: float, h: float) -> float:
    return (f(x + h) - f(x - h)) / (2.0 * h)


def make_custom_effect(
    name: str,
    evaluate: Callable[[float, float], float],
    grad: Callable[[float, float], tuple[float, float]],
    null_value: float,
    in_domain: Callable[[float, float], bool] | None = None,
    check_grid: list[tuple[float, float]] | None = None,
    validate: bool = True,
) -> EffectMeasure:
    """Register a user-supplied effect measure.

    With validate=True (the default) the measure is checked numerically on
    the grid: evaluate(psi, psi) must equal null_value, the analytic gradient
    must match a central difference, and the gradient signs must satisfy the
    monotone convention.  Pass validate=False to build an unchecked measure,
    e.g. to inspect a non-monotone candidate with check_monotonicity.
    """
    domain = in_domain if in_domain is not None else (
        lambda p1, p0: bool(np.isfinite(p1)) and bool(np.isfinite(p0))
    )
    measure = EffectMeasure(
        name=name,
        null_value=float(null_value),
        evaluate_fn=evaluate,
        grad_fn=grad,
        in_domain_fn=domain,
        domain_note="user-supplied domain",
    )
    if not validate:
        return measure

    grid = check_grid if check_grid is not None else default_check_grid(measure)
    if not grid:
        raise EffectDomainError(f"custom measure {name!r}: empty check grid")
    for p1, p0 in grid:
        if not measure.in_domain(p1, p0):
            continue
        if measure.in_domain(p1, p1):
            at_null = measure.evaluate(p1, p1)
            if abs(at_null - measure.null_value) > 1e-8 * max(1.0, abs(measure.null_value)):
                raise EffectDomainError(
                    f"custom measure {name!r}: evaluate(psi, psi) = {at_null} "
                    f"at psi = {p1}, expected null value {measure.null_value}"
                )
        g1, g0 = measure.gradient(p1, p0)
        if g1 < 0.0 or g0 > 0.0:
            raise EffectDomainError(
                f"custom measure {name!r}: gradient signs ({g1}, {g0}) at "
                f"({p1}, {p0}) violate the monotone convention"
            )
        h1 = 1e-6 * max(1.0, abs(p1))
        h0 = 1e-6 * max(1.0, abs(p0))
        if measure.in_domain(p1 + h1, p0) and measure.in_domain(p1 - h1, p0):
            fd1 = _central_diff(lambda x: evaluate(x, p0), p1, h1)
            if abs(fd1 - g1) > 1e-4 * max(1.0, abs(g1)):
                raise EffectDomainError(
                    f"custom measure {name!r}: gradient in psi1 disagrees with "
                    f"a finite difference at ({p1}, {p0}): {g1} vs {fd1}"
                )
        if measure.in_domain(p1, p0 + h0) and measure.in_domain(p1, p0 - h0):
            fd0 = _central_diff(lambda x: evaluate(p1, x), p0, h0)
            if abs(fd0 - g0) > 1e-4 * max(1.0, abs(g0)):
                raise EffectDomainError(
                    f"custom measure {name!r}: gradient in psi0 disagrees with "
                    f"a finite difference at ({p1}, {p0}): {g0} vs {fd0}"
                )
    return measure


_SOLVE_TOL = 1e-10
_SOLVE_MAX_ITER = 200


def solve_psi1(effect: EffectMeasure, psi0: float, target: float) -> float:
    """Invert the measure in its first argument: find psi1 with r(psi1, psi0) = target.

    Builtins use closed forms; other measures use bisection after bracketing
    by doubling, relying on monotonicity in psi1.  Unattainable targets raise
    EffectSolveError.
    """
    if effect.name == "difference":
        if not np.isfinite(psi0) or not np.isfinite(target):
            raise EffectSolveError(f"difference: non-finite inputs ({psi0}, {target})")
        return float(psi0 + target)
    if effect.name == "ratio":
        if psi0 <= 0.0:
            raise EffectSolveError(f"ratio: no solution exists for psi0 = {psi0} <= 0")
        if target < 0.0:
            raise EffectSolveError(f"ratio: target {target} outside the attainable range")
        return float(target * psi0)
    if effect.name == "odds-ratio":
        if not (0.0 < psi0 < 1.0):
            raise EffectSolveError(
                f"odds-ratio: no solution exists for psi0 = {psi0} outside (0, 1)"
            )
        if target <= 0.0:
            raise EffectSolveError(
                f"odds-ratio: target {target} outside the attainable range"
            )
        odds1 = target * _odds(psi0)
        return float(odds1 / (1.0 + odds1))

    return _solve_bisect(effect, psi0, target)


def _solve_bisect(effect: EffectMeasure, psi0: float, target: float) -> float:
    def value(psi1: float) -> float:
        return effect.evaluate(psi1, psi0)

    if not effect.in_domain(psi0, psi0):
        raise EffectSolveError(
            f"{effect.name}: psi0 = {psi0} is outside the measure's domain"
        )
    lo = hi = psi0
    f_lo = f_hi = value(psi0)
    if f_lo == target:
        return float(psi0)

    # expand in the direction monotonicity dictates until the target is bracketed
    step = max(1.0, abs(psi0))
    for _ in range(200):
        if f_hi >= target:
            break
        cand = hi + step
        if not effect.in_domain(cand, psi0):
            # halve toward the domain edge before giving up
            edge = hi
            for _ in range(60):
                step *= 0.5
                if effect.in_domain(edge + step, psi0):
                    edge += step
            if effect.in_domain(edge, psi0) and value(edge) >= target:
                hi, f_hi = edge, value(edge)
                break
            raise EffectSolveError(
                f"{effect.name}: target {target} unattainable above psi1 = {hi}"
            )
        hi, f_hi = cand, value(cand)
        step *= 2.0
    else:
        raise EffectSolveError(f"{effect.name}: failed to bracket target {target} from above")

    step = max(1.0, abs(psi0))
    for _ in range(200):
        if f_lo <= target:
            break
        cand = lo - step
        if not effect.in_domain(cand, psi0):
            edge = lo
            for _ in range(60):
                step *= 0.5
                if effect.in_domain(edge - step, psi0):
                    edge -= step
            if effect.in_domain(edge, psi0) and value(edge) <= target:
                lo, f_lo = edge, value(edge)
                break
            raise EffectSolveError(
                f"{effect.name}: target {target} unattainable below psi1 = {lo}"
            )
        lo, f_lo = cand, value(cand)
        step *= 2.0
    else:
        raise EffectSolveError(f"{effect.name}: failed to bracket target {target} from below")

    for _ in range(_SOLVE_MAX_ITER):
        mid = 0.5 * (lo + hi)
        f_mid = value(mid)
        if abs(f_mid - target) <= _SOLVE_TOL:
            return float(mid)
        if f_mid < target:
            lo = mid
        else:
            hi = mid
    raise EffectSolveError(
        f"{effect.name}: bisection did not reach tolerance {_SOLVE_TOL} "
        f"within {_SOLVE_MAX_ITER} iterations"
    )
