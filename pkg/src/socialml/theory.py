"""Consistency guarantees as executable formulas.

The central quantity is an error exponent measuring how far the network
target risk sits from the log(2) uninformed boundary.  It comes from the
unique real root y > 1 of the cubic

    e^r y^3 - y - 1 = 0,        exponent(r) = log(y) / 4,

solved here by bisection (the cubic is strictly increasing in y on y >= 1,
so bisection is exact and robust; the closed-form radicals are kept only as
a cross-check).  The exponent feeds an exponential lower bound on the
probability that training produces models consistent during prediction, and
inverting that bound gives the training-set size needed for a target
confidence.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

LOG2 = math.log(2.0)
# 4 * exponent(0), the reported constant for the zero-risk endpoint
FOUR_EXPONENT_AT_ZERO = 0.2812


class TheoryError(ValueError):
    """Inputs outside the validity region of a bound."""


def _cubic(r: float, y: float) -> float:
    return math.exp(r) * y**3 - y - 1.0


def exact_exponent(target_risk: float) -> float:
    """Error exponent from the cubic root, valid for 0 <= risk < log 2."""
    if not 0.0 <= target_risk < LOG2:
        raise TheoryError(f"target risk must lie in [0, log 2), got {target_risk}")
    lo, hi = 1.0, 2.0
    # cubic(lo) = e^r - 2 <= 0 and cubic(hi) = 8 e^r - 3 > 0 on the valid range
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if _cubic(target_risk, mid) > 0.0:
            hi = mid
        else:
            lo = mid
    root = 0.5 * (lo + hi)
    return 0.25 * math.log(root)


def exact_exponent_closed_form(target_risk: float) -> float:
    """Radical form of the cubic root; numerically delicate, cross-check only."""
    if not 0.0 <= target_risk < LOG2:
        raise TheoryError(f"target risk must lie in [0, log 2), got {target_risk}")
    r = target_risk
    z = 9.0 * math.exp(2 * r) + math.sqrt(
        3.0 * math.exp(3 * r) * (-4.0 + 27.0 * math.exp(r))
    )
    y = (2.0 * 3.0 ** (1 / 3) + 2.0 ** (1 / 3) * math.exp(-r) * z ** (2 / 3)) / (
        6.0 ** (2 / 3) * z ** (1 / 3)
    )
    return 0.25 * math.log(y)


def approx_exponent(target_risk: float) -> float:
    """Linear fit of the exponent: (0.2812 / 4) * (1 - risk / log 2)."""
    if not 0.0 <= target_risk <= LOG2:
        raise TheoryError(f"target risk must lie in [0, log 2], got {target_risk}")
    return 0.25 * FOUR_EXPONENT_AT_ZERO * (1.0 - target_risk / LOG2)


@dataclass(frozen=True)
class TrainingProfile:
    """Per-agent training-set sizes and the derived imbalance penalties."""

    sample_counts: tuple
    perron: np.ndarray

    def __post_init__(self):
        counts = tuple(int(n) for n in self.sample_counts)
        pi = np.asarray(self.perron, dtype=float)
        if any(n < 1 for n in counts):
            raise TheoryError("sample counts must be positive")
        if pi.shape != (len(counts),):
            raise TheoryError("Perron vector length must match the agent count")
        if np.any(pi <= 0) or abs(pi.sum() - 1.0) > 1e-10:
            raise TheoryError("Perron weights must be positive and sum to 1")
        object.__setattr__(self, "sample_counts", counts)
        object.__setattr__(self, "perron", pi)

    @property
    def n_max(self) -> int:
        return max(self.sample_counts)

    @property
    def alpha_k(self) -> np.ndarray:
        return self.n_max / np.asarray(self.sample_counts, dtype=float)

    @property
    def alpha(self) -> float:
        return float(self.perron @ self.alpha_k)


@dataclass(frozen=True)
class BoundInputs:
    """Ingredients of the consistency-probability bound."""

    target_risk: float
    beta: float | np.ndarray  # scalar bound, or one bound per agent
    complexity: float  # network-averaged classifier complexity
    profile: TrainingProfile

    def __post_init__(self):
        if not 0.0 <= self.target_risk < LOG2:
            raise TheoryError("target risk must lie in [0, log 2)")
        beta = np.asarray(self.beta, dtype=float)
        if np.any(beta <= 0):
            raise TheoryError("beta must be positive")
        if beta.ndim not in (0, 1):
            raise TheoryError("beta must be a scalar or one value per agent")
        if beta.ndim == 1 and beta.shape[0] != len(self.profile.sample_counts):
            raise TheoryError("per-agent beta length must match the agent count")
        if self.complexity < 0:
            raise TheoryError("complexity must be nonnegative")


@dataclass(frozen=True)
class ConsistencyBound:
    exponent: float  # exact exponent at the target risk
    raw: float  # 1 - 2 exp(-...), may be negative
    value: float  # clamped to [0, 1)
    vacuous: bool  # complexity at or above the exponent


def pc_lower_bound(inputs: BoundInputs) -> ConsistencyBound:
    """Lower bound on the probability that training yields consistent models.

    With a scalar beta the exponent reads
    ``8 N_max (exponent - complexity)^2 / (alpha beta)^2``; with per-agent
    betas the denominator uses the network average of alpha_k * beta_k.  When
    the complexity is not strictly below the exponent the bound carries no
    information and is reported with the vacuous flag set and value 0.
    """
    profile = inputs.profile
    eps = exact_exponent(inputs.target_risk)
    beta = np.asarray(inputs.beta, dtype=float)
    if beta.ndim == 0:
        denom = profile.alpha * float(beta)
    else:
        denom = float(profile.perron @ (profile.alpha_k * beta))
    gap = eps - inputs.complexity
    raw = 1.0 - 2.0 * math.exp(-8.0 * profile.n_max * gap**2 / denom**2)
    vacuous = not inputs.complexity < eps
    value = 0.0 if vacuous else max(0.0, raw)
    return ConsistencyBound(exponent=eps, raw=raw, value=value, vacuous=vacuous)


def network_complexity_bound(constants, profile: TrainingProfile) -> tuple[float, float]:
    """Combine per-agent complexity constants C_k into the network bound.

    Returns ``(rho_bound, C)`` with ``C = sum_k pi_k C_k sqrt(alpha_k)`` and
    ``rho_bound = C / sqrt(N_max)``.
    """
    c = np.asarray(constants, dtype=float)
    if c.shape != (len(profile.sample_counts),):
        raise TheoryError("need one complexity constant per agent")
    if np.any(c < 0):
        raise TheoryError("complexity constants must be nonnegative")
    mixed = float(profile.perron @ (c * np.sqrt(profile.alpha_k)))
    return mixed / math.sqrt(profile.n_max), mixed


def sample_complexity(
    c_mixed: float, target_risk: float, alpha: float, beta: float, epsilon: float
) -> int:
    """Smallest N_max guaranteeing consistent learning with confidence 1 - epsilon."""
    if not 0.0 < epsilon < 1.0:
        raise TheoryError("epsilon must lie in (0, 1)")
    if c_mixed <= 0 or beta <= 0 or alpha < 1:
        raise TheoryError("need C > 0, beta > 0, alpha >= 1")
    eps = exact_exponent(target_risk)
    bracket = 1.0 + (alpha * beta / (2.0 * c_mixed)) * math.sqrt(
        0.5 * math.log(2.0 / epsilon)
    )
    threshold = (c_mixed / eps) ** 2 * bracket**2
    return int(math.floor(threshold)) + 1


def self_consistency_check(
    c_mixed: float, target_risk: float, alpha: float, beta: float, epsilon: float
) -> tuple[bool, dict]:
    """Plug the sample-complexity answer back into the probability bound.

    Returns ``(ok, details)``; ``ok`` means the bound evaluated at
    ``N = sample_complexity(...)`` with complexity ``C / sqrt(N)`` reaches at
    least ``1 - epsilon``.  If the plug-in lands in the vacuous region the
    check is skipped and reported as such.
    """
    n_needed = sample_complexity(c_mixed, target_risk, alpha, beta, epsilon)
    rho = c_mixed / math.sqrt(n_needed)
    profile = TrainingProfile((n_needed,), np.array([1.0]))
    # alpha/beta enter only through their product; fold alpha into beta so the
    # single-agent profile reproduces the requested penalty
    bound = pc_lower_bound(
        BoundInputs(target_risk, alpha * beta, rho, profile)
    )
    details = {
        "n_max": n_needed,
        "plug_in_complexity": rho,
        "bound": bound.value,
        "target": 1.0 - epsilon,
        "skipped_vacuous": bound.vacuous,
    }
    if bound.vacuous:
        return False, details
    return bound.value >= 1.0 - epsilon, details
