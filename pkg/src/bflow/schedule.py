"""Accuracy schedules: cumulative accuracy beta(t), rate alpha(t), step sizes.

Two closed forms cover both data families:

* ``ContinuousSigma(sigma1)``: beta(t) = sigma1**(-2t) - 1, the schedule
  under which the input-distribution entropy decreases linearly in t.
* ``DiscreteQuadratic(beta1)``: beta(t) = beta1 * t**2.

Schedules are immutable value objects; every quantity is a cheap closed
form, so nothing is cached.
"""

import math
from dataclasses import dataclass


@dataclass(frozen=True)
class ContinuousSigma:
    """Schedule parameterised by the input std at t=1; sigma1 in (0, 1)."""

    sigma1: float

    def __post_init__(self):
        if not (0.0 < self.sigma1 < 1.0):
            raise ValueError(f"sigma1 must be in (0, 1), got {self.sigma1}")

    def beta(self, t):
        _check_t(t)
        if t == 0.0:
            return 0.0
        return self.sigma1 ** (-2.0 * t) - 1.0

    def alpha(self, t):
        _check_t(t)
        return -2.0 * math.log(self.sigma1) * self.sigma1 ** (-2.0 * t)

    def step_alpha(self, i, n):
        _check_step(i, n)
        return self.sigma1 ** (-2.0 * i / n) * (1.0 - self.sigma1 ** (2.0 / n))


@dataclass(frozen=True)
class DiscreteQuadratic:
    """Quadratic schedule with total accuracy beta1 > 0 at t=1."""

    beta1: float

    def __post_init__(self):
        if not self.beta1 > 0.0:
            raise ValueError(f"beta1 must be positive, got {self.beta1}")

    def beta(self, t):
        _check_t(t)
        return self.beta1 * t * t

    def alpha(self, t):
        _check_t(t)
        return 2.0 * self.beta1 * t

    def step_alpha(self, i, n):
        _check_step(i, n)
        return self.beta1 * (2.0 * i - 1.0) / (n * n)


def _check_t(t):
    if not (0.0 <= t <= 1.0):
        raise ValueError(f"t must lie in [0, 1], got {t}")


def _check_step(i, n):
    if not (isinstance(i, int) and isinstance(n, int)):
        raise ValueError("step index and count must be integers")
    if n < 1 or not (1 <= i <= n):
        raise ValueError(f"need 1 <= i <= n, got i={i}, n={n}")


# Default hyperparameter presets (finely vs coarsely discretised images,
# binary bitmaps, 27-symbol character data).
PRESETS = {
    "cts-256bin": ContinuousSigma(0.001),
    "cts-16bin": ContinuousSigma(math.sqrt(0.001)),
    "binary": DiscreteQuadratic(3.0),
    "chars27": DiscreteQuadratic(0.75),
}
