"""Continuous data: Gaussian input beliefs, noise-parameterised prediction,
transmission losses and ancestral sampling.

The belief state over D-dimensional data is a diagonal Gaussian with a
shared scalar precision.  Precision is data-independent (every update adds
the same accuracy to every dimension), so along a schedule it can always be
recomputed as ``1 + beta(t)``; the sampling loop uses that closed form so
the final precision is exact rather than an accumulated float sum.
"""

from dataclasses import dataclass

import numpy as np

from .numerics import gaussian_sample
from .schedule import ContinuousSigma


@dataclass(frozen=True)
class CtsConfig:
    sigma1: float
    D: int
    t_min: float = 1e-6
    x_min: float = -1.0
    x_max: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.t_min < 0.1):
            raise ValueError("t_min must lie in (0, 0.1)")
        if not self.x_min < self.x_max:
            raise ValueError("x_min must be below x_max")
        ContinuousSigma(self.sigma1)  # validates range

    @property
    def schedule(self):
        return ContinuousSigma(self.sigma1)


@dataclass
class CtsParams:
    """Input-distribution state: per-dimension mean, shared precision >= 1."""

    mean: np.ndarray
    precision: float


def prior(D):
    return CtsParams(mean=np.zeros(D), precision=1.0)


def gamma(cfg, t):
    """Fraction of the data present in the expected belief mean at time t."""
    return 1.0 - cfg.sigma1 ** (2.0 * t)


def bayes_update(p, y, alpha):
    """Precision-weighted posterior after observing y at accuracy alpha."""
    if not alpha > 0.0:
        raise ValueError("alpha must be positive")
    y = np.asarray(y, dtype=np.float64)
    if y.shape != p.mean.shape:
        raise ValueError("observation length does not match state dimension")
    precision = p.precision + alpha
    mean = (p.mean * p.precision + y * alpha) / precision
    return CtsParams(mean=mean, precision=precision)


def flow_sample(rng, cfg, x, t):
    """Draw the belief state at time t directly, collapsing all updates.

    mean ~ N(gamma(t) x, gamma(t)(1 - gamma(t)) I); precision = 1 + beta(t).
    At t=0 the state is exactly the prior.
    """
    x = np.asarray(x, dtype=np.float64)
    if np.any(x < cfg.x_min) or np.any(x > cfg.x_max):
        raise ValueError("data outside configured range")
    g = gamma(cfg, t)
    precision = 1.0 + cfg.schedule.beta(t)
    if g == 0.0:
        return CtsParams(mean=np.zeros_like(x), precision=precision)
    mean = gaussian_sample(rng, g * x, g * (1.0 - g))
    return CtsParams(mean=mean, precision=precision)


def prediction_from_noise(cfg, mean, g, noise_estimate):
    """Map a noise estimate back to a clipped data estimate."""
    x_hat = mean / g - np.sqrt((1.0 - g) / g) * noise_estimate
    return np.clip(x_hat, cfg.x_min, cfg.x_max)


def output_prediction(predictor, cfg, p, t):
    """Data estimate at (state, time); zero below the t_min cutoff.

    Predictors emit noise estimates by default.  A predictor carrying a
    truthy ``predicts_data`` attribute emits data estimates directly and
    skips the noise transform (the two are algebraically equivalent).
    """
    if not (0.0 <= t <= 1.0):
        raise ValueError("t must lie in [0, 1]")
    if t < cfg.t_min:
        return np.zeros(cfg.D)
    raw = np.asarray(predictor.forward(p.mean, t), dtype=np.float64)
    if raw.shape != (cfg.D,):
        raise ValueError(f"predictor returned shape {raw.shape}, expected ({cfg.D},)")
    if getattr(predictor, "predicts_data", False):
        return np.clip(raw, cfg.x_min, cfg.x_max)
    return prediction_from_noise(cfg, p.mean, gamma(cfg, t), raw)


def loss_n_step(rng, predictor, cfg, x, n, i=None):
    """Single-sample estimate of the n-step transmission loss, in nats."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if i is None:
        i = int(rng.integers(1, n + 1))
    elif not (1 <= i <= n):
        raise ValueError(f"need 1 <= i <= n, got i={i}")
    x = np.asarray(x, dtype=np.float64)
    t = (i - 1) / n
    p = flow_sample(rng, cfg, x, t)
    x_hat = output_prediction(predictor, cfg, p, t)
    resid = x - x_hat
    weight = n * (1.0 - cfg.sigma1 ** (2.0 / n)) / (2.0 * cfg.sigma1 ** (2.0 * i / n))
    return weight * float(np.dot(resid, resid))


def loss_cts_time(rng, predictor, cfg, x, t=None):
    """Single-sample estimate of the continuous-time loss, in nats."""
    if t is None:
        t = float(rng.uniform())
    elif not (0.0 <= t <= 1.0):
        raise ValueError("t must lie in [0, 1]")
    x = np.asarray(x, dtype=np.float64)
    p = flow_sample(rng, cfg, x, t)
    x_hat = output_prediction(predictor, cfg, p, t)
    resid = x - x_hat
    weight = -np.log(cfg.sigma1) * cfg.sigma1 ** (-2.0 * t)
    return weight * float(np.dot(resid, resid))


def reconstruction_loss(rng, predictor, cfg, x, noise_sigma):
    """Final-transmission cost under measurement noise of std noise_sigma."""
    if not noise_sigma > 0.0:
        raise ValueError("noise_sigma must be positive")
    x = np.asarray(x, dtype=np.float64)
    p = flow_sample(rng, cfg, x, 1.0)
    x_hat = output_prediction(predictor, cfg, p, 1.0)
    resid = x - x_hat
    return float(np.dot(resid, resid)) / (2.0 * noise_sigma**2)


def generate(rng, predictor, cfg, n, return_params=False):
    """n-step ancestral sampling; returns the final clipped data estimate.

    The output prediction is evaluated once per step plus once at t=1;
    the first step sits below t_min, where the prediction is pinned to
    zero without reaching the predictor.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    sched = cfg.schedule
    p = prior(cfg.D)
    for i in range(1, n + 1):
        t = (i - 1) / n
        x_hat = output_prediction(predictor, cfg, p, t)
        alpha = sched.step_alpha(i, n)
        y = gaussian_sample(rng, x_hat, 1.0 / alpha)
        # precision in closed form: identical in exact arithmetic to
        # p.precision + alpha, avoids accumulated rounding over many steps
        precision = 1.0 + sched.beta(i / n)
        mean = (p.mean * p.precision + y * alpha) / precision
        p = CtsParams(mean=mean, precision=precision)
    x_final = output_prediction(predictor, cfg, p, 1.0)
    if return_params:
        return x_final, p
    return x_final
