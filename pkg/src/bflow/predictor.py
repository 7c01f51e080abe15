"""Predictors: the trainable MLP with hand-written reverse-mode gradients,
plus exact oracle predictors used by the verification harness and tests.

A predictor maps a modality-encoded state vector and a process time to a
raw output vector:

* continuous:  D inputs (belief means) -> D noise estimates
* discretised: D inputs -> 2D outputs (noise mean, log noise std)
* discrete:    K*D inputs (rescaled probabilities) -> K*D logits,
               or D -> D when K == 2

Gradients are written per layer rather than pulled from an autodiff
framework, which keeps the package self-contained and makes the
finite-difference checks in the test suite meaningful.
"""

from dataclasses import dataclass

import numpy as np

from .numerics import Rng

MODALITIES = ("continuous", "discretised", "discrete")


@dataclass(frozen=True)
class PredictorSpec:
    modality: str
    D: int
    K: int = 0
    hidden: tuple = (256, 256)
    activation: str = "silu"
    time_feature: str = "fourier"  # or "raw"
    n_freqs: int = 8

    def __post_init__(self):
        if self.modality not in MODALITIES:
            raise ValueError(f"unknown modality {self.modality!r}")
        if self.modality == "discrete" and self.K < 2:
            raise ValueError("discrete modality needs K >= 2")
        if self.activation not in ("silu", "tanh"):
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.time_feature not in ("fourier", "raw"):
            raise ValueError(f"unknown time feature {self.time_feature!r}")

    @property
    def state_width(self):
        if self.modality in ("continuous", "discretised"):
            return self.D
        return self.D if self.K == 2 else self.D * self.K

    @property
    def output_width(self):
        if self.modality == "continuous":
            return self.D
        if self.modality == "discretised":
            return 2 * self.D
        return self.D if self.K == 2 else self.D * self.K

    @property
    def time_width(self):
        return 1 if self.time_feature == "raw" else 2 * self.n_freqs

    @property
    def input_width(self):
        return self.state_width + self.time_width


def time_features(spec, t):
    """Encode times (scalar or (B,)) as (B, time_width)."""
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    if spec.time_feature == "raw":
        return t[:, None]
    j = np.arange(spec.n_freqs)
    ang = (2.0**j)[None, :] * np.pi * t[:, None]
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)


def _silu(z):
    s = 1.0 / (1.0 + np.exp(-z))
    return z * s


def _silu_grad(z):
    s = 1.0 / (1.0 + np.exp(-z))
    return s * (1.0 + z * (1.0 - s))


_ACTIVATIONS = {
    "silu": (_silu, _silu_grad),
    "tanh": (np.tanh, lambda z: 1.0 - np.tanh(z) ** 2),
}


class MLP:
    """Fully-connected predictor with a recorded-tape backward pass.

    Parameters live in one flat float64 vector; ``layout`` maps slice
    offsets to (name, shape) so the vector round-trips losslessly through
    checkpoints.
    """

    def __init__(self, spec, seed=0):
        self.spec = spec
        widths = [spec.input_width, *spec.hidden, spec.output_width]
        self.layout = []
        offset = 0
        for li in range(len(widths) - 1):
            fan_in, fan_out = widths[li], widths[li + 1]
            self.layout.append((f"W{li}", (fan_in, fan_out), offset))
            offset += fan_in * fan_out
            self.layout.append((f"b{li}", (fan_out,), offset))
            offset += fan_out
        self.n_params = offset
        self.params = np.zeros(self.n_params)
        rng = Rng(seed, _path=(0xA11,))
        n_layers = len(self.layout) // 2
        for name, shape, off in self.layout:
            # output layer starts at zero so the initial prediction is the
            # all-zero vector, a sane starting estimate for every modality
            if name.startswith("W") and name != f"W{n_layers - 1}":
                fan_in = shape[0]
                w = rng.standard_normal(shape) / np.sqrt(fan_in)
                self.params[off : off + w.size] = w.ravel()
        self._act, self._act_grad = _ACTIVATIONS[spec.activation]
        self._tape = None

    def _weights(self):
        out = {}
        for name, shape, off in self.layout:
            out[name] = self.params[off : off + int(np.prod(shape))].reshape(shape)
        return out

    def forward_batch(self, X, t, record=False):
        """(B, state_width), (B,) -> (B, output_width)."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.spec.state_width:
            raise ValueError(f"input shape {X.shape} does not match state width {self.spec.state_width}")
        feats = time_features(self.spec, t)
        if feats.shape[0] == 1 and X.shape[0] > 1:
            feats = np.broadcast_to(feats, (X.shape[0], feats.shape[1]))
        h = np.concatenate([X, feats], axis=1)
        w = self._weights()
        n_layers = len(self.layout) // 2
        tape = [h]
        pre = []
        for li in range(n_layers):
            z = h @ w[f"W{li}"] + w[f"b{li}"]
            if li < n_layers - 1:
                pre.append(z)
                h = self._act(z)
                tape.append(h)
            else:
                h = z
        if record:
            self._tape = (tape, pre)
        return h

    def forward(self, state, t):
        return self.forward_batch(np.asarray(state, dtype=np.float64)[None, :], float(t))[0]

    def backward_batch(self, d_out):
        """Gradient of sum(output * d_out) w.r.t. params, as a flat vector.

        Requires a preceding ``forward_batch(..., record=True)``.
        """
        if self._tape is None:
            raise ValueError("no recorded forward pass")
        tape, pre = self._tape
        d_out = np.asarray(d_out, dtype=np.float64)
        w = self._weights()
        n_layers = len(self.layout) // 2
        grads = {}
        delta = d_out
        for li in range(n_layers - 1, -1, -1):
            grads[f"W{li}"] = tape[li].T @ delta
            grads[f"b{li}"] = delta.sum(axis=0)
            if li > 0:
                delta = (delta @ w[f"W{li}"].T) * self._act_grad(pre[li - 1])
        flat = np.zeros_like(self.params)
        for name, shape, off in self.layout:
            flat[off : off + int(np.prod(shape))] = grads[name].ravel()
        return flat


class ConstantPredictor:
    """Emits a fixed vector regardless of input; no learnable state.

    With ``predicts_data=True`` the continuous adapter treats the vector
    as a data estimate rather than a noise estimate, so a constant equal
    to the true datum is a perfect predictor with exactly zero residual.
    """

    def __init__(self, values, predicts_data=False):
        self.values = np.asarray(values, dtype=np.float64)
        self.predicts_data = bool(predicts_data)

    def forward(self, state, t):
        return self.values.copy()


class CtsDatumPredictor:
    """Noise estimate consistent with a fixed data estimate x_star.

    Inverting the noise-to-data map at the observed belief mean recovers
    x_star exactly (before clipping), so with x_star equal to the true
    datum this is a perfect predictor.
    """

    def __init__(self, x_star, sigma1):
        self.x_star = np.asarray(x_star, dtype=np.float64)
        self.sigma1 = float(sigma1)

    def forward(self, state, t):
        g = 1.0 - self.sigma1 ** (2.0 * float(t))
        return (np.asarray(state) - g * self.x_star) / np.sqrt(g * (1.0 - g))


class CtsPosteriorPredictor:
    """Exact posterior-mean predictor for a small finite dataset.

    Weights each dataset atom by the Gaussian likelihood of the observed
    belief mean and returns the noise estimate consistent with the
    resulting posterior mean.
    """

    def __init__(self, dataset, sigma1):
        self.dataset = np.asarray(dataset, dtype=np.float64)
        if self.dataset.ndim != 2 or len(self.dataset) > 64:
            raise ValueError("dataset must be (N<=64, D)")
        self.sigma1 = float(sigma1)

    def posterior_mean(self, mean, t):
        g = 1.0 - self.sigma1 ** (2.0 * float(t))
        var = g * (1.0 - g)
        d2 = np.sum((mean[None, :] - g * self.dataset) ** 2, axis=1)
        logw = -0.5 * d2 / var
        logw -= logw.max()
        w = np.exp(logw)
        w /= w.sum()
        return w @ self.dataset

    def forward(self, state, t):
        state = np.asarray(state, dtype=np.float64)
        g = 1.0 - self.sigma1 ** (2.0 * float(t))
        x_hat = self.posterior_mean(state, t)
        return (state - g * x_hat) / np.sqrt(g * (1.0 - g))


class DiscretisedDatumPredictor:
    """(noise mean, log noise std) pair placing the data Gaussian at
    mu_star with width sigma_star, independent of the belief state."""

    def __init__(self, mu_star, sigma_star, sigma1):
        self.mu_star = np.asarray(mu_star, dtype=np.float64)
        self.sigma_star = float(sigma_star)
        self.sigma1 = float(sigma1)

    def forward(self, state, t):
        state = np.asarray(state, dtype=np.float64)
        g = 1.0 - self.sigma1 ** (2.0 * float(t))
        ratio = np.sqrt((1.0 - g) / g)
        mu_eps = (state / g - self.mu_star) / ratio
        ln_sigma_eps = np.full_like(state, np.log(self.sigma_star / ratio))
        return np.concatenate([mu_eps, ln_sigma_eps])


class DiscreteOneHotPredictor:
    """Logits that softmax to a one-hot at fixed classes (within 1e-6)."""

    def __init__(self, x_star, K, sharpness=40.0):
        self.x_star = np.asarray(x_star, dtype=np.int64)
        self.K = int(K)
        self.sharpness = float(sharpness)

    def forward(self, state, t):
        D = self.x_star.size
        if self.K == 2:
            sign = np.where(self.x_star == 1, 1.0, -1.0)
            return self.sharpness * sign
        logits = np.zeros((D, self.K))
        logits[np.arange(D), self.x_star - 1] = self.sharpness
        return logits.ravel()


class DiscreteConstantProbsPredictor:
    """Fixed output row p_star for every dimension, independent of state."""

    def __init__(self, p_star, D):
        p_star = np.asarray(p_star, dtype=np.float64)
        self.logits = np.tile(np.log(p_star), (D, 1)).ravel()
        self.K = p_star.size
        self.D = D

    def forward(self, state, t):
        if self.K == 2:
            row = self.logits[: self.K]
            return np.full(self.D, row[0] - row[1])
        return self.logits.copy()
