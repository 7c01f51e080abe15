"""Deterministic numerical substrate: splittable RNG and stable primitives.

All arithmetic is 64-bit.  Randomness comes from a counter-based Philox
generator keyed by a SHA-256 hash of ``(seed, split path)``, which gives
two guarantees the rest of the library relies on:

* the same seed always produces the same draw sequence, bit for bit,
  across processes and platforms;
* ``split`` produces statistically independent streams and re-splitting
  with the same stream id is reproducible.
"""

import hashlib

import numpy as np

from . import kernels


class Rng:
    """Single-owner random stream.  Parallel users must ``split`` first."""

    def __init__(self, seed, _path=()):
        self.seed = int(seed)
        self._path = tuple(int(p) for p in _path)
        digest = hashlib.sha256(repr((self.seed,) + self._path).encode("ascii")).digest()
        key = int.from_bytes(digest[:16], "little")
        self._gen = np.random.Generator(np.random.Philox(key=key))
        self.draws = 0

    def split(self, stream_id):
        """Independent child stream; same stream_id -> same child."""
        return Rng(self.seed, self._path + (int(stream_id),))

    def standard_normal(self, size=None):
        out = self._gen.standard_normal(size)
        self.draws += int(np.size(out))
        return out

    def uniform(self, size=None):
        out = self._gen.random(size)
        self.draws += int(np.size(out))
        return out

    def integers(self, low, high, size=None):
        out = self._gen.integers(low, high, size=size)
        self.draws += int(np.size(out))
        return out

    def multinomial(self, n, pvals, size=None):
        out = self._gen.multinomial(n, pvals, size=size)
        self.draws += int(np.size(out))
        return out

    def state(self):
        return self._gen.bit_generator.state

    def set_state(self, state):
        self._gen.bit_generator.state = state


def gaussian_sample(rng, mean, var):
    """Draw mean + sqrt(var) * z with z iid standard normal.

    var may be a positive scalar or a positive array broadcastable to mean.
    """
    mean = np.asarray(mean, dtype=np.float64)
    var = np.asarray(var, dtype=np.float64)
    if np.any(var <= 0.0):
        raise ValueError("variance must be positive")
    return mean + np.sqrt(var) * rng.standard_normal(mean.shape)


def erf(x):
    """Error function; scalar in, scalar out, array in, array out."""
    if np.isscalar(x) or np.ndim(x) == 0:
        return float(kernels.erf_vec(np.array([float(x)]))[0])
    return kernels.erf_vec(np.asarray(x, dtype=np.float64))


def softmax(logits):
    """Simplex projection of a 1-D logit vector, max-subtracted for stability."""
    logits = np.asarray(logits, dtype=np.float64)
    z = logits - np.max(logits)
    e = np.exp(z)
    return e / np.sum(e)


def softmax_rows(logits):
    """Row-wise softmax of a 2-D array."""
    logits = np.asarray(logits, dtype=np.float64)
    z = logits - np.max(logits, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=-1, keepdims=True)


def log_gaussian_pdf(y, mean, var):
    """Log-density of an isotropic Gaussian, summed over dimensions."""
    var = float(var)
    if var <= 0.0:
        raise ValueError("variance must be positive")
    y = np.asarray(y, dtype=np.float64)
    mean = np.asarray(mean, dtype=np.float64)
    d = y.size
    resid = y - mean
    return -0.5 * d * np.log(2.0 * np.pi * var) - 0.5 * float(np.dot(resid.ravel(), resid.ravel())) / var


def log_sum_exp(terms):
    """ln(sum(exp(terms))) for a non-empty 1-D array, stable for terms <= -1e6."""
    terms = np.asarray(terms, dtype=np.float64)
    if terms.size == 0:
        raise ValueError("log_sum_exp of empty input")
    hi = np.max(terms)
    if hi == -np.inf:
        return -np.inf
    return float(hi + np.log(np.sum(np.exp(terms - hi))))


def sample_categorical_rows(rng, probs):
    """One draw per row of a (D, K) probability matrix; 1-based indices."""
    probs = np.asarray(probs, dtype=np.float64)
    cum = np.cumsum(probs, axis=1)
    # guard against rounding in the final column
    cum[:, -1] = np.maximum(cum[:, -1], 1.0)
    u = rng.uniform(size=(probs.shape[0], 1))
    return 1 + np.sum(u > cum, axis=1).astype(np.int64)
