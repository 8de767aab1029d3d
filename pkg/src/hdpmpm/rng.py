"""Seedable random streams and the variate generators used by the sampler.

Every draw in the package goes through a :class:`RandomStream`.  A stream is
identified by ``(seed, stream_id)`` and is backed by numpy's PCG64 bit
generator, keyed through :class:`numpy.random.SeedSequence` so that distinct
stream ids give statistically independent, non-overlapping sequences.

Gamma variates use the shape/rate convention throughout::

    gamma_draw(stream, shape=a, rate=b)   # mean a / b, variance a / b**2

All generators accept numpy arrays and broadcast like their numpy
counterparts; scalar inputs give scalar outputs.
"""

from __future__ import annotations

import numpy as np

from .errors import ParameterError

__all__ = [
    "RandomStream",
    "uniform",
    "gamma_draw",
    "beta_draw",
    "dirichlet_draw",
    "categorical_draw",
    "bernoulli_draw",
]

_SEED_MASK = (1 << 64) - 1


class RandomStream:
    """A single-owner, reproducible source of random numbers.

    Parameters
    ----------
    seed : int
        64-bit seed.  Negative values are folded into the unsigned range.
    stream_id : int, default 0
        Substream selector.  Streams sharing a seed but differing in
        ``stream_id`` are independent.
    """

    def __init__(self, seed: int, stream_id: int = 0, _path: tuple = ()):
        if stream_id < 0:
            raise ParameterError(f"stream_id must be non-negative, got {stream_id}")
        self.seed = int(seed) & _SEED_MASK
        self.stream_id = int(stream_id)
        self._path = tuple(_path)
        self._seq = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,) + self._path)
        self.generator = np.random.Generator(np.random.PCG64(self._seq))

    def substream(self, index: int) -> "RandomStream":
        """Return the independent child stream ``index`` of this stream.

        Children are a pure function of ``(seed, stream_id, path, index)`` and
        do not consume draws from the parent.
        """
        return RandomStream(self.seed, self.stream_id, self._path + (int(index),))

    def __repr__(self):
        path = "".join(f"/{p}" for p in self._path)
        return f"RandomStream(seed={self.seed}, stream_id={self.stream_id}{path})"


def _positive(name, value):
    arr = np.asarray(value, dtype=float)
    if not np.all(arr > 0) or not np.all(np.isfinite(arr)):
        raise ParameterError(f"{name} must be positive and finite, got {value!r}")
    return arr


def uniform(stream: RandomStream, size=None):
    """Uniform variate(s) on ``[0, 1)``."""
    return stream.generator.random(size)


def gamma_draw(stream: RandomStream, shape, rate, size=None, check=True):
    """Gamma(shape, rate) variate(s).

    numpy's generator switches to a dedicated rejection sampler for
    ``shape < 1``, so small shapes such as 0.25 are exact.
    """
    if check:
        shape = _positive("shape", shape)
        rate = _positive("rate", rate)
    return stream.generator.gamma(shape, 1.0 / np.asarray(rate, dtype=float), size)


def beta_draw(stream: RandomStream, alpha, beta, size=None, check=True):
    """Beta(alpha, beta) variate(s) in ``[0, 1]``.

    Extreme parameters (e.g. ``beta=1e-10``) can round the result to exactly
    0 or 1; callers that take logs must clamp.
    """
    if check:
        alpha = _positive("alpha", alpha)
        beta = _positive("beta", beta)
    return stream.generator.beta(alpha, beta, size)


def log_gamma_draw(stream: RandomStream, shape, check=True):
    """Logarithm of Gamma(shape, 1) variate(s), accurate for tiny shapes.

    For ``shape < 1`` uses ``log G(a) = log G(a + 1) + log(U) / a``, which
    stays finite where ``G(a)`` itself underflows to zero.
    """
    shape = _positive("shape", shape) if check else np.asarray(shape, dtype=float)
    small = shape < 1
    boosted = np.where(small, shape + 1.0, shape)
    lg = np.log(stream.generator.standard_gamma(boosted))
    if np.any(small):
        u = stream.generator.random(shape.shape)
        lg = np.where(small, lg + np.log1p(-u) / np.where(small, shape, 1.0), lg)
    return lg


def beta_log_draw(stream: RandomStream, alpha, beta, check=True):
    """Beta(alpha, beta) variate(s) returned as ``(log X, log(1 - X))``.

    Built from two log-gamma draws, so both logs are exact even when ``X``
    rounds to 0 or 1 in floating point.
    """
    if check:
        alpha, beta = _positive("alpha", alpha), _positive("beta", beta)
    alpha, beta = np.broadcast_arrays(np.asarray(alpha, dtype=float), np.asarray(beta, dtype=float))
    la = log_gamma_draw(stream, alpha, check=False)
    lb = log_gamma_draw(stream, beta, check=False)
    norm = np.logaddexp(la, lb)
    return la - norm, lb - norm


def dirichlet_draw(stream: RandomStream, alphas):
    """Dirichlet variate(s); the last axis of ``alphas`` is the simplex axis.

    Rows are produced by normalizing independent Gamma(alpha_d, 1) draws.  A
    row whose gammas all underflow (only possible for tiny alphas) is redrawn
    with numpy's small-alpha stick-breaking routine.
    """
    alphas = np.asarray(alphas, dtype=float)
    if alphas.ndim == 0 or alphas.shape[-1] == 0:
        raise ParameterError("dirichlet_draw needs at least one concentration")
    _positive("alphas", alphas)
    g = stream.generator.standard_gamma(alphas)
    total = g.sum(axis=-1, keepdims=True)
    bad = (total[..., 0] == 0)
    if np.any(bad):
        for idx in zip(*np.nonzero(bad)):
            g[idx] = stream.generator.dirichlet(alphas[idx])
            total[idx] = 1.0
    return g / total


def categorical_draw(stream: RandomStream, weights):
    """Draw 0-based category indices with probability proportional to ``weights``.

    ``weights`` may be a vector (one draw, returns ``int``) or an array whose
    last axis holds the unnormalized weights of independent draws.
    Normalization happens in linear space; weights need not sum to one.
    """
    w = np.asarray(weights, dtype=float)
    if w.ndim == 0 or w.shape[-1] == 0:
        raise ParameterError("categorical_draw needs a non-empty weight vector")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ParameterError("categorical weights must be finite and non-negative")
    cum = np.cumsum(w, axis=-1)
    total = cum[..., -1]
    if np.any(total <= 0):
        raise ParameterError("categorical weights must contain a positive entry")
    return _inverse_cdf(cum, stream.generator.random(total.shape))


def _inverse_cdf(cum, u):
    # target lies in (0, total]; counting strictly smaller cumulative sums
    # never lands on a zero-weight category.
    target = (1.0 - u) * cum[..., -1]
    idx = np.sum(cum < target[..., None], axis=-1)
    idx = np.minimum(idx, cum.shape[-1] - 1)
    if idx.ndim == 0:
        return int(idx)
    return idx


def bernoulli_draw(stream: RandomStream, p, size=None):
    """Bernoulli(p) bit(s) as ints."""
    p = np.asarray(p, dtype=float)
    if np.any(p < 0) or np.any(p > 1) or np.any(np.isnan(p)):
        raise ParameterError(f"bernoulli probability must lie in [0, 1], got {p!r}")
    shape = size if size is not None else p.shape
    out = (stream.generator.random(shape) < p).astype(np.int64)
    if out.ndim == 0:
        return int(out)
    return out
