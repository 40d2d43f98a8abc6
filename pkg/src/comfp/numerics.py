"""Special functions, the softplus transform pair, and seeded samplers.

``log_gamma`` and ``digamma`` use the Stirling / asymptotic expansions after
shifting the argument above ``_SHIFT`` with the recurrence relations.  The
scalar kernels are compiled as numpy ufuncs; scalar input gives a float.
"""
from __future__ import annotations

import math

import numba
import numpy as np

RNG_ALGORITHM = "PCG64"

_SHIFT = 10.0
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)

# B_{2k} / (2k (2k-1)) for k = 1..7
_LGAMMA_COEF = (
    1.0 / 12.0,
    -1.0 / 360.0,
    1.0 / 1260.0,
    -1.0 / 1680.0,
    1.0 / 1188.0,
    -691.0 / 360360.0,
    1.0 / 156.0,
)
# B_{2k} / (2k) for k = 1..7
_DIGAMMA_COEF = (
    1.0 / 12.0,
    -1.0 / 120.0,
    1.0 / 252.0,
    -1.0 / 240.0,
    1.0 / 132.0,
    -691.0 / 32760.0,
    1.0 / 12.0,
)
_LGAMMA_REV = _LGAMMA_COEF[::-1]
_DIGAMMA_REV = _DIGAMMA_COEF[::-1]


def _as_array(x, name):
    arr = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name}: non-finite input")
    return arr


def _out(arr, like):
    if np.ndim(like) == 0:
        return float(arr)
    return arr


_TINY = np.finfo(float).tiny


def softplus(x):
    """t(x) = log(1 + e^x), stable for large |x|; floored at the smallest normal float."""
    arr = _as_array(x, "softplus")
    return _out(np.maximum(np.maximum(arr, 0.0) + np.log1p(np.exp(-np.abs(arr))), _TINY), x)


def sigmoid(x):
    """Derivative of :func:`softplus`, 1 / (1 + e^-x)."""
    arr = _as_array(x, "sigmoid")
    e = np.exp(-np.abs(arr))
    return _out(np.where(arr >= 0, 1.0 / (1.0 + e), e / (1.0 + e)), x)


# short alias: dt in the usual notation
dsoftplus = sigmoid


@numba.vectorize(["float64(float64)"], cache=True)
def _lgamma_kernel(x):
    z = x
    prod = 1.0
    while z < _SHIFT:
        prod *= z
        z += 1.0
    inv = 1.0 / z
    inv2 = inv * inv
    series = 0.0
    for c in _LGAMMA_REV:
        series = series * inv2 + c
    return (z - 0.5) * math.log(z) - z + _HALF_LOG_2PI + series * inv - math.log(prod)


@numba.vectorize(["float64(float64)"], cache=True)
def _digamma_kernel(x):
    z = x
    acc = 0.0
    while z < _SHIFT:
        acc -= 1.0 / z
        z += 1.0
    inv2 = 1.0 / (z * z)
    series = 0.0
    for c in _DIGAMMA_REV:
        series = series * inv2 + c
    return math.log(z) - 0.5 / z - series * inv2 + acc


def _check_positive(arr, name):
    if np.any(arr <= 0):
        raise ValueError(f"{name}: argument must be > 0")


def log_gamma(x):
    """log Gamma(x) for x > 0."""
    arr = _as_array(x, "log_gamma")
    _check_positive(arr, "log_gamma")
    return _out(_lgamma_kernel(arr), x)


def digamma(x):
    """Psi(x) = d/dx log Gamma(x) for x > 0."""
    arr = _as_array(x, "digamma")
    _check_positive(arr, "digamma")
    return _out(_digamma_kernel(arr), x)


def make_rng(seed: int) -> np.random.Generator:
    """Seeded generator; identical seeds give identical streams."""
    return np.random.Generator(np.random.PCG64(int(seed)))


def _log_gamma_draws(shape, rng):
    # Gamma(a) = Gamma(a + 1) * U^(1/a), evaluated in log space so that
    # small shapes do not underflow to exact zeros.
    g = rng.standard_gamma(shape + 1.0)
    u = rng.random(np.shape(shape))
    return np.log(g) + np.log1p(-u) / shape


def sample_dirichlet(alpha, rng):
    """Draw from Dirichlet(alpha); 2-D input draws one vector per row."""
    a = _as_array(alpha, "sample_dirichlet")
    if a.ndim == 0 or a.shape[-1] == 0 or np.any(a <= 0):
        raise ValueError("sample_dirichlet: alpha must be a non-empty positive vector")
    logg = _log_gamma_draws(a, rng)
    logg -= logg.max(axis=-1, keepdims=True)
    w = np.exp(logg)
    return w / w.sum(axis=-1, keepdims=True)


def sample_multinomial(p, rng) -> int:
    """Draw one category index from probability vector ``p``."""
    p = _as_array(p, "sample_multinomial")
    if p.ndim != 1 or p.size == 0 or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-8:
        raise ValueError("sample_multinomial: p must be a probability vector")
    c = np.cumsum(p)
    idx = int(np.searchsorted(c, rng.random() * c[-1], side="right"))
    return min(idx, p.size - 1)


def sample_beta(a, b, rng):
    """Draw from Beta(a, b); result lies strictly inside (0, 1)."""
    a = _as_array(a, "sample_beta")
    b = _as_array(b, "sample_beta")
    if np.any(a <= 0) or np.any(b <= 0):
        raise ValueError("sample_beta: shape parameters must be > 0")
    a, b = np.broadcast_arrays(a, b)
    la = _log_gamma_draws(a, rng)
    lb = _log_gamma_draws(b, rng)
    # a / (a + b) computed as a logistic of the log-ratio
    val = sigmoid(la - lb)
    val = np.clip(val, np.nextafter(0.0, 1.0), np.nextafter(1.0, 0.0))
    return _out(val, a)


def sample_bernoulli(p, rng) -> int:
    p = float(p)
    if not 0.0 <= p <= 1.0:
        raise ValueError("sample_bernoulli: p must lie in [0, 1]")
    return int(rng.random() < p)


def sample_gaussian(mu, sigma, rng, size=None):
    if not np.all(np.asarray(sigma) > 0):
        raise ValueError("sample_gaussian: sigma must be > 0")
    return rng.normal(mu, sigma, size=size)
