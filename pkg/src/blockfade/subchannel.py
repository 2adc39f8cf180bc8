"""
Noncoherent block likelihoods and multistage (sub-channel) LLRs.

For a coherent block with unknown gain,

    p(y | x) = int prod_k N(y_k; h x_k, sigma^2) f(h) dh,

and the j-th sub-channel sees ``p(y | x_1..x_j)``, the average over uniform
suffixes ``x_{j+1..T}``. Since ``x_k^2 = 1`` the integrand only depends on
the prefix through ``<x_{1:j}, y_{1:j}>``, and the suffix average factors
into ``prod_k cosh(h y_k / sigma^2)`` terms, so no enumeration is needed.

The integral over ``h`` uses a Gauss rule for the weight ``2 u e^{-u^2}`` on
``[0, inf)`` with ``h = sqrt(2) sigma_h u``, which is exactly the Rayleigh
density. Everything is evaluated in the natural-log domain.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.special import logsumexp

from .channel import FadingSpec
from .polar import LLR_MAX

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None

MAX_COHERENT_TIME = 16
DEFAULT_NODES = 64
_LOG_TINY = math.log(np.finfo(np.float64).tiny)


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes ``h_k`` and weights ``w_k`` with ``sum_k w_k g(h_k) ~ E[g(H)]``."""

    nodes: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=np.float64).reshape(-1)
        weights = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        if nodes.shape != weights.shape or len(nodes) == 0:
            raise ValueError("nodes and weights must be non-empty and of equal length")
        nodes.flags.writeable = False
        weights.flags.writeable = False
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)
        with np.errstate(divide="ignore"):
            object.__setattr__(self, "_log_weights", np.log(weights))

    @property
    def count(self) -> int:
        return len(self.nodes)

    def expect(self, g) -> float:
        return float(np.dot(self.weights, g(self.nodes)))

    @classmethod
    def point_mass(cls, h: float) -> "QuadratureRule":
        return cls(np.array([float(h)]), np.array([1.0]))

    @classmethod
    def rayleigh(cls, sigma_h: float, count: int = DEFAULT_NODES) -> "QuadratureRule":
        u, w = _half_range_rule(int(count))
        return cls(math.sqrt(2.0) * sigma_h * u, w)

    @classmethod
    def for_spec(cls, spec: FadingSpec, count: int = DEFAULT_NODES) -> "QuadratureRule":
        if spec.fixed_gain is not None:
            return cls.point_mass(spec.fixed_gain)
        return cls.rayleigh(spec.rayleigh_sigma_h, count)


@lru_cache(maxsize=16)
def _half_range_rule(count: int, panels: int = 400, umax: float = 14.0):
    """Gauss rule for ``2 u exp(-u^2)`` on [0, inf) via discretized Stieltjes."""
    if count < 1:
        raise ValueError("quadrature needs at least one node")
    xg, wg = np.polynomial.legendre.leggauss(20)
    edges = np.linspace(0.0, umax, panels + 1)
    a, b = edges[:-1, None], edges[1:, None]
    u = ((b - a) / 2 * xg + (a + b) / 2).ravel()
    wu = ((b - a) / 2 * wg).ravel() * 2 * u * np.exp(-u * u)
    alpha = np.zeros(count)
    beta = np.zeros(count)
    mass = wu.sum()
    p_prev = np.zeros_like(u)
    p = np.full_like(u, 1.0 / math.sqrt(mass))
    for k in range(count):
        alpha[k] = np.sum(wu * u * p * p)
        q = (u - alpha[k]) * p - beta[k] * p_prev
        nb = math.sqrt(np.sum(wu * q * q))
        if k + 1 < count:
            beta[k + 1] = nb
        p_prev, p = p, q / nb
    nodes, vecs = eigh_tridiagonal(alpha, beta[1:])
    weights = mass * vecs[0] ** 2
    return nodes, weights / weights.sum()


def _logcosh(a):
    a = np.abs(a)
    return a + np.log1p(np.exp(-2.0 * a)) - math.log(2.0)


def _check_lengths(y, x_prefix, spec):
    T = y.shape[-1]
    if T != spec.coherent_time:
        raise ValueError(f"block has {T} symbols, coherent time is {spec.coherent_time}")
    if x_prefix.shape[-1] > T:
        raise ValueError(f"prefix of length {x_prefix.shape[-1]} exceeds coherent time {T}")


def log_prefix_likelihood(y, x_prefix, spec: FadingSpec, quad: QuadratureRule | None = None):
    """``log p(y | x_1..x_j)`` with uniform suffix, vectorized over leading axes.

    ``y`` has shape ``(..., T)`` and ``x_prefix`` ``(..., j)`` with entries in
    {-1, +1}; ``j = 0`` gives the output density ``log p(y)``.
    """
    quad = quad or QuadratureRule.for_spec(spec)
    y = np.asarray(y, dtype=np.float64)
    x_prefix = np.asarray(x_prefix, dtype=np.float64)
    _check_lengths(y, x_prefix, spec)
    T, j = y.shape[-1], x_prefix.shape[-1]
    var = spec.noise_var
    h = quad.nodes
    base = -0.5 * np.sum(y * y, axis=-1) / var - 0.5 * T * math.log(2 * math.pi * var)
    s = np.sum(x_prefix * y[..., :j], axis=-1)
    expo = quad._log_weights - T * h * h / (2 * var) + s[..., None] * h / var
    if j < T:
        expo = expo + np.sum(_logcosh(y[..., j:, None] * h / var), axis=-2)
    return base + logsumexp(expo, axis=-1)


def log_chain_likelihoods(y, x, spec: FadingSpec, quad: QuadratureRule | None = None):
    """All prefix log-likelihoods at once.

    Returns shape ``(..., T + 1)``: entry j is ``log p(y | x_1..x_j)``, so
    entry 0 is ``log p(y)`` and entry T is ``log p(y | x)``.
    """
    quad = quad or QuadratureRule.for_spec(spec)
    y = np.asarray(y, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    _check_lengths(y, x, spec)
    T = y.shape[-1]
    var = spec.noise_var
    h = quad.nodes
    base = -0.5 * np.sum(y * y, axis=-1) / var - 0.5 * T * math.log(2 * math.pi * var)
    lc = _logcosh(y[..., :, None] * h / var)                       # (..., T, Q)
    zeros = np.zeros(lc.shape[:-2] + (1, lc.shape[-1]))
    suffix = np.concatenate([np.cumsum(lc[..., ::-1, :], axis=-2)[..., ::-1, :], zeros], axis=-2)
    s = np.concatenate([np.zeros(y.shape[:-1] + (1,)), np.cumsum(x * y, axis=-1)], axis=-1)
    expo = (quad._log_weights - T * h * h / (2 * var)) + s[..., :, None] * h / var + suffix
    return base[..., None] + logsumexp(expo, axis=-1)


def chain_stage_llrs(y, x, spec: FadingSpec, quad: QuadratureRule | None = None):
    """Unclamped LLR of every ``x_j`` given the block output and the true ``x_1..x_{j-1}``.

    ``y`` and ``x`` have shape ``(..., T)``; so does the result. Entry j
    equals ``stage_llr(y, x[..., :j])`` without the clamp.
    """
    quad = quad or QuadratureRule.for_spec(spec)
    y = np.asarray(y, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    _check_lengths(y, x, spec)
    T = y.shape[-1]
    var = spec.noise_var
    h = quad.nodes
    lc = _logcosh(y[..., :, None] * h / var)                       # (..., T, Q)
    zeros = np.zeros(lc.shape[:-2] + (1, lc.shape[-1]))
    after = np.concatenate([np.cumsum(lc[..., :0:-1, :], axis=-2)[..., ::-1, :], zeros], axis=-2)
    before = np.concatenate([np.zeros(y.shape[:-1] + (1,)), np.cumsum(x * y, axis=-1)[..., :-1]], axis=-1)
    common = (quad._log_weights - T * h * h / (2 * var)) + before[..., :, None] * h / var + after
    a = y[..., :, None] * h / var
    return _lse(common + a) - _lse(common - a)


def _floor_exp(logp):
    return np.exp(np.maximum(logp, _LOG_TINY))


def block_likelihood(y, x, spec: FadingSpec, quad: QuadratureRule | None = None):
    """``p(y | x)`` for a full block; strictly positive."""
    x = np.asarray(x)
    if x.shape[-1] != spec.coherent_time:
        raise ValueError("x must cover the whole block")
    return _floor_exp(log_prefix_likelihood(y, x, spec, quad))


def prefix_likelihood(y, x_prefix, spec: FadingSpec, quad: QuadratureRule | None = None):
    """``p(y | x_1..x_j)`` with a uniform prior over the remaining symbols."""
    return _floor_exp(log_prefix_likelihood(y, x_prefix, spec, quad))


def prefix_likelihood_enumerated(y, x_prefix, spec: FadingSpec, quad: QuadratureRule | None = None) -> float:
    """Reference path: explicit sum over all ``2^(T-j)`` suffixes (single block)."""
    quad = quad or QuadratureRule.for_spec(spec)
    y = np.asarray(y, dtype=np.float64)
    x_prefix = np.asarray(x_prefix, dtype=np.float64)
    _check_lengths(y, x_prefix, spec)
    T, j = len(y), len(x_prefix)
    if T > MAX_COHERENT_TIME:
        raise ValueError(f"coherent time above {MAX_COHERENT_TIME} is not supported")
    var = spec.noise_var
    h = quad.nodes
    terms = []
    for suffix in itertools.product((1.0, -1.0), repeat=T - j):
        x = np.concatenate([x_prefix, suffix])
        sq = ((y[None, :] - h[:, None] * x[None, :]) ** 2).sum(axis=1)
        logg = -sq / (2 * var) - 0.5 * T * math.log(2 * math.pi * var)
        terms.append(logsumexp(logg + quad._log_weights))
    return float(np.exp(logsumexp(terms) - (T - j) * math.log(2.0)))


def _lse(a, axis=-1):
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    return np.squeeze(m, axis) + np.log(np.sum(np.exp(a - m), axis=axis))


def stage_llr(y, decoded_prefix, spec: FadingSpec, quad: QuadratureRule | None = None):
    """LLR of ``x_j`` (bit 0 <-> +1) given the block output and ``x_1..x_{j-1}``.

    ``j - 1`` is the length of ``decoded_prefix``. Odd under
    ``(y, prefix) -> (-y, -prefix)``, bit for bit.
    """
    quad = quad or QuadratureRule.for_spec(spec)
    y = np.asarray(y, dtype=np.float64)
    prefix = np.asarray(decoded_prefix, dtype=np.float64)
    _check_lengths(y, prefix, spec)
    if prefix.shape[-1] >= y.shape[-1]:
        raise ValueError("decoded prefix must be shorter than the block")
    lead = np.broadcast_shapes(y.shape[:-1], prefix.shape[:-1])
    y = np.broadcast_to(y, lead + y.shape[-1:])
    prefix = np.broadcast_to(prefix, lead + prefix.shape[-1:])
    if _stage_kernel is None:
        llr = _stage_llr_numpy(y, prefix, spec.noise_var, quad)
    else:
        M = int(np.prod(lead))
        yy = np.ascontiguousarray(y.reshape(M, y.shape[-1]))
        pp = np.ascontiguousarray(prefix.reshape(M, prefix.shape[-1]))
        llr = _stage_kernel(yy, pp, quad.nodes, quad._log_weights, spec.noise_var).reshape(lead)
    return np.clip(llr, -LLR_MAX, LLR_MAX)


def _stage_llr_numpy(y, prefix, var, quad):
    T, j = y.shape[-1], prefix.shape[-1] + 1
    h = quad.nodes
    s = np.sum(prefix * y[..., :j - 1], axis=-1)
    common = quad._log_weights - T * h * h / (2 * var) + s[..., None] * h / var
    if j < T:
        common = common + np.sum(_logcosh(y[..., j:, None] * h / var), axis=-2)
    a = y[..., j - 1, None] * h / var
    return _lse(common + a) - _lse(common - a)


def _stage_llr_loops(y, prefix, h, logw, var):
    M, T = y.shape
    jm1 = prefix.shape[1]
    Q = h.shape[0]
    out = np.empty(M)
    plus = np.empty(Q)
    minus = np.empty(Q)
    for m in range(M):
        s = 0.0
        for k in range(jm1):
            s += prefix[m, k] * y[m, k]
        mp = -np.inf
        mm = -np.inf
        for q in range(Q):
            c = logw[q] - T * h[q] * h[q] / (2 * var) + s * h[q] / var
            for k in range(jm1 + 1, T):
                b = abs(y[m, k] * h[q] / var)
                c += b - 0.6931471805599453
                if b < 19.0:  # below double precision otherwise
                    c += np.log1p(np.exp(-2.0 * b))
            a = y[m, jm1] * h[q] / var
            plus[q] = c + a
            minus[q] = c - a
            mp = max(mp, plus[q])
            mm = max(mm, minus[q])
        sp = 0.0
        sm = 0.0
        for q in range(Q):
            sp += np.exp(plus[q] - mp)
            sm += np.exp(minus[q] - mm)
        out[m] = (mp + np.log(sp)) - (mm + np.log(sm))
    return out


_stage_kernel = numba.njit(cache=True, nogil=True)(_stage_llr_loops) if numba is not None else None
