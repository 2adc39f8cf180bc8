"""
Mutual-information estimators for binary-input (block) fading channels.

All rates are in bits per channel use. Monte Carlo estimates carry a 95%
confidence half-width computed from the sample standard deviation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import FadingSpec, bpsk, sample_gain
from .subchannel import MAX_COHERENT_TIME, QuadratureRule, chain_stage_llrs

DEFAULT_SAMPLES = 200_000
HERMITE_NODES = 80
_BATCH = 20_000
_Z95 = 1.959963984540054
_LN2 = math.log(2.0)


@dataclass
class MiEstimate:
    value_bits: float
    samples: int
    ci95_halfwidth: float
    kind: str
    snr_db: float
    coherent_time: int

    def lower(self) -> float:
        return self.value_bits - self.ci95_halfwidth

    def upper(self) -> float:
        return self.value_bits + self.ci95_halfwidth


def _from_terms(terms, kind, spec) -> MiEstimate:
    terms = np.asarray(terms, dtype=np.float64)
    n = len(terms)
    ci = _Z95 * terms.std(ddof=1) / math.sqrt(n) if n > 1 else float("inf")
    return MiEstimate(float(terms.mean()), n, float(ci), kind, spec.snr_db(), spec.coherent_time)


def _batches(samples: int):
    done = 0
    while done < samples:
        b = min(_BATCH, samples - done)
        yield b
        done += b


def binary_entropy_from_llr(llr):
    """Entropy in bits of a binary variable whose log-likelihood ratio is ``llr``."""
    a = np.abs(np.asarray(llr, dtype=np.float64))
    p_err = np.exp(-np.logaddexp(0.0, a))
    return (np.log1p(np.exp(-a)) + p_err * a) / _LN2


def cdi_chain_terms(spec: FadingSpec, samples: int, rng, quad: QuadratureRule | None = None) -> np.ndarray:
    """Per-sample sub-channel rate terms, shape ``(samples, T)``.

    Column j-1 holds ``1 - H(X_j | y, x_1..x_{j-1})`` in bits, the
    conditional expectation over ``x_j`` of the information density
    ``log2 p(y | x_1..x_j) / p(y | x_1..x_{j-1})``. Its mean is the same
    sub-channel rate with a much smaller variance. Row sums estimate the
    block mutual information by the chain rule.
    """
    T = spec.coherent_time
    if T > MAX_COHERENT_TIME:
        raise ValueError(f"coherent time above {MAX_COHERENT_TIME} is not supported")
    if samples < 1:
        raise ValueError("samples must be positive")
    quad = quad or QuadratureRule.for_spec(spec)
    out = []
    for b in _batches(samples):
        x = bpsk(rng.integers(0, 2, (b, T)))
        h = sample_gain(spec, rng, b)
        y = h[:, None] * x + spec.noise_sigma * rng.standard_normal((b, T))
        out.append(1.0 - binary_entropy_from_llr(chain_stage_llrs(y, x, spec, quad)))
    return np.concatenate(out)


def mi_cdi_chain(spec: FadingSpec, samples: int = DEFAULT_SAMPLES, rng=None,
                 quad: QuadratureRule | None = None):
    """Per-symbol rate and all sub-channel rates from one common sample set.

    Returns ``(per_symbol, [sub_1, ..., sub_T])``.
    """
    terms = cdi_chain_terms(spec, samples, rng, quad)
    T = spec.coherent_time
    per_symbol = _from_terms(terms.sum(axis=1) / T, "cdi-per-symbol", spec)
    subs = [_from_terms(terms[:, j], f"cdi-subchannel({j + 1})", spec) for j in range(T)]
    return per_symbol, subs


def mi_cdi_per_symbol(spec: FadingSpec, samples: int = DEFAULT_SAMPLES, rng=None,
                      quad: QuadratureRule | None = None) -> MiEstimate:
    """``I(X_1..X_T; Y_1..Y_T) / T`` with only the fading law known."""
    return mi_cdi_chain(spec, samples, rng, quad)[0]


def mi_cdi_subchannel(j: int, spec: FadingSpec, samples: int = DEFAULT_SAMPLES, rng=None,
                      quad: QuadratureRule | None = None) -> MiEstimate:
    """``I(X_j; Y_1..Y_T | X_1..X_{j-1})`` for 1-based level ``j``."""
    if not 1 <= j <= spec.coherent_time:
        raise ValueError(f"sub-channel index {j} outside 1..{spec.coherent_time}")
    return mi_cdi_chain(spec, samples, rng, quad)[1][j - 1]


def biawgn_capacity(amplitude, sigma: float, nodes: int = HERMITE_NODES):
    """Capacity of BPSK with received amplitude ``a`` in N(0, sigma^2) noise.

    ``1 - E[log2(1 + exp(-2 a (a + w) / sigma^2))]`` by Gauss-Hermite;
    vectorized over ``amplitude``.
    """
    t, w = np.polynomial.hermite.hermgauss(nodes)
    a = np.asarray(amplitude, dtype=np.float64)[..., None]
    llr = 2.0 * a * (a + sigma * math.sqrt(2.0) * t) / sigma ** 2
    loss = np.logaddexp(0.0, -llr) / _LN2
    return 1.0 - loss @ w / math.sqrt(math.pi)


def mi_biawgn(sigma: float) -> MiEstimate:
    """BI-AWGN capacity at unit amplitude; deterministic."""
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    value = float(biawgn_capacity(1.0, sigma))
    err = abs(value - float(biawgn_capacity(1.0, sigma, 2 * HERMITE_NODES)))
    snr_db = -20 * math.log10(sigma)
    return MiEstimate(value, 0, err, "biawgn", snr_db, 1)


def mi_csir(spec: FadingSpec, samples: int = DEFAULT_SAMPLES, rng=None) -> MiEstimate:
    """Ergodic rate ``I(X; Y | H)`` of the i.i.d. fading channel with receiver CSI."""
    if samples < 1:
        raise ValueError("samples must be positive")
    terms = [biawgn_capacity(sample_gain(spec, rng, b), spec.noise_sigma) for b in _batches(samples)]
    return _from_terms(np.concatenate(terms), "csir", spec)


def snr_at_rate(snr_db, rates, target: float) -> float:
    """Invert a nondecreasing SNR -> rate curve by linear interpolation.

    Returns NaN when ``target`` lies outside the sampled range.
    """
    snr_db = np.asarray(snr_db, dtype=np.float64)
    rates = np.maximum.accumulate(np.asarray(rates, dtype=np.float64))
    if target < rates[0] or target > rates[-1]:
        return float("nan")
    k = int(np.searchsorted(rates, target))
    if k == 0 or rates[k] == target:
        return float(snr_db[k])
    r0, r1 = rates[k - 1], rates[k]
    return float(snr_db[k - 1] + (target - r0) * (snr_db[k] - snr_db[k - 1]) / (r1 - r0))
