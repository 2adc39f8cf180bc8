"""
Genie-aided Monte Carlo construction of polar codes for the fading schemes.

Reliability of index i is the probability that SC, given the true
``u_1..u_{i-1}``, decides ``u_i`` wrongly. Transmitted data are uniform, so
an index whose decision LLR is exactly 0 fails half of the time.

The estimate averages the posterior error probability ``1 / (1 + exp|L_i|)``
of the genie decision LLR. Its expectation is the error probability itself
(the SC LLRs are exact posteriors of the synthesized channels), and it has
far less variance than counting errors: erasures contribute exactly 1/2
instead of a coin flip, and indices that never fail in a short run still
get distinct values. Saturated LLRs (``|L| >= LLR_MAX``) count as certain.
The plain error frequency is kept as a secondary sort key.
"""

from __future__ import annotations

import logging
import math

import numpy as np

from .channel import CsiMode, FadingSpec, bpsk, csir_llr, sample_gain
from .mutual_info import mi_cdi_chain
from .polar import (LLR_MAX, CodeProfile, ReliabilityVector, hard_decision, polar_transform,
                    sc_genie_llrs, select_sets)
from .subchannel import QuadratureRule, stage_llr
from .workers import map_batches, split

log = logging.getLogger(__name__)

DEFAULT_CONSTRUCTION_SAMPLES = 50_000
MIN_GENIE_SAMPLES = 100
GENIE_BATCH = 500


def posterior_error(llr) -> np.ndarray:
    """``1 / (1 + exp|L|)``, the error probability of a hard decision on ``L``; 0 once saturated."""
    mag = np.abs(llr)
    return np.where(mag >= LLR_MAX, 0.0, np.exp(-np.logaddexp(0.0, mag)))


def genie_reliability(sampler, N: int, samples: int, rng, batch: int = GENIE_BATCH) -> ReliabilityVector:
    """Estimate per-index first-error probabilities by genie-aided SC.

    Parameters
    ----------
    sampler : callable
        ``sampler(x_bits, rng) -> llr`` maps a ``(B, N)`` batch of code
        symbols to channel LLRs.
    N : int
        Block length.
    samples : int
        Number of simulated codewords.
    """
    if samples < MIN_GENIE_SAMPLES:
        raise ValueError(f"need at least {MIN_GENIE_SAMPLES} genie samples, got {samples}")

    def run(b, r):
        u = r.integers(0, 2, (b, N), dtype=np.int8)
        llr = sc_genie_llrs(sampler(polar_transform(u), r), u)
        errors = hard_decision(llr) != u
        return errors.sum(axis=0), posterior_error(llr).sum(axis=0)

    parts = map_batches(run, split(samples, batch), rng)
    counts = np.sum([p[0] for p in parts], axis=0)
    soft = np.sum([p[1] for p in parts], axis=0)
    return ReliabilityVector(soft / samples, samples, "monte-carlo-genie", counts / samples)


def info_count(rate: float, length: int) -> int:
    """Number of information bits for ``rate`` (floored, never above ``length``)."""
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"rate must lie in [0, 1], got {rate}")
    return min(length, int(math.floor(rate * length + 1e-9)))


# -- channel samplers ----------------------------------------------------------

def bec_sampler(epsilon: float):
    """Erasure channel: LLR +/-inf when received, 0 when erased."""

    def sample(x_bits, rng):
        llr = np.where(x_bits == 0, np.inf, -np.inf)
        return np.where(rng.random(x_bits.shape) < epsilon, 0.0, llr)

    return sample


def csir_sampler(spec: FadingSpec):
    """Merged i.i.d. fading channel with receiver CSI (ideal interleaving)."""

    def sample(x_bits, rng):
        h = sample_gain(spec, rng, x_bits.shape)
        y = h * bpsk(x_bits) + spec.noise_sigma * rng.standard_normal(x_bits.shape)
        return csir_llr(y, h, spec)

    return sample


def mlc_level_sampler(spec: FadingSpec, level: int, quad: QuadratureRule | None = None):
    """Sub-channel ``level`` (1-based) of the CDI block channel.

    The other rows carry uniform bits; the stage LLR is conditioned on the
    true symbols of the earlier rows.
    """
    quad = quad or QuadratureRule.for_spec(spec)
    T = spec.coherent_time

    def sample(x_bits, rng):
        B, N = x_bits.shape
        # same draw order as csir_sampler, so T_c = 1 reproduces it exactly
        h = sample_gain(spec, rng, (B, N))
        noise = spec.noise_sigma * rng.standard_normal((B, T, N))
        bits = np.empty((B, T, N), dtype=np.int8)
        others = [r for r in range(T) if r != level - 1]
        bits[:, others, :] = rng.integers(0, 2, (B, T - 1, N), dtype=np.int8)
        bits[:, level - 1, :] = x_bits
        x = bpsk(bits)
        y = h[:, None, :] * x + noise
        y = np.swapaxes(y, 1, 2)                      # (B, N, T)
        prefix = np.swapaxes(x[:, :level - 1, :], 1, 2)
        return stage_llr(y, prefix, spec, quad)

    return sample


# -- constructions ---------------------------------------------------------------

def construct_bicm(spec: FadingSpec, total_length: int, rate: float,
                   samples: int = DEFAULT_CONSTRUCTION_SAMPLES, rng=None,
                   label: str = "bicm") -> CodeProfile:
    """Single code of length ``T_c N`` for the interleaved CSI-R channel."""
    if total_length < 1 or total_length & (total_length - 1):
        raise ValueError(f"total length T_c*N must be a power of two, got {total_length}")
    k = info_count(rate, total_length)
    if k == 0:
        return select_sets(np.zeros(total_length), 0, design_snr_db=spec.snr_db(), design_label=label)
    rel = genie_reliability(csir_sampler(spec), total_length, samples, rng)
    return select_sets(rel, k, design_snr_db=spec.snr_db(), design_label=label)


def allocate_levels(total_bits: int, level_rates, N: int) -> list[int]:
    """Split ``total_bits`` over levels in proportion to ``level_rates``.

    Largest-remainder rounding; the counts sum to ``total_bits`` and none
    exceeds ``N``.
    """
    w = np.clip(np.asarray(level_rates, dtype=np.float64), 0.0, None)
    if total_bits == 0:
        return [0] * len(w)
    if total_bits > N * len(w):
        raise ValueError("more information bits than positions")
    if w.sum() <= 0:
        w = np.ones_like(w)
    k = np.zeros(len(w), dtype=np.int64)
    remaining = total_bits
    active = np.ones(len(w), dtype=bool)
    # water-fill so that no level exceeds N
    while remaining > 0:
        wa = w * active
        if wa.sum() <= 0:
            wa = active.astype(np.float64)
        share = remaining * wa / wa.sum()
        room = N - k
        add = np.minimum(np.floor(share).astype(np.int64), room)
        k += add
        remaining -= int(add.sum())
        active &= k < N
        if remaining == 0:
            break
        frac = np.where(active, share - np.floor(share), -1.0)
        if not np.any(frac > 0) and add.sum() == 0:
            frac = np.where(active, wa, -1.0)
        for idx in np.argsort(-frac, kind="stable"):
            if remaining == 0 or frac[idx] < 0:
                break
            if k[idx] < N:
                k[idx] += 1
                remaining -= 1
        active &= k < N
    return [int(v) for v in k]


def construct_mlc(spec: FadingSpec, N: int, total_rate: float,
                  samples: int = DEFAULT_CONSTRUCTION_SAMPLES, rng=None,
                  label: str = "mlc", quad: QuadratureRule | None = None,
                  mi_samples: int = 100_000, level_rates=None) -> list[CodeProfile]:
    """One component code per sub-channel of the CDI block channel.

    ``level_rates`` (bits per use, one per level) may be passed to skip the
    sub-channel rate estimation.
    """
    if N < 1 or N & (N - 1):
        raise ValueError(f"N must be a power of two, got {N}")
    T = spec.coherent_time
    quad = quad or QuadratureRule.for_spec(spec)
    total_bits = info_count(total_rate, T * N)
    if level_rates is None:
        if total_bits == 0:
            level_rates = np.ones(T)
        else:
            _, subs = mi_cdi_chain(spec, mi_samples, rng, quad)
            level_rates = [s.value_bits for s in subs]
    capacity = float(np.mean(level_rates))
    if total_bits and total_rate > capacity:
        raise ValueError(f"rate {total_rate:.4f} exceeds the estimated CDI capacity "
                         f"{capacity:.4f} bits/use at {spec.snr_db():.2f} dB (T_c={T})")
    ks = allocate_levels(total_bits, level_rates, N)
    profiles = []
    for j, k in enumerate(ks, start=1):
        name = f"{label}.level{j}"
        if k == 0:
            profiles.append(select_sets(np.zeros(N), 0, design_snr_db=spec.snr_db(), design_label=name))
            continue
        log.info("constructing level %d/%d: k=%d", j, T, k)
        rel = genie_reliability(mlc_level_sampler(spec, j, quad), N, samples, rng)
        profiles.append(select_sets(rel, k, design_snr_db=spec.snr_db(), design_label=name))
    return profiles


def construct_parallel(spec: FadingSpec, N: int, rate: float,
                       samples: int = DEFAULT_CONSTRUCTION_SAMPLES, rng=None,
                       label: str = "parallel") -> list[CodeProfile]:
    """Per-row codes for the parallel CSI-R scheme.

    Every row sees the same i.i.d. fading channel, so one construction is
    shared by all ``T_c`` rows.
    """
    if spec.csi_mode is CsiMode.CDI:
        raise ValueError("the parallel scheme needs receiver CSI")
    base = construct_bicm(spec, N, rate, samples, rng, label)
    return [CodeProfile(N, base.info_set, base.frozen_set, base.det_set, base.frozen_values,
                        base.design_snr_db, f"{label}.level{j}", base.z)
            for j in range(1, spec.coherent_time + 1)]


def estimate_union_bound(profile: CodeProfile, sampler, samples: int, rng) -> tuple[float, float]:
    """Union bound on the FER from a fresh genie run.

    Returns ``(bound, standard_error)``; the bound sums the first-error
    probabilities of the information positions, estimated as in
    :func:`genie_reliability`.
    """
    if samples < MIN_GENIE_SAMPLES:
        raise ValueError(f"need at least {MIN_GENIE_SAMPLES} genie samples, got {samples}")
    N, info = profile.block_length, profile.info_set

    def run(b, r):
        u = r.integers(0, 2, (b, N), dtype=np.int8)
        return posterior_error(sc_genie_llrs(sampler(polar_transform(u), r), u)[:, info]).sum(axis=1)

    per_frame = np.concatenate(map_batches(run, split(samples, GENIE_BATCH), rng)).astype(np.float64)
    return float(per_frame.mean()), float(per_frame.std(ddof=1) / math.sqrt(samples))
