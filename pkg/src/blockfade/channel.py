"""
Block Rayleigh fading channel with BPSK inputs.

One gain ``h`` per coherent block of ``T_c`` symbols, ``y = h x + w`` with
``w ~ N(0, noise_sigma^2)``. Gains are Rayleigh magnitudes (real, >= 0).

SNR convention: ``SNR = E[h^2] E[x^2] / sigma^2 = 2 sigma_h^2 / sigma^2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .polar import LLR_MAX

DEFAULT_SIGMA_H = math.sqrt(0.5)


class CsiMode(str, Enum):
    CDI = "CDI"
    CSIR = "CSI-R"
    FULL = "FULL"

    @classmethod
    def parse(cls, value) -> "CsiMode":
        if isinstance(value, cls):
            return value
        key = str(value).strip().upper().replace("_", "-")
        for m in cls:
            if m.value == key or m.name == key:
                return m
        raise ValueError(f"unknown csi_mode {value!r} (expected CDI, CSI-R or FULL)")


@dataclass(frozen=True)
class FadingSpec:
    """Everything needed to sample from and evaluate the channel.

    ``fixed_gain`` replaces the Rayleigh law by a point mass; it exists for
    degenerate test channels (coherent AWGN, erasing channel).
    """

    coherent_time: int
    rayleigh_sigma_h: float = DEFAULT_SIGMA_H
    noise_sigma: float = 1.0
    csi_mode: CsiMode = CsiMode.CDI
    fixed_gain: float | None = None

    def __post_init__(self):
        if int(self.coherent_time) < 1:
            raise ValueError(f"coherent_time must be >= 1, got {self.coherent_time}")
        if not self.rayleigh_sigma_h > 0 or not self.noise_sigma > 0:
            raise ValueError("rayleigh_sigma_h and noise_sigma must be positive")
        if self.fixed_gain is not None and self.fixed_gain < 0:
            raise ValueError("fixed_gain must be non-negative")
        object.__setattr__(self, "coherent_time", int(self.coherent_time))
        object.__setattr__(self, "csi_mode", CsiMode.parse(self.csi_mode))

    @classmethod
    def from_snr_db(cls, snr_db: float, coherent_time: int, csi_mode=CsiMode.CDI,
                    rayleigh_sigma_h: float = DEFAULT_SIGMA_H, fixed_gain=None) -> "FadingSpec":
        noise_sigma = math.sqrt(2 * rayleigh_sigma_h ** 2 / 10 ** (snr_db / 10))
        return cls(coherent_time, rayleigh_sigma_h, noise_sigma, csi_mode, fixed_gain)

    @property
    def noise_var(self) -> float:
        return self.noise_sigma ** 2

    def mean_gain_power(self) -> float:
        if self.fixed_gain is not None:
            return self.fixed_gain ** 2
        return 2 * self.rayleigh_sigma_h ** 2

    def snr_db(self) -> float:
        return 10 * math.log10(2 * self.rayleigh_sigma_h ** 2 / self.noise_var)

    def replace(self, **kw) -> "FadingSpec":
        d = dict(coherent_time=self.coherent_time, rayleigh_sigma_h=self.rayleigh_sigma_h,
                 noise_sigma=self.noise_sigma, csi_mode=self.csi_mode, fixed_gain=self.fixed_gain)
        d.update(kw)
        return FadingSpec(**d)


@dataclass
class Frame:
    """One (or a batch of) transmission frames, rows are symbol levels.

    Arrays have shape ``(..., T_c, N)``; ``gains`` has shape ``(..., N)`` and
    is ``None`` under CDI.
    """

    tx_bits: np.ndarray
    tx_symbols: np.ndarray
    rx: np.ndarray
    gains: np.ndarray | None = None

    @property
    def coherent_time(self) -> int:
        return self.rx.shape[-2]

    @property
    def n_blocks(self) -> int:
        return self.rx.shape[-1]


def make_rng(seed) -> np.random.Generator:
    """PCG64 stream from an explicit integer seed (or SeedSequence)."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(seed))


def bpsk(bits) -> np.ndarray:
    return 1.0 - 2.0 * np.asarray(bits, dtype=np.float64)


def gains_from_uniform(u, spec: FadingSpec) -> np.ndarray:
    """Inverse-CDF map ``h = sigma_h sqrt(-2 ln U)`` for ``U`` in (0, 1]."""
    u = np.asarray(u, dtype=np.float64)
    if spec.fixed_gain is not None:
        return np.full(u.shape, float(spec.fixed_gain))
    return spec.rayleigh_sigma_h * np.sqrt(-2.0 * np.log(u))


def sample_gain(spec: FadingSpec, rng, size=None):
    """Draw Rayleigh gain(s)."""
    u = 1.0 - rng.random(size)  # (0, 1]
    h = gains_from_uniform(u, spec)
    return float(h) if size is None else h


def transmit_frame(bits, spec: FadingSpec, rng, noiseless: bool = False) -> Frame:
    """Send a ``(..., T_c, N)`` bit matrix through the block fading channel."""
    bits = np.asarray(bits, dtype=np.int8)
    if bits.shape[-2] != spec.coherent_time:
        raise ValueError(f"frame has {bits.shape[-2]} rows, coherent time is {spec.coherent_time}")
    x = bpsk(bits)
    h = sample_gain(spec, rng, bits.shape[:-2] + bits.shape[-1:])
    y = h[..., None, :] * x
    if not noiseless:
        y = y + spec.noise_sigma * rng.standard_normal(bits.shape)
    gains = None if spec.csi_mode is CsiMode.CDI else h
    return Frame(bits, x, y, gains)


def csir_llr(y, h, spec: FadingSpec):
    """Coherent BPSK LLR ``2 h y / sigma^2`` with known gain, clamped."""
    return np.clip(2.0 * np.asarray(h) * np.asarray(y) / spec.noise_var, -LLR_MAX, LLR_MAX)
