"""
End-to-end coding schemes over the block fading channel.

* MLC: one component code per symbol position of a coherent block (CDI),
  decoded stage by stage, each stage conditioning on earlier decisions.
* Parallel: one independent code per row with receiver CSI.
* BICM: one code of length ``T_c N`` spread over the frame by an
  interleaver, decoded once with receiver CSI.

Frames are batched: bit matrices have shape ``(B, T_c, N)``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import CsiMode, FadingSpec, Frame, bpsk, csir_llr, make_rng, transmit_frame
from .polar import CodeProfile, sc_decode
from .subchannel import QuadratureRule, stage_llr
from .workers import map_batches, split

SCHEMES = ("mlc", "mlc-genie", "parallel", "bicm")


@dataclass(frozen=True)
class InterleaverSpec:
    """Symbol permutation: position k of the interleaved word holds codeword symbol ``permutation[k]``."""

    length: int
    seed: int | None
    permutation: np.ndarray

    def __post_init__(self):
        perm = np.asarray(self.permutation, dtype=np.int64)
        if perm.shape != (self.length,) or not np.array_equal(np.sort(perm), np.arange(self.length)):
            raise ValueError("permutation must be a bijection on range(length)")
        object.__setattr__(self, "permutation", perm)

    @classmethod
    def random(cls, length: int, seed: int) -> "InterleaverSpec":
        return cls(length, seed, make_rng(seed).permutation(length))

    @classmethod
    def identity(cls, length: int) -> "InterleaverSpec":
        return cls(length, None, np.arange(length))

    def inverse(self) -> np.ndarray:
        inv = np.empty_like(self.permutation)
        inv[self.permutation] = np.arange(self.length)
        return inv

    def interleave(self, v):
        return np.asarray(v)[..., self.permutation]

    def deinterleave(self, v):
        return np.asarray(v)[..., self.inverse()]


@dataclass
class FrameResult:
    """Decoding outcome for a batch of frames.

    ``level_errors`` is ``None`` when the transmitted bits were not supplied.
    """

    decoded_bits: list
    level_errors: np.ndarray | None = None

    @property
    def frame_error(self):
        if self.level_errors is None:
            return None
        return self.level_errors.any(axis=-1)

    def bit_errors(self, sent) -> np.ndarray:
        return sum(np.sum(d != np.atleast_2d(s), axis=-1) for d, s in zip(self.decoded_bits, sent))


def _as_levels(info_bits, count):
    if len(info_bits) != count:
        raise ValueError(f"expected information bits for {count} levels, got {len(info_bits)}")
    return [np.atleast_2d(np.asarray(b, dtype=np.int8)) for b in info_bits]


def _score(decoded, sent):
    if sent is None:
        return FrameResult(decoded)
    sent = [np.atleast_2d(s) for s in sent]
    errs = np.stack([np.any(d != s, axis=-1) for d, s in zip(decoded, sent)], axis=-1)
    return FrameResult(decoded, errs)


def _batched_rx(frame: Frame):
    rx = np.asarray(frame.rx, dtype=np.float64)
    return rx[None] if rx.ndim == 2 else rx


def _require_gains(frame: Frame):
    if frame.gains is None:
        raise RuntimeError("invalid state: scheme needs receiver CSI but the frame carries no gains")
    g = np.asarray(frame.gains, dtype=np.float64)
    return g[None] if g.ndim == 1 else g


# -- MLC (CDI) -----------------------------------------------------------------

def mlc_encode(info_bits, profiles: list[CodeProfile]) -> np.ndarray:
    """Row j of the frame is the j-th component codeword; shape ``(B, T_c, N)``."""
    levels = _as_levels(info_bits, len(profiles))
    N = profiles[0].block_length
    if any(p.block_length != N for p in profiles):
        raise ValueError("all component codes must share one block length")
    return np.stack([p.encode(b) for p, b in zip(profiles, levels)], axis=-2)


def mlc_decode(frame: Frame, profiles: list[CodeProfile], spec: FadingSpec,
               quad: QuadratureRule | None = None, sent=None, genie: bool = False) -> FrameResult:
    """Multistage decoding, level 1 first.

    Each stage computes per-block LLRs conditioned on the re-encoded
    symbols of the earlier stages. ``genie=True`` conditions on the true
    transmitted rows instead (construction-style reference).
    """
    quad = quad or QuadratureRule.for_spec(spec)
    y = np.swapaxes(_batched_rx(frame), -1, -2)            # (B, N, T)
    B, N, T = y.shape
    if len(profiles) != T:
        raise ValueError(f"need {T} component codes, got {len(profiles)}")
    true_sym = None
    if genie:
        tb = np.asarray(frame.tx_bits)
        true_sym = np.swapaxes(bpsk(tb[None] if tb.ndim == 2 else tb), -1, -2)
    sym_hat = np.zeros((B, N, T))
    decoded = []
    for j, prof in enumerate(profiles):
        prefix = (true_sym if genie else sym_hat)[..., :j]
        llr = stage_llr(y, prefix, spec, quad)
        u, x = sc_decode(llr, prof)
        sym_hat[..., j] = bpsk(x)
        decoded.append(u[:, prof.info_set])
    return _score(decoded, sent)


# -- parallel (CSI-R) ------------------------------------------------------------

def parallel_encode(info_bits, profiles: list[CodeProfile]) -> np.ndarray:
    return mlc_encode(info_bits, profiles)


def parallel_decode(frame: Frame, profiles: list[CodeProfile], spec: FadingSpec,
                    sent=None, order=None) -> FrameResult:
    """Decode every row on its own with coherent LLRs; ``order`` is the row schedule."""
    gains = _require_gains(frame)
    rx = _batched_rx(frame)
    T = rx.shape[-2]
    decoded = [None] * T
    for j in (range(T) if order is None else order):
        u, _ = sc_decode(csir_llr(rx[:, j, :], gains, spec), profiles[j])
        decoded[j] = u[:, profiles[j].info_set]
    return _score(decoded, sent)


# -- BICM (CSI-R / full CSI) -------------------------------------------------------

def bicm_encode(info_bits, profile: CodeProfile, il: InterleaverSpec, coherent_time: int) -> np.ndarray:
    """Encode, interleave and fill the frame column by column (block by block)."""
    L = profile.block_length
    if il.length != L or L % coherent_time:
        raise ValueError(f"interleaver length {il.length} / code length {L} / T_c={coherent_time} mismatch")
    v = il.interleave(profile.encode(info_bits))
    B = v.shape[0]
    return np.swapaxes(v.reshape(B, L // coherent_time, coherent_time), -1, -2)


def bicm_decode(frame: Frame, profile: CodeProfile, il: InterleaverSpec, spec: FadingSpec,
                sent=None) -> FrameResult:
    gains = _require_gains(frame)
    rx = _batched_rx(frame)
    B, T, N = rx.shape
    if T * N != profile.block_length:
        raise ValueError(f"frame holds {T * N} symbols, code length is {profile.block_length}")
    llr = csir_llr(rx, gains[:, None, :], spec)
    v = np.swapaxes(llr, -1, -2).reshape(B, T * N)
    u, _ = sc_decode(il.deinterleave(v), profile)
    return _score([u[:, profile.info_set]], None if sent is None else sent)


# -- simulation --------------------------------------------------------------------

@dataclass
class FerCount:
    frames: int = 0
    frame_errors: int = 0
    bit_errors: int = 0
    info_bits: int = 0
    level_errors: np.ndarray | None = None

    def merge(self, other: "FerCount") -> "FerCount":
        lv = other.level_errors if self.level_errors is None else self.level_errors + other.level_errors
        return FerCount(self.frames + other.frames, self.frame_errors + other.frame_errors,
                        self.bit_errors + other.bit_errors, self.info_bits + other.info_bits, lv)

    @property
    def fer(self) -> float:
        return self.frame_errors / self.frames if self.frames else float("nan")

    @property
    def ber(self) -> float:
        return self.bit_errors / self.info_bits if self.info_bits else float("nan")

    def fer_stderr(self) -> float:
        p = self.fer
        return float(np.sqrt(p * (1 - p) / self.frames)) if self.frames else float("nan")


def simulate_batch(scheme: str, profiles, spec: FadingSpec, batch: int, rng,
                   il: InterleaverSpec | None = None, quad: QuadratureRule | None = None,
                   noiseless: bool = False) -> FerCount:
    """Encode random data, transmit and decode ``batch`` frames."""
    T = spec.coherent_time
    if scheme in ("mlc", "mlc-genie"):
        if spec.csi_mode is not CsiMode.CDI:
            spec = spec.replace(csi_mode=CsiMode.CDI)
    elif spec.csi_mode is CsiMode.CDI:
        spec = spec.replace(csi_mode=CsiMode.CSIR)
    if scheme == "bicm":
        profile = profiles[0] if isinstance(profiles, (list, tuple)) else profiles
        sent = [rng.integers(0, 2, (batch, profile.k), dtype=np.int8)]
        il = il or InterleaverSpec.identity(profile.block_length)
        bits = bicm_encode(sent[0], profile, il, T)
    elif scheme in SCHEMES:
        sent = [rng.integers(0, 2, (batch, p.k), dtype=np.int8) for p in profiles]
        bits = mlc_encode(sent, profiles)
    else:
        raise ValueError(f"unknown scheme {scheme!r} (expected one of {', '.join(SCHEMES)})")
    frame = transmit_frame(bits, spec, rng, noiseless=noiseless)
    if scheme == "bicm":
        res = bicm_decode(frame, profile, il, spec, sent)
    elif scheme == "parallel":
        res = parallel_decode(frame, profiles, spec, sent)
    else:
        res = mlc_decode(frame, profiles, spec, quad, sent, genie=(scheme == "mlc-genie"))
    return FerCount(batch, int(res.frame_error.sum()), int(res.bit_errors(sent).sum()),
                    batch * sum(s.shape[1] for s in sent), res.level_errors.sum(axis=0))


def simulate(scheme: str, profiles, spec: FadingSpec, frames: int, rng,
             il: InterleaverSpec | None = None, quad: QuadratureRule | None = None,
             noiseless: bool = False, batch: int = 500) -> FerCount:
    """Monte Carlo FER/BER over ``frames`` frames; deterministic given ``rng``."""
    if frames < 1:
        raise ValueError("number of frames must be positive")

    def run(b, r):
        return simulate_batch(scheme, profiles, spec, b, r, il, quad, noiseless)

    total = FerCount()
    for part in map_batches(run, split(frames, batch), rng):
        total = total.merge(part)
    return total
