"""
Binary polar transform, successive-cancellation decoding and set selection.

Conventions
-----------
* ``x = u G_N`` with ``G_N = B_N F^{(x)n}`` and ``F = [[1, 0], [1, 1]]``.
* LLRs are ``log P(bit=0 | .) / P(bit=1 | .)``; BPSK maps bit 0 to +1.
* Indices are 0-based everywhere (code, files, CLI).
* Decisions on an LLR of exactly 0 resolve to bit 0.

All decoders work on batches: LLR input of shape ``(B, N)`` decodes B
independent frames at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

LLR_MAX = 40.0

PROFILE_MAGIC = "polarprofile"
PROFILE_VERSION = "v1"


def _check_power_of_two(n: int, what: str = "length") -> int:
    if n < 1 or (n & (n - 1)) != 0:
        raise ValueError(f"{what} must be a power of two, got {n}")
    return n.bit_length() - 1


def bit_reversal_permutation(n: int) -> np.ndarray:
    """Return the permutation of ``range(2**n)`` that reverses n-bit indices."""
    if n < 0:
        raise ValueError(f"n must be non-negative, got {n}")
    perm = np.zeros(1, dtype=np.int64)
    for _ in range(n):
        perm = np.concatenate([2 * perm, 2 * perm + 1])
    return perm


def polar_transform(u) -> np.ndarray:
    """Compute ``x = u G_N`` over GF(2).

    Works on the last axis, so a ``(B, N)`` batch is transformed row by row.
    The transform is an involution.
    """
    u = np.asarray(u)
    N = u.shape[-1]
    n = _check_power_of_two(N)
    x = (u.astype(np.int8) & 1).copy()
    lead = x.shape[:-1]
    half = 1
    while half < N:
        v = x.reshape(*lead, N // (2 * half), 2, half)
        v[..., 0, :] ^= v[..., 1, :]
        half *= 2
    return x[..., bit_reversal_permutation(n)]


def clamp_llr(llr) -> np.ndarray:
    """Clamp to ``[-LLR_MAX, LLR_MAX]``; NaN maps to 0."""
    llr = np.nan_to_num(np.asarray(llr, dtype=np.float64), nan=0.0, posinf=LLR_MAX, neginf=-LLR_MAX)
    return np.clip(llr, -LLR_MAX, LLR_MAX)


def hard_decision(llr) -> np.ndarray:
    return (np.asarray(llr) < 0).astype(np.int8)


def check_node(a, b):
    """Exact LLR of ``a (+) b``: ``log((1 + e^(a+b)) / (e^a + e^b))``."""
    return (np.sign(a) * np.sign(b) * np.minimum(np.abs(a), np.abs(b))
            + np.log1p(np.exp(-np.abs(a + b))) - np.log1p(np.exp(-np.abs(a - b))))


def _sc_recurse(llr, offset, leaf, frozen_prefix=None, frozen_values=None):
    # llr: (C, B, m) in natural (non-bit-reversed) order. Returns the
    # re-encoded partial sums of this node, shape (B, m).
    m = llr.shape[-1]
    if frozen_prefix is not None and frozen_prefix[offset + m] - frozen_prefix[offset] == m:
        u = np.broadcast_to(frozen_values[offset:offset + m], llr.shape[1:]).astype(np.int8)
        for i in range(m):
            leaf(offset + i, None, u[:, i])
        x = u.copy()
        half = 1
        while half < m:
            v = x.reshape(x.shape[0], m // (2 * half), 2, half)
            v[..., 0, :] ^= v[..., 1, :]
            half *= 2
        return x
    if m == 1:
        return leaf(offset, llr[:, :, 0], None)[:, None]
    h = m // 2
    left, right = llr[..., :h], llr[..., h:]
    a = _sc_recurse(check_node(left, right), offset, leaf, frozen_prefix, frozen_values)
    b = _sc_recurse(right + (1 - 2 * a) * left, offset + h, leaf, frozen_prefix, frozen_values)
    return np.concatenate([a ^ b, b], axis=-1)


def _run_sc(llrs, leaf, frozen_mask=None, frozen_full=None):
    """Drive the SC recursion over ``llrs`` of shape (C, B, N)."""
    N = llrs.shape[-1]
    n = _check_power_of_two(N)
    rev = bit_reversal_permutation(n)
    prefix = values = None
    if frozen_mask is not None:
        prefix = np.concatenate([[0], np.cumsum(frozen_mask)])
        values = frozen_full
    x_nat = _sc_recurse(llrs[..., rev], 0, leaf, prefix, values)
    return x_nat[:, rev]


@dataclass
class ReliabilityVector:
    """Per-index reliability estimates (Bhattacharyya-like, smaller is better).

    ``tiebreak`` optionally orders indices whose estimates are equal, e.g.
    the many zero-error indices of a short Monte Carlo run.
    """

    z_estimates: np.ndarray
    samples_per_index: int
    method: str  # "monte-carlo-genie" or "bec-exact"
    tiebreak: np.ndarray | None = None

    def __post_init__(self):
        self.z_estimates = np.asarray(self.z_estimates, dtype=np.float64)
        if self.tiebreak is not None:
            self.tiebreak = np.asarray(self.tiebreak, dtype=np.float64)
        if np.any(self.z_estimates < 0) or np.any(self.z_estimates > 1):
            raise ValueError("reliability estimates must lie in [0, 1]")

    def __len__(self):
        return len(self.z_estimates)


@dataclass
class CodeProfile:
    """A constructed polar code.

    ``frozen_values`` holds one bit per entry of ``frozen_set`` (same order).
    ``z`` optionally keeps the per-index reliability used at design time.
    """

    block_length: int
    info_set: np.ndarray
    frozen_set: np.ndarray
    det_set: np.ndarray
    frozen_values: np.ndarray
    design_snr_db: float = float("nan")
    design_label: str = "unnamed"
    z: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        _check_power_of_two(self.block_length, "block_length")
        self.info_set = np.sort(np.asarray(self.info_set, dtype=np.int64))
        order = np.argsort(np.asarray(self.frozen_set, dtype=np.int64), kind="stable")
        self.frozen_set = np.asarray(self.frozen_set, dtype=np.int64)[order]
        self.frozen_values = np.asarray(self.frozen_values, dtype=np.int8).reshape(-1)
        if len(self.frozen_values) != len(self.frozen_set):
            raise ValueError("frozen_values must have one bit per frozen index")
        self.frozen_values = self.frozen_values[order]
        self.det_set = np.sort(np.asarray(self.det_set, dtype=np.int64))
        allidx = np.concatenate([self.info_set, self.frozen_set, self.det_set])
        if len(allidx) != self.block_length or not np.array_equal(np.sort(allidx), np.arange(self.block_length)):
            raise ValueError("info, frozen and deterministic sets must partition range(N)")
        if " " in self.design_label or not self.design_label:
            raise ValueError("design_label must be a non-empty token without spaces")
        if self.z is not None:
            self.z = np.asarray(self.z, dtype=np.float64)

    @property
    def k(self) -> int:
        return len(self.info_set)

    @property
    def rate(self) -> float:
        return self.k / self.block_length

    def classes(self) -> np.ndarray:
        """Per-index class letters: ``I``, ``F`` or ``D``."""
        c = np.full(self.block_length, "F", dtype="<U1")
        c[self.info_set] = "I"
        c[self.det_set] = "D"
        return c

    def frozen_full(self) -> np.ndarray:
        """Length-N vector with frozen values at frozen positions, 0 elsewhere."""
        v = np.zeros(self.block_length, dtype=np.int8)
        v[self.frozen_set] = self.frozen_values
        return v

    def frozen_mask(self) -> np.ndarray:
        m = np.zeros(self.block_length, dtype=bool)
        m[self.frozen_set] = True
        return m

    def union_bound(self, z=None) -> float:
        """Sum of reliability terms over the information set."""
        z = self.z if z is None else np.asarray(z)
        if z is None:
            raise ValueError("profile carries no reliability estimates")
        return float(np.sum(z[self.info_set]))

    def assemble(self, info_bits, prior_llr=None) -> np.ndarray:
        """Build the ``u`` vector(s) from information bits.

        Deterministic positions take the argmax of ``P(u_i | u_{<i})`` under
        the symbol prior ``prior_llr`` (uniform when omitted, giving bit 0).
        """
        info_bits = np.atleast_2d(np.asarray(info_bits, dtype=np.int8))
        if info_bits.shape[-1] != self.k:
            raise ValueError(f"expected {self.k} information bits, got {info_bits.shape[-1]}")
        B = info_bits.shape[0]
        u = np.tile(self.frozen_full(), (B, 1))
        u[:, self.info_set] = info_bits
        if len(self.det_set) and prior_llr is not None:
            prior = np.broadcast_to(clamp_llr(prior_llr), (B, self.block_length))
            det = np.zeros(self.block_length, dtype=bool)
            det[self.det_set] = True

            def leaf(i, llr, forced):
                if det[i]:
                    u[:, i] = hard_decision(llr[0])
                return u[:, i]

            _run_sc(prior[None], leaf)
        return u

    def encode(self, info_bits, prior_llr=None) -> np.ndarray:
        return polar_transform(self.assemble(info_bits, prior_llr))

    # -- persistence --------------------------------------------------------

    def to_text(self) -> str:
        z = self.z if self.z is not None else np.full(self.block_length, np.nan)
        lines = [f"{PROFILE_MAGIC} {PROFILE_VERSION} N={self.block_length} "
                 f"design={self.design_label} snr_db={self.design_snr_db!r}"]
        classes = self.classes()
        fv = self.frozen_full()
        for i in range(self.block_length):
            bit = str(int(fv[i])) if classes[i] == "F" else "-"
            lines.append(f"{i} {classes[i]} {bit} {float(z[i])!r}")
        return "\n".join(lines) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")

    @classmethod
    def from_text(cls, text: str) -> "CodeProfile":
        rows = [ln for ln in text.splitlines() if ln.strip()]
        if not rows:
            raise ValueError("empty profile")
        head = rows[0].split()
        if len(head) != 5 or head[0] != PROFILE_MAGIC or head[1] != PROFILE_VERSION:
            raise ValueError(f"not a {PROFILE_MAGIC} {PROFILE_VERSION} file: {rows[0]!r}")
        meta = dict(tok.split("=", 1) for tok in head[2:])
        N = int(meta["N"])
        if len(rows) - 1 != N:
            raise ValueError(f"expected {N} index lines, found {len(rows) - 1}")
        info, frozen, fvals, det = [], [], [], []
        z = np.empty(N)
        for ln in rows[1:]:
            idx, cls_, bit, zval = ln.split()
            i = int(idx)
            z[i] = float(zval)
            if cls_ == "I":
                info.append(i)
            elif cls_ == "F":
                frozen.append(i)
                fvals.append(int(bit))
            elif cls_ == "D":
                det.append(i)
            else:
                raise ValueError(f"unknown index class {cls_!r}")
        return cls(N, info, frozen, det, fvals, float(meta["snr_db"]), meta["design"],
                   None if np.all(np.isnan(z)) else z)

    @classmethod
    def load(cls, path) -> "CodeProfile":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))


def sc_decode(channel_llrs, profile: CodeProfile, prior_llr=None):
    """Successive-cancellation decoding.

    Parameters
    ----------
    channel_llrs : array_like, shape (N,) or (B, N)
        Channel LLRs of the code symbols ``x``.
    profile : CodeProfile
    prior_llr : array_like, optional
        Symbol prior used for deterministic positions; uniform if omitted.

    Returns
    -------
    u_hat, x_hat : ndarray of int8
        Same leading shape as ``channel_llrs``.
    """
    llr = clamp_llr(channel_llrs)
    single = llr.ndim == 1
    llr = np.atleast_2d(llr)
    B, N = llr.shape
    if N != profile.block_length:
        raise ValueError(f"LLR length {N} does not match block length {profile.block_length}")

    classes = np.zeros(N, dtype=np.int8)  # 0 info, 1 frozen, 2 det
    classes[profile.frozen_set] = 1
    classes[profile.det_set] = 2
    fv = profile.frozen_full()
    u_hat = np.zeros((B, N), dtype=np.int8)
    use_prior = len(profile.det_set) > 0
    stack = llr[None]
    if use_prior:
        prior = np.zeros((B, N)) if prior_llr is None else np.broadcast_to(clamp_llr(prior_llr), (B, N))
        stack = np.stack([llr, prior])

    def leaf(i, node_llr, forced):
        if forced is not None:
            u_hat[:, i] = forced
        elif classes[i] == 1:
            u_hat[:, i] = fv[i]
        elif classes[i] == 2:
            u_hat[:, i] = hard_decision(node_llr[1])
        else:
            u_hat[:, i] = hard_decision(node_llr[0])
        return u_hat[:, i]

    mask = None if use_prior else profile.frozen_mask()
    x_hat = _run_sc(stack, leaf, mask, fv)
    if single:
        return u_hat[0], x_hat[0]
    return u_hat, x_hat


def sc_genie_llrs(channel_llrs, u_true) -> np.ndarray:
    """Return the SC decision LLR of every index with all earlier bits set to truth.

    Output has the shape of ``channel_llrs`` (batched ``(B, N)``).
    """
    llr = np.atleast_2d(clamp_llr(channel_llrs))
    u_true = np.atleast_2d(np.asarray(u_true, dtype=np.int8))
    if llr.shape != u_true.shape:
        raise ValueError("channel_llrs and u_true must have the same shape")
    out = np.empty_like(llr)

    def leaf(i, node_llr, forced):
        out[:, i] = node_llr[0]
        return u_true[:, i]

    _run_sc(llr[None], leaf)
    return out


def genie_errors(channel_llrs, u_true) -> np.ndarray:
    """Boolean ``(B, N)`` matrix: SC with a genie decides index i wrongly."""
    u_true = np.atleast_2d(np.asarray(u_true, dtype=np.int8))
    return hard_decision(sc_genie_llrs(channel_llrs, u_true)) != u_true


def select_sets(reliability, target_info_count: int, high_entropy_mask=None,
                design_snr_db: float = float("nan"), design_label: str = "unnamed",
                frozen_values=None) -> CodeProfile:
    """Rank-based finite-length set selection.

    The ``target_info_count`` high-entropy indices with the smallest
    estimates become information positions, the other high-entropy indices
    are frozen and the rest are deterministic. Ties go to the smaller
    ``tiebreak`` value when the reliability carries one, then to the larger
    index.
    """
    tb = None
    if isinstance(reliability, ReliabilityVector):
        z, tb = reliability.z_estimates, reliability.tiebreak
    else:
        z = np.asarray(reliability, dtype=np.float64)
    N = len(z)
    _check_power_of_two(N)
    mask = np.ones(N, dtype=bool) if high_entropy_mask is None else np.asarray(high_entropy_mask, dtype=bool)
    candidates = np.flatnonzero(mask)
    if not 0 <= target_info_count <= len(candidates):
        raise ValueError(f"target_info_count={target_info_count} exceeds the "
                         f"{len(candidates)} high-entropy indices")
    keys = (-candidates,) if tb is None else (-candidates, tb[candidates])
    order = candidates[np.lexsort(keys + (z[candidates],))]
    info = order[:target_info_count]
    frozen = np.sort(order[target_info_count:])
    det = np.flatnonzero(~mask)
    fv = np.zeros(len(frozen), dtype=np.int8) if frozen_values is None else frozen_values
    return CodeProfile(N, info, frozen, det, fv, design_snr_db, design_label, z.copy())


def bec_exact_z(epsilon: float, N: int) -> ReliabilityVector:
    """Exact Bhattacharyya parameters of the polarized BEC(epsilon), SC index order."""
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError(f"epsilon must lie in [0, 1], got {epsilon}")
    n = _check_power_of_two(N)
    z = np.array([float(epsilon)])
    for _ in range(n):
        z = np.column_stack([2 * z - z * z, z * z]).ravel()
    return ReliabilityVector(np.clip(z, 0.0, 1.0), 0, "bec-exact")


def latency_ratio(tc: int, n_blocks: int) -> float:
    """Parallel-vs-joint SC decoding latency ratio ``1 / (T_c (1 + log T_c / log N))``."""
    return 1.0 / (tc * (1.0 + math.log(tc) / math.log(n_blocks)))
