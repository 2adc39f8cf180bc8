"""
Experiment orchestration: configuration, seeding and CSV output.

Every experiment is a pure function of its :class:`ExperimentConfig`; rows
are produced sequentially from seeds derived from ``(seed, row tag)``, so a
rerun gives a byte-identical file.
"""

from __future__ import annotations

import csv
import hashlib
import io
import logging
import math
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .channel import CsiMode, FadingSpec, make_rng
from .construction import (DEFAULT_CONSTRUCTION_SAMPLES, construct_bicm, construct_mlc,
                           construct_parallel, csir_sampler, estimate_union_bound,
                           mlc_level_sampler)
from .mutual_info import DEFAULT_SAMPLES, mi_biawgn, mi_cdi_chain, mi_csir
from .polar import CodeProfile
from .schemes import SCHEMES, InterleaverSpec, simulate
from .subchannel import DEFAULT_NODES, MAX_COHERENT_TIME, QuadratureRule

log = logging.getLogger(__name__)

EXPERIMENTS = ("rate-curves", "subchannel-rates", "construct", "fer-sweep", "bound-check")


class ConfigError(ValueError):
    """Invalid or inconsistent configuration."""


def parse_grid(text) -> list[float]:
    """``"-3:3:0.3"`` (inclusive range) or ``"-2,0,2"``."""
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    text = str(text).strip()
    try:
        if ":" in text:
            lo, hi, step = (float(v) for v in text.split(":"))
            if step <= 0:
                raise ConfigError("grid step must be positive")
            count = int(math.floor((hi - lo) / step + 1e-9)) + 1
            return [round(lo + i * step, 10) for i in range(count)]
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"cannot parse SNR grid {text!r}: {exc}") from None


def _parse_bool(v) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).strip().lower()
    if s in ("1", "true", "yes", "on"):
        return True
    if s in ("0", "false", "no", "off", ""):
        return False
    raise ConfigError(f"not a boolean: {v!r}")


def _parse_int_list(v) -> list[int]:
    if isinstance(v, (list, tuple)):
        return [int(x) for x in v]
    return [int(x) for x in str(v).split(",") if x.strip()]


@dataclass
class ExperimentConfig:
    experiment: str = "rate-curves"
    tc: int = 1
    n: int = 1024
    snr_grid: list = field(default_factory=lambda: [0.0])
    rate: float | None = None
    rate_gap: float = 0.1
    samples: int = DEFAULT_SAMPLES
    seed: int = 1
    csi_mode: str = "CDI"
    quadrature_nodes: int = DEFAULT_NODES
    output: str = "-"
    tc_list: list | None = None
    scheme: str = "mlc"
    frames: int = 10_000
    construction_samples: int = DEFAULT_CONSTRUCTION_SAMPLES
    bound_samples: int = DEFAULT_CONSTRUCTION_SAMPLES
    profile_dir: str | None = None
    label: str | None = None
    construct: bool = True
    noiseless: bool = False
    interleaver_seed: int = 7

    _CONVERT = {
        "tc": int, "n": int, "snr_grid": parse_grid, "rate": float, "rate_gap": float,
        "samples": int, "seed": int, "quadrature_nodes": int, "tc_list": _parse_int_list,
        "frames": int, "construction_samples": int, "bound_samples": int,
        "construct": _parse_bool, "noiseless": _parse_bool, "interleaver_seed": int,
    }

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    @classmethod
    def from_mapping(cls, values: dict) -> "ExperimentConfig":
        kw = {}
        for key, raw in values.items():
            k = key.replace("-", "_")
            if k not in cls.keys():
                raise ConfigError(f"unknown configuration key {key!r}")
            if raw is None:
                continue
            conv = cls._CONVERT.get(k)
            try:
                kw[k] = conv(raw) if conv else raw
            except ConfigError:
                raise
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {key}: {raw!r} ({exc})") from None
        cfg = cls(**kw)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if not 1 <= self.tc <= MAX_COHERENT_TIME:
            raise ConfigError(f"tc must lie in 1..{MAX_COHERENT_TIME}, got {self.tc}")
        if any(not 1 <= t <= MAX_COHERENT_TIME for t in (self.tc_list or [])):
            raise ConfigError(f"tc_list entries must lie in 1..{MAX_COHERENT_TIME}")
        if not self.snr_grid or any(b <= a for a, b in zip(self.snr_grid, self.snr_grid[1:])):
            raise ConfigError("snr_grid must be non-empty and strictly increasing")
        if self.samples <= 0:
            raise ConfigError("samples must be positive")
        if self.frames <= 0:
            raise ConfigError("frames must be positive")
        if self.n < 1 or self.n & (self.n - 1):
            raise ConfigError(f"n must be a power of two, got {self.n}")
        if self.rate is not None and not 0 <= self.rate <= 1:
            raise ConfigError("rate must lie in [0, 1]")
        if self.scheme not in SCHEMES:
            raise ConfigError(f"unknown scheme {self.scheme!r}")
        if self.quadrature_nodes < 1:
            raise ConfigError("quadrature_nodes must be positive")
        try:
            CsiMode.parse(self.csi_mode)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def digest(self) -> str:
        """Hash of everything that affects the results (the output location does not)."""
        values = {k: v for k, v in asdict(self).items() if k != "output"}
        blob = repr(sorted(values.items())).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


def read_config_file(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def row_rng(seed: int, *tag) -> np.random.Generator:
    """Independent stream for one output row."""
    words = [seed] + [int(hashlib.sha256(str(t).encode()).hexdigest()[:8], 16) for t in tag]
    return make_rng(np.random.SeedSequence(words))


# -- CSV ---------------------------------------------------------------------------

def _render_csv(cfg: ExperimentConfig, header, rows) -> str:
    buf = io.StringIO()
    buf.write(f"# blockfade {__version__} experiment={cfg.experiment} config={cfg.digest()} seed={cfg.seed}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    return v


def _emit(cfg: ExperimentConfig, text: str):
    if cfg.output in ("-", ""):
        sys.stdout.write(text)
        sys.stdout.flush()
        return None
    path = Path(cfg.output)
    try:
        path.write_text(text, encoding="utf-8", newline="\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
    return path


# -- experiments -------------------------------------------------------------------

MI_HEADER = ["kind", "T_c", "snr_db", "value_bits", "ci95", "samples", "seed"]


def _mi_row(est, seed):
    return [est.kind, est.coherent_time, est.snr_db, est.value_bits, est.ci95_halfwidth, est.samples, seed]


def rate_curve_rows(cfg: ExperimentConfig):
    tcs = cfg.tc_list or [cfg.tc]
    rows = []
    for snr in cfg.snr_grid:
        base = FadingSpec.from_snr_db(snr, 1)
        awgn = mi_biawgn(base.noise_sigma)
        awgn.snr_db = snr
        rows.append(_mi_row(awgn, cfg.seed))
        est = mi_csir(base.replace(csi_mode=CsiMode.CSIR), cfg.samples, row_rng(cfg.seed, "csir", snr))
        est.snr_db = snr
        rows.append(_mi_row(est, cfg.seed))
        for tc in tcs:
            spec = FadingSpec.from_snr_db(snr, tc)
            quad = QuadratureRule.for_spec(spec, cfg.quadrature_nodes)
            est, _ = mi_cdi_chain(spec, cfg.samples, row_rng(cfg.seed, "cdi", tc, snr), quad)
            est.kind, est.snr_db = f"cdi({tc})", snr
            rows.append(_mi_row(est, cfg.seed))
        log.info("rates: %.2f dB done", snr)
    return rows


def run_rate_curves(cfg: ExperimentConfig):
    """BI-AWGN, CSI-R and CDI(T_c) rate curves over the SNR grid."""
    return _emit(cfg, _render_csv(cfg, MI_HEADER, rate_curve_rows(cfg)))


def subchannel_rate_rows(cfg: ExperimentConfig):
    rows = []
    for snr in cfg.snr_grid:
        spec = FadingSpec.from_snr_db(snr, cfg.tc)
        quad = QuadratureRule.for_spec(spec, cfg.quadrature_nodes)
        avg, subs = mi_cdi_chain(spec, cfg.samples, row_rng(cfg.seed, "cdi", cfg.tc, snr), quad)
        for s in subs:
            s.snr_db = snr
            rows.append(_mi_row(s, cfg.seed))
        avg.snr_db = snr
        rows.append(_mi_row(avg, cfg.seed))
        est = mi_csir(spec.replace(csi_mode=CsiMode.CSIR), cfg.samples, row_rng(cfg.seed, "csir", snr))
        est.snr_db = snr
        rows.append(_mi_row(est, cfg.seed))
        log.info("subrates: %.2f dB done", snr)
    return rows


def run_subchannel_rates(cfg: ExperimentConfig):
    """Per-sub-channel CDI rates plus the per-symbol average and the CSI-R reference."""
    return _emit(cfg, _render_csv(cfg, MI_HEADER, subchannel_rate_rows(cfg)))


def _spec_for(cfg: ExperimentConfig, snr: float) -> FadingSpec:
    mode = CsiMode.CDI if cfg.scheme.startswith("mlc") else CsiMode.parse(cfg.csi_mode)
    if mode is CsiMode.CDI and not cfg.scheme.startswith("mlc"):
        mode = CsiMode.CSIR
    return FadingSpec.from_snr_db(snr, cfg.tc, mode)


def _design_rate(cfg: ExperimentConfig, spec: FadingSpec, snr: float):
    """Target rate and, for MLC, the per-level rates used for allocation."""
    if cfg.scheme.startswith("mlc"):
        quad = QuadratureRule.for_spec(spec, cfg.quadrature_nodes)
        avg, subs = mi_cdi_chain(spec, cfg.samples, row_rng(cfg.seed, "cdi", cfg.tc, snr), quad)
        capacity, levels = avg.value_bits, [s.value_bits for s in subs]
    else:
        capacity = mi_csir(spec, cfg.samples, row_rng(cfg.seed, "csir", snr)).value_bits
        levels = None
    rate = cfg.rate if cfg.rate is not None else max(0.0, capacity - cfg.rate_gap)
    return rate, capacity, levels


def _label(cfg: ExperimentConfig, snr: float) -> str:
    return cfg.label or f"{cfg.scheme}-tc{cfg.tc}-n{cfg.n}-snr{snr:g}"


def _profile_paths(cfg: ExperimentConfig, snr: float, directory) -> list[Path]:
    d = Path(directory)
    label = _label(cfg, snr)
    if cfg.scheme == "bicm":
        return [d / f"{label}.profile"]
    return [d / f"{label}.level{j}.profile" for j in range(1, cfg.tc + 1)]


def build_profiles(cfg: ExperimentConfig, snr: float):
    """Construct the code(s) of ``cfg.scheme`` at ``snr``; returns ``(profiles, rate, capacity)``."""
    spec = _spec_for(cfg, snr)
    rate, capacity, levels = _design_rate(cfg, spec, snr)
    rng = row_rng(cfg.seed, "construct", cfg.scheme, snr)
    label = _label(cfg, snr)
    if cfg.scheme == "bicm":
        profiles = [construct_bicm(spec, cfg.tc * cfg.n, rate, cfg.construction_samples, rng, label)]
    elif cfg.scheme == "parallel":
        profiles = construct_parallel(spec, cfg.n, rate, cfg.construction_samples, rng, label)
    else:
        quad = QuadratureRule.for_spec(spec, cfg.quadrature_nodes)
        profiles = construct_mlc(spec, cfg.n, rate, cfg.construction_samples, rng, label, quad,
                                 level_rates=levels)
    return profiles, rate, capacity


def run_construct(cfg: ExperimentConfig) -> list[Path]:
    """Write one profile file per component code into the output directory."""
    out = Path("." if cfg.output in ("-", "") else cfg.output)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create {out}: {exc.strerror or exc}") from exc
    written = []
    for snr in cfg.snr_grid:
        profiles, rate, capacity = build_profiles(cfg, snr)
        for prof, path in zip(profiles, _profile_paths(cfg, snr, out)):
            try:
                prof.save(path)
            except OSError as exc:
                raise OSError(f"cannot write {path}: {exc.strerror or exc}") from exc
            written.append(path)
            log.info("wrote %s (k=%d, N=%d)", path, prof.k, prof.block_length)
        log.info("%.2f dB: rate %.4f, capacity %.4f", snr, rate, capacity)
    return written


def _load_profiles(cfg: ExperimentConfig, snr: float):
    profiles = []
    for path in _profile_paths(cfg, snr, cfg.profile_dir):
        if not path.exists():
            raise FileNotFoundError(f"missing profile file: {path}")
        profiles.append(CodeProfile.load(path))
    return profiles


def _profiles_for(cfg: ExperimentConfig, snr: float):
    if cfg.profile_dir:
        return _load_profiles(cfg, snr)
    if not cfg.construct:
        raise ConfigError("no profile_dir given and on-the-fly construction disabled")
    return build_profiles(cfg, snr)[0]


def _simulate(cfg, profiles, spec, snr, frames):
    il = None
    if cfg.scheme == "bicm":
        il = InterleaverSpec.random(profiles[0].block_length, cfg.interleaver_seed)
    quad = QuadratureRule.for_spec(spec, cfg.quadrature_nodes)
    arg = profiles[0] if cfg.scheme == "bicm" else profiles
    return simulate(cfg.scheme, arg, spec, frames, row_rng(cfg.seed, "fer", cfg.scheme, snr),
                    il=il, quad=quad, noiseless=cfg.noiseless)


FER_HEADER = ["scheme", "T_c", "N", "rate", "snr_db", "frames", "frame_errors", "bit_errors",
              "union_bound", "seed"]


def fer_rows(cfg: ExperimentConfig):
    rows = []
    for snr in cfg.snr_grid:
        spec = _spec_for(cfg, snr)
        profiles = _profiles_for(cfg, snr)
        count = _simulate(cfg, profiles, spec, snr, cfg.frames)
        total_k = sum(p.k for p in profiles)
        total_len = sum(p.block_length for p in profiles)
        ub = sum(p.union_bound() for p in profiles) if all(p.z is not None for p in profiles) else float("nan")
        rows.append([cfg.scheme, cfg.tc, cfg.n, total_k / total_len, snr, count.frames,
                     count.frame_errors, count.bit_errors, ub, cfg.seed])
        log.info("fer: %.2f dB  FER %.3g", snr, count.fer)
    return rows


def run_fer_sweep(cfg: ExperimentConfig):
    """Frame/bit error rates per SNR with the design-time union bound alongside."""
    if cfg.frames < 1:
        raise ConfigError("frames must be positive")
    return _emit(cfg, _render_csv(cfg, FER_HEADER, fer_rows(cfg)))


def union_bound(cfg: ExperimentConfig, profiles, spec: FadingSpec, snr: float):
    """Fresh-sample union bound of the whole scheme: ``(bound, standard_error)``."""
    rng = row_rng(cfg.seed, "bound", cfg.scheme, snr)
    if cfg.scheme == "bicm":
        return estimate_union_bound(profiles[0], csir_sampler(spec), cfg.bound_samples, rng)
    if cfg.scheme == "parallel":
        parts = [estimate_union_bound(p, csir_sampler(spec), cfg.bound_samples, rng) for p in profiles]
    else:
        quad = QuadratureRule.for_spec(spec, cfg.quadrature_nodes)
        parts = [estimate_union_bound(p, mlc_level_sampler(spec, j, quad), cfg.bound_samples, rng)
                 for j, p in enumerate(profiles, start=1)]
    return sum(b for b, _ in parts), math.sqrt(sum(se * se for _, se in parts))


BOUND_HEADER = ["scheme", "T_c", "N", "rate", "snr_db", "frames", "frame_errors", "fer", "fer_se",
                "union_bound", "union_bound_se", "holds", "seed"]


def bound_check_rows(cfg: ExperimentConfig):
    rows = []
    for snr in cfg.snr_grid:
        spec = _spec_for(cfg, snr)
        profiles = _profiles_for(cfg, snr)
        count = _simulate(cfg, profiles, spec, snr, cfg.frames)
        ub, ub_se = union_bound(cfg, profiles, spec, snr)
        se = math.sqrt(count.fer_stderr() ** 2 + ub_se ** 2)
        total_k = sum(p.k for p in profiles)
        total_len = sum(p.block_length for p in profiles)
        rows.append([cfg.scheme, cfg.tc, cfg.n, total_k / total_len, snr, count.frames, count.frame_errors,
                     count.fer, count.fer_stderr(), ub, ub_se, bool(count.fer <= ub + 3 * se), cfg.seed])
        log.info("bound-check: %.2f dB  FER %.3g  bound %.3g", snr, count.fer, ub)
    return rows


def run_bound_check(cfg: ExperimentConfig):
    """Measured FER against a fresh-sample union bound (3 combined standard errors)."""
    return _emit(cfg, _render_csv(cfg, BOUND_HEADER, bound_check_rows(cfg)))


RUNNERS = {
    "rate-curves": run_rate_curves,
    "subchannel-rates": run_subchannel_rates,
    "construct": run_construct,
    "fer-sweep": run_fer_sweep,
    "bound-check": run_bound_check,
}


def run(cfg: ExperimentConfig):
    return RUNNERS[cfg.experiment](cfg)
