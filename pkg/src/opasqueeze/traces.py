"""Zero-span homodyne noise traces under a triangle-wave LO phase scan.

A trace is the relative noise power (dB above shot noise) recorded while
the local-oscillator phase is swept back and forth by a triangle wave.
Per-sample Gaussian jitter is added in the dB domain, then the trace is
smoothed by a single-pole low-pass at the video bandwidth.

Files: ``<name>.csv`` with header ``t_s,power_db`` and a ``<name>.json``
sidecar holding the scan configuration and the noise levels used.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from ._io import atomic_write_text
from .errors import InvalidArgumentError, ParseError
from .gaussian import to_db

TRACE_SCHEMA_VERSION = 1
KINDS = ("squeezed-scan", "shot-reference")


@dataclass(frozen=True)
class ScanConfig:
    """Acquisition settings for one trace.

    ``vbw=None`` (or ``inf``) disables smoothing. ``rbw`` is carried as
    metadata only.
    """

    scan_frequency: float = 1.0
    duration: float = 2.0
    sample_rate: float = 1000.0
    phase_span: float = 2 * math.pi
    phase_offset: float = 0.0
    vbw: float | None = 510.0
    rbw: float = 3e6
    noise_sigma_db: float = 0.1
    rng_seed: int = 0

    def __post_init__(self):
        for name in ("scan_frequency", "duration", "sample_rate", "rbw"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise InvalidArgumentError(f"{name} must be finite and > 0, got {v!r}")
        if self.vbw is not None and not self.vbw > 0:
            raise InvalidArgumentError(f"vbw must be > 0 or None, got {self.vbw!r}")
        if not (math.isfinite(self.noise_sigma_db) and self.noise_sigma_db >= 0):
            raise InvalidArgumentError("noise_sigma_db must be >= 0")
        if not (math.isfinite(self.phase_span) and math.isfinite(self.phase_offset)):
            raise InvalidArgumentError("phase span and offset must be finite")
        if self.n_samples < 1:
            raise InvalidArgumentError("duration * sample_rate must give at least one sample")

    @property
    def n_samples(self) -> int:
        return int(round(self.duration * self.sample_rate))

    @property
    def period(self) -> float:
        return 1.0 / self.scan_frequency

    def times(self) -> np.ndarray:
        return np.arange(self.n_samples) / self.sample_rate

    def smoothing_coefficient(self) -> float:
        """Update weight of the single-pole low-pass; 1 means no smoothing."""
        if self.vbw is None or math.isinf(self.vbw):
            return 1.0
        return -math.expm1(-2 * math.pi * self.vbw / self.sample_rate)

    def to_dict(self) -> dict:
        d = asdict(self)
        if d["vbw"] is not None and math.isinf(d["vbw"]):
            d["vbw"] = None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScanConfig":
        known = {k: d[k] for k in cls.__dataclass_fields__ if k in d}
        return cls(**known)


@dataclass(frozen=True)
class NoiseTrace:
    t: np.ndarray
    power_db: np.ndarray
    kind: str
    config: ScanConfig
    r_plus: float
    r_minus: float
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        y = np.asarray(self.power_db, dtype=float)
        if t.shape != y.shape or t.ndim != 1:
            raise InvalidArgumentError("t and power_db must be 1-D arrays of equal length")
        if not np.all(np.isfinite(y)):
            raise InvalidArgumentError("power_db must be finite")
        if self.kind not in KINDS:
            raise InvalidArgumentError(f"kind must be one of {KINDS}")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "power_db", y)

    def __len__(self):
        return len(self.t)

    def metadata(self) -> dict:
        return {
            "schema_version": TRACE_SCHEMA_VERSION,
            "kind": self.kind,
            "config": self.config.to_dict(),
            "model": {"r_plus": self.r_plus, "r_minus": self.r_minus},
            **({"extra": self.extra} if self.extra else {}),
        }


def triangle(t, period: float):
    """Unit triangle wave: 0 at t=0, 1 at half period, back to 0 at a full period."""
    frac = np.mod(np.asarray(t, dtype=float) / period, 1.0)
    return np.where(frac < 0.5, 2.0 * frac, 2.0 - 2.0 * frac)


def phase_of_time(t, config: ScanConfig):
    """LO phase at time ``t``; ranges over ``[offset, offset + span]``."""
    if np.any(np.asarray(t) < 0):
        raise InvalidArgumentError("time must be >= 0")
    out = config.phase_offset + config.phase_span * triangle(t, config.period)
    return float(out) if np.ndim(out) == 0 else out


def variance_at_phase(r_plus, r_minus, theta):
    """Noise of the quadrature at LO phase ``theta``: ``R+ cos^2 + R- sin^2``."""
    c = np.cos(theta)
    s = np.sin(theta)
    out = r_plus * c * c + r_minus * s * s
    return float(out) if np.ndim(out) == 0 else out


def smooth(values, config: ScanConfig) -> np.ndarray:
    """Single-pole low-pass at the video bandwidth, started at the first sample.

    Each output is a convex combination of inputs, so the range never grows.
    """
    x = np.asarray(values, dtype=float)
    alpha = config.smoothing_coefficient()
    if alpha >= 1.0 or x.size == 0:
        return x.copy()
    if x.ndim == 1:
        y, _ = lfilter([alpha], [1.0, alpha - 1.0], x, zi=[(1.0 - alpha) * x[0]])
        return y
    # filter along axis 0, e.g. Jacobian columns
    zi = ((1.0 - alpha) * x[0])[np.newaxis, ...]
    y, _ = lfilter([alpha], [1.0, alpha - 1.0], x, axis=0, zi=zi)
    return y


def ideal_trace_db(config: ScanConfig, r_plus: float, r_minus: float) -> np.ndarray:
    """Noiseless, unsmoothed trace in dB."""
    theta = phase_of_time(config.times(), config)
    return to_db(variance_at_phase(r_plus, r_minus, theta))


def synthesize(config: ScanConfig, r_plus: float, r_minus: float,
               kind: str = "squeezed-scan") -> NoiseTrace:
    """Simulate a scanned noise trace for noise levels ``r_plus >= r_minus > 0`` (linear)."""
    if not (r_plus >= r_minus > 0):
        raise InvalidArgumentError(f"need R+ >= R- > 0, got R+={r_plus!r}, R-={r_minus!r}")
    t = config.times()
    y = ideal_trace_db(config, r_plus, r_minus)
    if config.noise_sigma_db > 0:
        rng = np.random.default_rng(config.rng_seed)
        y = y + rng.normal(0.0, config.noise_sigma_db, size=y.shape)
    y = smooth(y, config)
    return NoiseTrace(t, y, kind, config, float(r_plus), float(r_minus))


def shot_reference(config: ScanConfig) -> NoiseTrace:
    """Flat shot-noise trace (0 dB plus jitter)."""
    return synthesize(config, 1.0, 1.0, kind="shot-reference")


# file io

def _fmt(x: float) -> str:
    return repr(float(x))


def write_trace(trace: NoiseTrace, path) -> tuple[Path, Path]:
    """Write ``path`` (CSV) and its ``.json`` sidecar; returns both paths."""
    path = Path(path)
    lines = ["t_s,power_db"]
    lines += [f"{_fmt(t)},{_fmt(y)}" for t, y in zip(trace.t, trace.power_db)]
    atomic_write_text(path, "\n".join(lines) + "\n")
    sidecar = path.with_suffix(".json")
    atomic_write_text(sidecar, json.dumps(trace.metadata(), indent=2, sort_keys=True) + "\n")
    return path, sidecar


def read_trace_csv(path) -> tuple[np.ndarray, np.ndarray]:
    path = Path(path)
    text = path.read_text()
    rows = text.splitlines()
    if not rows or not rows[0].strip():
        raise ParseError(f"{path}: empty trace file")
    if [h.strip() for h in rows[0].split(",")] != ["t_s", "power_db"]:
        raise ParseError(f"expected header 't_s,power_db', got {rows[0]!r}", 1)
    t, y = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row.strip():
            continue
        parts = row.split(",")
        if len(parts) != 2:
            raise ParseError(f"expected 2 columns, got {len(parts)}", lineno)
        try:
            t.append(float(parts[0]))
            y.append(float(parts[1]))
        except ValueError:
            raise ParseError(f"non-numeric value in {row!r}", lineno) from None
    if not t:
        raise ParseError(f"{path}: no data rows")
    return np.array(t), np.array(y)


def read_trace(path) -> NoiseTrace:
    """Read a trace CSV together with its JSON sidecar."""
    path = Path(path)
    t, y = read_trace_csv(path)
    sidecar = path.with_suffix(".json")
    if not sidecar.exists():
        raise ParseError(f"{path}: missing sidecar {sidecar.name}")
    try:
        meta = json.loads(sidecar.read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"{sidecar}: invalid JSON: {exc.msg}", exc.lineno) from None
    try:
        config = ScanConfig.from_dict(meta["config"])
        model = meta["model"]
        return NoiseTrace(t, y, meta["kind"], config, float(model["r_plus"]), float(model["r_minus"]),
                          meta.get("extra", {}))
    except (KeyError, TypeError) as exc:
        raise ParseError(f"{sidecar}: missing or malformed field {exc}") from None
