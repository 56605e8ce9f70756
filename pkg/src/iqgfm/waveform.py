"""Relay-point waveform records and their CSV + ``.meta`` sidecar format."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CHANNELS = ("v_sa", "v_sb", "v_sc", "i_sa", "i_sb", "i_sc")
HEADER = "t," + ",".join(CHANNELS)


class WaveformFormatError(ValueError):
    def __init__(self, msg, line=None):
        self.line = line
        super().__init__(f"line {line}: {msg}" if line is not None else msg)


@dataclass(frozen=True, eq=False)
class WaveformRecord:
    """Uniformly sampled three-phase relay-point voltages and currents (pu).

    ``meta`` is serialised to the sidecar; ``extras`` holds simulator
    diagnostics (e.g. limiter impedance traces) and is never exported.
    """

    fs: float
    t0: float
    channels: dict
    meta: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        missing = [c for c in CHANNELS if c not in self.channels]
        if missing:
            raise ValueError(f"missing channels {missing}")
        chans = {c: np.asarray(self.channels[c], dtype=float) for c in CHANNELS}
        lengths = {len(v) for v in chans.values()}
        if len(lengths) != 1:
            raise ValueError("all channels must have the same length")
        if self.fs <= 0:
            raise ValueError("fs must be positive")
        for v in chans.values():
            v.setflags(write=False)
        object.__setattr__(self, "channels", chans)

    def __len__(self):
        return len(self.channels["v_sa"])

    @property
    def t(self) -> np.ndarray:
        return self.t0 + np.arange(len(self)) / self.fs

    @property
    def v(self) -> np.ndarray:
        return np.vstack([self.channels[c] for c in CHANNELS[:3]])

    @property
    def i(self) -> np.ndarray:
        return np.vstack([self.channels[c] for c in CHANNELS[3:]])

    def same_samples(self, other: "WaveformRecord") -> bool:
        return (
            self.fs == other.fs
            and self.t0 == other.t0
            and all(np.array_equal(self.channels[c], other.channels[c]) for c in CHANNELS)
        )


def meta_path(path) -> Path:
    return Path(path).with_suffix(".meta")


def export_waveform(rec: WaveformRecord, path) -> Path:
    path = Path(path)
    data = np.column_stack([rec.t] + [rec.channels[c] for c in CHANNELS])
    with open(path, "w", newline="\n") as fh:
        fh.write(HEADER + "\n")
        np.savetxt(fh, data, fmt="%.17g", delimiter=",", newline="\n")
    meta = {"fs": rec.fs, "t0": rec.t0, "n_samples": len(rec), **rec.meta}
    meta_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path


def import_waveform(path, fs: float | None = None) -> WaveformRecord:
    """Read a waveform CSV; the sample rate comes from ``fs``, the sidecar, or
    the timestamps, in that order."""
    path = Path(path)
    meta = {}
    mp = meta_path(path)
    if mp.exists():
        meta = json.loads(mp.read_text())
    text = path.read_text()
    if not text:
        raise WaveformFormatError("empty file", 1)
    lines = text.split("\n")
    if lines[0].strip() != HEADER:
        raise WaveformFormatError(f"expected header {HEADER!r}", 1)
    if lines[-1] != "":
        raise WaveformFormatError("truncated final row (no newline)", len(lines))
    rows = []
    for lineno, line in enumerate(lines[1:-1], start=2):
        parts = line.split(",")
        if len(parts) != 7:
            raise WaveformFormatError(f"expected 7 fields, got {len(parts)}", lineno)
        try:
            vals = [float(p) for p in parts]
        except ValueError as exc:
            raise WaveformFormatError(str(exc), lineno) from None
        if not all(math.isfinite(v) for v in vals):
            raise WaveformFormatError("non-finite value", lineno)
        rows.append(vals)
    if not rows:
        raise WaveformFormatError("no samples", 2)
    data = np.array(rows)
    n_expected = meta.get("n_samples")
    if n_expected is not None and n_expected != len(rows):
        raise WaveformFormatError(
            f"sidecar declares {n_expected} samples, file has {len(rows)}", len(rows) + 1)
    t = data[:, 0]
    if fs is None:
        fs = meta.get("fs")
    if fs is None:
        if len(t) < 2:
            raise WaveformFormatError("cannot infer fs from a single sample", 2)
        fs = float(round(1.0 / float(np.median(np.diff(t))), 6))
    t0 = float(t[0])
    expect = t0 + np.arange(len(t)) / fs
    bad = np.flatnonzero(np.abs(t - expect) > 0.25 / fs)
    if bad.size:
        raise WaveformFormatError("non-uniform sampling", int(bad[0]) + 2)
    extra_meta = {k: v for k, v in meta.items() if k not in ("fs", "t0", "n_samples")}
    return WaveformRecord(
        fs=float(fs), t0=t0,
        channels={c: data[:, j + 1] for j, c in enumerate(CHANNELS)},
        meta=extra_meta,
    )


def resample(rec: WaveformRecord, fs_new: float) -> WaveformRecord:
    """Band-limited resampling by an integer ratio (up or down)."""
    from fractions import Fraction
    from scipy.signal import resample_poly

    ratio = Fraction(fs_new / rec.fs).limit_denominator(1000)
    chans = {c: resample_poly(rec.channels[c], ratio.numerator, ratio.denominator, padtype="line")
             for c in CHANNELS}
    return WaveformRecord(fs=fs_new, t0=rec.t0, channels=chans, meta=dict(rec.meta))
