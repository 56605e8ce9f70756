"""Time-domain incremental-quantity distance element.

Processing chain per record: low-pass the raw channels, form memory IQs
against a reference that freezes inside the pre-disturbance window once the
disturbance detector fires, compute six-loop operating and restraining
quantities, accumulate clamped running sums and apply the trip criterion.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.signal import butter, lfilter

from . import kernels
from .config import LineParams, default_line
from .waveform import WaveformRecord

LOOPS = ("AG", "BG", "CG", "AB", "BC", "CA")
TRIP_MODES = ("threshold", "consecutive_time")


class InsufficientHistoryError(ValueError):
    pass


@dataclass(frozen=True)
class RelaySettings:
    m: float = 0.8
    p: int = 2
    k_rst: float = 1.0
    fs: float | None = None  # None: take the record's rate
    f0: float = 50.0
    lp_cutoff: float | None = 450.0
    lp_order: int = 3
    trip_mode: str = "consecutive_time"
    threshold_level: float = 0.005  # pu*s
    hold_time: float = 0.012
    line: LineParams = field(default_factory=default_line)
    detect_di: float = 0.05
    detect_dv: float = 0.02
    detect_time: float = 1e-3
    decision_window: float = 0.2
    reset_after_cycles: float = 1.0
    ll_phase_base: bool = True  # express LL loops on the phase-voltage base

    def __post_init__(self):
        if not 0.0 < self.m < 1.0:
            raise ValueError("reach m must lie in (0, 1)")
        if int(self.p) != self.p or self.p < 1:
            raise ValueError("p must be an integer >= 1")
        if self.k_rst < 1.0:
            raise ValueError("k_rst must be >= 1")
        if self.trip_mode not in TRIP_MODES:
            raise ValueError(f"trip_mode must be one of {TRIP_MODES}")
        if self.hold_time < 0.010 - 1e-12:
            raise ValueError("hold_time must be at least 10 ms")

    def digest(self) -> str:
        blob = json.dumps(asdict(self), sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass(frozen=True)
class LoopState:
    loop: str
    e_sum: float
    active: bool
    above_zero_since: float | None


@dataclass
class RunningSums:
    e: np.ndarray  # loops x samples, >= 0
    since: np.ndarray  # sample index where the current positive run began, -1 if none
    active: np.ndarray  # bool, loops x samples
    start: int
    stop: int


@dataclass
class RelayDecision:
    tripped: bool
    trip_time: float | None
    tripping_loop: str | None
    detection_time: float | None
    settings_hash: str
    traces: dict = field(default_factory=dict, repr=False)

    def to_json(self) -> dict:
        return {
            "element": "iq_distance",
            "tripped": self.tripped,
            "trip_time": self.trip_time,
            "tripping_loop": self.tripping_loop,
            "detection_time": self.detection_time,
            "settings_hash": self.settings_hash,
        }

    def loop_states(self, n: int | None = None) -> list[LoopState]:
        """Loop states at sample ``n`` (default: last sample)."""
        e, since, active, t = (self.traces[k] for k in ("e_sum", "since", "active", "t"))
        n = e.shape[1] - 1 if n is None else n
        return [
            LoopState(loop, float(e[j, n]), bool(active[j, n]),
                      float(t[since[j, n]]) if since[j, n] >= 0 else None)
            for j, loop in enumerate(LOOPS)
        ]


# --- signal chain --------------------------------------------------------------

def cycle_samples(fs: float, f0: float) -> int:
    n = fs / f0
    if abs(n - round(n)) > 1e-9:
        raise ValueError(f"fs={fs} is not an integer multiple of f0={f0}")
    return int(round(n))


def lowpass(x: np.ndarray, settings: RelaySettings, fs: float, pad: int) -> np.ndarray:
    """Causal Butterworth low-pass; the first ``pad`` samples are replayed
    ahead of the record as periodic pre-history so no start-up transient
    reaches the analysis window."""
    if settings.lp_cutoff is None:
        return np.array(x, dtype=float)
    b, a = butter(settings.lp_order, settings.lp_cutoff, fs=fs)
    padded = np.concatenate([x[..., :pad], x], axis=-1)
    return lfilter(b, a, padded, axis=-1)[..., pad:]


def memory_index(n: int, delay: int, boundary: int | None) -> np.ndarray:
    """Reference sample for each sample.

    Plain delay before ``boundary``; after it the reference wraps with
    period ``delay`` so it always stays in ``[boundary - delay, boundary)``.
    Samples with no history reference themselves.
    """
    idx = np.arange(n)
    ref = idx - delay
    if boundary is not None:
        after = idx >= boundary
        k = np.maximum(1, np.ceil((idx[after] - boundary + 1) / delay)).astype(int)
        ref[after] = idx[after] - k * delay
    ref[ref < 0] = idx[ref < 0]
    return ref


def incremental(x: np.ndarray, delay: int, boundary: int | None = None) -> np.ndarray:
    """Memory IQ ``x(t) - x(t - pT)`` along the last axis."""
    if x.shape[-1] <= delay:
        raise InsufficientHistoryError(f"need more than {delay} samples of history")
    ref = memory_index(x.shape[-1], delay, boundary)
    return x - x[..., ref]


def detect(dv: np.ndarray, di: np.ndarray, settings: RelaySettings, fs: float):
    """First disturbance run lasting ``detect_time``; returns (start, confirm) or None."""
    cond = (np.abs(di) > settings.detect_di).any(axis=0) | (np.abs(dv) > settings.detect_dv).any(axis=0)
    need = max(1, int(round(settings.detect_time * fs)))
    run = 0
    for n, c in enumerate(cond):
        run = run + 1 if c else 0
        if run >= need:
            return n - need + 1, n
    return None


def _drop(i_ph: np.ndarray, settings: RelaySettings, ts: float):
    """Loop voltage drops to the reach point for LG (3 rows) and LL (3 rows)."""
    ln, m = settings.line, settings.m
    i0 = i_ph.mean(axis=0)
    d_ph = np.gradient(i_ph, ts, axis=1)
    d0 = np.gradient(i0, ts)
    lg = m * (ln.r1 * i_ph + (ln.r0 - ln.r1) * i0 + ln.l1 * d_ph + (ln.l0 - ln.l1) * d0)
    i_ll = i_ph - np.roll(i_ph, -1, axis=0)
    ll = m * (ln.r1 * i_ll + ln.l1 * np.gradient(i_ll, ts, axis=1))
    return np.vstack([lg, ll])


def _loop_voltages(v_ph: np.ndarray) -> np.ndarray:
    return np.vstack([v_ph, v_ph - np.roll(v_ph, -1, axis=0)])


def operating_quantities(dv: np.ndarray, di: np.ndarray, settings: RelaySettings,
                         fs: float) -> np.ndarray:
    """Six-loop |dv - dv_m| from (already filtered) phase IQs."""
    psi = np.abs(_loop_voltages(dv) - _drop(di, settings, 1.0 / fs))
    if settings.ll_phase_base:
        psi[3:] /= math.sqrt(3)
    return psi


def restraining_quantities(v: np.ndarray, i: np.ndarray, ref: np.ndarray,
                           settings: RelaySettings, fs: float) -> np.ndarray:
    """K * |v - v_m| evaluated at the memory reference samples."""
    vm = _loop_voltages(v) - _drop(i, settings, 1.0 / fs)
    psi = settings.k_rst * np.abs(vm[:, ref])
    if settings.ll_phase_base:
        psi[3:] /= math.sqrt(3)
    return psi


def running_sum(psi_op: np.ndarray, psi_rst: np.ndarray, settings: RelaySettings, fs: float,
                start: int, stop: int | None = None) -> RunningSums:
    n = psi_op.shape[-1]
    stop = n if stop is None else min(stop, n)
    d = np.ascontiguousarray(np.atleast_2d(psi_op - psi_rst), dtype=float)
    e, since = kernels.running_sum(d, 1.0 / fs, int(start), int(stop))
    reset = max(1, int(round(settings.reset_after_cycles * fs / settings.f0)))
    active = np.zeros(e.shape, dtype=bool)
    for j in range(e.shape[0]):
        on, zeros = False, 0
        for k in range(start, stop):
            if e[j, k] > 0:
                on, zeros = True, 0
            elif on:
                zeros += 1
                if zeros >= reset:
                    on = False
            active[j, k] = on
    return RunningSums(e=e, since=since, active=active, start=start, stop=stop)


def trip_logic(sums: RunningSums, settings: RelaySettings, fs: float, t: np.ndarray):
    """First (sample, loop index) satisfying the trip criterion, or None.

    consecutive_time: the sum has been strictly positive for ``hold_time``;
    threshold: the sum reached ``threshold_level``.
    """
    if settings.trip_mode == "consecutive_time":
        hold = int(math.ceil(settings.hold_time * fs - 1e-9))
        idx = np.arange(sums.e.shape[1])
        ok = (sums.since >= 0) & (idx - sums.since >= hold)
    else:
        ok = sums.e >= settings.threshold_level
    hits = np.argwhere(ok.T)  # rows: (sample, loop), sample-major order
    if hits.size == 0:
        return None
    n, j = hits[0]
    return int(n), int(j)


def process(rec: WaveformRecord, settings: RelaySettings) -> RelayDecision:
    fs = rec.fs
    if settings.fs is not None and abs(settings.fs - fs) > 1e-9:
        raise ValueError(f"record sampled at {fs} Hz, settings expect {settings.fs} Hz")
    n_cyc = cycle_samples(fs, settings.f0)
    delay = settings.p * n_cyc
    if len(rec) <= delay:
        raise InsufficientHistoryError(f"record has {len(rec)} samples, memory needs {delay}")
    t = rec.t
    v = lowpass(rec.v, settings, fs, delay)
    i = lowpass(rec.i, settings, fs, delay)

    hit = detect(incremental(v, delay), incremental(i, delay), settings, fs)
    guard = max(1, int(round(settings.detect_time * fs)))
    boundary = None if hit is None else max(hit[0] - guard, delay)
    ref = memory_index(len(rec), delay, boundary)
    dv = v - v[:, ref]
    di = i - i[:, ref]
    psi_op = operating_quantities(dv, di, settings, fs)
    psi_rst = restraining_quantities(v, i, ref, settings, fs)

    sh = settings.digest()
    if hit is None:
        sums = RunningSums(np.zeros_like(psi_op), np.full(psi_op.shape, -1, dtype=np.int64),
                           np.zeros(psi_op.shape, dtype=bool), len(rec), len(rec))
        trip = None
        det_time = None
    else:
        start = hit[1]
        stop = start + int(round(settings.decision_window * fs)) + 1
        sums = running_sum(psi_op, psi_rst, settings, fs, start, stop)
        trip = trip_logic(sums, settings, fs, t)
        det_time = float(t[start])
    traces = {"t": t, "psi_op": psi_op, "psi_rst": psi_rst, "e_sum": sums.e,
              "since": sums.since, "active": sums.active, "dv": dv, "di": di, "ref": ref}
    if trip is None:
        return RelayDecision(False, None, None, det_time, sh, traces)
    n, j = trip
    return RelayDecision(True, float(t[n]), LOOPS[j], det_time, sh, traces)
