"""Percentile-threshold detection of impulsive events in derivative signals."""
import warnings
from dataclasses import dataclass
from math import ceil, floor

import numpy as np

from .errors import DensePulseWarning, ValidationError

DEFAULT_PERCENTILE = 99.5
# lobes whose peak is within this fraction of the largest lobe count as tied;
# odd-order derivatives of symmetric kernels have two exactly tied lobes
DEFAULT_LOBE_TOLERANCE = 0.15


@dataclass
class DerivativeSignal:
    channel: int
    order: int
    samples: np.ndarray
    fs: float
    warmup: int

    @property
    def valid(self):
        return self.samples[self.warmup:]


@dataclass(frozen=True)
class Detection:
    channel: int
    peak_index: int
    start_index: int
    peak_magnitude: float
    crossing_index: int = None
    flags: tuple = ()

    def start_time(self, fs):
        return self.start_index / fs

    def to_json(self, fs):
        return {"channel": self.channel, "peak_index": self.peak_index,
                "start_index": self.start_index, "peak_time_s": self.peak_index / fs,
                "magnitude": self.peak_magnitude, "flags": list(self.flags)}

    @classmethod
    def from_json(cls, d):
        return cls(channel=int(d["channel"]), peak_index=int(d["peak_index"]),
                   start_index=int(d["start_index"]), peak_magnitude=float(d["magnitude"]),
                   flags=tuple(d.get("flags", ())))


def filter_channel(record, channel, fir):
    """n-th derivative signal of one channel; the first L-1 samples are warm-up."""
    x = record.data[channel]
    if len(x) < fir.length:
        raise ValidationError(
            f"record has {len(x)} samples, shorter than the filter length {fir.length}")
    return DerivativeSignal(channel=channel, order=fir.deriv_order, samples=fir.apply(x),
                            fs=record.fs, warmup=fir.warmup)


def percentile_threshold(deriv, p):
    """p-th percentile of |deriv| over the valid region (nearest-rank)."""
    if not 0 < p < 100:
        raise ValidationError(f"percentile must lie in (0, 100), got {p}")
    v = np.abs(deriv.valid)
    if v.size == 0:
        raise ValidationError("derivative signal has no samples after warm-up")
    rank = max(1, ceil(p / 100 * v.size))
    return float(np.partition(v, rank - 1)[rank - 1])


def min_percentile(n_beats, T, fs, K):
    """Lower bound 100 (1 - N_beats T fs / K) on the admissible percentile.

    Returns the bound clamped at 0 and warns when the pulses are too dense
    (or absent) for it to be meaningful.
    """
    if not K > 0:
        raise ValidationError(f"K must be positive, got {K}")
    value = 100 * (1 - n_beats * T * fs / K)
    if n_beats <= 0:
        warnings.warn("no beats expected; any percentile admits only artifacts", DensePulseWarning)
    if value <= 0:
        warnings.warn(f"pulse signatures cover the whole record ({n_beats} beats x {T} s); "
                      "the percentile threshold cannot separate them", DensePulseWarning)
        return 0.0
    return value


def consolidate(crossings, L_min):
    """Greedy rule: keep a crossing iff it lies >= L_min samples after the last kept one."""
    idx = np.asarray(crossings, dtype=np.int64)
    kept = []
    i = 0
    while i < len(idx):
        kept.append(int(idx[i]))
        i = int(np.searchsorted(idx, idx[i] + L_min, side="left"))
    return kept


def _lobe_peak(d, start, stop, tol):
    """Index of the peak of the earliest sign-coherent lobe within tol of the largest one."""
    seg = d[start:stop]
    mag = np.abs(seg)
    sign = np.sign(seg)
    bounds = np.concatenate(([0], np.nonzero(sign[1:] != sign[:-1])[0] + 1, [len(seg)]))
    peaks = [lo + int(np.argmax(mag[lo:hi])) for lo, hi in zip(bounds[:-1], bounds[1:])]
    top = max(mag[p] for p in peaks)
    for p in peaks:
        if mag[p] >= (1 - tol) * top:
            return int(start + p)
    return start + int(np.argmax(mag))  # pragma: no cover


def detect_and_consolidate(deriv, threshold, L_min, lobe_tolerance=DEFAULT_LOBE_TOLERANCE):
    """Threshold crossings consolidated into one detection per impulse.

    Each kept crossing k opens the neighbourhood [k - L_min // 2, k + L_min);
    the peak is the maximum of the earliest lobe in it whose magnitude is
    within ``lobe_tolerance`` of the neighbourhood maximum.  The look-back
    matters when the first crossing falls on the later of two tied lobes.
    The start index is the first zero crossing after the peak (see
    :func:`locate_start`).
    """
    d = deriv.samples
    w = deriv.warmup
    crossings = w + np.nonzero(np.abs(d[w:]) > threshold)[0]
    out = []
    for k in consolidate(crossings, L_min):
        lo = max(w, k - L_min // 2)
        peak = _lobe_peak(d, lo, min(k + max(L_min, 1), len(d)), lobe_tolerance)
        det = Detection(channel=deriv.channel, peak_index=peak, start_index=peak,
                        peak_magnitude=float(abs(d[peak])), crossing_index=k)
        out.append(locate_start(deriv, det, max_search=max(L_min, 1) + 1))
    return out


def locate_start(deriv, detection, max_search=None):
    """First zero crossing of deriv at or after the detection's peak.

    The crossing is linearly interpolated between the two samples around
    the sign change and rounded to the nearest sample (exact zeros count as
    the crossing).  Without a crossing within ``max_search`` samples the
    peak index is returned and the detection is flagged.
    """
    d = deriv.samples
    k = detection.peak_index
    stop = len(d) if max_search is None else min(len(d), k + max_search)
    s0 = np.sign(d[k])
    z = None
    if s0 == 0:
        z = k
    else:
        seg = d[k + 1:stop]
        changed = np.nonzero(np.sign(seg) != s0)[0]
        if changed.size:
            i = k + 1 + int(changed[0])
            if d[i] == 0:
                z = i
            else:
                frac = (i - 1) + d[i - 1] / (d[i - 1] - d[i])
                z = int(floor(frac + 0.5))
    if z is None:
        return Detection(detection.channel, k, k, detection.peak_magnitude,
                         detection.crossing_index, detection.flags + ("no_zero_crossing",))
    return Detection(detection.channel, k, z, detection.peak_magnitude,
                     detection.crossing_index, detection.flags)


def detect_channel(deriv, percentile=DEFAULT_PERCENTILE, L_min=None,
                   lobe_tolerance=DEFAULT_LOBE_TOLERANCE, window_T=None):
    """Threshold, consolidate and locate starts on one derivative signal.

    ``L_min`` defaults to floor(window_T * fs).  Returns (threshold, detections).
    """
    if L_min is None:
        if window_T is None:
            raise ValidationError("either L_min or window_T is required")
        L_min = int(floor(round(window_T * deriv.fs, 9)))
    thr = percentile_threshold(deriv, percentile)
    return thr, detect_and_consolidate(deriv, thr, L_min, lobe_tolerance)


def merge_detections(per_channel):
    """Merge per-channel lists deterministically by (channel, peak_index)."""
    return sorted((d for dets in per_channel for d in dets),
                  key=lambda d: (d.channel, d.peak_index))
