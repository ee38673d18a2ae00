"""Least-squares pulse amplitudes, cardiac pulse reconstruction and subtraction.

A detected pulse with zero-crossing time t_m is modelled in the derivative
signal as a * g^(n)(t - t_m + t0), where t0 is the kernel's own zero
crossing, and in the smoothed signal as a * g(t - t_m + t0).  Sample i sits
at time i/fs for both filtered signals; since both FIR filters share the
same half-sample midpoint offset, these relative shifts are consistent.
"""
import warnings
from dataclasses import dataclass
from math import ceil, floor

import numpy as np
from scipy.optimize import brentq

from .detect import DEFAULT_LOBE_TOLERANCE
from .errors import NumericalError, PipelineWarning, ValidationError
from .kernel import kernel_derivative_eval

_SCAN_POINTS = 20001


def kernel_zero_crossing(fir_n, lobe_tolerance=DEFAULT_LOBE_TOLERANCE):
    """First zero of g^(n) after its peak magnitude, located on the analytic kernel.

    Tied lobes (within ``lobe_tolerance`` of the largest) resolve to the
    earliest, mirroring the detector's peak rule.
    """
    n = fir_n.deriv_order
    if n < 1:
        raise ValidationError("the kernel zero crossing needs a derivative order n >= 1")
    spec = fir_n.source_spec
    T = spec.window_T
    tau = np.linspace(0, T, _SCAN_POINTS)[1:-1]
    g = kernel_derivative_eval(spec, n, tau)
    mag = np.abs(g)
    sign = np.sign(g)
    bounds = np.concatenate(([0], np.nonzero(sign[1:] != sign[:-1])[0] + 1, [len(g)]))
    lobes = list(zip(bounds[:-1], bounds[1:]))
    top = mag.max()
    for lo, hi in lobes:
        if mag[lo:hi].max() >= (1 - lobe_tolerance) * top:
            break
    if hi >= len(g):
        raise NumericalError("derivative kernel has no zero crossing after its peak")
    a, b = tau[hi - 1], tau[hi]
    if g[hi] == 0:
        return float(b)
    return float(brentq(lambda s: kernel_derivative_eval(spec, n, s), a, b, xtol=1e-15,
                        rtol=4 * np.finfo(float).eps))


@dataclass(frozen=True)
class PulseEstimate:
    channel: int
    start_time: float
    amplitude: float
    fit_window: tuple
    support: tuple
    flags: tuple = ()

    def to_json(self):
        return {"channel": self.channel, "start_time_s": self.start_time,
                "amplitude": self.amplitude, "fit_window": list(self.fit_window),
                "support": list(self.support), "flags": list(self.flags)}


def start_time_for_arrival(arrival, t0, fs):
    """Zero-crossing time of the derivative signature of an on-grid impulse at ``arrival``.

    The midpoint taps put sample i at kernel time (i - arrival*fs + 1/2)/fs.
    """
    return arrival + t0 - 0.5 / fs


def estimate_amplitude(deriv, fir_n, start, t0=None):
    """Least-squares amplitude over the window [t_m, t_m + T], t_m = start / fs.

    ``start`` is a (possibly fractional) sample index of the zero crossing.
    """
    if t0 is None:
        t0 = kernel_zero_crossing(fir_n)
    fs = deriv.fs
    spec = fir_n.source_spec
    T = spec.window_T
    t_m = start / fs
    d = deriv.samples
    lo = ceil(round(start, 9))
    hi = floor(round(start + T * fs, 9))
    flags = ()
    if lo < deriv.warmup:
        raise ValidationError(
            f"fit window starting at sample {lo} overlaps the filter warm-up ({deriv.warmup})")
    if hi >= len(d):
        hi = len(d) - 1
        flags = ("truncated",)
    idx = np.arange(lo, hi + 1)
    s = kernel_derivative_eval(spec, fir_n.deriv_order, idx / fs - t_m + t0)
    den = float(np.dot(s, s))
    if den < 1e-30:
        raise NumericalError(f"degenerate least-squares window at sample {start}")
    a = float(np.dot(d[idx], s)) / den
    return PulseEstimate(channel=deriv.channel, start_time=t_m, amplitude=a,
                         fit_window=(t_m, t_m + T), support=(t_m - t0, t_m - t0 + T),
                         flags=flags)


def pulse_signal(spec, order, n_samples, fs, estimates, t0):
    """Sum of a_m g^(order)(i/fs - t_m + t0) over the estimates.

    Returns (signal, flags) where flags lists the estimates truncated at the
    record end.
    """
    out = np.zeros(n_samples)
    truncated = []
    T = spec.window_T
    for m, e in enumerate(estimates):
        lo_t = e.start_time - t0
        lo = max(0, ceil(round(lo_t * fs, 9)))
        hi = floor(round((lo_t + T) * fs, 9))
        if hi >= n_samples:
            hi = n_samples - 1
            truncated.append(m)
        if hi < lo:
            continue
        idx = np.arange(lo, hi + 1)
        out[idx] += e.amplitude * kernel_derivative_eval(spec, order, idx / fs - e.start_time + t0)
    return out, truncated


@dataclass
class CleanResult:
    filtered: np.ndarray
    pulse_component: np.ndarray
    clean: np.ndarray
    snr_out_db: float = None
    flags: tuple = ()


def _check_overlaps(estimates):
    wins = sorted(e.fit_window for e in estimates)
    if any(b[0] < a[1] for a, b in zip(wins, wins[1:])):
        warnings.warn("fit windows overlap; per-pulse amplitudes are only approximately "
                      "independent", PipelineWarning)


def reconstruct_and_clean(x, fir_0, fir_n, estimates, t0=None, filtered=None):
    """Subtract the reconstructed pulse component from the smoothed signal.

    ``x`` is the raw channel; ``filtered`` may pass a precomputed order-0
    output.  Both FIR filters must share the same window.
    """
    if fir_0.deriv_order != 0:
        raise ValidationError("reconstruction needs the order-0 (smoothing) filter")
    if fir_0.source_spec.window_T != fir_n.source_spec.window_T:
        raise ValidationError("order-0 and order-n filters must share the same window")
    if filtered is None:
        filtered = fir_0.apply(x)
    flags = ()
    if estimates:
        if t0 is None:
            t0 = kernel_zero_crossing(fir_n)
        _check_overlaps(estimates)
        pulse, truncated = pulse_signal(fir_0.source_spec, 0, len(filtered), fir_0.fs,
                                        estimates, t0)
        if truncated:
            flags = ("truncated_pulse",)
    else:
        pulse = np.zeros(len(filtered))
    return CleanResult(filtered=filtered, pulse_component=pulse, clean=filtered - pulse,
                       flags=flags)


def snr_out(deriv, pulse_deriv, warmup=0):
    """10 log10(||pulse||^2 / ||deriv - pulse||^2) over samples after ``warmup``.

    A zero residual returns +inf.
    """
    d = np.asarray(getattr(deriv, "samples", deriv), dtype=float)
    p = np.asarray(pulse_deriv, dtype=float)
    if d.shape != p.shape:
        raise ValidationError(f"length mismatch: {d.shape} vs {p.shape}")
    d, p = d[warmup:], p[warmup:]
    num = float(np.dot(p, p))
    r = d - p
    den = float(np.dot(r, r))
    if den == 0:
        return float("inf")
    if num == 0:
        return float("-inf")
    return float(10 * np.log10(num / den))
