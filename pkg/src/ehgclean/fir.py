"""Mid-point discretisation of differentiator kernels into causal FIR filters.

Tap i samples the kernel at the cell midpoint (i + 1/2)/fs and absorbs the
quadrature weight 1/fs, so plain discrete convolution approximates the
continuous convolution integral.  Because of the half-sample midpoint,
output sample k approximates the continuous-time output at (k + 1/2)/fs.
"""
import json
from dataclasses import dataclass
from math import ceil, pi

import numpy as np

from .errors import ValidationError
from .kernel import KernelSpec, estimation_delay, kernel_derivative_eval


@dataclass(frozen=True)
class FirFilter:
    taps: np.ndarray
    fs: float
    deriv_order: int
    estimation_delay: float
    source_spec: KernelSpec

    @property
    def length(self):
        return len(self.taps)

    @property
    def warmup(self):
        """Number of leading output samples computed from a partial window."""
        return self.length - 1

    @property
    def output_offset(self):
        """Continuous-time offset of output sample k relative to k/fs."""
        return 0.5 / self.fs

    def apply(self, x):
        """Causal convolution along the last axis; output has the input's length.

        Direct summation keeps results exactly shift-equivariant.
        """
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return np.convolve(x, self.taps)[: len(x)]
        out = np.empty_like(x)
        for idx in np.ndindex(x.shape[:-1]):
            out[idx] = np.convolve(x[idx], self.taps)[: x.shape[-1]]
        return out

    def descriptor(self):
        s = self.source_spec
        return {"n": self.deriv_order, "N": s.poly_degree, "alpha": s.alpha, "beta": s.beta,
                "theta": s.theta, "T": s.window_T, "fs": self.fs, "L": self.length,
                "delay": self.estimation_delay}


def filter_length(window_T, fs):
    # designed windows land on integers up to rounding noise, e.g. 100.00000000000001
    return ceil(round(window_T * fs, 9))


def discretize(spec, order, fs):
    """Sample g^(order) at cell midpoints into a causal FIR filter of length ceil(T fs)."""
    if not fs > 0:
        raise ValidationError(f"sampling rate must be positive, got {fs}")
    spec.validate(order)
    L = filter_length(spec.window_T, fs)
    if L < spec.poly_degree + 1:
        raise ValidationError(
            f"filter length {L} cannot resolve a degree-{spec.poly_degree} kernel; "
            "increase window_T or fs")
    tau = (np.arange(L) + 0.5) / fs
    taps = kernel_derivative_eval(spec, order, tau) / fs
    return FirFilter(taps=taps, fs=float(fs), deriv_order=order,
                     estimation_delay=estimation_delay(spec), source_spec=spec)


@dataclass(frozen=True)
class FrequencyPoint:
    frequency: float
    magnitude: float
    phase: float


def transfer(fir, freq):
    """Complex transfer function sum_i taps_i exp(-2j pi f i / fs), vectorised over freq."""
    f = np.asarray(freq, dtype=float)
    if np.any(f < 0) or np.any(f > fir.fs / 2 * (1 + 1e-12)):
        raise ValidationError(f"frequency must lie in [0, fs/2 = {fir.fs / 2}]")
    i = np.arange(fir.length)
    z = np.exp(-2j * pi * np.multiply.outer(f, i) / fir.fs)
    return z @ fir.taps


def frequency_response(fir, freq):
    h = complex(transfer(fir, float(freq)))
    return FrequencyPoint(frequency=float(freq), magnitude=abs(h), phase=float(np.angle(h)))


def noise_gain(fir):
    """White-noise variance amplification sum(taps**2)."""
    taps = np.asarray(fir.taps, dtype=float)
    if taps.size == 0:
        raise ValidationError("filter has no taps")
    return float(np.dot(taps, taps))


def save_filter(fir, csv_path, json_path):
    """Write taps (one per line, 17 significant digits) and the JSON descriptor."""
    with open(csv_path, "w") as fh:
        for t in fir.taps:
            fh.write(f"{t:.17g}\n")
    with open(json_path, "w") as fh:
        json.dump(fir.descriptor(), fh, indent=2)
        fh.write("\n")


def load_filter(csv_path, json_path):
    with open(json_path) as fh:
        d = json.load(fh)
    taps = np.loadtxt(csv_path, dtype=float, ndmin=1)
    spec = KernelSpec(deriv_order=d["n"], poly_degree=d["N"], alpha=d["alpha"], beta=d["beta"],
                      theta=d["theta"], window_T=d["T"])
    if len(taps) != d["L"]:
        raise ValidationError(f"{csv_path}: expected {d['L']} taps, found {len(taps)}")
    return FirFilter(taps=taps, fs=d["fs"], deriv_order=d["n"], estimation_delay=d["delay"],
                     source_spec=spec)
