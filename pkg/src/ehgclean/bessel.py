"""Bessel-function zeros and the powerline-annihilating window length."""
from math import pi

import numpy as np
from scipy.optimize import brentq
from scipy.special import jv, jvp

from .errors import NumericalError, ValidationError

_SCAN_STEP = 0.25  # consecutive zeros of J_nu (nu >= 0) are more than 2.4 apart


def bessel_zero(nu, k):
    """k-th positive zero j_{nu,k} of the Bessel function J_nu.

    Zeros are counted by scanning for sign changes from below the first
    zero (j_{nu,1} > nu), then each bracket is solved with Brent's method
    and polished with one Newton step.
    """
    if not nu >= 0:
        raise ValidationError(f"Bessel order must be >= 0, got {nu}")
    if int(k) != k or k < 1:
        raise ValidationError(f"zero index must be a positive integer, got {k}")

    x = max(float(nu), 0.1)
    f = jv(nu, x)
    found = 0
    while True:
        # block-wise scan keeps the number of jv calls vectorised
        grid = x + _SCAN_STEP * np.arange(1, 257)
        vals = jv(nu, grid)
        prev = np.concatenate(([f], vals[:-1]))
        left = np.concatenate(([x], grid[:-1]))
        changes = np.nonzero((np.sign(prev) * np.sign(vals) < 0) | (vals == 0))[0]
        if found + len(changes) >= k:
            i = changes[k - found - 1]
            a, b = left[i], grid[i]
            break
        found += len(changes)
        x, f = grid[-1], vals[-1]
        if x > 1e7:
            raise NumericalError(f"no bracket found for zero {k} of J_{nu}")

    if jv(nu, b) == 0.0:
        root = b
    else:
        root = brentq(lambda s: jv(nu, s), a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps,
                      maxiter=200)
        d = jvp(nu, root)
        if d != 0:
            polished = root - jv(nu, root) / d
            if a <= polished <= b and abs(jv(nu, polished)) <= abs(jv(nu, root)):
                root = polished
    if abs(jv(nu, root)) > 1e-10:
        raise NumericalError(f"zero {k} of J_{nu} did not converge (residual {jv(nu, root):.3e})")
    return float(root)


def design_window(alpha, k, f0, beta=None):
    """Window length T = 2 j_{alpha+1/2, k} / (2 pi f0) placing a spectral null at f0.

    Only valid for the zeroth-order expansion with symmetric exponents,
    so an explicit ``beta`` different from ``alpha`` is rejected.
    """
    if beta is not None and beta != alpha:
        raise ValidationError(
            f"window design requires symmetric exponents (alpha={alpha}, beta={beta})")
    if not alpha > -1:
        raise ValidationError(f"alpha must be > -1, got {alpha}")
    if not f0 > 0:
        raise ValidationError(f"f0 must be positive, got {f0}")
    return 2 * bessel_zero(alpha + 0.5, k) / (2 * pi * f0)
