"""Algebraic differentiator kernels built from weighted Jacobi polynomials.

The smoothing kernel on its support [0, T] is

    g(tau) = (2/T) w(nu) sum_{j=0}^{N} P_j(theta) / ||P_j||^2 P_j(nu),
    nu = 1 - 2 tau / T,   w(nu) = (1 - nu)^alpha (1 + nu)^beta,

and the n-th derivative kernel is obtained by differentiating the product
w * P analytically.  Convolving a signal with g^(n) estimates its n-th
derivative delayed by T (1 - theta) / 2.
"""
from dataclasses import dataclass
from math import comb

import numpy as np

from .errors import ValidationError
from .jacobi import jacobi_norm_sq, jacobi_poly_deriv, jacobi_poly_eval


@dataclass(frozen=True)
class KernelSpec:
    """Continuous-time differentiator parameters.

    Attributes
    ----------
    deriv_order : int
        Derivative order n the kernel is intended for.
    poly_degree : int
        Truncation order N of the Jacobi expansion.
    alpha, beta : float
        Weight exponents; both must exceed ``deriv_order - 1``.
    theta : float
        Delay parameter in [-1, 1].
    window_T : float
        Support length in seconds.
    """

    deriv_order: int = 0
    poly_degree: int = 0
    alpha: float = 0.0
    beta: float = 0.0
    theta: float = 1.0
    window_T: float = 0.1

    def __post_init__(self):
        self.validate()

    def validate(self, order=None):
        n = self.deriv_order if order is None else order
        if int(self.deriv_order) != self.deriv_order or self.deriv_order < 0:
            raise ValidationError(f"deriv_order must be a nonnegative integer, got {self.deriv_order}")
        if int(self.poly_degree) != self.poly_degree or self.poly_degree < 0:
            raise ValidationError(f"poly_degree must be a nonnegative integer, got {self.poly_degree}")
        if not (self.alpha > -1 and self.beta > -1):
            raise ValidationError(f"alpha and beta must be > -1 (got {self.alpha}, {self.beta})")
        if not (-1 <= self.theta <= 1):
            raise ValidationError(f"theta must lie in [-1, 1], got {self.theta}")
        if not (self.window_T > 0 and np.isfinite(self.window_T)):
            raise ValidationError(f"window_T must be positive, got {self.window_T}")
        if not (self.alpha > n - 1 and self.beta > n - 1):
            raise ValidationError(
                f"derivative order {n} requires alpha, beta > {n - 1} "
                f"(got alpha={self.alpha}, beta={self.beta})")

    @property
    def symmetric(self):
        return self.alpha == self.beta

    def coefficients(self):
        """Expansion weights P_j(theta) / ||P_j||^2 for j = 0..N."""
        return np.array([jacobi_poly_eval(j, self.alpha, self.beta, self.theta)
                         / jacobi_norm_sq(j, self.alpha, self.beta)
                         for j in range(self.poly_degree + 1)])


def _falling(x, r):
    out = 1.0
    for i in range(r):
        out *= x - i
    return out


def _expansion_deriv(spec, coeffs, nu, order):
    """order-th nu-derivative of sum_j c_j P_j(nu)."""
    out = np.zeros_like(nu)
    for j, c in enumerate(coeffs):
        if j >= order:
            out += c * jacobi_poly_deriv(j, spec.alpha, spec.beta, nu, order)
    return out


def _weight_deriv(alpha, beta, nu, order):
    """order-th derivative of (1 - nu)^alpha (1 + nu)^beta on the open interval."""
    out = np.zeros_like(nu)
    for r in range(order + 1):
        s = order - r
        term = (comb(order, r) * (-1) ** r * _falling(alpha, r) * _falling(beta, s))
        if term == 0.0:
            continue
        out += term * (1 - nu) ** (alpha - r) * (1 + nu) ** (beta - s)
    return out


def kernel_eval(spec, tau):
    """Smoothing kernel g(tau); zero outside the closed support [0, T]."""
    t = np.asarray(tau, dtype=float)
    T = spec.window_T
    inside = (t >= 0) & (t <= T)
    out = np.zeros_like(t)
    if np.any(inside):
        nu = 1 - 2 * t[inside] / T
        with np.errstate(divide="ignore", invalid="ignore"):
            w = (1 - nu) ** spec.alpha * (1 + nu) ** spec.beta
        p = _expansion_deriv(spec, spec.coefficients(), nu, 0)
        out[inside] = (2 / T) * w * p
    return out if t.ndim else float(out)


def kernel_derivative_eval(spec, order, tau):
    """order-th derivative g^(order)(tau) of the kernel, computed analytically.

    For order >= 1 the value is zero outside the open interval (0, T);
    with alpha, beta > order - 1 the lower derivatives vanish at the support
    ends so no boundary impulses arise.
    """
    if order == 0:
        return kernel_eval(spec, tau)
    if order < 0:
        raise ValidationError(f"derivative order must be nonnegative, got {order}")
    spec.validate(order)
    t = np.asarray(tau, dtype=float)
    T = spec.window_T
    inside = (t > 0) & (t < T)
    out = np.zeros_like(t)
    if np.any(inside):
        nu = 1 - 2 * t[inside] / T
        coeffs = spec.coefficients()
        acc = np.zeros_like(nu)
        for i in range(order + 1):
            p_part = _expansion_deriv(spec, coeffs, nu, order - i)
            if not np.any(p_part):
                continue
            acc += comb(order, i) * _weight_deriv(spec.alpha, spec.beta, nu, i) * p_part
        # chain rule: d/dtau = (-2/T) d/dnu
        out[inside] = (2 / T) * (-2 / T) ** order * acc
    return out if t.ndim else float(out)


def estimation_delay(spec):
    """Time inside the window at which the estimate applies: T (1 - theta) / 2."""
    return spec.window_T * (1 - spec.theta) / 2
