"""Jacobi polynomials P_j^(alpha, beta) on [-1, 1].

Evaluation uses the standard three-term recurrence, derivatives use the
identity d/dx P_j^(a,b) = (j + a + b + 1)/2 * P_{j-1}^(a+1,b+1).
"""
from math import exp, lgamma, log

import numpy as np

from .errors import ValidationError


def _check_params(alpha, beta):
    if not (alpha > -1 and beta > -1):
        raise ValidationError(
            f"Jacobi parameters must satisfy alpha, beta > -1 (got alpha={alpha}, beta={beta})")


def jacobi_poly_eval(j, alpha, beta, nu):
    """Evaluate P_j^(alpha, beta)(nu).

    Parameters
    ----------
    j : int
        Polynomial degree, j >= 0.
    alpha, beta : float
        Weight exponents, both > -1.
    nu : float or array_like
        Evaluation points, usually in [-1, 1].

    Returns
    -------
    float or ndarray
        Same shape as `nu`.
    """
    _check_params(alpha, beta)
    if j < 0:
        raise ValidationError(f"degree must be nonnegative, got {j}")
    x = np.asarray(nu, dtype=float)
    a, b = float(alpha), float(beta)

    p_prev = np.ones_like(x)
    if j == 0:
        return p_prev if x.ndim else float(p_prev)
    p = (a + 1) + (a + b + 2) * (x - 1) / 2
    for n in range(2, j + 1):
        s = 2 * n + a + b
        c1 = 2 * n * (n + a + b) * (s - 2)
        c2 = (s - 1) * (s * (s - 2) * x + a * a - b * b)
        c3 = 2 * (n + a - 1) * (n + b - 1) * s
        p_prev, p = p, (c2 * p - c3 * p_prev) / c1
    return p if x.ndim else float(p)


def jacobi_norm_sq(j, alpha, beta):
    """Squared weighted L2 norm of P_j^(alpha, beta) with weight (1-x)^alpha (1+x)^beta."""
    _check_params(alpha, beta)
    if j < 0:
        raise ValidationError(f"degree must be nonnegative, got {j}")
    a, b = float(alpha), float(beta)
    if j == 0:
        # the general formula has a removable 0/0 at a + b = -1
        return exp((a + b + 1) * log(2) + lgamma(a + 1) + lgamma(b + 1) - lgamma(a + b + 2))
    return exp((a + b + 1) * log(2) - log(2 * j + a + b + 1)
               + lgamma(j + a + 1) + lgamma(j + b + 1)
               - lgamma(j + a + b + 1) - lgamma(j + 1))


def jacobi_poly_deriv(j, alpha, beta, nu, order):
    """order-th derivative of P_j^(alpha, beta) evaluated at nu."""
    x = np.asarray(nu, dtype=float)
    if order == 0:
        return jacobi_poly_eval(j, alpha, beta, nu)
    if order > j:
        out = np.zeros_like(x)
        return out if x.ndim else 0.0
    _check_params(alpha, beta)
    ab = alpha + beta
    scale = exp(lgamma(j + ab + 1 + order) - lgamma(j + ab + 1) - order * log(2))
    return scale * jacobi_poly_eval(j - order, alpha + order, beta + order, nu)
