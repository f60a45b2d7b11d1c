"""Restricted (beta = 0) local Gaussian intercept at a single grid point.

The quadrant log-likelihood is strictly concave in the copula value ``C`` on
the open Frechet interval, so the maximizer is found by bracketed root
finding on its decreasing first derivative; the intercept then follows by
inverting the strictly increasing map ``alpha -> C(u; tanh(alpha))``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba as nb
import numpy as np
from scipy import special

from .gauss import (
    P_FLOOR, DomainError, GridPoint, _as_point, bvn_pdf_scalar, bvn_scalar, quadrant_probs,
)

A_MAX = 3.0
C_MARGIN = 1e-9


@dataclass(frozen=True)
class RestrictedFit:
    u: GridPoint
    alpha_hat: float
    rho_hat: float
    c_hat: float  # C(u; rho_hat)
    c_free: float  # maximizer of the likelihood in C before the alpha clamp
    boundary_flag: bool


@nb.njit(cache=True, nogil=True)
def _foc(c, u1, u2, n1, n2, n3, n4):
    return n1 / c - n2 / (u1 - c) - n3 / (u2 - c) + n4 / (1.0 - u1 - u2 + c)


@nb.njit(cache=True, nogil=True)
def _foc_prime(c, u1, u2, n1, n2, n3, n4):
    return -(n1 / c**2 + n2 / (u1 - c) ** 2 + n3 / (u2 - c) ** 2 + n4 / (1.0 - u1 - u2 + c) ** 2)


@nb.njit(cache=True, nogil=True)
def _solve_c(u1, u2, n1, n2, n3, n4):
    lo = max(0.0, u1 + u2 - 1.0) + C_MARGIN
    hi = min(u1, u2) - C_MARGIN
    if _foc(lo, u1, u2, n1, n2, n3, n4) <= 0.0:
        return lo, True
    if _foc(hi, u1, u2, n1, n2, n3, n4) >= 0.0:
        return hi, True
    # safeguarded Newton on a decreasing function
    c = 0.5 * (lo + hi)
    for _ in range(200):
        g = _foc(c, u1, u2, n1, n2, n3, n4)
        if g > 0.0:
            lo = c
        else:
            hi = c
        step = g / _foc_prime(c, u1, u2, n1, n2, n3, n4)
        cn = c - step
        if not (lo < cn < hi):
            cn = 0.5 * (lo + hi)
        if abs(cn - c) <= 1e-15 or hi - lo <= 1e-15:
            c = cn
            break
        c = cn
    return c, False


@nb.njit(cache=True, nogil=True)
def fit_alpha_core(u1, u2, z1, z2, n1, n2, n3, n4, amax):
    """Return ``(alpha_hat, c_free, boundary_flag)``."""
    c, flag = _solve_c(u1, u2, n1, n2, n3, n4)
    if flag:
        # the likelihood is monotone in C, hence in alpha, over the whole interval
        lo_c = max(0.0, u1 + u2 - 1.0) + C_MARGIN
        return (-amax if c <= lo_c else amax), c, True
    rmax = math.tanh(amax)
    if c <= bvn_scalar(z1, z2, -rmax):
        return -amax, c, True
    if c >= bvn_scalar(z1, z2, rmax):
        return amax, c, True
    lo = -amax
    hi = amax
    a = 0.0
    for _ in range(200):
        r = math.tanh(a)
        f = bvn_scalar(z1, z2, r) - c
        if f > 0.0:
            hi = a
        else:
            lo = a
        fp = bvn_pdf_scalar(z1, z2, r) * (1.0 - r * r)
        an = a - f / fp if fp > 0.0 else 0.5 * (lo + hi)
        if not (lo < an < hi):
            an = 0.5 * (lo + hi)
        if abs(an - a) <= 1e-14 or hi - lo <= 1e-14:
            a = an
            break
        a = an
    return a, c, flag


def fit_alpha(u, counts, a_max: float = A_MAX) -> RestrictedFit:
    """Restricted maximum likelihood intercept from full-sample quadrant counts."""
    u1, u2 = _as_point(u)
    n = np.asarray(counts, dtype=float)
    if n.shape != (4,) or np.any(n < 0):
        raise DomainError("counts must be a nonnegative 4-vector")
    if n.sum() < 1:
        raise DomainError("counts must contain at least one observation")
    if min(u1, u2) - max(0.0, u1 + u2 - 1.0) <= 2 * C_MARGIN:
        raise DomainError("degenerate Frechet interval at u")
    z1, z2 = float(special.ndtri(u1)), float(special.ndtri(u2))
    a, c_free, flag = fit_alpha_core(u1, u2, z1, z2, n[0], n[1], n[2], n[3], float(a_max))
    rho = math.tanh(a)
    return RestrictedFit(
        u=GridPoint(u1, u2),
        alpha_hat=float(a),
        rho_hat=rho,
        c_hat=float(bvn_scalar(z1, z2, rho)),
        c_free=float(c_free),
        boundary_flag=bool(flag),
    )


def quadrant_loglik(u, alpha, counts) -> float:
    """``sum_j N_j log p_j(u, alpha)`` with the probability floor applied."""
    p = np.maximum(quadrant_probs(u, math.tanh(alpha)), P_FLOOR)
    return float(np.dot(np.asarray(counts, dtype=float), np.log(p)))
