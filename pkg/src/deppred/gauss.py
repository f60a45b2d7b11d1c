"""Scalar Gaussian kernels for the local Gaussian copula representation.

The bivariate normal CDF uses Genz's implementation of the
Drezner-Wesolowsky quadrature (Gauss-Legendre rules of order 6/12/20 on the
arcsine substitution, plus the asymptotic expansion for |r| >= 0.925).
Accuracy is close to double precision.

All kernels are compiled with numba so that the estimator and the score
process can call them from inside other jitted loops.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba as nb
import numpy as np
from scipy import special

P_FLOOR = 1e-10
RHO_CLAMP = 1.0 - 1e-8
E_SIGNS = np.array([1.0, -1.0, -1.0, 1.0])

_SQRT2 = math.sqrt(2.0)
_TWO_PI = 2.0 * math.pi

_GL_X6 = np.array([0.9324695142031522, 0.6612093864662647, 0.2386191860831970])
_GL_W6 = np.array([0.1713244923791705, 0.3607615730481384, 0.4679139345726904])
_GL_X12 = np.array([
    0.9815606342467191, 0.9041172563704750, 0.7699026741943050,
    0.5873179542866171, 0.3678314989981802, 0.1252334085114692,
])
_GL_W12 = np.array([
    0.04717533638651177, 0.1069393259953183, 0.1600783285433464,
    0.2031674267230659, 0.2334925365383547, 0.2491470458134029,
])
_GL_X20 = np.array([
    0.9931285991850949, 0.9639719272779138, 0.9122344282513259,
    0.8391169718222188, 0.7463319064601508, 0.6360536807265150,
    0.5108670019508271, 0.3737060887154196, 0.2277858511416451,
    0.07652652113349733,
])
_GL_W20 = np.array([
    0.01761400713915212, 0.04060142980038694, 0.06267204833410906,
    0.08327674157670475, 0.1019301198172404, 0.1181945319615184,
    0.1316886384491766, 0.1420961093183821, 0.1491729864726037,
    0.1527533871307259,
])


class DomainError(ValueError):
    """Raised when an argument lies outside the domain of a kernel."""


@dataclass(frozen=True)
class GridPoint:
    """A point ``u = (u1, u2)`` in the open unit square."""

    u1: float
    u2: float

    def __post_init__(self):
        for v in (self.u1, self.u2):
            if not (0.0 < v < 1.0):
                raise DomainError(f"grid point coordinates must lie in (0, 1), got {v!r}")

    def __iter__(self):
        yield self.u1
        yield self.u2

    def __getitem__(self, i):
        return (self.u1, self.u2)[i]

    def __len__(self):
        return 2


@dataclass(frozen=True)
class LinkState:
    """Fisher-link quantities at one grid point for a given intercept."""

    alpha: float
    rho: float
    tau: float
    c_rho: float
    c_rhorho: float


def _as_point(u) -> tuple[float, float]:
    if isinstance(u, GridPoint):
        return u.u1, u.u2
    u1, u2 = u
    GridPoint(float(u1), float(u2))
    return float(u1), float(u2)


# ---------------------------------------------------------------------------
# jitted scalar kernels
# ---------------------------------------------------------------------------


@nb.njit(cache=True, nogil=True)
def _phi(x):
    return 0.5 * math.erfc(-x / _SQRT2)


@nb.njit(cache=True, nogil=True)
def _bvnu(dh, dk, r):
    """Upper orthant probability P(X > dh, Y > dk) for correlation r."""
    if dh == np.inf or dk == np.inf:
        return 0.0
    if dh == -np.inf:
        if dk == -np.inf:
            return 1.0
        return _phi(-dk)
    if dk == -np.inf:
        return _phi(-dh)
    if r == 0.0:
        return _phi(-dh) * _phi(-dk)

    ar = abs(r)
    if ar < 0.3:
        xg = _GL_X6
        wg = _GL_W6
    elif ar < 0.75:
        xg = _GL_X12
        wg = _GL_W12
    else:
        xg = _GL_X20
        wg = _GL_W20
    ng = xg.shape[0]

    h = dh
    k = dk
    hk = h * k
    bvn = 0.0
    if ar < 0.925:
        hs = (h * h + k * k) / 2.0
        asr = math.asin(r) / 2.0
        for i in range(ng):
            for sgn in (-1.0, 1.0):
                sn = math.sin(asr * (1.0 + sgn * xg[i]))
                bvn += wg[i] * math.exp((sn * hk - hs) / (1.0 - sn * sn))
        bvn = bvn * asr / _TWO_PI + _phi(-h) * _phi(-k)
    else:
        if r < 0.0:
            k = -k
            hk = -hk
        if ar < 1.0:
            as_ = 1.0 - r * r
            a = math.sqrt(as_)
            bs = (h - k) ** 2
            asr = -(bs / as_ + hk) / 2.0
            c = (4.0 - hk) / 8.0
            d = (12.0 - hk) / 80.0
            if asr > -100.0:
                bvn = a * math.exp(asr) * (
                    1.0 - c * (bs - as_) * (1.0 - d * bs) / 3.0 + c * d * as_ * as_
                )
            if hk > -100.0:
                b = math.sqrt(bs)
                sp = math.sqrt(_TWO_PI) * _phi(-b / a)
                bvn = bvn - math.exp(-hk / 2.0) * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0)
            a = a / 2.0
            acc = 0.0
            for i in range(ng):
                for sgn in (-1.0, 1.0):
                    xs = (a * (1.0 + sgn * xg[i])) ** 2
                    asr2 = -(bs / xs + hk) / 2.0
                    if asr2 > -100.0:
                        sp = 1.0 + c * xs * (1.0 + 5.0 * d * xs)
                        rs = math.sqrt(1.0 - xs)
                        ep = math.exp(-(hk / 2.0) * xs / (1.0 + rs) ** 2) / rs
                        acc += wg[i] * math.exp(asr2) * (sp - ep)
            bvn = (a * acc - bvn) / _TWO_PI
        if r > 0.0:
            bvn = bvn + _phi(-max(h, k))
        elif h >= k:
            bvn = -bvn
        else:
            if h < 0.0:
                L = _phi(k) - _phi(h)
            else:
                L = _phi(-h) - _phi(-k)
            bvn = L - bvn
    return max(0.0, min(1.0, bvn))


@nb.njit(cache=True, nogil=True)
def bvn_scalar(z1, z2, rho):
    """Jitted lower-orthant probability Phi_2(z1, z2; rho)."""
    if rho >= 1.0:
        return _phi(min(z1, z2))
    if rho <= -1.0:
        return max(0.0, _phi(z1) + _phi(z2) - 1.0)
    return _bvnu(-z1, -z2, rho)


@nb.njit(cache=True, nogil=True)
def bvn_pdf_scalar(z1, z2, rho):
    om = 1.0 - rho * rho
    q = (z1 * z1 - 2.0 * rho * z1 * z2 + z2 * z2) / om
    return math.exp(-0.5 * q) / (_TWO_PI * math.sqrt(om))


@nb.njit(cache=True, nogil=True)
def clamp_rho(rho):
    return min(max(rho, -RHO_CLAMP), RHO_CLAMP)


@nb.njit(cache=True, nogil=True)
def quadrant_probs_scalar(u1, u2, c, out):
    out[0] = max(c, P_FLOOR)
    out[1] = max(u1 - c, P_FLOOR)
    out[2] = max(u2 - c, P_FLOOR)
    out[3] = max(1.0 - u1 - u2 + c, P_FLOOR)


@nb.njit(cache=True, nogil=True)
def hess_alpha_scalar(u1, u2, z1, z2, alpha, n1, n2, n3, n4):
    """Sum_j N_j d^2/d alpha^2 log p_j; returns (value, clamped)."""
    rho = clamp_rho(math.tanh(alpha))
    c = bvn_scalar(z1, z2, rho)
    cr = bvn_pdf_scalar(z1, z2, rho)
    om = 1.0 - rho * rho
    crr = cr * (z1 * z2 + (1.0 - z1 * z1 - z2 * z2) * rho + z1 * z2 * rho * rho - rho ** 3) / (om * om)
    raw = (c, u1 - c, u2 - c, 1.0 - u1 - u2 + c)
    counts = (n1, n2, n3, n4)
    signs = (1.0, -1.0, -1.0, 1.0)
    total = 0.0
    clamped = False
    for j in range(4):
        p = raw[j]
        if p < P_FLOOR:
            p = P_FLOOR
            clamped = True
        e = signs[j]
        d2 = om * om * (e * crr / p - cr * cr / (p * p)) - 2.0 * rho * om * e * cr / p
        total += counts[j] * d2
    return total, clamped


@nb.njit(cache=True, nogil=True)
def _bvn_loop(z1, z2, rho, out):
    for i in range(out.shape[0]):
        if math.isnan(z1[i]) or math.isnan(z2[i]) or math.isnan(rho[i]):
            out[i] = np.nan
        else:
            out[i] = bvn_scalar(z1[i], z2[i], rho[i])


# ---------------------------------------------------------------------------
# public API
# ---------------------------------------------------------------------------


def norm_cdf(x):
    """Standard normal CDF."""
    return special.ndtr(x)


def norm_pdf(x):
    """Standard normal density."""
    x = np.asarray(x, dtype=float)
    out = np.exp(-0.5 * x * x) / math.sqrt(_TWO_PI)
    return out if out.ndim else float(out)


def norm_quantile(p):
    """Standard normal quantile; raises :class:`DomainError` outside (0, 1)."""
    arr = np.asarray(p, dtype=float)
    if np.any(~((arr > 0.0) & (arr < 1.0))):
        raise DomainError("norm_quantile requires 0 < p < 1")
    out = special.ndtri(arr)
    return out if out.ndim else float(out)


def bvn_cdf(z1, z2, rho):
    """Bivariate standard normal CDF ``P(X <= z1, Y <= z2)`` with correlation rho.

    Broadcasts over array arguments. ``rho`` at +-1 returns the comonotone or
    countermonotone limit.
    """
    a, b, r = np.broadcast_arrays(
        np.asarray(z1, dtype=float), np.asarray(z2, dtype=float), np.asarray(rho, dtype=float)
    )
    if np.isnan(a).any() or np.isnan(b).any() or np.isnan(r).any():
        raise DomainError("bvn_cdf received NaN input")
    if np.any(np.abs(r) > 1.0):
        raise DomainError("correlation must lie in [-1, 1]")
    out = np.empty(a.size)
    _bvn_loop(a.ravel().copy(), b.ravel().copy(), r.ravel().copy(), out)
    out = out.reshape(a.shape)
    return out if out.ndim else float(out)


def copula_value(u, rho):
    """Gaussian copula ``C(u; rho) = Phi_2(Phi^-1(u1), Phi^-1(u2); rho)``."""
    u1, u2 = _as_point(u)
    return bvn_cdf(special.ndtri(u1), special.ndtri(u2), rho)


def quadrant_probs(u, rho) -> np.ndarray:
    """Probabilities of the four threshold events at ``u``.

    Ordered as (both below, only first below, only second below, both above).
    """
    u1, u2 = _as_point(u)
    c = copula_value((u1, u2), rho)
    return np.array([c, u1 - c, u2 - c, 1.0 - u1 - u2 + c])


def copula_drho(u, rho):
    """Derivative of the Gaussian copula in rho: the bivariate density at the quantiles."""
    u1, u2 = _as_point(u)
    z1, z2 = special.ndtri(u1), special.ndtri(u2)
    rho = np.asarray(rho, dtype=float)
    om = 1.0 - rho * rho
    out = np.exp(-0.5 * (z1 * z1 - 2.0 * rho * z1 * z2 + z2 * z2) / om) / (_TWO_PI * np.sqrt(om))
    return out if out.ndim else float(out)


def copula_ddrho(u, rho):
    """Second derivative of the Gaussian copula in rho."""
    u1, u2 = _as_point(u)
    z1, z2 = special.ndtri(u1), special.ndtri(u2)
    rho = np.asarray(rho, dtype=float)
    bracket = z1 * z2 + (1.0 - z1 * z1 - z2 * z2) * rho + z1 * z2 * rho**2 - rho**3
    out = copula_drho((u1, u2), rho) * bracket / (1.0 - rho * rho) ** 2
    return out if np.ndim(out) else float(out)


def link_state(u, alpha: float) -> LinkState:
    """Evaluate ``rho = tanh(alpha)`` and ``tau = (1 - rho^2) C_rho`` at ``u``."""
    rho = float(np.clip(math.tanh(alpha), -RHO_CLAMP, RHO_CLAMP))
    cr = copula_drho(u, rho)
    return LinkState(
        alpha=float(alpha),
        rho=rho,
        tau=(1.0 - rho * rho) * cr,
        c_rho=cr,
        c_rhorho=copula_ddrho(u, rho),
    )


def loglik_hess_alpha(u, alpha: float, counts) -> tuple[float, bool]:
    """Second derivative in alpha of the multinomial quadrant log-likelihood.

    Returns ``(value, clamped)`` where ``clamped`` reports whether any cell
    probability hit the floor ``P_FLOOR``.
    """
    u1, u2 = _as_point(u)
    n = np.asarray(counts, dtype=float)
    if n.shape != (4,) or np.any(n < 0):
        raise DomainError("counts must be a nonnegative 4-vector")
    z1, z2 = special.ndtri(u1), special.ndtri(u2)
    val, clamped = hess_alpha_scalar(u1, u2, z1, z2, float(alpha), n[0], n[1], n[2], n[3])
    return float(val), bool(clamped)
