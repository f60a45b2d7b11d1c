"""AR(1)-(GJR-)GARCH(1,1) marginal filters estimated by Gaussian QML.

Mean:      Y_t = mu + phi Y_{t-1} + gamma_z' Z_t + eta_t
Variance:  s2_t = omega + (alpha + gamma_g 1{eta_{t-1} < 0}) eta_{t-1}^2 + beta s2_{t-1}

The first variance is the sample variance of the mean-model residuals and the
pre-sample lagged value of Y is the sample mean of Y.  Estimation runs on the
standardized series ``(y - mean) / sd`` and maps parameters back, so the
residuals are exactly invariant to affine rescaling of the data.

The optimizer is a jitted BFGS with an analytic gradient in the unconstrained
coordinates ``(mu, phi, gamma_z, log omega, s)`` where
``(alpha, beta, gamma_g / 2, slack) = softmax(s, 0)``; covariance
stationarity ``alpha + beta + gamma_g / 2 < 1`` therefore always holds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba as nb
import numpy as np

_LOG_2PI = math.log(2.0 * math.pi)
ARCH_TOL = 1e-6
FLAT_LL_TOL = 0.5


class ConvergenceError(RuntimeError):
    """QML estimation failed; ``fit`` carries the best parameters found."""

    def __init__(self, msg, fit=None):
        super().__init__(msg)
        self.fit = fit


@dataclass(frozen=True)
class MarginalModelSpec:
    """AR(1)-ARX-(GJR-)GARCH(1,1) specification.

    For estimation only the presence of ``gamma_z`` and ``gamma_gjr`` matters
    (``None`` drops the term); the values are used by the simulators.
    """

    mu: float = 0.0
    phi: float = 0.1
    gamma_z: float | None = None
    omega: float = 0.01
    alpha: float = 0.1
    beta: float = 0.85
    gamma_gjr: float | None = None

    def __post_init__(self):
        if self.omega <= 0:
            raise ValueError("omega must be positive")
        if self.alpha < 0 or self.beta < 0 or (self.gamma_gjr or 0.0) < 0:
            raise ValueError("ARCH/GARCH/GJR coefficients must be nonnegative")
        if self.persistence >= 1.0:
            raise ValueError("alpha + beta + gamma_gjr / 2 must be below one")

    @property
    def has_exog(self) -> bool:
        return self.gamma_z is not None

    @property
    def has_gjr(self) -> bool:
        return self.gamma_gjr is not None

    @property
    def persistence(self) -> float:
        return self.alpha + self.beta + 0.5 * (self.gamma_gjr or 0.0)

    def param_names(self, k: int = 1) -> list[str]:
        names = ["mu", "phi"]
        if self.has_exog:
            names += ["gamma_z"] if k == 1 else [f"gamma_z{i}" for i in range(k)]
        names += ["omega", "alpha", "beta"]
        if self.has_gjr:
            names.append("gamma_gjr")
        return names

    def to_dict(self) -> dict:
        return {
            "mu": self.mu, "phi": self.phi, "gamma_z": self.gamma_z, "omega": self.omega,
            "alpha": self.alpha, "beta": self.beta, "gamma_gjr": self.gamma_gjr,
        }


@dataclass
class MarginalFit:
    spec: MarginalModelSpec
    params: np.ndarray
    names: list[str]
    residuals: np.ndarray
    sigma: np.ndarray
    loglik: float
    converged: bool
    grad_norm: float
    n_iter: int
    # warm-start vector in standardized unconstrained coordinates
    x_std: np.ndarray = field(repr=False)
    # ARCH loadings vanished and the fit was replaced by the constant-variance one
    homoskedastic: bool = False

    @property
    def n(self) -> int:
        return self.residuals.size

    def as_dict(self) -> dict:
        return dict(zip(self.names, map(float, self.params)))

    def std_errors(self, y, z=None) -> np.ndarray:
        """Inverse-Hessian standard errors of the natural parameters."""
        y = np.asarray(y, dtype=float)
        xmat = _exog_matrix(z, y.size, self.spec.has_exog)
        theta = self.params.copy()
        h = 1e-5 * np.maximum(np.abs(theta), 1e-2)
        k = theta.size
        hess = np.empty((k, k))
        y0 = float(np.mean(y))
        for i in range(k):
            tp = theta.copy()
            tm = theta.copy()
            tp[i] += h[i]
            tm[i] -= h[i]
            _, gp = _nll_grad_natural(tp, y, xmat, self.spec.has_gjr, y0)
            _, gm = _nll_grad_natural(tm, y, xmat, self.spec.has_gjr, y0)
            hess[i] = (gp - gm) / (2 * h[i])
        hess = 0.5 * (hess + hess.T)
        cov = np.linalg.inv(hess) / y.size
        return np.sqrt(np.diag(cov))


def _exog_matrix(z, n, has_exog):
    if not has_exog:
        return np.zeros((n, 0))
    if z is None:
        raise ValueError("specification has an exogenous mean term but z is None")
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    if z.shape[0] != n:
        raise ValueError("z must be aligned with y")
    return np.ascontiguousarray(z)


# ---------------------------------------------------------------------------
# jitted likelihood, gradient, optimizer
# ---------------------------------------------------------------------------


@nb.njit(cache=True, nogil=True)
def _filter(theta, y, xmat, gjr, y0):
    n = y.shape[0]
    k = xmat.shape[1]
    mu = theta[0]
    phi = theta[1]
    om = theta[2 + k]
    a = theta[3 + k]
    b = theta[4 + k]
    gg = theta[5 + k] if gjr else 0.0
    eta = np.empty(n)
    for t in range(n):
        ylag = y0 if t == 0 else y[t - 1]
        e = y[t] - mu - phi * ylag
        for i in range(k):
            e -= theta[2 + i] * xmat[t, i]
        eta[t] = e
    s2 = np.empty(n)
    s2[0] = np.var(eta)
    for t in range(1, n):
        ind = 1.0 if eta[t - 1] < 0.0 else 0.0
        s2[t] = om + (a + gg * ind) * eta[t - 1] ** 2 + b * s2[t - 1]
    return eta, s2


@nb.njit(cache=True, nogil=True)
def _nll_grad_natural(theta, y, xmat, gjr, y0):
    """Mean negative Gaussian log-likelihood and its gradient in natural parameters."""
    n = y.shape[0]
    k = xmat.shape[1]
    npar = theta.shape[0]
    nm = 2 + k
    a = theta[3 + k]
    b = theta[4 + k]
    gg = theta[5 + k] if gjr else 0.0
    eta, s2 = _filter(theta, y, xmat, gjr, y0)
    grad = np.zeros(npar)
    if not (s2[0] > 0.0):
        return np.inf, grad
    # derivative of the mean residuals
    deta = np.zeros((n, nm))
    for t in range(n):
        deta[t, 0] = -1.0
        deta[t, 1] = -(y0 if t == 0 else y[t - 1])
        for i in range(k):
            deta[t, 2 + i] = -xmat[t, i]
    ebar = 0.0
    for t in range(n):
        ebar += eta[t]
    ebar /= n
    ds2 = np.zeros(npar)
    for t in range(n):
        for p in range(nm):
            ds2[p] += 2.0 * (eta[t] - ebar) * deta[t, p] / n
    nll = 0.0
    for t in range(n):
        if t > 0:
            ind = 1.0 if eta[t - 1] < 0.0 else 0.0
            coef = a + gg * ind
            e1 = eta[t - 1]
            prev = s2[t - 1]
            for p in range(nm):
                ds2[p] = coef * 2.0 * e1 * deta[t - 1, p] + b * ds2[p]
            ds2[nm] = 1.0 + b * ds2[nm]
            ds2[nm + 1] = e1 * e1 + b * ds2[nm + 1]
            ds2[nm + 2] = prev + b * ds2[nm + 2]
            if gjr:
                ds2[nm + 3] = ind * e1 * e1 + b * ds2[nm + 3]
        st = s2[t]
        if not (st > 0.0) or not np.isfinite(st):
            return np.inf, grad
        et = eta[t]
        nll += 0.5 * (_LOG_2PI + math.log(st) + et * et / st)
        w = 0.5 * (1.0 / st - et * et / (st * st))
        for p in range(npar):
            grad[p] += w * ds2[p]
        for p in range(nm):
            grad[p] += et * deta[t, p] / st
    return nll / n, grad / n


@nb.njit(cache=True, nogil=True)
def _to_natural(x, k, gjr):
    npar = x.shape[0]
    theta = np.empty(npar)
    nm = 2 + k
    for i in range(nm):
        theta[i] = x[i]
    theta[nm] = math.exp(x[nm])
    ns = 3 if gjr else 2
    mx = 0.0
    for i in range(ns):
        mx = max(mx, x[nm + 1 + i])
    denom = math.exp(-mx)
    for i in range(ns):
        denom += math.exp(x[nm + 1 + i] - mx)
    for i in range(ns):
        theta[nm + 1 + i] = math.exp(x[nm + 1 + i] - mx) / denom
    if gjr:
        theta[nm + 3] *= 2.0
    return theta


@nb.njit(cache=True, nogil=True)
def _fg(x, y, xmat, gjr, y0):
    k = xmat.shape[1]
    nm = 2 + k
    theta = _to_natural(x, k, gjr)
    f, g = _nll_grad_natural(theta, y, xmat, gjr, y0)
    gx = np.empty(x.shape[0])
    for i in range(nm):
        gx[i] = g[i]
    gx[nm] = g[nm] * theta[nm]
    ns = 3 if gjr else 2
    p = np.empty(ns)
    gp = np.empty(ns)
    for i in range(ns):
        p[i] = theta[nm + 1 + i]
        gp[i] = g[nm + 1 + i]
    if gjr:
        p[2] *= 0.5
        gp[2] *= 2.0
    dot = 0.0
    for i in range(ns):
        dot += gp[i] * p[i]
    for j in range(ns):
        gx[nm + 1 + j] = p[j] * (gp[j] - dot)
    return f, gx


@nb.njit(cache=True, nogil=True)
def _bfgs(x0, y, xmat, gjr, y0, gtol, maxiter):
    npar = x0.shape[0]
    x = x0.copy()
    f, g = _fg(x, y, xmat, gjr, y0)
    hinv = np.eye(npar)
    it = 0
    fresh = True
    while it < maxiter:
        gmax = 0.0
        for i in range(npar):
            gmax = max(gmax, abs(g[i]))
        if gmax < gtol:
            break
        d = -hinv @ g
        slope = d @ g
        if not (slope < 0.0):
            hinv = np.eye(npar)
            d = -g
            slope = d @ g
            fresh = True
        dmax = 0.0
        for i in range(npar):
            dmax = max(dmax, abs(d[i]))
        step = 1.0
        if dmax * step > 2.0:
            step = 2.0 / dmax
        ok = False
        for _ in range(60):
            xn = x + step * d
            fn, gn = _fg(xn, y, xmat, gjr, y0)
            if np.isfinite(fn) and fn <= f + 1e-4 * step * slope:
                ok = True
                break
            step *= 0.5
        if not ok:
            if fresh:
                break
            hinv = np.eye(npar)
            fresh = True
            it += 1
            continue
        s = xn - x
        yv = gn - g
        sy = s @ yv
        if sy > 1e-14:
            if fresh:
                hinv = np.eye(npar) * (sy / (yv @ yv))
            rho = 1.0 / sy
            hy = hinv @ yv
            hinv = hinv + ((sy + yv @ hy) * rho * rho) * np.outer(s, s) - rho * (
                np.outer(hy, s) + np.outer(s, hy)
            )
            fresh = False
        x = xn
        f = fn
        g = gn
        it += 1
    gmax = 0.0
    for i in range(npar):
        gmax = max(gmax, abs(g[i]))
    return x, f, gmax, it


# ---------------------------------------------------------------------------
# public API
# ---------------------------------------------------------------------------


def _start_vector(ys, xmat, gjr):
    n = ys.size
    ylag = np.concatenate([[0.0], ys[:-1]])
    design = np.column_stack([np.ones(n), ylag, xmat])
    coef, *_ = np.linalg.lstsq(design, ys, rcond=None)
    resid = ys - design @ coef
    v = float(np.var(resid))
    if gjr:
        shares = np.array([0.03, 0.90, 0.025])
    else:
        shares = np.array([0.05, 0.90])
    slack = 1.0 - shares.sum()
    x = np.concatenate([coef, [math.log(v * slack)], np.log(shares / slack)])
    return x


def _perturbed_start(base, rng, nm, gjr):
    x = base.copy()
    x[:nm] += rng.normal(scale=0.05, size=nm)
    persist = rng.uniform(0.5, 0.98)
    a = rng.uniform(0.02, 0.2) * persist
    if gjr:
        g = rng.uniform(0.0, 0.1) * persist
        shares = np.array([a, persist - a - g, g])
    else:
        shares = np.array([a, persist - a])
    shares = np.clip(shares, 1e-3, None)
    slack = max(1.0 - shares.sum(), 1e-3)
    x[nm] = base[nm] + math.log(slack / 0.05)
    x[nm + 1:] = np.log(shares / slack)
    return x


def fit_marginal(
    y,
    z=None,
    spec: MarginalModelSpec | None = None,
    *,
    n_restarts: int = 3,
    x0=None,
    gtol: float = 1e-7,
    tol_converged: float = 1e-5,
    maxiter: int = 500,
    seed: int = 20240601,
    min_n: int = 100,
    max_persistence: float = 1.0 - 1e-6,
    raise_on_failure: bool = True,
) -> MarginalFit:
    """Fit the marginal model by Gaussian QML.

    ``x0`` is an optional warm start (the ``x_std`` of a previous fit).  When
    given, random restarts are only attempted if the warm start fails to
    converge; otherwise the deterministic start and ``n_restarts`` perturbed
    starts are all run and the best likelihood is kept.
    """
    spec = spec or MarginalModelSpec()
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.size < min_n:
        raise ValueError(f"need a 1-d series with at least {min_n} observations")
    if not np.all(np.isfinite(y)):
        raise ValueError("y contains non-finite values")
    xmat = _exog_matrix(z, y.size, spec.has_exog)
    if not np.all(np.isfinite(xmat)):
        raise ValueError("z contains non-finite values")
    k = xmat.shape[1]
    nm = 2 + k
    gjr = spec.has_gjr

    loc = float(np.mean(y))
    scale = float(np.std(y))
    if scale <= 0:
        raise ValueError("y has zero variance")
    ys = (y - loc) / scale
    y0 = 0.0

    base = _start_vector(ys, xmat, gjr)
    rng = np.random.default_rng(seed)
    starts = []
    if x0 is not None:
        starts.append(np.asarray(x0, dtype=float).copy())
    else:
        starts.append(base)
        starts += [_perturbed_start(base, rng, nm, gjr) for _ in range(n_restarts)]

    best = None
    tried_fallback = x0 is None
    i = 0
    while i < len(starts):
        x, f, gmax, it = _bfgs(starts[i], ys, xmat, gjr, y0, gtol, maxiter)
        if np.isfinite(f) and (best is None or f < best[1] - 1e-12 or (f <= best[1] + 1e-12 and gmax < best[2])):
            best = (x, f, gmax, it)
        i += 1
        if i == len(starts) and not tried_fallback and best[2] > tol_converged:
            starts.append(base)
            starts += [_perturbed_start(base, rng, nm, gjr) for _ in range(n_restarts)]
            tried_fallback = True
    if best is None:
        raise ConvergenceError("QML objective was not finite at any start")

    x, f, gmax, it = best
    theta_s = _to_natural(x, k, gjr)
    eta_s, s2_s = _filter(theta_s, ys, xmat, gjr, y0)
    resid = eta_s / np.sqrt(s2_s)

    theta = theta_s.copy()
    theta[0] = loc * (1.0 - theta_s[1]) + scale * theta_s[0]
    theta[2:nm] = scale * theta_s[2:nm]
    theta[nm] = scale**2 * theta_s[nm]
    loglik = -f * y.size - y.size * math.log(scale)
    fit = MarginalFit(
        spec=spec,
        params=theta,
        names=spec.param_names(k),
        residuals=resid,
        sigma=scale * np.sqrt(s2_s),
        loglik=float(loglik),
        converged=bool(gmax <= tol_converged),
        grad_norm=float(gmax),
        n_iter=int(it),
        x_std=x,
    )
    persistence = theta[nm + 1] + theta[nm + 2] + (0.5 * theta[nm + 3] if gjr else 0.0)
    arch_load = theta_s[nm + 1] + (theta_s[nm + 3] if gjr else 0.0)
    if arch_load <= ARCH_TOL and (not fit.converged or persistence >= max_persistence):
        # with no ARCH loading the variance path is deterministic and nearly flat along
        # omega = s2 (1 - beta); resolve that ridge at beta = 0 unless the drift is
        # worth more than a likelihood-ratio statistic of one
        flat = _homoskedastic_fit(ys, xmat, gjr, y0, spec, k, loc, scale, x)
        if flat.loglik >= fit.loglik - FLAT_LL_TOL:
            return flat
    if raise_on_failure:
        if not fit.converged:
            raise ConvergenceError(f"QML did not converge (|grad|_inf = {gmax:.2e})", fit)
        if persistence >= max_persistence:
            raise ConvergenceError("fitted variance process is not covariance stationary", fit)
    return fit


def _homoskedastic_fit(ys, xmat, gjr, y0, spec, k, loc, scale, x_best):
    n = ys.size
    nm = 2 + k
    ylag = np.concatenate([[y0], ys[:-1]])
    design = np.column_stack([np.ones(n), ylag, xmat])
    coef, *_ = np.linalg.lstsq(design, ys, rcond=None)
    resid = ys - design @ coef
    theta_s = np.zeros(nm + 3 + (1 if gjr else 0))
    theta_s[:nm] = coef
    theta_s[nm] = float(np.mean(resid * resid))
    eta_s, s2_s = _filter(theta_s, ys, xmat, gjr, y0)
    ll_s = -0.5 * float(np.sum(_LOG_2PI + np.log(s2_s) + eta_s * eta_s / s2_s))
    theta = theta_s.copy()
    theta[0] = loc * (1.0 - theta_s[1]) + scale * theta_s[0]
    theta[2:nm] = scale * theta_s[2:nm]
    theta[nm] = scale**2 * theta_s[nm]
    return MarginalFit(
        spec=spec,
        params=theta,
        names=spec.param_names(k),
        residuals=eta_s / np.sqrt(s2_s),
        sigma=scale * np.sqrt(s2_s),
        loglik=ll_s - n * math.log(scale),
        converged=True,
        grad_norm=0.0,
        n_iter=0,
        x_std=x_best,
        homoskedastic=True,
    )


def filter_residuals(params, y, z=None, spec: MarginalModelSpec | None = None):
    """Standardized residuals and conditional volatilities at given parameters."""
    spec = spec or MarginalModelSpec()
    y = np.asarray(y, dtype=float)
    xmat = _exog_matrix(z, y.size, spec.has_exog)
    eta, s2 = _filter(np.asarray(params, dtype=float), y, xmat, spec.has_gjr, float(np.mean(y)))
    return eta / np.sqrt(s2), np.sqrt(s2)


def simulate_marginal(spec: MarginalModelSpec, eps, z=None, y_init: float = 0.0):
    """Propagate the (GJR-)ARX-GARCH recursion driven by standardized innovations ``eps``."""
    eps = np.asarray(eps, dtype=float)
    n = eps.size
    xmat = _exog_matrix(z, n, spec.has_exog)
    gz = np.atleast_1d(spec.gamma_z if spec.has_exog else np.zeros(0)).astype(float)
    return _simulate(eps, xmat, gz, spec.mu, spec.phi, spec.omega, spec.alpha, spec.beta,
                     spec.gamma_gjr or 0.0, y_init)


@nb.njit(cache=True, nogil=True)
def _simulate(eps, xmat, gz, mu, phi, om, a, b, gg, y_init):
    n = eps.shape[0]
    y = np.empty(n)
    s2 = om / (1.0 - a - b - 0.5 * gg)
    ylag = y_init
    eta_lag = 0.0
    for t in range(n):
        if t > 0:
            ind = 1.0 if eta_lag < 0.0 else 0.0
            s2 = om + (a + gg * ind) * eta_lag * eta_lag + b * s2
        eta = math.sqrt(s2) * eps[t]
        m = mu + phi * ylag
        for i in range(xmat.shape[1]):
            m += gz[i] * xmat[t, i]
        y[t] = m + eta
        ylag = y[t]
        eta_lag = eta
    return y
