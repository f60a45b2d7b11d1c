"""Sequential score process, CUSUM / LM detectors and their aggregation."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special

from .estimator import A_MAX, fit_alpha_core
from .gauss import E_SIGNS, P_FLOOR, GridPoint, _as_point, bvn_pdf_scalar, bvn_scalar
from .ranks import RankPanel, marks_matrix, sequential_quadrant_sums


@dataclass(frozen=True)
class DiagonalGrid:
    """Equally spaced diagonal points ``u = (q, q)`` over ``[lo, hi]``."""

    region: str
    lo: float
    hi: float
    step: float = 0.05

    def __post_init__(self):
        if not (0.0 < self.lo < self.hi < 1.0):
            raise ValueError("diagonal region must satisfy 0 < lo < hi < 1")
        if self.step <= 0:
            raise ValueError("step must be positive")
        npts = (self.hi - self.lo) / self.step
        if abs(npts - round(npts)) > 1e-9:
            raise ValueError("region length must be a multiple of the step")

    @classmethod
    def lower(cls, step: float = 0.05) -> "DiagonalGrid":
        return cls("lower", 0.05, 0.50, step)

    @classmethod
    def upper(cls, step: float = 0.05) -> "DiagonalGrid":
        return cls("upper", 0.50, 0.95, step)

    @classmethod
    def named(cls, region: str, step: float = 0.05) -> "DiagonalGrid":
        if region == "lower":
            return cls.lower(step)
        if region == "upper":
            return cls.upper(step)
        raise ValueError(f"unknown region {region!r}")

    @property
    def q(self) -> np.ndarray:
        npts = int(round((self.hi - self.lo) / self.step)) + 1
        # rounding makes the values the doubles nearest to the decimal grid
        return np.round(np.linspace(self.lo, self.hi, npts), 12)

    @property
    def points(self) -> list[GridPoint]:
        return [GridPoint(q, q) for q in self.q]

    @property
    def length(self) -> float:
        return self.hi - self.lo


@dataclass
class ScoreProcess:
    u: GridPoint
    alpha_hat: float
    s_grid: np.ndarray
    beta_score: np.ndarray  # (len(s_grid), k)
    alpha_score: np.ndarray  # (len(s_grid),)
    clamped: bool = False

    @property
    def k(self) -> int:
        return self.beta_score.shape[1]


@dataclass
class RegionStatistics:
    grid: DiagonalGrid
    alpha_hat: np.ndarray
    delta1: np.ndarray
    delta2: np.ndarray
    endpoint: np.ndarray  # (n_u, k) beta score at s = 1
    s_grid: np.ndarray
    bridge_norm: np.ndarray  # max over u of the bridge max-norm, per s
    boundary: np.ndarray
    n: int
    delta1_agg: float = field(init=False)
    delta2_agg: float = field(init=False)
    t_stat: float = field(init=False)

    def __post_init__(self):
        step = self.grid.step
        self.delta1_agg = aggregate_omega(self.delta1, step)
        self.delta2_agg = aggregate_omega(self.delta2, step)
        self.t_stat = aggregate_omega(self.delta1 + self.delta2, step)

    @property
    def argmax_s(self) -> float:
        return float(self.s_grid[int(np.argmax(self.bridge_norm))])


def default_s_grid(n: int, stride: int = 1) -> np.ndarray:
    """``{0, stride/n, 2 stride/n, ..., 1}``; the endpoint 1 is always kept."""
    m = np.arange(0, n + 1, stride)
    if m[-1] != n:
        m = np.append(m, n)
    return m / n


def _prefix_lengths(s_grid, n) -> np.ndarray:
    s = np.asarray(s_grid, dtype=float)
    if np.any((s < 0) | (s > 1)):
        raise ValueError("s_grid must lie in [0, 1]")
    m = np.floor(s * n + 1e-9).astype(np.int64)
    return np.clip(m, 0, n)


def _score_path(sums, u1, u2, z1, z2, alpha, n):
    rho = math.tanh(alpha)
    c = bvn_scalar(z1, z2, rho)
    raw = np.array([c, u1 - c, u2 - c, 1.0 - u1 - u2 + c])
    clamped = bool(np.any(raw < P_FLOOR))
    p = np.maximum(raw, P_FLOOR)
    tau = (1.0 - rho * rho) * bvn_pdf_scalar(z1, z2, rho)
    w = E_SIGNS / p
    return tau / math.sqrt(n) * np.einsum("mjc,j->mc", sums, w), clamped


def score_process(panel: RankPanel, z, u, alpha_hat: float, s_grid=None) -> ScoreProcess:
    """Sequential score ``sqrt(n) grad l(u, s; theta_hat)`` at the restricted intercept.

    Quadrant events use the sequential ranks of each prefix; the cell
    probabilities and ``tau`` stay at the full-sample ``alpha_hat``.
    """
    u1, u2 = _as_point(u)
    n = panel.n
    x = marks_matrix(z, n)
    s_grid = default_s_grid(n) if s_grid is None else np.asarray(s_grid, dtype=float)
    m = _prefix_lengths(s_grid, n)
    sums = sequential_quadrant_sums(panel, x, (u1, u2))
    full, clamped = _score_path(
        sums, u1, u2, float(special.ndtri(u1)), float(special.ndtri(u2)), float(alpha_hat), n
    )
    full = full[m]
    return ScoreProcess(
        u=GridPoint(u1, u2),
        alpha_hat=float(alpha_hat),
        s_grid=s_grid,
        beta_score=full[:, 1:],
        alpha_score=full[:, 0],
        clamped=clamped,
    )


def _bridge(beta_score, s_grid):
    s_grid = np.asarray(s_grid, dtype=float)
    ends = np.flatnonzero(np.isclose(s_grid, 1.0, rtol=0, atol=1e-12))
    if ends.size == 0:
        raise ValueError("s_grid must contain 1")
    end = beta_score[ends[-1]]
    return beta_score - s_grid[:, None] * end[None, :]


def cusum_delta1(sp: ScoreProcess) -> float:
    """``sup_s |B(s) - s B(1)|_inf`` over the stored s grid."""
    br = _bridge(sp.beta_score, sp.s_grid)
    return float(np.max(np.abs(br))) if br.size else 0.0


def lm_delta2(sp: ScoreProcess) -> float:
    """``|B(1)|_inf``."""
    ends = np.flatnonzero(np.isclose(sp.s_grid, 1.0, rtol=0, atol=1e-12))
    if ends.size == 0:
        raise ValueError("s_grid must contain 1")
    return float(np.max(np.abs(sp.beta_score[ends[-1]])))


def aggregate_omega(f, step: float | DiagonalGrid = 0.05) -> float:
    """``log int exp(f / 2) du`` by the trapezoidal rule over an equally spaced grid."""
    if isinstance(step, DiagonalGrid):
        step = step.step
    f = np.asarray(f, dtype=float)
    if f.ndim != 1 or f.size < 2:
        raise ValueError("need at least two grid values")
    if not np.all(np.isfinite(f)):
        raise ValueError("aggregation input must be finite")
    w = np.full(f.size, step)
    w[0] = w[-1] = 0.5 * step
    g = 0.5 * f
    top = g.max()
    return float(top + math.log(np.sum(w * np.exp(g - top))))


def region_core(panel: RankPanel, x: np.ndarray, grid: DiagonalGrid, s_grid, a_max=A_MAX):
    """Per-u restricted fits and score paths for one region.

    Returns ``(alpha, boundary, paths, clamped)`` where ``paths`` has shape
    ``(n_u, len(s_grid), k + 1)``.
    """
    n = panel.n
    m = _prefix_lengths(s_grid, n)
    q = grid.q
    zq = special.ndtri(q)
    n_u = q.size
    alpha = np.empty(n_u)
    boundary = np.zeros(n_u, dtype=bool)
    clamped = np.zeros(n_u, dtype=bool)
    paths = np.empty((n_u, m.size, x.shape[1]))
    for i in range(n_u):
        sums = sequential_quadrant_sums(panel, x, (q[i], q[i]))
        counts = sums[n, :, 0]
        a, _, flag = fit_alpha_core(q[i], q[i], zq[i], zq[i], *counts, a_max)
        alpha[i] = a
        boundary[i] = flag
        full, cl = _score_path(sums, q[i], q[i], zq[i], zq[i], a, n)
        clamped[i] = cl
        paths[i] = full[m]
    return alpha, boundary, paths, clamped


def detectors(paths: np.ndarray, s_grid, center: np.ndarray | None = None):
    """CUSUM and LM detectors per grid point from score paths.

    ``center`` (shape ``(n_u, k)``) is subtracted from the endpoint score in
    the LM detector, as needed for the bootstrap analogue.
    """
    beta = paths[:, :, 1:]
    s_grid = np.asarray(s_grid, dtype=float)
    end = beta[:, -1, :]
    bridge = beta - s_grid[None, :, None] * end[:, None, :]
    bnorm = np.abs(bridge).max(axis=2)  # (n_u, n_s)
    d1 = bnorm.max(axis=1)
    e = end if center is None else end - center
    d2 = np.abs(e).max(axis=1)
    return d1, d2, end, bnorm.max(axis=0)


def region_statistics(panel: RankPanel, z, grid: DiagonalGrid, s_grid=None, a_max=A_MAX) -> RegionStatistics:
    n = panel.n
    x = marks_matrix(z, n)
    s_grid = default_s_grid(n) if s_grid is None else np.asarray(s_grid, dtype=float)
    if not np.isclose(s_grid[-1], 1.0):
        raise ValueError("s_grid must end at 1")
    alpha, boundary, paths, _ = region_core(panel, x, grid, s_grid, a_max)
    d1, d2, end, bnorm = detectors(paths, s_grid)
    return RegionStatistics(
        grid=grid, alpha_hat=alpha, delta1=d1, delta2=d2, endpoint=end,
        s_grid=s_grid, bridge_norm=bnorm, boundary=boundary, n=n,
    )


def run_region_test(fit1, fit2, z, grid: DiagonalGrid, s_grid=None, a_max=A_MAX) -> RegionStatistics:
    """Detectors and aggregated statistics for one region from two marginal fits."""
    panel = RankPanel.from_residuals(fit1.residuals, fit2.residuals)
    return region_statistics(panel, z, grid, s_grid, a_max)
