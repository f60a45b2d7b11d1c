"""One pass of the test pipeline: marginal filters, ranks, region statistics."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .estimator import A_MAX
from .marginal import MarginalFit, MarginalModelSpec, fit_marginal
from .ranks import RankPanel, marks_matrix
from .score import DiagonalGrid, RegionStatistics, default_s_grid, detectors, region_core


@dataclass(frozen=True)
class PipelineConfig:
    """Everything that defines the statistic ``T`` on a given sample.

    ``spec1``/``spec2`` are estimation templates: ``gamma_z`` not ``None``
    puts the state vector into that margin's conditional mean.
    """

    spec1: MarginalModelSpec = field(default_factory=lambda: MarginalModelSpec(gamma_z=0.0))
    spec2: MarginalModelSpec = field(default_factory=lambda: MarginalModelSpec(gamma_z=0.0))
    regions: tuple[str, ...] = ("lower", "upper")
    grid_step: float = 0.05
    s_stride: int = 1
    a_max: float = A_MAX
    n_restarts: int = 3

    def grids(self) -> list[DiagonalGrid]:
        return [DiagonalGrid.named(r, self.grid_step) for r in self.regions]

    def with_regions(self, regions) -> "PipelineConfig":
        return replace(self, regions=tuple(regions))


@dataclass
class Evaluation:
    fit1: MarginalFit
    fit2: MarginalFit
    panel: RankPanel
    stats: dict[str, RegionStatistics]

    @property
    def n(self) -> int:
        return self.panel.n


def _z_for(spec: MarginalModelSpec, z):
    return z if spec.has_exog else None


def fit_margins(y1, y2, z, cfg: PipelineConfig, warm: Evaluation | None = None):
    """Fit both marginal models (raises :class:`ConvergenceError` on failure)."""
    kw1 = {"x0": warm.fit1.x_std} if warm is not None else {}
    kw2 = {"x0": warm.fit2.x_std} if warm is not None else {}
    fit1 = fit_marginal(y1, _z_for(cfg.spec1, z), cfg.spec1, n_restarts=cfg.n_restarts, **kw1)
    fit2 = fit_marginal(y2, _z_for(cfg.spec2, z), cfg.spec2, n_restarts=cfg.n_restarts, **kw2)
    return fit1, fit2


def statistics_from_panel(panel: RankPanel, z, cfg: PipelineConfig, centers=None):
    """Region statistics; ``centers`` maps region -> endpoint score to subtract in the LM detector."""
    n = panel.n
    x = marks_matrix(z, n)
    s_grid = default_s_grid(n, cfg.s_stride)
    out = {}
    for grid in cfg.grids():
        alpha, boundary, paths, _ = region_core(panel, x, grid, s_grid, cfg.a_max)
        center = None if centers is None else centers[grid.region]
        d1, d2, end, bnorm = detectors(paths, s_grid, center)
        out[grid.region] = RegionStatistics(
            grid=grid, alpha_hat=alpha, delta1=d1, delta2=d2, endpoint=end,
            s_grid=s_grid, bridge_norm=bnorm, boundary=boundary, n=n,
        )
    return out


def evaluate(y1, y2, z, cfg: PipelineConfig, warm: Evaluation | None = None) -> Evaluation:
    """Full-sample statistics for every configured region."""
    z = np.asarray(z, dtype=float)
    fit1, fit2 = fit_margins(y1, y2, z, cfg, warm)
    panel = RankPanel.from_residuals(fit1.residuals, fit2.residuals)
    return Evaluation(fit1, fit2, panel, statistics_from_panel(panel, z, cfg))
