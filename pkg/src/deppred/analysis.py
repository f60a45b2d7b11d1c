"""Run configuration and the end-to-end empirical workflow."""

from __future__ import annotations

import dataclasses
import json
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .bootstrap import BootstrapConfig, bootstrap_test
from .breaks import locate_break, sequential_split, sidak_levels
from .data import DataSet, DegenerateStateWarning, descriptive_report, is_degenerate_state
from .estimator import A_MAX
from .marginal import MarginalModelSpec
from .pipeline import PipelineConfig, evaluate, fit_margins

SCHEMA = "deppred.report/1"


class ConfigError(ValueError):
    """Invalid run configuration."""


@dataclass(frozen=True)
class RunConfig:
    y1_exog: bool = True
    y1_gjr: bool = True
    y2_exog: bool = False
    y2_gjr: bool = True
    regions: tuple[str, ...] = ("lower", "upper")
    grid_step: float = 0.05
    s_stride: int = 1
    B: int = 499
    block_length: int | str = "auto"
    iid_bootstrap: bool = False
    alpha: float = 0.10
    seed: int = 20240601
    state_rule: str = "down_market"
    n_min: int = 250
    a_max: float = A_MAX
    threads: int = 1

    def __post_init__(self):
        object.__setattr__(self, "regions", tuple(self.regions))
        for r in self.regions:
            if r not in ("lower", "upper"):
                raise ConfigError(f"unknown region {r!r}")
        if not self.regions:
            raise ConfigError("at least one region is required")
        if not 0.0 < self.alpha < 0.5:
            raise ConfigError("alpha must lie in (0, 0.5)")
        if self.B < 1:
            raise ConfigError("B must be positive")
        if self.s_stride < 1:
            raise ConfigError("s_stride must be positive")
        if self.threads < 1:
            raise ConfigError("threads must be positive")
        if self.block_length != "auto":
            try:
                bl = int(self.block_length)
            except (TypeError, ValueError) as exc:
                raise ConfigError("block_length must be 'auto' or a positive integer") from exc
            if bl < 1:
                raise ConfigError("block_length must be positive")
            object.__setattr__(self, "block_length", bl)
        if self.grid_step <= 0 or self.grid_step >= 0.45:
            raise ConfigError("grid_step out of range")
        if self.n_min < 1:
            raise ConfigError("n_min must be positive")

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in dataclasses.fields(cls)]

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        unknown = set(d) - set(cls.field_names())
        if unknown:
            raise ConfigError(f"unknown configuration keys: {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["regions"] = list(self.regions)
        return d

    def pipeline(self) -> PipelineConfig:
        def spec(exog, gjr):
            return MarginalModelSpec(gamma_z=0.0 if exog else None, gamma_gjr=0.0 if gjr else None,
                                     alpha=0.05, beta=0.9)

        return PipelineConfig(
            spec1=spec(self.y1_exog, self.y1_gjr),
            spec2=spec(self.y2_exog, self.y2_gjr),
            regions=self.regions, grid_step=self.grid_step, s_stride=self.s_stride, a_max=self.a_max,
        )

    def bootstrap(self) -> BootstrapConfig:
        return BootstrapConfig(B=self.B, block_length=self.block_length, seed=self.seed,
                               iid=self.iid_bootstrap, threads=self.threads)


def _fit_dict(fit) -> dict:
    return {
        "params": fit.as_dict(),
        "loglik": float(fit.loglik),
        "converged": bool(fit.converged),
    }


def _require_state(ds: DataSet):
    if ds.z is None:
        raise ConfigError("data set has no state series; derive it first")


def degenerate_report(ds: DataSet, cfg: RunConfig) -> dict:
    return {
        "schema": SCHEMA, "status": "degenerate_state", "n": ds.n,
        "message": "state series has zero variance; the test is not defined",
        "config": cfg.to_dict(),
    }


def run_full_analysis(ds: DataSet, cfg: RunConfig, *, timings: bool = False) -> dict:
    """Marginal fits, region tests, bootstrap p-values and the split tree for every region.

    The returned dictionary is deterministic in ``(data, cfg)`` unless
    ``timings`` is requested.
    """
    _require_state(ds)
    if is_degenerate_state(ds.z):
        warnings.warn("state series has zero variance; skipping the test", DegenerateStateWarning)
        return degenerate_report(ds, cfg)
    clock = {}
    t0 = time.perf_counter()
    pcfg, bcfg = cfg.pipeline(), cfg.bootstrap()
    levels = sidak_levels(cfg.alpha)
    labels = ds.date_labels()
    ev = evaluate(ds.y1, ds.y2, ds.z, pcfg)
    clock["fit"] = time.perf_counter() - t0
    boot = bootstrap_test(ds.y1, ds.y2, ds.z, pcfg, bcfg, ev)
    clock["bootstrap"] = time.perf_counter() - t0 - clock["fit"]

    regions = {}
    for r in cfg.regions:
        st, br = ev.stats[r], boot[r]
        tree = sequential_split(
            ds.y1, ds.y2, ds.z, r, pcfg, bcfg, cfg.alpha, n_min=cfg.n_min, dates=labels,
            threads=cfg.threads, root_result=(st, br),
        )
        kids = tree.children
        regions[r] = {
            "T": st.t_stat,
            "Delta1": st.delta1_agg,
            "Delta2": st.delta2_agg,
            "p_T": br.p_t,
            "p_Delta1": br.p_delta1,
            "p_Delta2": br.p_delta2,
            "block_length": br.block_length_used,
            "bootstrap_failures": br.failures,
            "boundary_points": int(np.count_nonzero(st.boundary)),
            "alpha_hat": [float(a) for a in st.alpha_hat],
            "table": {
                "full_p": br.p_t,
                "cusum_p": tree.cusum_pvalue,
                "break_date": None if tree.break_date is None else str(tree.break_date),
                "pre_break_p": kids[0].t_pvalue if kids else None,
                "post_break_p": kids[1].t_pvalue if kids else None,
                "levels": {"full": levels[0], "cusum": levels[1], "subsample": levels[2]},
            },
            "tree": tree.to_dict(),
        }
    clock["total"] = time.perf_counter() - t0
    report = {
        "schema": SCHEMA,
        "status": "ok",
        "n": ds.n,
        "dates": [labels[0], labels[-1]],
        "series": list(ds.names),
        "config": cfg.to_dict(),
        "seeds": {"bootstrap_root": cfg.seed},
        "marginal": {"y1": _fit_dict(ev.fit1), "y2": _fit_dict(ev.fit2)},
        "regions": regions,
    }
    if timings:
        report["timings"] = clock
    return report


def bootstrap_only(ds: DataSet, cfg: RunConfig) -> dict:
    """Full-span statistics and bootstrap p-values without splitting."""
    _require_state(ds)
    if is_degenerate_state(ds.z):
        warnings.warn("state series has zero variance; skipping the test", DegenerateStateWarning)
        return degenerate_report(ds, cfg)
    pcfg = cfg.pipeline()
    ev = evaluate(ds.y1, ds.y2, ds.z, pcfg)
    boot = bootstrap_test(ds.y1, ds.y2, ds.z, pcfg, cfg.bootstrap(), ev)
    return {
        "schema": SCHEMA, "status": "ok", "n": ds.n, "config": cfg.to_dict(),
        "regions": {
            r: {
                "T": ev.stats[r].t_stat, "Delta1": ev.stats[r].delta1_agg, "Delta2": ev.stats[r].delta2_agg,
                "p_T": b.p_t, "p_Delta1": b.p_delta1, "p_Delta2": b.p_delta2,
                "critical_value_T": b.critical_value(0.05), "block_length": b.block_length_used,
                "bootstrap_failures": b.failures,
            }
            for r, b in boot.items()
        },
    }


def locate_breaks(ds: DataSet, cfg: RunConfig) -> dict:
    """CUSUM break date per region from the full-sample bridge, without testing."""
    _require_state(ds)
    if is_degenerate_state(ds.z):
        warnings.warn("state series has zero variance; skipping the test", DegenerateStateWarning)
        return degenerate_report(ds, cfg)
    ev = evaluate(ds.y1, ds.y2, ds.z, cfg.pipeline())
    labels = ds.date_labels()
    out = {}
    for r, st in ev.stats.items():
        loc = locate_break(st, labels)
        out[r] = {"break_s": loc.s, "break_index": loc.index, "break_date": loc.date, "Delta1": st.delta1_agg}
    return {"schema": SCHEMA, "status": "ok", "n": ds.n, "config": cfg.to_dict(), "regions": out}


def describe(ds: DataSet, cfg: RunConfig, step: float = 0.01):
    """Descriptive analytics on the filtered residuals."""
    _require_state(ds)
    fit1, fit2 = fit_margins(ds.y1, ds.y2, ds.z, cfg.pipeline())
    return descriptive_report(fit1.residuals, fit2.residuals, ds.z, step=step, dates=ds.dates)


def dumps(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=True, allow_nan=True) + "\n"
