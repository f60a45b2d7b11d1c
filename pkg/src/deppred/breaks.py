"""Break dating and the Sidak-corrected one-split sequential procedure."""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .bootstrap import BootstrapConfig, bootstrap_test
from .pipeline import PipelineConfig, evaluate
from .score import RegionStatistics


class BreakError(ValueError):
    pass


def sidak_levels(alpha: float) -> tuple[float, float, float]:
    """Levels for the full-span ``T`` test, the CUSUM test and each subsample test."""
    if not 0.0 < alpha < 0.5:
        raise ValueError("alpha must lie in (0, 0.5)")
    return alpha, 1.0 - (1.0 - alpha) ** 0.5, 1.0 - (1.0 - alpha) ** 0.25


@dataclass(frozen=True)
class BreakLocation:
    s: float
    index: int  # number of observations before the break (first child length)
    date: object = None


def locate_break(stats: RegionStatistics, dates=None) -> BreakLocation:
    """Argmax over the s grid of the max-over-u bridge norm.

    The label is that of observation ``floor(s n)`` counted from one, i.e. the
    last observation of the pre-break segment.
    """
    norm = np.asarray(stats.bridge_norm)
    if not np.any(norm > 0):
        raise BreakError("bridge is identically zero; no break can be dated")
    i = int(np.argmax(norm))
    s = float(stats.s_grid[i])
    idx = int(np.floor(s * stats.n + 1e-9))
    label = None
    if dates is not None and idx >= 1:
        label = dates[idx - 1]
    return BreakLocation(s=s, index=idx, date=label)


@dataclass
class SplitNode:
    s_lo: float
    s_hi: float
    start: int
    stop: int
    level_used: float
    date_lo: object = None
    date_hi: object = None
    t_pvalue: float | None = None
    cusum_pvalue: float | None = None
    t_stat: float | None = None
    break_s: float | None = None
    break_date: object = None
    status: str = "tested"  # or "too_short"
    children: list["SplitNode"] = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.stop - self.start

    @property
    def rejected(self) -> bool:
        return self.t_pvalue is not None and self.t_pvalue <= self.level_used

    def to_dict(self) -> dict:
        def lab(d):
            return None if d is None else str(d)

        return {
            "span": [self.s_lo, self.s_hi],
            "dates": [lab(self.date_lo), lab(self.date_hi)],
            "n": self.n,
            "status": self.status,
            "level_used": self.level_used,
            "t_stat": self.t_stat,
            "t_pvalue": self.t_pvalue,
            "cusum_pvalue": self.cusum_pvalue,
            "rejected": self.rejected,
            "break_s": self.break_s,
            "break_date": lab(self.break_date),
            "children": [c.to_dict() for c in self.children],
        }


def _test_span(y1, y2, z, cfg, bcfg):
    ev = evaluate(y1, y2, z, cfg)
    region = cfg.regions[0]
    boot = bootstrap_test(y1, y2, z, cfg, bcfg, ev)[region]
    return ev.stats[region], boot


def _child_seed(seed: int, which: int) -> int:
    return int(np.random.SeedSequence([seed, which]).generate_state(1)[0])


def sequential_split(
    y1, y2, z, region: str, cfg: PipelineConfig, bcfg: BootstrapConfig,
    alpha: float = 0.10, *, n_min: int = 250, dates=None, threads: int = 1, root_result=None,
) -> SplitNode:
    """Test, date and split once, with each child refit from scratch on its own data.

    ``root_result`` may carry an already computed ``(RegionStatistics,
    BootstrapResult)`` pair for the full span.
    """
    levels = sidak_levels(alpha)
    y1 = np.asarray(y1, dtype=float)
    y2 = np.asarray(y2, dtype=float)
    z = np.asarray(z, dtype=float)
    n = y1.size
    cfg = cfg.with_regions([region])

    def label(i):
        return None if dates is None else dates[i]

    root = SplitNode(0.0, 1.0, 0, n, levels[0], label(0), label(n - 1))
    if n < n_min:
        root.status = "too_short"
        return root
    stats, boot = root_result if root_result is not None else _test_span(y1, y2, z, cfg, bcfg)
    root.t_stat, root.t_pvalue, root.cusum_pvalue = stats.t_stat, boot.p_t, boot.p_delta1
    if not (root.rejected and boot.p_delta1 <= levels[1]):
        return root

    loc = locate_break(stats, dates)
    if not 0 < loc.index < n:
        return root
    root.break_s, root.break_date = loc.s, loc.date
    spans = [(0, loc.index, 0.0, loc.s), (loc.index, n, loc.s, 1.0)]

    def child(k):
        a, b, lo, hi = spans[k]
        node = SplitNode(lo, hi, a, b, levels[2], label(a), label(b - 1))
        if b - a < n_min:
            node.status = "too_short"
            return node
        sub = replace(bcfg, seed=_child_seed(bcfg.seed, k + 1))
        st, bt = _test_span(y1[a:b], y2[a:b], z[a:b], cfg, sub)
        node.t_stat, node.t_pvalue, node.cusum_pvalue = st.t_stat, bt.p_t, bt.p_delta1
        return node

    if threads > 1:
        with ThreadPoolExecutor(2) as ex:
            root.children = list(ex.map(child, range(2)))
    else:
        root.children = [child(0), child(1)]
    return root
