"""Moving block bootstrap calibration of the detectors.

Each replicate resamples the rows ``(Y1, Y2, Z)`` jointly by one block index
vector, refits both marginal models, rebuilds the sequential ranks and the
restricted fits, and recomputes the detectors.  The LM detector of a
replicate is centered at the original endpoint score.
"""

from __future__ import annotations

import logging
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .marginal import ConvergenceError
from .pipeline import Evaluation, PipelineConfig, evaluate, fit_margins, statistics_from_panel
from .ranks import RankPanel
from .score import aggregate_omega

log = logging.getLogger(__name__)


class BootstrapError(RuntimeError):
    pass


@dataclass(frozen=True)
class BootstrapConfig:
    B: int = 499
    block_length: int | str = "auto"
    seed: int = 0
    iid: bool = False
    max_attempts: int = 5
    max_fail_frac: float = 0.05
    threads: int = 1

    def __post_init__(self):
        if self.B < 1:
            raise ValueError("B must be at least 1")
        if self.block_length != "auto" and int(self.block_length) < 1:
            raise ValueError("block length must be positive")


@dataclass
class BootstrapResult:
    t_draws: np.ndarray
    delta1_draws: np.ndarray
    delta2_draws: np.ndarray
    t_obs: float
    delta1_obs: float
    delta2_obs: float
    block_length_used: int
    failures: int

    @property
    def B(self) -> int:
        return self.t_draws.size

    @property
    def p_t(self) -> float:
        return bootstrap_pvalue(self.t_obs, self.t_draws)

    @property
    def p_delta1(self) -> float:
        return bootstrap_pvalue(self.delta1_obs, self.delta1_draws)

    @property
    def p_delta2(self) -> float:
        return bootstrap_pvalue(self.delta2_obs, self.delta2_draws)

    def critical_value(self, level: float = 0.05) -> float:
        return float(np.quantile(self.t_draws, 1.0 - level))


def bootstrap_pvalue(observed: float, draws) -> float:
    """``(1 + #{draw >= observed}) / (B + 1)``."""
    draws = np.asarray(draws, dtype=float)
    return float((1 + np.count_nonzero(draws >= observed)) / (draws.size + 1))


def bartlett_bandwidth(r: float, n: int) -> float:
    """Automatic Bartlett-kernel bandwidth for an AR(1) coefficient ``r``."""
    a1 = 4.0 * r * r / ((1.0 - r) ** 2 * (1.0 + r) ** 2)
    return 1.1447 * (a1 * n) ** (1.0 / 3.0)


def andrews_block_length(z, *, cap: bool = True) -> int:
    """Block length from the AR(1) plug-in Bartlett bandwidth rule.

    ``ceil(1.1447 (a1 n)^(1/3))`` with ``a1 = 4 r^2 / ((1 - r)^2 (1 + r)^2)``
    for the least-squares AR(1) coefficient ``r`` of the demeaned series,
    capped at ``floor(sqrt(n))``.  A 2-d ``z`` uses the largest column value.
    """
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    n = z.shape[0]
    if n < 20:
        raise ValueError("need at least 20 observations for the bandwidth rule")
    best = 1
    for col in z.T:
        e = col - col.mean()
        den = float(e[:-1] @ e[:-1])
        r = float(e[1:] @ e[:-1]) / den if den > 0 else 0.0
        if abs(r) >= 1.0 - 1e-6:
            warnings.warn("AR(1) coefficient of the state clamped below one", RuntimeWarning)
            r = math.copysign(1.0 - 1e-6, r)
        best = max(best, int(math.ceil(bartlett_bandwidth(r, n) - 1e-12)))
    if cap:
        best = min(best, int(math.isqrt(n)))
    return max(best, 1)


def mbb_indices(n: int, l: int, rng: np.random.Generator) -> np.ndarray:
    """Concatenated blocks of ``l`` consecutive indices with uniform starts, cut to ``n``."""
    if not (1 <= l <= n):
        raise ValueError("block length must satisfy 1 <= l <= n")
    nblocks = -(-n // l)
    starts = rng.integers(0, n - l + 1, size=nblocks)
    return (starts[:, None] + np.arange(l)[None, :]).ravel()[:n]


def _replicate(y1, y2, z, cfg, original, centers, l, seed_seq, max_attempts):
    rng = np.random.default_rng(seed_seq)
    n = y1.size
    for _ in range(max_attempts):
        idx = mbb_indices(n, l, rng)
        zb = z[idx]
        try:
            fit1, fit2 = fit_margins(y1[idx], y2[idx], zb, cfg, warm=original)
        except ConvergenceError:
            continue
        panel = RankPanel.from_residuals(fit1.residuals, fit2.residuals)
        stats = statistics_from_panel(panel, zb, cfg, centers)
        return {
            r: (st.t_stat, st.delta1_agg, st.delta2_agg) for r, st in stats.items()
        }
    return None


def bootstrap_test(
    y1, y2, z, cfg: PipelineConfig, bcfg: BootstrapConfig, original: Evaluation | None = None
) -> dict[str, BootstrapResult]:
    """Bootstrap draws and p-values of ``T``, ``Delta1`` and ``Delta2`` for every region of ``cfg``."""
    y1 = np.asarray(y1, dtype=float)
    y2 = np.asarray(y2, dtype=float)
    z = np.asarray(z, dtype=float)
    if original is None:
        original = evaluate(y1, y2, z, cfg)
    n = y1.size
    if bcfg.iid:
        l = 1
    elif bcfg.block_length == "auto":
        l = andrews_block_length(z)
    else:
        l = int(bcfg.block_length)
    l = min(l, n)
    centers = {r: st.endpoint for r, st in original.stats.items()}
    seeds = np.random.SeedSequence(bcfg.seed).spawn(bcfg.B)

    def job(b):
        return _replicate(y1, y2, z, cfg, original, centers, l, seeds[b], bcfg.max_attempts)

    if bcfg.threads > 1:
        with ThreadPoolExecutor(bcfg.threads) as ex:
            results = list(ex.map(job, range(bcfg.B)))
    else:
        results = [job(b) for b in range(bcfg.B)]

    failures = sum(r is None for r in results)
    if failures:
        log.warning("%d of %d bootstrap replicates failed", failures, bcfg.B)
    if failures > bcfg.max_fail_frac * bcfg.B:
        raise BootstrapError(f"{failures} of {bcfg.B} bootstrap replicates failed")
    ok = [r for r in results if r is not None]
    out = {}
    for region, st in original.stats.items():
        draws = np.array([r[region] for r in ok], dtype=float).reshape(-1, 3)
        out[region] = BootstrapResult(
            t_draws=draws[:, 0],
            delta1_draws=draws[:, 1],
            delta2_draws=draws[:, 2],
            t_obs=st.t_stat,
            delta1_obs=st.delta1_agg,
            delta2_obs=st.delta2_agg,
            block_length_used=l,
            failures=failures,
        )
    return out
