"""Data-generating processes and the Monte Carlo rejection-rate harness.

Copulas: Gaussian, Frank (conditional inversion), and a rectangular Gaussian
patchwork copula equal to a Gaussian background outside ``[0, 0.5]^2`` and to
a rescaled Gaussian patch inside.  Under the alternatives the patch
correlation is ``tanh(alpha_in + beta_t Z_t)``.
"""

from __future__ import annotations

import csv
import functools
import io
import json
import logging
import math
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numba as nb
import numpy as np
from scipy import special

from .bootstrap import BootstrapConfig, BootstrapError, bootstrap_test
from .gauss import _bvn_loop, bvn_scalar
from .marginal import ConvergenceError, MarginalModelSpec, simulate_marginal
from .pipeline import PipelineConfig, evaluate

log = logging.getLogger(__name__)

NULL_COPULAS = ("gaussian", "frank", "patchwork")
ALTERNATIVES = ("none", "constant", "mid_break", "offsetting")


# ---------------------------------------------------------------------------
# state and copula samplers
# ---------------------------------------------------------------------------


def simulate_state(n: int, coeff: float, rng: np.random.Generator) -> np.ndarray:
    """Stationary Gaussian AR(1) with unit marginal variance."""
    if abs(coeff) >= 1:
        raise ValueError("state AR coefficient must satisfy |coeff| < 1")
    v = rng.standard_normal(n) * math.sqrt(1.0 - coeff * coeff)
    z = np.empty(n)
    prev = rng.standard_normal()
    for t in range(n):
        prev = coeff * prev + v[t]
        z[t] = prev
    return z


def sample_gaussian_copula(rho, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """``(size, 2)`` draws; ``rho`` may be a scalar or a length-``size`` array."""
    rho = np.asarray(rho, dtype=float)
    if size is None:
        size = 1 if rho.ndim == 0 else rho.size
    if np.any(np.abs(rho) >= 1):
        raise ValueError("|rho| must be below one")
    x = rng.standard_normal((size, 2))
    x2 = rho * x[:, 0] + np.sqrt(1.0 - rho * rho) * x[:, 1]
    return np.column_stack([special.ndtr(x[:, 0]), special.ndtr(x2)])


def frank_conditional_inverse(u1, w, theta):
    """Solve ``dC(u1, v)/du1 = w`` for ``v`` under the Frank copula."""
    u1 = np.asarray(u1, dtype=float)
    w = np.asarray(w, dtype=float)
    eu = np.exp(-theta * u1)
    num = w * np.expm1(-theta)
    den = eu - w * (eu - 1.0)
    return -np.log1p(num / den) / theta


def sample_frank_copula(theta: float, rng: np.random.Generator, size: int = 1) -> np.ndarray:
    if theta == 0:
        raise ValueError("Frank parameter must be nonzero")
    u1 = rng.random(size)
    w = rng.random(size)
    return np.column_stack([u1, frank_conditional_inverse(u1, w, theta)])


def frank_kendall_tau(theta: float) -> float:
    """``1 - 4 / theta (1 - D1(theta))`` with the Debye function by quadrature."""
    from scipy.integrate import quad

    d1 = quad(lambda t: t / math.expm1(t) if t != 0 else 1.0, 0.0, theta)[0] / theta
    return 1.0 - 4.0 / theta * (1.0 - d1)


@nb.njit(cache=True, nogil=True)
def _patch_newton(w, x0, rho, p0):
    out = np.empty(w.shape[0])
    sr = math.sqrt(1.0 - rho * rho)
    for i in range(w.shape[0]):
        x = x0[i]
        for _ in range(30):
            f = bvn_scalar(x, 0.0, rho) / p0 - w[i]
            fp = math.exp(-0.5 * x * x) / math.sqrt(2 * math.pi) * 0.5 * math.erfc(rho * x / sr / math.sqrt(2.0)) / p0
            if fp <= 0.0:
                break
            step = f / fp
            if step > 2.0:
                step = 2.0
            elif step < -2.0:
                step = -2.0
            x -= step
            if x > 0.0:
                x = 0.0
            if abs(step) < 1e-13:
                break
        out[i] = 0.5 * math.erfc(-x / math.sqrt(2.0))
    return out


class _PatchMap:
    """Inverse of ``h(v) = C_out(v, 1/2) / C_out(1/2, 1/2)`` on ``(0, 1/2]``."""

    def __init__(self, rho_out: float, npts: int = 2048):
        self.rho = rho_out
        self.p0 = 0.25 + math.asin(rho_out) / (2.0 * math.pi)
        self.x = np.linspace(-8.5, 0.0, npts)
        h = np.empty(npts)
        _bvn_loop(self.x, np.zeros(npts), np.full(npts, rho_out), h)
        self.h = h / self.p0
        self.h[-1] = 1.0

    def h_of(self, v):
        v = np.atleast_1d(np.asarray(v, dtype=float))
        out = np.empty(v.size)
        _bvn_loop(special.ndtri(v), np.zeros(v.size), np.full(v.size, self.rho), out)
        return out / self.p0

    def inverse(self, w):
        w = np.atleast_1d(np.asarray(w, dtype=float))
        x0 = np.interp(w, self.h, self.x)
        return _patch_newton(w, x0, self.rho, self.p0)


@functools.lru_cache(maxsize=16)
def _patch_map(rho_out: float) -> _PatchMap:
    return _PatchMap(rho_out)


def patchwork_cdf(u1: float, u2: float, alpha_in: float, alpha_out: float) -> float:
    """Closed-form CDF of the patchwork copula on ``[0, 1/2]^2``."""
    if u1 > 0.5 or u2 > 0.5:
        raise ValueError("closed form implemented for the patch only")
    pm = _patch_map(math.tanh(alpha_out))
    h1, h2 = pm.h_of([u1, u2])
    return pm.p0 * bvn_scalar(special.ndtri(h1), special.ndtri(h2), math.tanh(alpha_in))


def sample_patchwork(alpha_in, alpha_out: float, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
    """Draws from the patchwork copula; ``alpha_in`` may vary per draw."""
    alpha_in = np.asarray(alpha_in, dtype=float)
    if size is None:
        size = 1 if alpha_in.ndim == 0 else alpha_in.size
    rho_out = math.tanh(alpha_out)
    v = sample_gaussian_copula(rho_out, rng, size)
    rho_in = np.broadcast_to(np.tanh(alpha_in), (size,))
    w = sample_gaussian_copula(rho_in, rng, size)
    inside = (v[:, 0] <= 0.5) & (v[:, 1] <= 0.5)
    if np.any(inside):
        pm = _patch_map(rho_out)
        wi = w[inside]
        v[inside, 0] = pm.inverse(wi[:, 0])
        v[inside, 1] = pm.inverse(wi[:, 1])
    return v


# ---------------------------------------------------------------------------
# scenarios
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScenarioSpec:
    """Complete description of one simulation design."""

    name: str = "gauss"
    null_copula: str = "gaussian"
    rho: float = math.tanh(0.5)
    theta: float = 2.0
    alpha_in: float = 0.25
    alpha_out: float = 0.5
    alternative: str = "none"
    beta_magnitude: float = 0.5
    state_coeff: float = 0.85
    marginal: MarginalModelSpec = field(default_factory=lambda: MarginalModelSpec(gamma_z=1.5))
    n: int = 1000
    burn: int = 500

    def __post_init__(self):
        if self.null_copula not in NULL_COPULAS:
            raise ValueError(f"unknown copula {self.null_copula!r}")
        if self.alternative not in ALTERNATIVES:
            raise ValueError(f"unknown alternative {self.alternative!r}")
        if self.alternative != "none" and self.null_copula != "patchwork":
            raise ValueError("alternatives are defined on the patchwork copula")
        if abs(self.state_coeff) >= 1:
            raise ValueError("state AR coefficient must satisfy |coeff| < 1")

    def betas(self, n: int) -> np.ndarray:
        b = self.beta_magnitude
        half = n // 2
        pre, post = {
            "none": (0.0, 0.0),
            "constant": (b, b),
            "mid_break": (0.0, b),
            "offsetting": (-b, b),
        }[self.alternative]
        out = np.full(n, post)
        out[:half] = pre
        return out

    def to_dict(self) -> dict:
        d = asdict(self)
        d["marginal"] = self.marginal.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioSpec":
        d = dict(d)
        if "marginal" in d and isinstance(d["marginal"], dict):
            d["marginal"] = MarginalModelSpec(**d["marginal"])
        return cls(**d)


def standard_scenarios(n: int = 1000) -> list[ScenarioSpec]:
    """The six designs of the size/power study."""
    return [
        ScenarioSpec(name="gauss", null_copula="gaussian", n=n),
        ScenarioSpec(name="frank", null_copula="frank", n=n),
        ScenarioSpec(name="patch", null_copula="patchwork", n=n),
        ScenarioSpec(name="constant", null_copula="patchwork", alternative="constant", n=n),
        ScenarioSpec(name="mid_break", null_copula="patchwork", alternative="mid_break", n=n),
        ScenarioSpec(name="offset", null_copula="patchwork", alternative="offsetting", n=n),
    ]


def load_scenarios(path) -> list[ScenarioSpec]:
    with open(path) as fh:
        doc = json.load(fh)
    items = doc["scenarios"] if isinstance(doc, dict) else doc
    return [ScenarioSpec.from_dict(d) for d in items]


def sample_scenario_copula(spec: ScenarioSpec, z: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    n = z.size
    if spec.null_copula == "gaussian":
        return sample_gaussian_copula(spec.rho, rng, n)
    if spec.null_copula == "frank":
        return sample_frank_copula(spec.theta, rng, n)
    betas = spec.betas(n)
    return sample_patchwork(spec.alpha_in + betas * z, spec.alpha_out, rng, n)


def simulate_scenario(spec: ScenarioSpec, rng: np.random.Generator):
    """Simulate ``(y1, y2, z)`` of length ``spec.n`` after a burn-in."""
    n, burn = spec.n, spec.burn
    z_all = simulate_state(n + burn, spec.state_coeff, rng)
    # burn-in draws use the first-regime copula
    uu = np.empty((n + burn, 2))
    uu[burn:] = sample_scenario_copula(spec, z_all[burn:], rng)
    if burn:
        pre = replace(spec, n=burn)
        if spec.alternative != "none":
            b0 = spec.betas(n)[0]
            uu[:burn] = sample_patchwork(spec.alpha_in + b0 * z_all[:burn], spec.alpha_out, rng, burn)
        else:
            uu[:burn] = sample_scenario_copula(pre, z_all[:burn], rng)
    eps = special.ndtri(np.clip(uu, 1e-16, 1 - 1e-16))
    y1 = simulate_marginal(spec.marginal, eps[:, 0], z_all)
    y2 = simulate_marginal(spec.marginal, eps[:, 1], z_all)
    return y1[burn:], y2[burn:], z_all[burn:]


# ---------------------------------------------------------------------------
# Monte Carlo harness
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MCConfig:
    B: int = 199
    seed: int = 12345
    level: float = 0.05
    regions: tuple[str, ...] = ("lower", "upper")
    grid_step: float = 0.05
    s_stride: int = 1
    block_length: int | str = "auto"
    threads: int = 1
    bootstrap: bool = True

    def pipeline(self, spec: ScenarioSpec) -> PipelineConfig:
        mspec = MarginalModelSpec(gamma_z=0.0) if spec.marginal.has_exog else MarginalModelSpec()
        return PipelineConfig(
            spec1=mspec, spec2=mspec, regions=self.regions,
            grid_step=self.grid_step, s_stride=self.s_stride,
        )


def rep_seed(root: int, scenario: str, n: int, rep: int) -> np.random.SeedSequence:
    """Per-replication seed keyed by (root, scenario, n, rep) only."""
    return np.random.SeedSequence([root, zlib.crc32(scenario.encode()), n, rep])


def run_replication(spec: ScenarioSpec, rep: int, cfg: MCConfig) -> dict:
    """Simulate one sample, compute statistics and (optionally) bootstrap p-values."""
    ss = rep_seed(cfg.seed, spec.name, spec.n, rep)
    sim_ss, boot_ss = ss.spawn(2)
    y1, y2, z = simulate_scenario(spec, np.random.default_rng(sim_ss))
    pcfg = cfg.pipeline(spec)
    rec = {"scenario": spec.name, "n": spec.n, "rep": rep, "ok": False}
    try:
        ev = evaluate(y1, y2, z, pcfg)
        for r, st in ev.stats.items():
            rec[f"{r}_T"] = st.t_stat
            rec[f"{r}_D1"] = st.delta1_agg
            rec[f"{r}_D2"] = st.delta2_agg
            rec[f"{r}_s_hat"] = st.argmax_s
        if cfg.bootstrap:
            bcfg = BootstrapConfig(
                B=cfg.B, block_length=cfg.block_length,
                seed=int(boot_ss.generate_state(1)[0]),
            )
            boot = bootstrap_test(y1, y2, z, pcfg, bcfg, ev)
            for r, br in boot.items():
                rec[f"{r}_p_T"] = br.p_t
                rec[f"{r}_p_D1"] = br.p_delta1
                rec[f"{r}_p_D2"] = br.p_delta2
                rec["block_length"] = br.block_length_used
                rec["boot_failures"] = br.failures
        rec["ok"] = True
    except (ConvergenceError, BootstrapError) as exc:
        log.warning("replication %s/%d/%d failed: %s", spec.name, spec.n, rep, exc)
        rec["error"] = str(exc)
    return rec


@dataclass
class MCResult:
    records: list[dict]
    level: float
    regions: tuple[str, ...]

    def table(self) -> list[dict]:
        rows = []
        keys = []
        for rec in self.records:
            key = (rec["scenario"], rec["n"])
            if key not in keys:
                keys.append(key)
        for region in self.regions:
            for stat, col in (("Delta1", "p_D1"), ("Delta2", "p_D2"), ("T", "p_T")):
                for scen, n in keys:
                    recs = [r for r in self.records if r["scenario"] == scen and r["n"] == n]
                    ok = [r for r in recs if r["ok"]]
                    rej = [r[f"{region}_{col}"] <= self.level for r in ok]
                    rows.append({
                        "region": region,
                        "statistic": stat,
                        "n": n,
                        "scenario": scen,
                        "rejection_rate": float(np.mean(rej)) if rej else float("nan"),
                        "reps": len(ok),
                        "failures": len(recs) - len(ok),
                    })
        return rows

    def rate(self, scenario: str, region: str, stat: str = "T", n: int | None = None) -> float:
        for row in self.table():
            if row["scenario"] == scenario and row["region"] == region and row["statistic"] == stat:
                if n is None or row["n"] == n:
                    return row["rejection_rate"]
        raise KeyError((scenario, region, stat, n))

    def to_csv(self) -> str:
        buf = io.StringIO()
        cols = ["region", "statistic", "n", "scenario", "rejection_rate", "reps", "failures"]
        w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        w.writeheader()
        for row in self.table():
            row = dict(row)
            row["rejection_rate"] = f"{row['rejection_rate']:.6f}"
            w.writerow(row)
        return buf.getvalue()


def run_mc_experiment(scenarios, n_list, reps: int, cfg: MCConfig = MCConfig(), *, min_reps: int = 100,
                      progress=None) -> MCResult:
    """Rejection frequencies for every (scenario, n, region, statistic)."""
    if reps < min_reps:
        raise ValueError(f"reps must be at least {min_reps}")
    jobs = [(replace(s, n=n), r) for s in scenarios for n in n_list for r in range(reps)]

    def job(a):
        rec = run_replication(a[0], a[1], cfg)
        if progress is not None:
            progress(rec)
        return rec

    if cfg.threads > 1:
        with ThreadPoolExecutor(cfg.threads) as ex:
            records = list(ex.map(job, jobs))
    else:
        records = [job(a) for a in jobs]
    return MCResult(records=records, level=cfg.level, regions=cfg.regions)
