"""Return-panel ingestion, state derivation and rank-based descriptive analytics."""

from __future__ import annotations

import csv
import datetime as _dt
import io
import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import stats as _stats

from .ranks import below_count

log = logging.getLogger(__name__)

MIN_ROWS = 250
MIN_REGIME = 50


class DataError(ValueError):
    """Malformed or insufficient input data."""


class DegenerateStateWarning(RuntimeWarning):
    pass


@dataclass
class DataSet:
    dates: np.ndarray  # datetime64[D], strictly increasing
    y1: np.ndarray
    y2: np.ndarray
    z: np.ndarray | None = None
    names: tuple[str, str] = ("y1", "y2")
    extra: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        self.dates = np.asarray(self.dates, dtype="datetime64[D]")
        self.y1 = np.asarray(self.y1, dtype=float)
        self.y2 = np.asarray(self.y2, dtype=float)
        n = self.dates.size
        if self.y1.size != n or self.y2.size != n:
            raise DataError("series lengths differ")
        if self.z is not None:
            self.z = np.asarray(self.z, dtype=float)
            if self.z.shape[0] != n:
                raise DataError("state length differs from the series")
        if n > 1 and np.any(np.diff(self.dates.astype(np.int64)) <= 0):
            raise DataError("dates must be strictly increasing")

    @property
    def n(self) -> int:
        return self.dates.size

    def date_labels(self) -> list[str]:
        return [str(d) for d in self.dates]

    def slice(self, start: int, stop: int) -> "DataSet":
        return DataSet(
            self.dates[start:stop], self.y1[start:stop], self.y2[start:stop],
            None if self.z is None else self.z[start:stop], self.names,
            {k: v[start:stop] for k, v in self.extra.items()},
        )


def parse_date(text: str) -> np.datetime64:
    """ISO-8601 ``YYYY-MM-DD`` or ``YYYY/MM/DD``."""
    t = text.strip()
    for fmt in ("%Y-%m-%d", "%Y/%m/%d"):
        try:
            return np.datetime64(_dt.datetime.strptime(t, fmt).date(), "D")
        except ValueError:
            pass
    raise DataError(f"unparseable date {text!r}")


def _to_float(text: str) -> float:
    t = text.strip()
    if t == "" or t.lower() in ("na", "nan", "null"):
        return math.nan
    try:
        return float(t)
    except ValueError as exc:
        raise DataError(f"non-numeric value {text!r}") from exc


def ingest_csv(
    path, columns: dict | None = None, *, min_rows: int = MIN_ROWS, prices: bool = False,
    extra_columns=(),
) -> DataSet:
    """Read a dated two-series CSV.

    ``columns`` maps the roles ``date``, ``y1``, ``y2`` and optionally ``z``
    to header names (defaults: ``date``, ``y1``, ``y2``).  Rows with a missing
    field are dropped with a warning.  With ``prices=True`` both series are
    turned into log returns, which drops the first row.
    """
    cmap = {"date": "date", "y1": "y1", "y2": "y2", "z": None}
    cmap.update(columns or {})
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        wanted = [c for c in (cmap["date"], cmap["y1"], cmap["y2"], cmap["z"], *extra_columns) if c]
        missing = [c for c in wanted if c not in header]
        if missing:
            raise DataError(f"missing columns: {missing}")
        rows = list(reader)
    dates, y1, y2, z, extra = [], [], [], [], {c: [] for c in extra_columns}
    dropped = 0
    for row in rows:
        vals = [row.get(c) for c in wanted]
        if any(v is None or v.strip() == "" for v in vals):
            dropped += 1
            continue
        nums = [_to_float(row[c]) for c in wanted[1:]]
        if any(math.isnan(v) for v in nums):
            dropped += 1
            continue
        dates.append(parse_date(row[cmap["date"]]))
        y1.append(float(row[cmap["y1"]]))
        y2.append(float(row[cmap["y2"]]))
        if cmap["z"]:
            z.append(float(row[cmap["z"]]))
        for c in extra_columns:
            extra[c].append(float(row[c]))
    if dropped:
        warnings.warn(f"dropped {dropped} row(s) with missing values", UserWarning)
    d = np.array(dates, dtype="datetime64[D]")
    if d.size > 1 and np.any(np.diff(d.astype(np.int64)) <= 0):
        raise DataError("dates must be strictly increasing without duplicates")
    y1a, y2a = np.array(y1), np.array(y2)
    za = np.array(z) if cmap["z"] else None
    ex = {k: np.array(v) for k, v in extra.items()}
    if prices:
        if np.any(y1a <= 0) or np.any(y2a <= 0):
            raise DataError("prices must be positive")
        y1a, y2a = np.diff(np.log(y1a)), np.diff(np.log(y2a))
        d = d[1:]
        za = None if za is None else za[1:]
        ex = {k: v[1:] for k, v in ex.items()}
    if d.size < min_rows:
        raise DataError(f"only {d.size} usable rows; at least {min_rows} required")
    return DataSet(d, y1a, y2a, za, (cmap["y1"], cmap["y2"]), ex)


def write_csv(ds: DataSet, path=None) -> str:
    """Write ``date,y1,y2[,z]`` with round-trip float formatting; returns the text."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = ["date", "y1", "y2"] + (["z"] if ds.z is not None else [])
    w.writerow(cols)
    for i in range(ds.n):
        row = [str(ds.dates[i]), repr(float(ds.y1[i])), repr(float(ds.y2[i]))]
        if ds.z is not None:
            row.append(repr(float(ds.z[i])))
        w.writerow(row)
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def derive_state(ds: DataSet, rule: str = "down_market") -> DataSet:
    """Attach the state series.

    ``down_market``: ``Z_t = 1{y2_{t-1} < 0}`` (``y2`` is the market), which
    trims the first row.  Any other rule names an extra column or ``z``,
    which passes through unchanged.
    """
    if rule == "down_market":
        z = (ds.y2[:-1] < 0).astype(float)
        out = DataSet(ds.dates[1:], ds.y1[1:], ds.y2[1:], z, ds.names,
                      {k: v[1:] for k, v in ds.extra.items()})
    elif rule == "z":
        if ds.z is None:
            raise DataError("data set carries no z column")
        out = ds
    elif rule in ds.extra:
        out = replace(ds, z=np.asarray(ds.extra[rule], dtype=float))
    else:
        raise DataError(f"unknown state rule {rule!r}")
    if is_degenerate_state(out.z):
        warnings.warn("state series has zero variance", DegenerateStateWarning)
    return out


def is_degenerate_state(z) -> bool:
    if z is None:
        return True
    z = np.asarray(z, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    return bool(np.any(np.ptp(z, axis=0) == 0))


# ---------------------------------------------------------------------------
# descriptive analytics
# ---------------------------------------------------------------------------


def regime_labels(z) -> np.ndarray:
    """0/1 regime per observation: the value itself for binary states, else above-median."""
    z = np.asarray(z, dtype=float)
    if z.ndim > 1:
        z = z[:, 0]
    vals = np.unique(z)
    if vals.size <= 2 and np.all(np.isin(vals, (0.0, 1.0))):
        return z.astype(int)
    return (z > np.median(z)).astype(int)


def empirical_diagonal(r1, r2, q) -> float:
    """``C_m(q, q)`` from within-sample ranks ``0..m-1`` using ``rank / m <= q``."""
    m = r1.size
    k = below_count(float(q), m)
    return float(np.count_nonzero((r1 < k) & (r2 < k))) / m


def quantile_dependence(r1, r2, qs):
    """Lower ``C(q,q)/q`` and upper ``(1 - 2q + C(q,q))/(1 - q)`` curves."""
    c = np.array([empirical_diagonal(r1, r2, q) for q in qs])
    qs = np.asarray(qs, dtype=float)
    return c / qs, (1.0 - 2.0 * qs + c) / (1.0 - qs)


def _ranks(x):
    return np.argsort(np.argsort(x, kind="stable"), kind="stable")


@dataclass
class DescriptiveReport:
    spearman: dict[int, float | None]
    counts: dict[int, int]
    q: np.ndarray
    lower: dict[int, np.ndarray | None]
    upper: dict[int, np.ndarray | None]
    rank_pairs: np.ndarray  # (n, 2) full-sample pseudo-observations
    regime: np.ndarray
    dates: np.ndarray | None = None

    def summary(self) -> dict:
        return {
            "regimes": {
                str(g): {
                    "n": self.counts[g],
                    "spearman": self.spearman[g],
                    "curves": self.lower[g] is not None,
                }
                for g in sorted(self.counts)
            }
        }

    def curves_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["regime", "q", "lower", "upper"])
        for g in sorted(self.counts):
            if self.lower[g] is None:
                continue
            for i, q in enumerate(self.q):
                lo = self.lower[g][i] if q <= 0.5 + 1e-12 else None
                up = self.upper[g][i] if q >= 0.5 - 1e-12 else None
                w.writerow([g, f"{q:.2f}", "" if lo is None else f"{lo:.10f}", "" if up is None else f"{up:.10f}"])
        return buf.getvalue()

    def ranks_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "date", "u1", "u2", "regime"])
        for i in range(self.regime.size):
            d = "" if self.dates is None else str(self.dates[i])
            w.writerow([i, d, f"{self.rank_pairs[i, 0]:.10f}", f"{self.rank_pairs[i, 1]:.10f}", int(self.regime[i])])
        return buf.getvalue()


def descriptive_report(eps1, eps2, z, *, step: float = 0.01, min_regime: int = MIN_REGIME, dates=None) -> DescriptiveReport:
    """Per-regime Spearman correlation and quantile-dependence curves of two residual series.

    Within each regime the ranks are recomputed, so each curve is built
    from that regime's own empirical copula.
    """
    eps1 = np.asarray(eps1, dtype=float)
    eps2 = np.asarray(eps2, dtype=float)
    n = eps1.size
    reg = regime_labels(z)
    npts = int(round(1.0 / step)) - 1
    qs = np.round(np.arange(1, npts + 1) * step, 12)
    pairs = np.column_stack([(_ranks(eps1) + 1) / (n + 1), (_ranks(eps2) + 1) / (n + 1)])
    sp, cnt, lo, up = {}, {}, {}, {}
    for g in (0, 1):
        idx = np.flatnonzero(reg == g)
        cnt[g] = int(idx.size)
        if idx.size < min_regime:
            if idx.size:
                warnings.warn(f"regime {g} has {idx.size} observations; curves suppressed", UserWarning)
            sp[g], lo[g], up[g] = None, None, None
            continue
        sp[g] = float(_stats.spearmanr(eps1[idx], eps2[idx]).statistic)
        r1, r2 = _ranks(eps1[idx]), _ranks(eps2[idx])
        lo[g], up[g] = quantile_dependence(r1, r2, qs)
    return DescriptiveReport(sp, cnt, qs, lo, up, pairs, reg, dates)


# ---------------------------------------------------------------------------
# bundled synthetic market/stock panel
# ---------------------------------------------------------------------------


def bundled_path() -> Path:
    return Path(__file__).with_name("data") / "crsp_like.csv"


def generate_crsp_like(n: int = 1500, seed: int = 20000103, start: str = "2000-01-03") -> DataSet:
    """Synthetic daily stock/market returns whose dependence rises after down days
    in the second half of the sample only.

    The market follows a GJR-AR(1)-GARCH(1,1); the stock adds the lagged
    down-market indicator in its mean.  The innovation copula is Gaussian
    with correlation ``tanh(0.5 + b_t Z_t)``, ``b_t = 0`` before ``n // 2``
    and ``0.6`` afterwards.
    """
    from .marginal import MarginalModelSpec, simulate_marginal

    rng = np.random.default_rng(seed)
    burn = 250
    total = n + 1 + burn
    mkt_spec = MarginalModelSpec(mu=3e-4, phi=-0.05, omega=2e-6, alpha=0.03, beta=0.9, gamma_gjr=0.1)
    stk_spec = MarginalModelSpec(mu=4e-4, phi=-0.02, gamma_z=-5e-4, omega=4e-6, alpha=0.05, beta=0.88,
                                 gamma_gjr=0.08)
    e_m = rng.standard_normal(total)
    r_m = simulate_marginal(mkt_spec, e_m, None)
    z = np.zeros(total)
    z[1:] = (r_m[:-1] < 0).astype(float)
    b = np.zeros(total)
    b[burn + 1 + n // 2:] = 0.6
    rho = np.tanh(0.5 + b * z)
    e_s = rho * e_m + np.sqrt(1.0 - rho * rho) * rng.standard_normal(total)
    r_s = simulate_marginal(stk_spec, e_s, z)
    days = np.busday_offset(np.datetime64(start), np.arange(n + 1), roll="forward")
    keep = slice(burn, None)
    r_s, r_m = np.round(r_s[keep], 8), np.round(r_m[keep], 8)
    return DataSet(days, r_s, r_m, None, ("stock", "market"))


def load_bundled() -> DataSet:
    return ingest_csv(bundled_path(), {"date": "date", "y1": "stock", "y2": "market"})


def bundled_csv_text(ds: DataSet | None = None) -> str:
    ds = generate_crsp_like() if ds is None else ds
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["date", "stock", "market"])
    for i in range(ds.n):
        w.writerow([str(ds.dates[i]), f"{ds.y1[i]:.8f}", f"{ds.y2[i]:.8f}"])
    return buf.getvalue()
