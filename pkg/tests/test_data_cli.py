import json
import warnings

import numpy as np
import pytest

from deppred import cli
from deppred.analysis import ConfigError, RunConfig, run_full_analysis
from deppred.data import (
    DataError,
    DataSet,
    DegenerateStateWarning,
    bundled_csv_text,
    bundled_path,
    derive_state,
    descriptive_report,
    ingest_csv,
    load_bundled,
    parse_date,
    quantile_dependence,
    write_csv,
)
from deppred.dgp import MCResult


def write(tmp_path, text, name="in.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_three_row_file(tmp_path):
    p = write(tmp_path, "date,y1,y2\n2020-01-02,0.1,0.2\n2020/01/03,-0.1,0.3\n2020-01-06,0.0,-0.2\n")
    ds = ingest_csv(p, min_rows=1)
    assert ds.n == 3
    np.testing.assert_array_equal(ds.y2, [0.2, 0.3, -0.2])
    assert ds.date_labels() == ["2020-01-02", "2020-01-03", "2020-01-06"]


def test_blank_cell_is_dropped_with_warning(tmp_path):
    p = write(tmp_path, "date,y1,y2\n2020-01-02,0.1,0.2\n2020-01-03,-0.1,\n2020-01-06,0.0,-0.2\n")
    with pytest.warns(UserWarning, match="dropped 1"):
        ds = ingest_csv(p, min_rows=1)
    assert ds.n == 2


def test_duplicate_and_unordered_dates_are_errors(tmp_path):
    dup = write(tmp_path, "date,y1,y2\n2020-01-02,0.1,0.2\n2020-01-02,-0.1,0.1\n")
    with pytest.raises(DataError):
        ingest_csv(dup, min_rows=1)
    back = write(tmp_path, "date,y1,y2\n2020-01-03,0.1,0.2\n2020-01-02,-0.1,0.1\n", "b.csv")
    with pytest.raises(DataError):
        ingest_csv(back, min_rows=1)


def test_ingestion_errors(tmp_path):
    p = write(tmp_path, "date,y1,y2\n2020-01-02,0.1,0.2\n")
    with pytest.raises(DataError, match="at least 250"):
        ingest_csv(p)
    with pytest.raises(DataError, match="missing columns"):
        ingest_csv(p, {"y2": "market"}, min_rows=1)
    with pytest.raises(DataError):
        parse_date("02.01.2020")


def test_prices_become_log_returns(tmp_path):
    p = write(tmp_path, "date,y1,y2\n2020-01-02,100,50\n2020-01-03,110,45\n")
    ds = ingest_csv(p, min_rows=1, prices=True)
    assert ds.n == 1
    assert ds.y1[0] == pytest.approx(np.log(1.1))


def test_down_market_state_example():
    ds = DataSet(np.array(["2020-01-02", "2020-01-03", "2020-01-06"]), [1.0, 2.0, 3.0], [0.01, -0.02, 0.03])
    out = derive_state(ds, "down_market")
    assert out.n == 2
    np.testing.assert_array_equal(out.z, [0.0, 1.0])
    np.testing.assert_array_equal(out.y1, [2.0, 3.0])
    assert out.date_labels() == ["2020-01-03", "2020-01-06"]


def test_all_positive_market_is_degenerate():
    dates = np.arange("2020-01-01", "2020-01-11", dtype="datetime64[D]")
    ds = DataSet(dates, np.linspace(-1, 1, 10), np.full(10, 0.01))
    with pytest.warns(DegenerateStateWarning):
        out = derive_state(ds)
    assert np.all(out.z == 0)
    with pytest.warns(DegenerateStateWarning):
        rep = run_full_analysis(out, RunConfig(B=9))
    assert rep["status"] == "degenerate_state"


def test_state_passthrough_and_unknown_rule():
    dates = np.arange("2020-01-01", "2020-01-06", dtype="datetime64[D]")
    z = np.array([0.3, -1.0, 2.0, 0.0, 1.0])
    ds = DataSet(dates, np.zeros(5), np.zeros(5), z, extra={"vix": z * 2})
    np.testing.assert_array_equal(derive_state(ds, "z").z, z)
    np.testing.assert_array_equal(derive_state(ds, "vix").z, 2 * z)
    with pytest.raises(DataError):
        derive_state(ds, "nope")


def test_state_uses_strictly_lagged_market():
    ds = load_bundled()
    base = derive_state(ds).z
    shifted = DataSet(ds.dates, ds.y1, np.roll(ds.y2, 1), None, ds.names)
    other = derive_state(shifted).z
    # one extra day of lag moves every indicator by one position
    np.testing.assert_array_equal(other[1:], base[:-1])
    assert np.count_nonzero(other != base) > 0.2 * base.size


def test_write_then_ingest_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    dates = np.busday_offset(np.datetime64("2021-03-01"), np.arange(7), roll="forward")
    ds = DataSet(dates, rng.standard_normal(7), rng.standard_normal(7) * 1e-3, rng.random(7))
    p = tmp_path / "rt.csv"
    write_csv(ds, p)
    back = ingest_csv(p, {"z": "z"}, min_rows=1)
    np.testing.assert_array_equal(back.dates, ds.dates)
    np.testing.assert_array_equal(back.y1, ds.y1)
    np.testing.assert_array_equal(back.y2, ds.y2)
    np.testing.assert_array_equal(back.z, ds.z)


def test_write_csv_golden():
    ds = DataSet(np.array(["2020-01-02", "2020-01-03"]), [0.1, -2.5e-05], [1.0, 0.3333333333333333])
    assert write_csv(ds) == "date,y1,y2\n2020-01-02,0.1,1.0\n2020-01-03,-2.5e-05,0.3333333333333333\n"


def test_mc_table_csv_golden():
    recs = [
        {"scenario": "gauss", "n": 10, "rep": 0, "ok": True, "lower_p_T": 0.01, "lower_p_D1": 0.5, "lower_p_D2": 0.04},
        {"scenario": "gauss", "n": 10, "rep": 1, "ok": True, "lower_p_T": 0.2, "lower_p_D1": 0.05, "lower_p_D2": 0.3},
        {"scenario": "gauss", "n": 10, "rep": 2, "ok": False, "error": "x"},
    ]
    text = MCResult(recs, 0.05, ("lower",)).to_csv()
    assert text == (
        "region,statistic,n,scenario,rejection_rate,reps,failures\n"
        "lower,Delta1,10,gauss,0.500000,2,1\n"
        "lower,Delta2,10,gauss,0.500000,2,1\n"
        "lower,T,10,gauss,0.500000,2,1\n"
    )


def test_product_copula_curves_and_median_continuity():
    rng = np.random.default_rng(1)
    n = 40_000
    r1 = np.argsort(np.argsort(rng.random(n)))
    r2 = np.argsort(np.argsort(rng.random(n)))
    qs = np.round(np.arange(1, 100) * 0.01, 12)
    lo, up = quantile_dependence(r1, r2, qs)
    np.testing.assert_allclose(lo[qs >= 0.1], qs[qs >= 0.1], atol=0.02)
    np.testing.assert_allclose(up[qs <= 0.9], 1 - qs[qs <= 0.9], atol=0.02)
    mid = int(np.flatnonzero(qs == 0.5)[0])
    assert lo[mid] == up[mid]


def test_descriptive_report_regimes():
    rng = np.random.default_rng(2)
    n = 600
    z = (rng.random(n) < 0.5).astype(float)
    e = rng.standard_normal((n, 2))
    e[z == 1, 1] = 0.8 * e[z == 1, 0] + 0.6 * e[z == 1, 1]
    rep = descriptive_report(e[:, 0], e[:, 1], z)
    assert rep.spearman[1] > rep.spearman[0] + 0.5
    assert rep.counts[0] + rep.counts[1] == n
    lines = rep.curves_csv().splitlines()
    assert lines[0] == "regime,q,lower,upper"
    assert lines[1].startswith("0,0.01,") and lines[1].endswith(",")
    assert rep.ranks_csv().splitlines()[0] == "t,date,u1,u2,regime"
    z_rare = np.zeros(n)
    z_rare[:10] = 1
    with pytest.warns(UserWarning, match="suppressed"):
        rep2 = descriptive_report(e[:, 0], e[:, 1], z_rare)
    assert rep2.lower[1] is None and rep2.summary()["regimes"]["1"]["curves"] is False


def test_bundled_file_matches_generator():
    assert bundled_path().read_text() == bundled_csv_text()
    assert load_bundled().n == 1501


def test_run_config_validation():
    with pytest.raises(ConfigError):
        RunConfig(alpha=0.7)
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"bogus": 1})
    with pytest.raises(ConfigError):
        RunConfig(block_length="long")
    assert RunConfig.from_dict(RunConfig().to_dict()) == RunConfig()


def run_cli(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture(scope="module")
def bundled_report():
    import subprocess
    import sys

    res = subprocess.run(
        [sys.executable, "-m", "deppred", "test", "--B", "19"], capture_output=True, text=True, check=True
    )
    return res.stdout


def test_cli_test_is_byte_deterministic(capsys, bundled_report):
    code, out, _ = run_cli(capsys, "test", "--B", "19")
    assert code == 0
    assert out == bundled_report
    rep = json.loads(out)
    assert rep["schema"] == "deppred.report/1"
    for region in ("lower", "upper"):
        table = rep["regions"][region]["table"]
        assert set(table) == {"full_p", "cusum_p", "break_date", "pre_break_p", "post_break_p", "levels"}
        assert table["levels"]["full"] == 0.1


def test_cli_exit_codes(capsys, tmp_path):
    short = write(tmp_path, "date,y1,y2\n2020-01-02,0.1,0.2\n2020-01-03,0.2,-0.1\n")
    assert run_cli(capsys, "test", "--data", str(short))[0] == cli.EXIT_DATA
    cfg = write(tmp_path, json.dumps({"alpha": 0.9}), "c.json")
    assert run_cli(capsys, "test", "--config", str(cfg))[0] == cli.EXIT_CONFIG
    bad = write(tmp_path, json.dumps({"unknown_key": 1}), "d.json")
    assert run_cli(capsys, "bootstrap-only", "--config", str(bad))[0] == cli.EXIT_CONFIG
    assert run_cli(capsys, "simulate", "--reps", "5")[0] == cli.EXIT_CONFIG


def test_cli_convergence_exit_code(capsys, monkeypatch):
    from deppred.marginal import ConvergenceError

    def boom(*a, **k):
        raise ConvergenceError("no convergence")

    monkeypatch.setattr(cli, "locate_breaks", boom)
    assert run_cli(capsys, "locate-break")[0] == cli.EXIT_CONVERGENCE


def test_cli_config_file_overrides_flags(capsys, tmp_path):
    cfg = write(tmp_path, json.dumps({"regions": ["lower"]}), "c.json")
    code, out, _ = run_cli(capsys, "locate-break", "--regions", "upper", "--config", str(cfg))
    assert code == 0
    rep = json.loads(out)
    assert list(rep["regions"]) == ["lower"]
    assert rep["regions"]["lower"]["break_date"] is not None


def test_cli_describe_writes_plot_data(capsys, tmp_path):
    prefix = tmp_path / "fig"
    code, out, _ = run_cli(capsys, "describe", "--out-prefix", str(prefix))
    assert code == 0
    summary = json.loads(out)
    assert set(summary["regimes"]) == {"0", "1"}
    assert (tmp_path / "fig_curves.csv").read_text().startswith("regime,q,lower,upper\n")
    assert (tmp_path / "fig_ranks.csv").read_text().startswith("t,date,u1,u2,regime\n")


def test_cli_simulate_small(capsys, tmp_path):
    scen = write(tmp_path, json.dumps([{"name": "g", "null_copula": "gaussian", "n": 300, "burn": 50}]), "s.json")
    rec = tmp_path / "rec.jsonl"
    code, out, _ = run_cli(
        capsys, "simulate", "--scenarios", str(scen), "--n", "300", "--reps", "2", "--min-reps", "1",
        "--B", "9", "--regions", "lower", "--records", str(rec),
    )
    assert code == 0
    assert out.splitlines()[0] == "region,statistic,n,scenario,rejection_rate,reps,failures"
    assert len(rec.read_text().splitlines()) == 2
