import json
import math
from dataclasses import replace

import numpy as np
import pytest
from scipy import optimize, special, stats

from deppred.dgp import (
    MCConfig,
    ScenarioSpec,
    frank_kendall_tau,
    load_scenarios,
    standard_scenarios,
    patchwork_cdf,
    run_mc_experiment,
    sample_frank_copula,
    sample_gaussian_copula,
    sample_patchwork,
    sample_scenario_copula,
    simulate_scenario,
    simulate_state,
)
from deppred.marginal import MarginalModelSpec, fit_marginal

N_BIG = 100_000


def bin_chi2_pvalue(u, bins=5):
    """Chi-squared test of independence-uniformity on a bins x bins grid."""
    h, _, _ = np.histogram2d(u[:, 0], u[:, 1], bins=bins, range=[[0, 1], [0, 1]])
    expected = u.shape[0] / bins**2
    return stats.chi2.sf(((h - expected) ** 2 / expected).sum(), bins**2 - 1)


def two_sample_bin_pvalue(a, b, bins=5):
    ha, _, _ = np.histogram2d(a[:, 0], a[:, 1], bins=bins, range=[[0, 1], [0, 1]])
    hb, _, _ = np.histogram2d(b[:, 0], b[:, 1], bins=bins, range=[[0, 1], [0, 1]])
    return stats.chi2_contingency(np.vstack([ha.ravel(), hb.ravel()]))[1]


def debye1_series(x, terms=30):
    """First Debye function from its Bernoulli-number series (valid for |x| < 2 pi)."""
    b = special.bernoulli(2 * terms)
    total = 1.0 - x / 4.0
    for k in range(1, terms):
        total += b[2 * k] * x ** (2 * k) / ((2 * k + 1) * math.factorial(2 * k))
    return total


def assert_uniform_margins(u):
    for j in range(2):
        assert stats.kstest(u[:, j], "uniform").pvalue > 0.01


def test_state_without_memory_is_standard_normal():
    z = simulate_state(20_000, 0.0, np.random.default_rng(1))
    assert stats.kstest(z, "norm").pvalue > 0.01


def test_state_moments():
    z = simulate_state(N_BIG, 0.85, np.random.default_rng(2))
    zc = z - z.mean()
    acf1 = (zc[1:] @ zc[:-1]) / (zc @ zc)
    assert acf1 == pytest.approx(0.85, abs=0.01)
    assert z.var() == pytest.approx(1.0, abs=0.02)
    with pytest.raises(ValueError):
        simulate_state(10, 1.0, np.random.default_rng(0))


def test_gaussian_copula_independence_bins():
    u = sample_gaussian_copula(0.0, np.random.default_rng(3), N_BIG)
    assert bin_chi2_pvalue(u) > 0.01
    assert_uniform_margins(u)


def test_gaussian_copula_correlation():
    u = sample_gaussian_copula(0.6, np.random.default_rng(4), N_BIG)
    r = np.corrcoef(special.ndtri(u).T)[0, 1]
    assert r == pytest.approx(0.6, abs=0.01)
    with pytest.raises(ValueError):
        sample_gaussian_copula(1.0, np.random.default_rng(0), 3)


def test_frank_near_zero_is_independent():
    u = sample_frank_copula(1e-4, np.random.default_rng(5), N_BIG)
    assert bin_chi2_pvalue(u) > 0.01
    assert_uniform_margins(u)


def test_frank_kendall_tau_against_debye_series():
    u = sample_frank_copula(2.0, np.random.default_rng(6), N_BIG)
    oracle = 1.0 - 4.0 / 2.0 * (1.0 - debye1_series(2.0))
    assert frank_kendall_tau(2.0) == pytest.approx(oracle, abs=1e-10)
    assert stats.kendalltau(u[:, 0], u[:, 1]).statistic == pytest.approx(oracle, abs=0.01)
    assert_uniform_margins(u)
    with pytest.raises(ValueError):
        sample_frank_copula(0.0, np.random.default_rng(0))


def test_patchwork_with_equal_parameters_keeps_the_background_outside_the_patch():
    # inside the patch the law is p0 C(h(u1), h(u2)); with equal parameters this
    # differs from the plain Gaussian copula, so only the outside and the patch mass agree
    rng = np.random.default_rng(7)
    a = sample_patchwork(0.5, 0.5, rng, N_BIG)
    b = sample_gaussian_copula(math.tanh(0.5), rng, N_BIG)
    ha, _, _ = np.histogram2d(a[:, 0], a[:, 1], bins=4, range=[[0, 1], [0, 1]])
    hb, _, _ = np.histogram2d(b[:, 0], b[:, 1], bins=4, range=[[0, 1], [0, 1]])
    outside = np.ones((4, 4), bool)
    outside[:2, :2] = False
    assert stats.chi2_contingency(np.vstack([ha[outside], hb[outside]]))[1] > 0.01
    p0 = 0.25 + math.asin(math.tanh(0.5)) / (2 * math.pi)
    mass = ha[:2, :2].sum() / N_BIG
    assert abs(mass - p0) <= 3 * math.sqrt(p0 * (1 - p0) / N_BIG)
    assert patchwork_cdf(0.5, 0.5, 0.5, 0.5) == pytest.approx(p0, abs=1e-12)


def independent_patch_cdf(u1, u2, alpha_in, alpha_out):
    """Background-rescaled patch CDF from scipy's bivariate normal, with h inverted by brentq as a check."""
    ro, ri = math.tanh(alpha_out), math.tanh(alpha_in)
    out = stats.multivariate_normal([0, 0], [[1, ro], [ro, 1]])
    inn = stats.multivariate_normal([0, 0], [[1, ri], [ri, 1]])
    c_half = 0.25 + math.asin(ro) / (2 * math.pi)

    def h(v):
        return out.cdf([stats.norm.ppf(v), 0.0]) / c_half

    h1, h2 = h(u1), h(u2)
    v_back = optimize.brentq(lambda v: h(v) - h1, 1e-12, 0.5, xtol=1e-14)
    assert v_back == pytest.approx(u1, abs=1e-7)
    return c_half * inn.cdf([stats.norm.ppf(h1), stats.norm.ppf(h2)])


def test_patchwork_cdf_closed_form_and_frequencies():
    alpha_in, alpha_out = 0.25, 0.5
    oracle = independent_patch_cdf(0.25, 0.25, alpha_in, alpha_out)
    assert patchwork_cdf(0.25, 0.25, alpha_in, alpha_out) == pytest.approx(oracle, abs=1e-7)
    u = sample_patchwork(alpha_in, alpha_out, np.random.default_rng(8), N_BIG)
    assert_uniform_margins(u)
    freq = np.mean((u[:, 0] <= 0.25) & (u[:, 1] <= 0.25))
    se = math.sqrt(oracle * (1 - oracle) / N_BIG)
    assert abs(freq - oracle) <= 3 * se
    # outside the patch the law is the background Gaussian copula
    ro = math.tanh(alpha_out)
    bg = stats.multivariate_normal([0, 0], [[1, ro], [ro, 1]]).cdf(stats.norm.ppf([0.75, 0.3]))
    freq_out = np.mean((u[:, 0] <= 0.75) & (u[:, 1] <= 0.3))
    assert abs(freq_out - bg) <= 3 * math.sqrt(bg * (1 - bg) / N_BIG)


def test_patchwork_accepts_per_draw_parameters():
    rng = np.random.default_rng(9)
    a_in = np.linspace(-1, 1, 1000)
    u = sample_patchwork(a_in, 0.5, rng)
    assert u.shape == (1000, 2)
    assert np.all((u > 0) & (u < 1))


def test_scenario_round_trip(tmp_path):
    specs = standard_scenarios()
    assert [s.name for s in specs] == ["gauss", "frank", "patch", "constant", "mid_break", "offset"]
    path = tmp_path / "scen.json"
    path.write_text(json.dumps({"scenarios": [s.to_dict() for s in specs]}))
    assert load_scenarios(path) == specs
    assert ScenarioSpec.from_dict(json.loads(json.dumps(specs[3].to_dict()))) == specs[3]


def test_scenario_validation_and_coefficients():
    with pytest.raises(ValueError):
        ScenarioSpec(state_coeff=1.0)
    with pytest.raises(ValueError):
        ScenarioSpec(null_copula="gaussian", alternative="constant")
    with pytest.raises(ValueError):
        ScenarioSpec(null_copula="clayton")
    off = standard_scenarios()[5]
    b = off.betas(11)
    assert list(b[:5]) == [-0.5] * 5 and list(b[5:]) == [0.5] * 6
    assert set(standard_scenarios()[4].betas(10)[:5]) == {0.0}
    assert set(standard_scenarios()[3].betas(10)) == {0.5}


def test_pre_break_half_matches_null_copula():
    n = 2 * N_BIG
    rng = np.random.default_rng(10)
    spec = replace(standard_scenarios()[4], n=n)
    z = simulate_state(n, 0.85, rng)
    u = sample_scenario_copula(spec, z, rng)[: n // 2]
    null = sample_patchwork(spec.alpha_in, spec.alpha_out, rng, n // 2)
    a = np.sum((u[:, 0] <= 0.25) & (u[:, 1] <= 0.25))
    b = np.sum((null[:, 0] <= 0.25) & (null[:, 1] <= 0.25))
    table = [[a, n // 2 - a], [b, n // 2 - b]]
    assert stats.chi2_contingency(table)[1] > 0.01
    # the post-break half carries state-dependent patch correlation, visibly different
    post = sample_scenario_copula(spec, z, rng)[n // 2:]
    high = z[n // 2:] > 1
    inner = (post[:, 0] <= 0.25) & (post[:, 1] <= 0.25)
    assert inner[high].mean() > inner[~high].mean()


def test_simulated_margins_recover_parameters():
    spec = replace(standard_scenarios()[0], n=5000)
    y1, y2, z = simulate_scenario(spec, np.random.default_rng(11))
    fit = fit_marginal(y1, z, MarginalModelSpec(gamma_z=0.0))
    p = fit.as_dict()
    se = dict(zip(fit.names, fit.std_errors(y1, z)))
    truth = {"mu": 0.0, "phi": 0.1, "gamma_z": 1.5, "omega": 0.01, "alpha": 0.1, "beta": 0.85}
    for k, v in truth.items():
        assert abs(p[k] - v) <= 4 * se[k], (k, p[k], se[k])


def test_monte_carlo_is_deterministic_and_thread_independent():
    scen = [replace(s, n=300, burn=100) for s in standard_scenarios() if s.name in ("gauss", "offset")]
    cfg = MCConfig(B=9, seed=5)
    a = run_mc_experiment(scen, [300], 2, cfg, min_reps=1)
    b = run_mc_experiment(scen, [300], 2, replace(cfg, threads=3), min_reps=1)
    assert a.records == b.records
    assert a.to_csv() == b.to_csv()
    lines = a.to_csv().splitlines()
    assert lines[0] == "region,statistic,n,scenario,rejection_rate,reps,failures"
    assert len(lines) == 1 + 2 * 3 * 2
    assert 0.0 <= a.rate("offset", "lower", "Delta1") <= 1.0
    with pytest.raises(ValueError):
        run_mc_experiment(scen, [300], 2, cfg)
