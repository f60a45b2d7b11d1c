from dataclasses import replace

import numpy as np
import pytest

from deppred.bootstrap import BootstrapConfig, bootstrap_test
from deppred.breaks import BreakError, _child_seed, locate_break, sequential_split, sidak_levels
from deppred.dgp import standard_scenarios, simulate_scenario
from deppred.pipeline import PipelineConfig, evaluate
from deppred.score import DiagonalGrid, RegionStatistics, default_s_grid, detectors


def stats_from_path(beta_path, s_grid, n):
    """Region statistics for a hand-built score path shared by all grid points."""
    grid = DiagonalGrid.lower()
    n_u = grid.q.size
    paths = np.zeros((n_u, s_grid.size, 2))
    paths[:, :, 1] = beta_path
    d1, d2, end, bnorm = detectors(paths, s_grid)
    return RegionStatistics(
        grid=grid, alpha_hat=np.zeros(n_u), delta1=d1, delta2=d2, endpoint=end,
        s_grid=s_grid, bridge_norm=bnorm, boundary=np.zeros(n_u, bool), n=n,
    )


def test_sidak_schedule():
    full, cusum, sub = sidak_levels(0.10)
    assert full == 0.10
    assert cusum == pytest.approx(0.051, abs=5e-4)
    assert sub == pytest.approx(0.026, abs=5e-4)
    assert (1 - cusum) ** 2 == pytest.approx(0.9)
    assert (1 - sub) ** 4 == pytest.approx(0.9)
    with pytest.raises(ValueError):
        sidak_levels(0.5)


@pytest.mark.parametrize("n", [200, 201, 999])
def test_single_jump_is_dated_at_the_jump(n):
    s = default_s_grid(n)
    path = np.where(s >= 0.5, 1.0, 0.0)
    loc = locate_break(stats_from_path(path, s, n), dates=[f"d{i}" for i in range(n)])
    assert abs(loc.s - 0.5) <= 1.0 / n
    assert loc.index == int(np.floor(loc.s * n + 1e-9))
    assert loc.date == f"d{loc.index - 1}"


def test_flat_bridge_cannot_be_dated():
    s = default_s_grid(100)
    with pytest.raises(BreakError):
        locate_break(stats_from_path(3.0 * s, s, 100))


@pytest.fixture(scope="module")
def strong_break():
    spec = replace(standard_scenarios()[4], beta_magnitude=2.0, n=1200, burn=300)
    return simulate_scenario(spec, np.random.default_rng(1))


@pytest.fixture(scope="module")
def split_setup(strong_break):
    y1, y2, z = strong_break
    cfg = PipelineConfig(regions=("lower",))
    bcfg = BootstrapConfig(B=39, seed=5)
    tree = sequential_split(y1, y2, z, "lower", cfg, bcfg, 0.10, n_min=250, dates=list(range(y1.size)))
    return cfg, bcfg, tree


def test_tree_is_well_formed(split_setup, strong_break):
    _, _, tree = split_setup
    levels = sidak_levels(0.10)
    assert tree.level_used == levels[0]
    assert tree.rejected and tree.cusum_pvalue <= levels[1]
    assert len(tree.children) == 2
    left, right = tree.children
    assert tree.s_lo < tree.break_s < tree.s_hi
    assert left.s_lo == tree.s_lo and left.s_hi == tree.break_s
    assert right.s_lo == tree.break_s and right.s_hi == tree.s_hi
    assert left.start == 0 and left.stop == right.start and right.stop == strong_break[0].size
    assert left.level_used == right.level_used == levels[2]
    assert all(not c.children for c in tree.children)
    d = tree.to_dict()
    assert d["children"][0]["span"] == [0.0, tree.break_s]


def test_children_are_self_contained(split_setup, strong_break):
    cfg, bcfg, tree = split_setup
    y1, y2, z = strong_break
    for k, node in enumerate(tree.children):
        if node.status != "tested":
            continue
        a, b = node.start, node.stop
        ev = evaluate(y1[a:b], y2[a:b], z[a:b], cfg)
        boot = bootstrap_test(y1[a:b], y2[a:b], z[a:b], cfg, replace(bcfg, seed=_child_seed(bcfg.seed, k + 1)), ev)
        assert node.t_stat == ev.stats["lower"].t_stat
        assert node.t_pvalue == boot["lower"].p_t


def test_short_spans_are_not_tested(strong_break):
    y1, y2, z = strong_break
    cfg = PipelineConfig(regions=("lower",))
    root = sequential_split(y1[:200], y2[:200], z[:200], "lower", cfg, BootstrapConfig(B=9), n_min=250)
    assert root.status == "too_short" and root.t_pvalue is None and not root.children


def test_short_child_is_marked(split_setup, strong_break):
    cfg, bcfg, tree = split_setup
    y1, y2, z = strong_break
    big = max(c.n for c in tree.children) + 1
    t2 = sequential_split(y1, y2, z, "lower", cfg, bcfg, 0.10, n_min=big)
    assert t2.t_pvalue == tree.t_pvalue
    assert [c.status for c in t2.children] == ["too_short", "too_short"]
    assert all(c.t_pvalue is None for c in t2.children)


def test_threads_do_not_change_the_tree(split_setup, strong_break):
    cfg, bcfg, tree = split_setup
    y1, y2, z = strong_break
    t2 = sequential_split(y1, y2, z, "lower", cfg, bcfg, 0.10, n_min=250, dates=list(range(y1.size)), threads=2)
    assert t2.to_dict() == tree.to_dict()
