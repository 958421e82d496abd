import math

import numpy as np
import pytest

from conftest import brute_balls, brute_c1, brute_c2, brute_mean, brute_rbmo
from osclab.errors import ChainViolationError, ValidationError
from osclab.geometry import Ball
from osclab.lipschitz import (
    OscillationProfile,
    SampledFunction,
    ball_mean,
    c2_seminorm,
    full_report,
    oscillation_I,
    oscillation_III,
    rbmo_norm,
    rbmo_report,
)
from osclab.measure import DiscreteMeasure, generate_measure


@pytest.fixture
def two():
    return DiscreteMeasure([[0.0], [1.0]], [0.5, 0.5])


def test_ball_mean_examples(line5):
    f = np.arange(5.0)
    assert ball_mean(line5, np.full(5, 3.25), Ball(1, 2.0)) == 3.25
    assert ball_mean(line5, f, Ball(3, 0.4)) == 3.0
    assert ball_mean(line5, f, Ball(2, 1.5)) == 2.0


def test_sampled_function_alignment(line5):
    with pytest.raises(ValidationError):
        SampledFunction([1.0, 2.0]).check(line5)
    with pytest.raises(ValidationError):
        ball_mean(line5, [1.0, 2.0], Ball(0, 1.0))
    with pytest.raises(ValidationError):
        ball_mean(line5, [1, 2, math.nan, 4, 5], Ball(0, 1.0))


def test_c2_examples():
    g = generate_measure("grid:n=101")
    x = g.points[:, 0]
    assert c2_seminorm(g, np.full(101, 2.0), 0.5)[0] == 0.0
    assert c2_seminorm(g, x, 1.0)[0] == pytest.approx(1.0, rel=1e-12)
    val, (i, j) = c2_seminorm(g, x ** 2, 1.0)
    assert val == pytest.approx(1.99, rel=1e-12)
    assert {round(x[i], 12), round(x[j], 12)} == {0.99, 1.0}


def test_c2_matches_bruteforce():
    m = generate_measure("random:n=30,d=2,seed=2")
    f = np.random.default_rng(0).random(30)
    for a in (0.3, 1.0):
        assert c2_seminorm(m, f, a)[0] == pytest.approx(brute_c2(m, f, a), rel=1e-13)
    with pytest.raises(ValidationError):
        c2_seminorm(m, f, 0.0)


def test_two_atom_hand_values(two):
    f = [0.0, 1.0]
    r1 = oscillation_I(two, f, 1.0, "exhaustive")
    assert r1.osc == 0.5
    r2 = oscillation_III(two, f, 1.0, 2, "exhaustive")
    assert r2.osc == 0.5
    assert r1.pair == r2.pair == 0.0


def test_constant_gives_zeros(line5):
    f = np.full(5, 7.0)
    for p in (1, 2, math.inf):
        r = oscillation_III(line5, f, 0.5, p, "exhaustive")
        assert (r.osc, r.pair) == (0.0, 0.0)
    rep = full_report(line5, f, 0.5, "exhaustive")
    assert rep.c1 == rep.c2 == 0.0 and all(v.value == 0.0 for v in rep.cp.values())
    assert rbmo_norm(line5, f, 1, "exhaustive") == 0.0


def test_linear_on_grid_chain():
    g = generate_measure("grid:n=41")
    rep = full_report(g, g.points[:, 0], 1.0, "exhaustive")
    assert rep.c2 == pytest.approx(1.0, rel=1e-12)
    # the jump is exactly 1 for B(0, r) inside B(r, 2r)
    assert 0 < rep.c1_osc <= 1 + 1e-9 and 0 < rep.c1_pair <= 1 + 1e-9
    for r in rep.cp.values():
        assert 0 < r.value <= 4


@pytest.mark.parametrize("spec", ["dust:level=2", "random:n=10,d=2,seed=9"])
@pytest.mark.parametrize("alpha", [0.3, 1.0])
def test_c1_matches_bruteforce(spec, alpha):
    m = generate_measure(spec)
    f = np.random.default_rng(5).random(m.size)
    osc, pair = brute_c1(m, f, alpha)
    r = oscillation_I(m, f, alpha, "exhaustive")
    assert r.osc == pytest.approx(osc, rel=1e-12)
    assert r.pair == pytest.approx(pair, rel=1e-12)


def test_cp_matches_bruteforce_p2_and_inf():
    m = generate_measure("dust:level=2")
    f = np.random.default_rng(1).random(m.size)
    best2 = bestinf = 0.0
    for c, r in brute_balls(m):
        mb = brute_mean(m, f, c, r)
        idx = [j for j in range(m.size)
               if np.linalg.norm(m.points[j] - m.points[c]) <= r * (1 + 1e-9)]
        w = m.weights[idx]
        dev = np.abs(f[idx] - mb)
        best2 = max(best2, math.sqrt(math.fsum(w * dev ** 2) / math.fsum(w)) / r ** 0.5)
        bestinf = max(bestinf, dev.max() / r ** 0.5)
    assert oscillation_III(m, f, 0.5, 2, "exhaustive").osc == pytest.approx(best2, rel=1e-12)
    assert oscillation_III(m, f, 0.5, math.inf, "exhaustive").osc == pytest.approx(
        bestinf, rel=1e-12)


def test_witnesses_attain_values():
    m = generate_measure("dust:level=2")
    f = np.random.default_rng(3).random(m.size)
    r = oscillation_I(m, f, 0.5, "exhaustive")
    b, u = r.pair_witness.inner, r.pair_witness.outer
    jump = abs(ball_mean(m, f, b) - ball_mean(m, f, u)) / b.radius ** 0.5
    assert jump == pytest.approx(r.pair, rel=1e-12)


def test_pair_equal_across_p_and_chain_on_dust():
    m = generate_measure("dust:level=3")
    f = np.random.default_rng(7).random(m.size)
    rep = full_report(m, f, 0.5, "exhaustive")
    assert all(c["ok"] for c in rep.chain_checks)
    assert {r.pair for r in rep.cp.values()} == {rep.c1_pair}


def test_scaling_covariance():
    m = generate_measure("random:n=30,d=2,seed=4")
    f = np.random.default_rng(2).random(m.size)
    a = full_report(m, f, 0.5, "exhaustive")
    b = full_report(m, -3.0 * f + 11.0, 0.5, "exhaustive")
    assert b.c2 == pytest.approx(3 * a.c2, rel=1e-12)
    assert b.c1_osc == pytest.approx(3 * a.c1_osc, rel=1e-9)
    assert b.c1_pair == pytest.approx(3 * a.c1_pair, rel=1e-9)


def test_rho_changes_family_not_validity(line5):
    f = np.arange(5.0) ** 2
    for rho in (1.5, 2.0, 3.0):
        rep = full_report(line5, f, 1.0, "exhaustive", rho=rho)
        assert all(c["ok"] for c in rep.chain_checks)
    with pytest.raises(ValidationError):
        OscillationProfile(line5, f, "exhaustive", rho=1.0)


def test_chain_violation_raises(line5):
    prof = OscillationProfile(line5, np.arange(5.0), "exhaustive")
    prof.lp[1] = prof.lp[1] + 10.0          # corrupt the p = 1 oscillation
    with pytest.raises(ChainViolationError) as info:
        full_report(line5, np.arange(5.0), 1.0, "exhaustive", profile=prof)
    assert info.value.violations


def test_report_alpha_validation(line5):
    with pytest.raises(ValidationError):
        full_report(line5, np.arange(5.0), 1.5, "exhaustive")


def test_report_to_dict_has_traceability(line5):
    d = full_report(line5, np.arange(5.0), 1.0, "exhaustive").to_dict()
    assert d["family"] == "exhaustive"
    assert d["scale_range"] == [1.0, 4.0]
    assert set(d["cp"]) == {"1", "2", "inf"}


# ----------------------------------------------------------------- RBMO

@pytest.mark.parametrize("f", [[0, 0, 0, 0, 1], [0, 1, 4, 9, 16], [3, -1, 2, 0, 5]])
def test_rbmo_bruteforce(line5, f):
    f = np.asarray(f, dtype=float)
    assert rbmo_norm(line5, f, 1, "exhaustive") == pytest.approx(
        brute_rbmo(line5, f, 1), rel=1e-12, abs=1e-15)


def test_rbmo_bounded_by_range():
    m = generate_measure("dust:level=2")
    f = np.random.default_rng(4).uniform(-1, 1, m.size)
    rep = rbmo_report(m, f, 1, "exhaustive")
    assert rep.value <= 2 * np.abs(f).max()
    assert rep.jump_k >= 1
