"""Property-based checks on small random measures."""

import math

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import brute_c1, brute_mass
from osclab.czo import (
    CzOperator,
    apply_operator,
    apply_tb,
    apply_tb_direct,
    make_kernel,
    operator_scale,
    tb_consistency_sweep,
)
from osclab.geometry import Ball, doubling_search, enumerate_ball_family, k_constant
from osclab.lipschitz import OscillationProfile, full_report, rbmo_norm
from osclab.measure import DiscreteMeasure, linear_scan, mass_in_ball, neighbors_within

SETTINGS = settings(max_examples=40, deadline=None)


@st.composite
def measures(draw, d=None, min_size=2, max_size=9):
    d = draw(st.integers(1, 2)) if d is None else d
    n = draw(st.integers(min_size, max_size))
    # lattice coordinates keep distances well separated
    cells = draw(st.lists(st.tuples(*[st.integers(0, 40)] * d), min_size=n, max_size=n,
                          unique=True))
    pts = np.asarray(cells, dtype=float) / 8.0
    w = draw(st.lists(st.floats(0.1, 3.0), min_size=n, max_size=n))
    return DiscreteMeasure(pts, w)


def values(draw, size):
    return np.asarray(draw(st.lists(st.floats(-5, 5), min_size=size, max_size=size)))


@SETTINGS
@given(measures(), st.floats(0.0, 8.0), st.floats(0.0, 4.0), st.data())
def test_mass_monotone_and_exact(m, r, dr, data):
    c = data.draw(st.integers(0, m.size - 1))
    np.testing.assert_array_equal(neighbors_within(m, c, r), linear_scan(m, c, r))
    a = mass_in_ball(m, Ball(c, r)) if r > 0 else m.weights[c]
    b = mass_in_ball(m, Ball(c, r + dr)) if r + dr > 0 else m.weights[c]
    assert a <= b
    if r > 0:
        assert a == brute_mass(m, c, r)


@SETTINGS
@given(measures(max_size=7), st.sampled_from([0.3, 0.5, 1.0]), st.data())
def test_c1_equals_bruteforce(m, alpha, data):
    f = values(data.draw, m.size)
    osc, pair = brute_c1(m, f, alpha)
    rep = full_report(m, f, alpha, "exhaustive")
    assert math.isclose(rep.c1_osc, osc, rel_tol=1e-9, abs_tol=1e-12)
    assert math.isclose(rep.c1_pair, pair, rel_tol=1e-9, abs_tol=1e-12)


@SETTINGS
@given(measures(), st.floats(0.05, 1.0), st.sampled_from([1.5, 2.0, 3.0]), st.data())
def test_chain_holds(m, alpha, rho, data):
    f = values(data.draw, m.size)
    rep = full_report(m, f, alpha, "exhaustive", rho=rho)
    assert all(c["ok"] for c in rep.chain_checks)


@SETTINGS
@given(measures(), st.floats(-4, 4), st.floats(-10, 10), st.data())
def test_scaling_and_shift(m, lam, shift, data):
    f = values(data.draw, m.size)
    a = full_report(m, f, 0.5, "exhaustive")
    b = full_report(m, lam * f + shift, 0.5, "exhaustive")
    tol = 1e-9 * max(1.0, a.c2 * abs(lam)) + 1e-9 * abs(shift)
    assert abs(b.c2 - abs(lam) * a.c2) <= tol
    assert abs(b.c1_osc - abs(lam) * a.c1_osc) <= tol
    assert abs(b.c1_pair - abs(lam) * a.c1_pair) <= tol


@SETTINGS
@given(measures(), st.data())
def test_power_means_monotone(m, data):
    f = values(data.draw, m.size)
    prof = OscillationProfile(m, f, "exhaustive")
    l1, l2, li = prof.lp[1], prof.lp[2], prof.lp[math.inf]
    assert np.all(l1 <= l2 * (1 + 1e-9) + 1e-12)
    assert np.all(l2 <= li * (1 + 1e-9) + 1e-12)


@SETTINGS
@given(measures(), st.data())
def test_rbmo_bounds(m, data):
    f = values(data.draw, m.size)
    assert rbmo_norm(m, f, 1, "exhaustive") <= 2 * np.abs(f).max() + 1e-12
    assert rbmo_norm(m, np.full(m.size, f[0]), 1, "exhaustive") == 0.0


@SETTINGS
@given(measures(d=1, min_size=3), st.data())
def test_tb_identities_cauchy(m, data):
    op = CzOperator(make_kernel("cauchy"), m)
    f = values(data.draw, m.size)
    c = data.draw(st.integers(0, m.size - 1))
    r = data.draw(st.floats(0.1, 3.0))
    _, fast = apply_tb(op, f, Ball(c, r))
    _, slow = apply_tb_direct(op, f, Ball(c, r))
    scale = operator_scale(op, f)
    assert np.all(np.abs(fast - slow) <= 1e-12 * max(scale, 1e-300) + 1e-300)
    dev, sc, _, _ = tb_consistency_sweep(op, f, enumerate_ball_family(m))
    assert dev <= 1e-9 * sc


@SETTINGS
@given(measures(d=2, min_size=3), st.data())
def test_riesz_skew_adjoint(m, data):
    op = CzOperator(make_kernel("riesz_component(1)"), m)
    f, g = values(data.draw, m.size), values(data.draw, m.size)
    lhs = float(np.sum(m.weights * f * apply_operator(op, g)))
    rhs = -float(np.sum(m.weights * g * apply_operator(op, f)))
    big = float(np.sum(np.abs(m.weights[:, None] * f[:, None] * op.matrix * g[None, :])))
    assert abs(lhs - rhs) <= 1e-9 * max(big, 1e-300)


@SETTINGS
@given(measures(), st.floats(1.1, 3.0), st.floats(0.0, 3.0), st.data())
def test_doubling_monotone_in_beta(m, beta, extra, data):
    c = data.draw(st.integers(0, m.size - 1))
    lo = set(doubling_search(m, c, beta, 4.0, 6).radii)
    hi = set(doubling_search(m, c, beta + extra, 4.0, 6).radii)
    assert lo <= hi


@SETTINGS
@given(measures(), st.floats(0.1, 2.0), st.floats(1.0, 8.0), st.floats(1.0, 2.0), st.data())
def test_k_constant_monotone(m, rb, grow, more, data):
    c = data.draw(st.integers(0, m.size - 1))
    inner = Ball(c, rb)
    k1 = k_constant(m, inner, Ball(c, rb * grow), 1)
    k2 = k_constant(m, inner, Ball(c, rb * grow * more), 1)
    assert 1.0 <= k1 <= k2
    if grow <= 2:      # one dilation: K = 1 + mu(2B) / (2 r_B)
        assert k1 <= 1 + m.total_mass / (2 * rb) * (1 + 1e-12)
