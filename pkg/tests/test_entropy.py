import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from contactlo.entropy import (
    Family,
    FamilyError,
    ball_contains,
    build_separated_family,
    cover_count_bound,
    evolved_spacings,
    exact_cover_count,
    exact_separated_count,
    greedy_cover_count,
    greedy_separated_count,
    level_set,
    lower_bound_count,
    regular_net,
    audit_net,
    shift_delta_step,
    shift_family,
    slope_fit,
    truncated_inequality_audit,
    verify_cover,
    fourier_family,
)
from contactlo.evolution import DiscountedEngine, EvolveSettings, SemiLagrangianEngine, make_trace
from contactlo.geometry import Grid
from contactlo.lagrangians import make_model
from contactlo.rng import stream

from conftest import quad

G = Grid(1, 64)
ENG = DiscountedEngine(quad(0.5), G)


def sine(grid=G, amp=0.2):
    return grid.sample(lambda x: amp * np.sin(2 * np.pi * x[:, 0]))


@pytest.fixture(scope="module")
def dense_shift():
    step = shift_delta_step(0.1, 0.5, 2.0, 1.0)
    return shift_family(sine(), 1.0, step).materialize(ENG, 1.0, 2)


def test_ball_examples():
    c = make_trace(sine(), 1.0, 3, ENG)
    near = make_trace(sine() + 0.01, 1.0, 3, ENG)
    far = make_trace(sine() + 0.05, 1.0, 3, ENG)
    assert ball_contains(c, c, 0.1, (1, 3))
    assert ball_contains(c, near, 0.1, (1, 3))
    assert not ball_contains(c, far, 0.1, (1, 3))
    assert ball_contains(c, far, 0.1, (1, 1))


def test_shift_family_layout():
    fam = shift_family(sine(), 1.0, 0.3)
    assert fam.descriptors == (0.0, 0.3, 0.6, 0.8999999999999999, 1.0) or fam.descriptors[-1] == 1.0
    assert len(fam) == 5
    with pytest.raises(FamilyError):
        shift_family(sine(), 1.0, 0.0)
    assert shift_delta_step(0.1, 0.5, 2.0, 1.0) == 0.001


def test_greedy_cover_shift_family(dense_shift):
    res = greedy_cover_count(dense_shift, 0.1, (1, 2))
    assert 13 <= res.count <= 15
    assert set(res.witness_map()) == set(range(len(dense_shift)))


def test_greedy_separated_shift_family(dense_shift):
    # separated means "outside the open ball", so spacing eps e^{-lam t} in the shift
    res = greedy_separated_count(dense_shift, 0.1, (1, 2))
    assert abs(res.count - (math.floor(math.e / 0.1) + 1)) <= 1


def test_trivial_counts():
    one = shift_family(sine(), 0.0, 0.1).materialize(ENG, 1.0, 2)
    assert greedy_cover_count(one, 0.1, (1, 2)).count == 1
    assert greedy_separated_count(one, 0.1, (1, 2)).count == 1
    assert exact_cover_count(one, 0.1, (1, 2)).count == 1
    fam = shift_family(sine(), 0.5, 0.05).materialize(ENG, 1.0, 2)
    assert greedy_cover_count(fam, 100.0, (1, 2)).count == 1
    assert greedy_separated_count(fam, 1e-9, (1, 2)).count == len(fam)


def test_exact_examples():
    fam = shift_family(sine(), 2.0, 1.0).materialize(ENG, 1.0, 2)
    assert exact_cover_count(fam, 0.1, (1, 2)).count == 3
    tight = shift_family(sine(), 0.02, 0.005).materialize(ENG, 1.0, 1)
    assert exact_cover_count(tight, 0.1, (1, 1)).count == 1
    big = shift_family(sine(), 1.0, 0.04).materialize(ENG, 1.0, 1)
    with pytest.raises(FamilyError):
        exact_cover_count(big, 0.1, (1, 1))


def random_family(seed, M=10, n=3):
    return fourier_family(Grid(1, 32), M, 0.5, stream(seed, "test")).materialize(DiscountedEngine(quad(0.5), Grid(1, 32)), 1.0, n)


@given(st.integers(0, 2**20), st.floats(0.05, 0.6))
def test_greedy_dominates_exact_and_duality(seed, eps):
    fam = random_family(seed)
    lo = exact_cover_count(fam, eps, (1, 3)).count
    sep = exact_separated_count(fam, eps, (1, 3)).count
    assert greedy_cover_count(fam, eps, (1, 3)).count >= lo
    assert greedy_separated_count(fam, eps, (1, 3)).count <= sep
    assert lo <= sep <= exact_cover_count(fam, eps / 2, (1, 3)).count


@given(st.integers(0, 2**20), st.floats(0.02, 0.5), st.integers(1, 3), st.integers(0, 2))
def test_truncated_inequalities_random(seed, eps, k0, extra):
    rep = truncated_inequality_audit(random_family(seed, n=k0 + extra), k0, k0 + extra, eps)
    assert rep.holds


def test_truncated_inequalities_examples():
    fam = shift_family(sine(), 0.45, 0.05).materialize(ENG, 1.0, 3)
    assert len(fam) == 10
    assert truncated_inequality_audit(fam, 1, 3, 0.05).holds
    one = fam.subset([0])
    rep = truncated_inequality_audit(one, 1, 3, 0.05)
    assert (rep.g_t, rep.g_t0, rep.g_t0_t, rep.g_t_2eps) == (1, 1, 1, 1)
    rep = truncated_inequality_audit(fam, 1, 3, 1e3)
    assert (rep.g_t, rep.g_t0, rep.g_t0_t, rep.g_t_2eps) == (1, 1, 1, 1)


def test_separated_family_spacing_exact():
    fam = build_separated_family(sine(), 0.1, 2.0, 0.5, 5)
    assert fam.descriptors[1] == pytest.approx(0.2 * math.exp(-1), abs=1e-15)
    assert 0.2 * math.exp(-1) == pytest.approx(0.073576, abs=1e-6)
    np.testing.assert_allclose(evolved_spacings(fam, 2.0, ENG), 0.2, atol=1e-10)
    with pytest.raises(FamilyError):
        build_separated_family(sine(), 0.1, 2.0, -0.5, 5)


def test_separated_family_nonlinear_coupling():
    g = Grid(1, 128)
    m = make_model("nonlinear_u", **{"lambda": 0.5, "amp": 0.1})
    fam = build_separated_family(sine(g), 0.1, 2.0, 0.4, 4)
    eng = SemiLagrangianEngine(m, g, EvolveSettings(tau=0.05))
    assert np.all(evolved_spacings(fam, 2.0, eng) >= 0.2 - 5e-3)


def test_lower_bound_count_examples():
    r = lower_bound_count(sine(), 1.0, 0.1, 2.0, 0.5)
    assert (r.members, r.displayed) == (14, 2)
    assert r.displayed_raw == pytest.approx(1.8394, abs=1e-4)
    assert lower_bound_count(sine(), 1.0, 0.1, 1e-12, 0.5).members == 6
    assert lower_bound_count(sine(), 0.01, 0.1, 2.0, 0.5).members == 1


def test_slope_fit_examples():
    ts = [2, 4, 6, 8]
    exact = slope_fit([(t, math.exp(0.5 * t)) for t in ts])
    assert not exact.degenerate
    assert exact.slope == pytest.approx(0.5, abs=1e-12)
    flat = slope_fit([(t, 7) for t in ts])
    assert flat.slope == 0 and flat.degenerate
    with pytest.raises(ValueError):
        slope_fit([(1, 2), (2, 3), (3, 4)])
    with pytest.raises(ValueError):
        slope_fit([(1, 0), (2, 3), (3, 4), (4, 5)])


def test_slope_fit_recovers_exact_rate():
    # counts must be integers, so use a rate that gives integer counts
    pts = [(t, 2**t) for t in (2, 4, 6, 8)]
    assert slope_fit(pts).slope == pytest.approx(math.log(2), abs=1e-12)


def test_cover_bound_arithmetic():
    assert cover_count_bound(1.0, 0.1, 2, 3, 0.5, 0.7) == pytest.approx((2 * math.e / 0.1 + 1) * 8 * 1000, rel=1e-12)
    assert cover_count_bound(1.0, 0.1, 2, 3, 0.5, 0.7) == pytest.approx(442925, abs=1)
    assert len(level_set(1.0, 0.1, 1, 0, 0.5, 0.7)) == math.ceil(0.7 / 0.1) + 2


def test_regular_net_is_exact():
    net = regular_net(0.1, Grid(1, 128))
    assert net.ok
    probe = audit_net(net.points, 0.1, Grid(1, 128))
    assert probe.covering_radius <= net.covering_radius + 1e-15
    net2 = regular_net(0.2, Grid(2, 32))
    assert net2.ok


def test_verify_cover_trivial_cases():
    fam = random_family(3)
    assert verify_cover(fam, fam, 1e-9, (1, 3)).ok
    bad = verify_cover(fam, fam.subset([0]), 0.0, (1, 3))
    assert not bad.ok
    assert bad.counterexample[1] == 0
