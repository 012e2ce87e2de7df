import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from contactlo.geometry import Grid, GridFunction, sup_distance
from contactlo.evolution import (
    DiscountedEngine,
    EvolveConfigError,
    EvolveSettings,
    SemiLagrangianEngine,
    caratheodory_step,
    contraction_audit,
    lax_oleinik_discounted,
    lax_oleinik_general,
    make_engine,
    make_trace,
    minplus_monotone,
    minplus_naive,
    semigroup_defect,
)
from contactlo.kernel import build_kernel_table
from contactlo.lagrangians import (
    CustomKinetic,
    LagrangianModel,
    LinearCoupling,
    QuadraticKinetic,
    make_model,
)

from conftest import quad


def sine(grid, amp=0.2):
    return grid.sample(lambda x: amp * np.sin(2 * np.pi * x[:, 0]))


def test_constant_evolves_by_exponential():
    g = Grid(1, 64)
    out = lax_oleinik_discounted(g.constant(0.3), 2.0, build_kernel_table(2.0, quad(0.5), g))
    np.testing.assert_allclose(out.values, 0.3 * math.e, rtol=0, atol=1e-14)
    assert 0.3 * math.e == pytest.approx(0.815485, abs=1e-6)
    zero = lax_oleinik_discounted(g.constant(0.0), 1.5, build_kernel_table(1.5, quad(0.5), g))
    assert np.all(zero.values == 0.0)


def test_well_example():
    g = Grid(1, 80)
    vals = np.full(80, 10.0)
    vals[0] = 0.0
    tab = build_kernel_table(1.0, quad(1.0), g)
    out = lax_oleinik_discounted(GridFunction(g, vals), 1.0, tab)
    assert out.values[16] == pytest.approx(0.031639, abs=1e-6)
    np.testing.assert_allclose(out.values, tab.rho, atol=1e-15)


@given(st.integers(0, 2**31), st.floats(0.5, 4.0), st.sampled_from([-0.5, 0.25, 1.0]))
def test_minplus_paths_agree(seed, t, lam):
    g = Grid(1, 48)
    vals = np.random.default_rng(seed).uniform(-1, 1, size=(3, 48))
    tab = build_kernel_table(t, quad(lam), g, K0=1.0)
    scale = math.exp(lam * t)
    np.testing.assert_array_equal(minplus_naive(vals, scale, tab), minplus_monotone(vals, scale, tab))


def test_semilag_examples():
    g = Grid(1, 128)
    s = EvolveSettings(tau=0.05)
    out = lax_oleinik_general(g.constant(0.3), 2.0, quad(0.5), s)
    assert np.max(np.abs(out.values - 0.815485)) <= 5e-3
    classical = LagrangianModel(QuadraticKinetic(), LinearCoupling(0.0))
    out = lax_oleinik_general(g.constant(0.3), 1.0, classical, s)
    np.testing.assert_allclose(out.values, 0.3, atol=1e-14)
    nl = make_model("nonlinear_u", **{"lambda": 0.5, "amp": 0.1})
    out = lax_oleinik_general(g.constant(0.0), 1.0, nl, s)
    assert np.all(out.values == 0.0)


def test_semilag_rejects_tiny_search_radius():
    with pytest.raises(EvolveConfigError):
        SemiLagrangianEngine(quad(0.5), Grid(1, 64), EvolveSettings(tau=0.01, v_max=0.5))
    with pytest.raises(EvolveConfigError):
        EvolveSettings(n_sub=2)
    with pytest.raises(EvolveConfigError):
        make_engine("spectral", quad(0.5), Grid(1, 8))


def test_caratheodory_examples():
    zero_l = LagrangianModel(CustomKinetic(fn=lambda v: 0.0 * v, grad_fn=lambda v: 0.0 * v), LinearCoupling(0.5))
    one_l = LagrangianModel(CustomKinetic(fn=lambda v: 1.0 + 0.0 * v, grad_fn=lambda v: 0.0 * v), LinearCoupling(1.0))
    assert caratheodory_step(1.0, ([0.1], [0.1], 1.0), zero_l, 16) == pytest.approx(math.exp(0.5), abs=1e-8)
    assert caratheodory_step(0.0, ([0.0], [0.0], 1.0), quad(0.5)) == 0.0
    # RK4 error is O(h^4); 64 sub-steps bring this case below 1e-8
    assert caratheodory_step(0.0, ([0.2], [0.2], 1.0), one_l, 64) == pytest.approx(math.e - 1, abs=1e-8)


def test_trace_constant_and_shift():
    g = Grid(1, 64)
    eng = DiscountedEngine(quad(0.5), g)
    tr = make_trace(g.constant(0.3), 1.0, 3, eng)
    for k, f in enumerate(tr.frames, start=1):
        np.testing.assert_allclose(f.values, 0.3 * math.exp(0.5 * k), atol=1e-14)
    phi = sine(g)
    base = make_trace(phi, 1.0, 3, eng).array()
    moved = make_trace(phi + 0.01, 1.0, 3, eng).array()
    for k in range(3):
        np.testing.assert_allclose(moved[k] - base[k], 0.01 * math.exp(0.5 * (k + 1)), atol=1e-14)


def test_contraction_examples():
    g = Grid(1, 64)
    phi = sine(g)
    assert contraction_audit(phi, phi + 0.05, 2.0, DiscountedEngine(quad(0.5), g)) == pytest.approx(math.e, rel=1e-12)
    assert contraction_audit(phi, phi + 0.05, 2.0, DiscountedEngine(quad(-0.5), g)) == pytest.approx(math.exp(-1), rel=1e-12)
    with pytest.raises(ValueError):
        contraction_audit(phi, phi, 1.0, DiscountedEngine(quad(0.5), g))


@given(st.integers(0, 2**31), st.sampled_from([-0.5, 0.5]))
def test_contraction_envelope_random(seed, lam):
    g = Grid(1, 32)
    rng = np.random.default_rng(seed)
    phi, psi = (GridFunction(g, rng.uniform(-0.3, 0.3, 32)) for _ in range(2))
    ratio = contraction_audit(phi, psi, 1.0, DiscountedEngine(quad(lam), g))
    assert ratio <= math.exp(0.5) * (1 + 1e-6)
    if lam < 0:
        assert ratio <= 1 + 1e-6


@given(st.integers(0, 2**31))
def test_monotone_in_initial_datum(seed):
    g = Grid(1, 32)
    rng = np.random.default_rng(seed)
    phi = GridFunction(g, rng.uniform(-0.3, 0.3, 32))
    psi = GridFunction(g, phi.values + rng.uniform(0, 0.1, 32))
    eng = DiscountedEngine(quad(0.5), g)
    assert np.all(eng.evolve(psi, 1.0).values >= eng.evolve(phi, 1.0).values)


def test_semigroup_defect_constants_and_refinement():
    g = Grid(1, 64)
    assert semigroup_defect(g.constant(0.2), 1.0, 1.0, DiscountedEngine(quad(0.5), g)) == 0.0
    defects = []
    for N in (64, 128, 256):
        gn = Grid(1, N)
        defects.append(semigroup_defect(sine(gn), 1.0, 1.0, DiscountedEngine(quad(0.5), gn)))
    assert defects[0] > defects[1] > defects[2]
    assert defects[2] <= 2e-3
    order = np.polyfit(np.log([1 / 64, 1 / 128, 1 / 256]), np.log(defects), 1)[0]
    assert order >= 1


def test_engine_agreement_under_refinement():
    # node sources quantise velocities in units of h/tau, so both must shrink
    errs = []
    for tau, N in ((0.2, 25), (0.1, 100), (0.05, 400)):
        g = Grid(1, N)
        phi = sine(g)
        exact = DiscountedEngine(quad(0.5), g).evolve(phi, 1.0)
        approx = SemiLagrangianEngine(quad(0.5), g, EvolveSettings(tau=tau)).evolve(phi, 1.0)
        errs.append(sup_distance(exact, approx) / (tau + 1.0 / N))
    assert errs[0] > errs[1] > errs[2]
    assert max(errs) <= 0.05


def test_engine_grid_mismatch():
    eng = DiscountedEngine(quad(0.5), Grid(1, 16))
    with pytest.raises(Exception):
        eng.evolve(Grid(1, 32).constant(0.0), 1.0)
