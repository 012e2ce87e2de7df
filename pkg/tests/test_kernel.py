import math

import numpy as np
import pytest
from hypothesis import example, given
from hypothesis import strategies as st

from contactlo.geometry import Grid
from contactlo.kernel import (
    KernelError,
    ResourceGuardError,
    build_kernel_table,
    kernel_action,
    kernel_brute_force,
    kernel_closed_form_quadratic,
    kernel_shooting,
    lipschitz_constants,
)
from contactlo.lagrangians import make_model

from conftest import quad

QUARTIC = make_model("quartic_discounted", **{"lambda": 0.5})


def test_closed_form_examples():
    want = math.e * 0.04 / (2 * (math.e - 1))
    assert kernel_closed_form_quadratic(1.0, 0.2, 1.0) == pytest.approx(want, abs=1e-15)
    assert want == pytest.approx(0.031639, abs=1e-6)
    assert kernel_closed_form_quadratic(0.5, 0.2, 0.0) == pytest.approx(0.04, abs=1e-15)
    for lam in (-1.0, 0.0, 0.7):
        assert kernel_closed_form_quadratic(2.0, 0.0, lam) == 0.0


def test_closed_form_continuous_at_zero_rate():
    a = kernel_closed_form_quadratic(1.0, 0.3, 1e-12)
    assert a == pytest.approx(0.045, rel=1e-9)


def test_nonpositive_time_rejected():
    with pytest.raises(KernelError):
        kernel_closed_form_quadratic(0.0, 0.1, 0.5)


def test_shooting_examples():
    assert kernel_shooting(1.0, 0.2, quad(1.0)) == pytest.approx(0.031639, abs=1e-6)
    assert abs(kernel_shooting(1.0, 0.2, quad(1.0)) - kernel_closed_form_quadratic(1.0, 0.2, 1.0)) <= 1e-10
    assert kernel_shooting(2.0, 0.0, quad(0.5)) == 0.0


@given(st.sampled_from([-0.5, 0.25, 0.5, 1.0]), st.floats(0.5, 4.0), st.floats(-0.5, 0.5))
@example(-0.5, 1.0, 5e-324)
def test_shooting_matches_closed_form(lam, t, delta):
    assert kernel_shooting(t, delta, quad(lam)) == pytest.approx(kernel_closed_form_quadratic(t, delta, lam), abs=1e-10)


@given(st.sampled_from(["quadratic_discounted", "quartic_discounted", "cosh_discounted"]), st.floats(1.0, 4.0), st.floats(-0.5, 0.5))
def test_scaling_identity(preset, t, delta):
    m = make_model(preset, **{"lambda": 0.5})
    assert kernel_shooting(t, delta, m) == pytest.approx(math.exp(0.5 * t) * kernel_action(t, delta, m), abs=1e-10)


def test_brute_force_examples():
    assert kernel_brute_force(1.0, 0.2, quad(1.0), 200, 101) == pytest.approx(0.031639, rel=1e-3)
    assert kernel_brute_force(1.0, 0.3, quad(0.0), 100, 101) == pytest.approx(0.045, rel=1e-3)
    assert kernel_brute_force(1.0, 0.0, QUARTIC, 50, 21) == pytest.approx(0.0, abs=1e-15)


def test_brute_force_window_and_path():
    res = kernel_brute_force(1.0, 0.2, quad(1.0), 100, 51, return_path=True)
    assert not res.touched_boundary_first_pass
    assert res.path[0, 0] == 0.0 and res.path[-1, 0] == pytest.approx(0.2)
    assert all(b <= a + 1e-15 for a, b in zip(res.history, res.history[1:]))


def test_resource_guard():
    with pytest.raises(ResourceGuardError):
        kernel_brute_force(1.0, [0.1, 0.1], quad(0.5), 200, 201)


@pytest.mark.slow
@pytest.mark.parametrize("lam", [0.25, 0.5, 1.0])
def test_quartic_shooting_agrees_with_dp(lam):
    m = make_model("quartic_discounted", **{"lambda": lam})
    for t in (1.0, 2.0, 4.0):
        for delta in (0.1, 0.3, 0.5):
            dp = kernel_brute_force(t, delta, m, 200, 201)
            assert abs(kernel_shooting(t, delta, m) - dp) / max(dp, 1e-6) <= 1e-3


def test_quartic_example_pinned():
    # pinned from the DP oracle at N=200, P=201
    assert kernel_shooting(1.0, 0.2, QUARTIC) == pytest.approx(5.1183e-4, rel=1e-4)


def test_lipschitz_constants_quadratic():
    want = 0.5 * 0.5 * math.exp(0.5) / (math.exp(0.5) - 1)
    lc = lipschitz_constants(quad(0.5), 8.0)
    assert lc.K0 == pytest.approx(want, rel=1e-9)
    assert lc.terminal_speed_monotone
    assert lipschitz_constants(quad(1e-9), 8.0).K0 == pytest.approx(0.5, rel=1e-6)


def test_kernel_table_examples():
    # 0.2 is a node of the 80-point grid (index 16) but not of the 64-point grid
    g = Grid(1, 80)
    tab = build_kernel_table(1.0, quad(1.0), g)
    assert tab.rho[16] == pytest.approx(0.031639, abs=1e-6)
    assert tab.rho[0] == 0.0
    idx = np.arange(1, 80)
    np.testing.assert_allclose(tab.rho[idx], tab.rho[80 - idx], rtol=0, atol=1e-15)
    assert np.all(np.diff(tab.rho[:41]) > 0)
    assert "displacement_index,rho" in tab.to_csv()
    assert tab.metadata()["K0"] == tab.K0


@pytest.mark.parametrize("preset", ["quadratic_discounted", "quartic_discounted"])
def test_kernel_table_lipschitz_audit(preset):
    g = Grid(1, 64)
    m = make_model(preset, **{"lambda": 0.5})
    for t in (1.0, 3.0):
        tab = build_kernel_table(t, m, g)
        i = np.arange(64)
        diff = np.abs(tab.rho[:, None] - tab.rho[None, :])
        dist = np.abs(i[:, None] - i[None, :]) / 64
        dist = np.minimum(dist, 1 - dist)
        ratio = np.max(np.where(dist > 0, diff / np.where(dist > 0, dist, 1), 0))
        assert ratio <= tab.K0 * (1 + 1e-6)


def test_kernel_table_two_dimensional_even():
    g = Grid(2, 8)
    tab = build_kernel_table(1.0, quad(0.5), g).rho.reshape(8, 8)
    np.testing.assert_allclose(tab, tab.T, atol=1e-15)
    np.testing.assert_allclose(tab[1:, :], tab[:0:-1, :], atol=1e-15)
