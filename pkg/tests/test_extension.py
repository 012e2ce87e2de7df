import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from contactlo.extension import (
    ExtensionError,
    SampleSet,
    finite_reduction_defect,
    mcshane_extend,
    mcshane_values,
    pairwise_lipschitz,
)
from contactlo.geometry import Grid, torus_distances
from contactlo.kernel import build_kernel_table

from conftest import quad


def test_single_cone():
    s = SampleSet([[0.0]], [0.5], 1.0)
    np.testing.assert_allclose(mcshane_values(s, np.array([[0.5], [0.0]])), [1.0, 0.5])


def test_two_cones():
    s = SampleSet([[0.0], [0.5]], [0.0, 0.0], 1.0)
    assert mcshane_values(s, np.array([[0.25]]))[0] == pytest.approx(0.25)


def sample_sets(max_m=6):
    return st.integers(1, max_m).flatmap(
        lambda m: st.tuples(
            st.lists(st.integers(0, 199).map(lambda i: i / 200), min_size=m, max_size=m, unique=True),
            st.lists(st.floats(-1, 1), min_size=m, max_size=m),
            st.floats(0, 3),
        )
    )


@given(sample_sets())
def test_extension_interpolates_and_is_lipschitz(data):
    z, v, k0 = data
    s = SampleSet.from_samples(np.array(z)[:, None], v, k0)
    np.testing.assert_allclose(mcshane_values(s, s.points), s.values, atol=1e-12)
    probe = np.linspace(0, 1, 97, endpoint=False)[:, None]
    vals = mcshane_values(s, probe)
    d = torus_distances(probe[:, None, :], probe[None, :, :])
    gap = np.abs(vals[:, None] - vals[None, :])
    assert np.all(gap <= s.K_psi * d + 1e-12)


@given(sample_sets(), st.integers(0, 2**31))
def test_extension_dominates_every_competitor(data, seed):
    # any K_psi-Lipschitz function through the samples lies below the upper extension
    z, v, k0 = data
    s = SampleSet.from_samples(np.array(z)[:, None], v, k0)
    probe = np.linspace(0, 1, 64, endpoint=False)[:, None]
    d = torus_distances(probe[:, None, :], s.points[None, :, :])
    upper = mcshane_values(s, probe)
    lower = np.max(s.values[None, :] - s.K_psi * d, axis=1)
    w = np.random.default_rng(seed).uniform(0, 1, size=100)
    for a in w:
        competitor = a * lower + (1 - a) * upper
        assert np.all(competitor <= upper + 1e-12)


def test_extension_idempotent():
    g = Grid(1, 64)
    s = SampleSet.from_samples(np.array([[0.1], [0.4], [0.7]]), [0.0, 0.2, -0.1], 0.7)
    once = mcshane_extend(s, g)
    again = mcshane_extend(SampleSet(s.points, mcshane_values(s, s.points), s.K_psi), g)
    np.testing.assert_array_equal(once.values, again.values)


def test_sample_validation():
    with pytest.raises(ExtensionError):
        SampleSet([[0.1], [0.2]], [0.0, 1.0], 1.0)
    with pytest.raises(ExtensionError):
        pairwise_lipschitz(np.array([[0.1], [0.1]]), np.array([0.0, 1.0]))
    with pytest.raises(ExtensionError):
        SampleSet([[0.1]], [math.nan], 1.0)
    with pytest.raises(ExtensionError):
        mcshane_extend(SampleSet([[0.1, 0.2]], [0.0], 1.0), Grid(1, 8))


def test_sample_set_round_trip(tmp_path):
    s = SampleSet.from_samples(np.array([[0.1], [0.4]]), [0.1 / 3, -0.2], 0.7)
    s.write(tmp_path / "s.csv", tmp_path / "s.json")
    back = SampleSet.read(tmp_path / "s.csv", tmp_path / "s.json")
    np.testing.assert_array_equal(back.values, s.values)
    assert back.K_psi == s.K_psi
    assert s.to_csv().splitlines()[0] == "z_1,value"


def test_reduction_single_sample_is_exact():
    g = Grid(1, 64)
    tab = build_kernel_table(1.0, quad(0.5), g)
    s = SampleSet.from_samples(np.array([[0.25]]), [0.1], tab.K0)
    assert finite_reduction_defect(s, quad(0.5), tab).defect == 0.0


def test_reduction_refuses_small_constant_and_short_time():
    g = Grid(1, 64)
    tab = build_kernel_table(1.0, quad(0.5), g)
    with pytest.raises(ExtensionError):
        finite_reduction_defect(SampleSet([[0.25]], [0.0], 0.5 * tab.K0), quad(0.5), tab)
    short = build_kernel_table(0.5, quad(0.5), g)
    with pytest.raises(ExtensionError):
        finite_reduction_defect(SampleSet([[0.25]], [0.0], 10.0), quad(0.5), short)


def test_reduction_m5_within_grid_bound():
    rng = np.random.default_rng(np.random.SeedSequence(0, spawn_key=(8,)))
    z = rng.uniform(0, 1, size=(5, 1))
    g = Grid(1, 128)
    tab = build_kernel_table(1.0, quad(0.5), g)
    s = SampleSet.from_samples(z, 0.2 * np.sin(2 * np.pi * z[:, 0]), tab.K0)
    rep = finite_reduction_defect(s, quad(0.5), tab)
    assert rep.defect <= 5e-3
    assert rep.defect <= rep.tolerance
