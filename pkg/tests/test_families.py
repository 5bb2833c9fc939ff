import numpy as np
import pytest
from hypothesis import given, strategies as st

from mage.errors import ConfigInvalid
from mage.families import (
    constant,
    degenerate,
    double_well,
    make_density,
    manufactured,
    manufactured_potential,
    perturb,
    perturbation,
    plateau,
    random_field,
    smooth,
    spike,
)
from mage.spectral import lp_norm, ma_density, min_relative_eigenvalue
from mage.torus import make_grid, make_metric


@given(st.sampled_from([0.25, 0.125, 0.0625]), st.sampled_from([1.5, 2.0, 4.0]))
def test_spike_keeps_lp_norm(sigma, p):
    g = make_grid(1, 64)
    f = spike(g, sigma=sigma, p=p, A0=1.0, floor=0.2)
    assert lp_norm(f - 0.2, p) == pytest.approx(1.0, rel=1e-12)


def test_spike_sup_grows_as_width_shrinks():
    g = make_grid(1, 64)
    sups = [spike(g, sigma=s).max() for s in (0.25, 0.125, 0.0625)]
    assert sups[0] < sups[1] < sups[2]


def test_degenerate_and_plateau_zero_sets():
    g = make_grid(1, 32)
    d = degenerate(g)
    assert d.mean() == pytest.approx(1.0) and np.all(d[0] == 0)
    p = plateau(g, level=0.5)
    assert p.mean() == pytest.approx(1.0) and np.all(p[16] == 0) and p.min() == 0
    assert degenerate(g, floor=0.1).min() == pytest.approx(0.1)


@given(st.integers(0, 10**6), st.floats(0.01, 1.0))
def test_smooth_is_positive_and_seeded(seed, amp):
    g = make_grid(1, 16)
    f = smooth(g, seed=seed, amplitude=amp)
    assert f.min() >= np.exp(-amp) * (1 - 1e-12)
    assert np.array_equal(f, smooth(g, seed=seed, amplitude=amp))


@pytest.mark.parametrize("n,R", [(1, 32), (2, 8)])
def test_manufactured_potential_is_psh(n, R):
    g = make_grid(n, R)
    m = make_metric(g)
    u = manufactured_potential(g)
    assert min_relative_eigenvalue(u, m).min() > 0
    # forward operator: f = e^{-u} MA(u)
    np.testing.assert_allclose(manufactured(g, m), np.exp(-u) * ma_density(u, m), rtol=1e-14)


def test_make_density_errors():
    g = make_grid(1, 16)
    assert np.array_equal(make_density("constant", g, value=2.0), constant(g, value=2.0))
    with pytest.raises(ConfigInvalid) as exc:
        make_density("gaussian", g)
    assert exc.value.field == "density_family.name"
    with pytest.raises(ConfigInvalid):
        make_density("spike", g, width=3)


def test_perturbation_centres():
    g = make_grid(1, 32)
    b = perturbation(g, 0, width=0.1, center="zero_set")
    assert b.max() <= 1.0 and np.unravel_index(b.argmax(), b.shape)[0] == 0
    b2 = perturbation(g, 0, center=[0.5, 0.5])
    assert b2[16, 16] == 1.0
    with pytest.raises(ConfigInvalid):
        perturbation(g, 0, center="edge")


def test_perturb_kinds():
    f = np.array([1.0, 2.0])
    b = np.array([0.5, 1.0])
    np.testing.assert_allclose(perturb(f, b, 0.1), [1.05, 2.1])
    np.testing.assert_allclose(perturb(f, b, 0.1, "multiplicative", -1.0), [0.95, 1.8])
    with pytest.raises(ConfigInvalid):
        perturb(f, b, 0.1, "exotic")


def test_envelope_fixtures():
    g = make_grid(1, 32)
    assert double_well(g).max() == pytest.approx(0.2)
    assert np.array_equal(random_field(g, 3), random_field(g, 3))
