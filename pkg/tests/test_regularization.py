import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.special import exp1

from mage.errors import HypothesisViolated, QuadratureNotConverged, ScaleOutOfRange
from mage.regularization import (
    KLParams,
    discrete_weights,
    estimate_A,
    gkz_modulus_test,
    kernel_eta,
    kiselman_legendre,
    kl_ladder,
    ladder_check,
    make_kernel,
    mollification_mass_gap,
    mollify,
    monotone_constant,
    radial_profile,
)
from mage.spectral import delta_ladder, min_relative_eigenvalue
from mage.torus import make_grid, make_metric

from conftest import trig


def test_eta_closed_forms():
    # int_C rho = pi int_1^inf e^{-w} dw;  int_{C^2} rho = pi^2 int_1^inf e^{-w}(1 - 1/w) dw
    assert kernel_eta(1) == pytest.approx(math.e / math.pi, rel=1e-10)
    assert kernel_eta(2) == pytest.approx(1 / (math.pi**2 * (math.exp(-1) - exp1(1.0))), rel=1e-10)


def test_eta_quadrature_doubling_check():
    with pytest.raises(QuadratureNotConverged):
        kernel_eta(1, quad_resolution=16)
    kernel_eta(1, quad_resolution=32)


def test_radial_profile_support():
    s = np.array([-0.1, 0.0, 0.5, 0.999, 1.0, 2.0])
    out = radial_profile(s)
    assert out[0] == 0 and out[-1] == 0 and out[-2] == 0
    assert out[1] == pytest.approx(math.exp(-1))


def test_kernel_json_and_scales(grid1):
    k = make_kernel(grid1)
    assert k.to_json() == {"n": 1, "eta": k.eta, "quad_resolution": 64}
    assert k.t_grid[0] == pytest.approx(1 / 32) and k.t_grid[-1] == pytest.approx(0.25)
    with pytest.raises(ScaleOutOfRange):
        make_kernel(grid1, t_grid=[0.3])
    with pytest.raises(ScaleOutOfRange):
        mollify(grid1.zeros(), 0.01)


@pytest.mark.parametrize("n,R", [(1, 32), (2, 8)])
def test_mollify_preserves_constants(n, R):
    g = make_grid(n, R)
    k = make_kernel(g)
    for t in k.t_grid:
        assert np.abs(mollify(np.full(g.shape, 2.5), t, k) - 2.5).max() <= 1e-8


def test_weights_inside_ball():
    off, w = discrete_weights(1, 32, 0.1)
    r = np.sqrt((off.astype(float) ** 2).sum(axis=1)) / 32
    assert np.all(r < 0.1) and np.all(w > 0) and w.sum() == pytest.approx(1.0)
    off, w = discrete_weights(1, 32, 1 / 32)
    assert len(w) == 1  # only the centre lies strictly inside one cell


@given(st.sampled_from([1, 2, 3]), st.sampled_from([0.05, 0.1, 0.2]))
def test_mollify_fourier_multiplier(k1, t):
    """A Fourier mode is an eigenfunction: rho_t cos = (sum_j w_j cos(2 pi k o_j h)) cos."""
    g = make_grid(1, 32)
    u = trig(g, [(1.0, (k1, 0), 0.0)])
    off, w = discrete_weights(1, 32, t)
    mult = float(np.sum(w * np.cos(2 * np.pi * k1 * off[:, 0] / 32)))
    np.testing.assert_allclose(mollify(u, t), mult * u, atol=1e-12)


def test_direct_and_fft_agree(grid2):
    u = np.random.default_rng(0).standard_normal(grid2.shape)
    a = mollify(u, 0.25, method="direct")
    b = mollify(u, 0.25, method="fft")
    np.testing.assert_allclose(a, b, atol=1e-12)
    with pytest.raises(ValueError):
        mollify(u, 0.25, method="spline")


@given(st.integers(0, 2**31 - 1), st.sampled_from([0.0625, 0.125, 0.25]))
def test_mollify_is_order_preserving(seed, t):
    g = make_grid(1, 16)
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(g.shape)
    v = u + np.abs(rng.standard_normal(g.shape))
    assert (mollify(v, t) - mollify(u, t)).min() >= 0.0


def _psh_field(grid, seed, amp=0.02):
    rng = np.random.default_rng(seed)
    terms = [(amp * rng.standard_normal(), tuple(rng.integers(-2, 3, grid.ndim)),
              rng.uniform(0, 2 * np.pi)) for _ in range(4)]
    return trig(grid, terms)


@given(st.integers(0, 2**31 - 1))
def test_monotone_constant_certified_and_minimal(seed):
    g = make_grid(1, 32)
    k = make_kernel(g)
    u = _psh_field(g, seed)
    K = monotone_constant(u, k)
    assert ladder_check(u, K, k.t_grid, k) >= -1e-10
    if K > 1e-6:
        assert ladder_check(u, 0.9 * K, k.t_grid, k) < -1e-10


@given(st.integers(0, 2**31 - 1))
def test_monotone_constant_below_flat_bound(seed):
    g = make_grid(1, 32)
    m = make_metric(g)
    k = make_kernel(g)
    u = _psh_field(g, seed, amp=0.05)
    if min_relative_eigenvalue(u, m).min() < 0:
        return
    assert monotone_constant(u, k, metric=m) <= k.flat_monotone_bound(g) + 1e-9


def test_mass_gap_is_zero_for_flat_mode(grid1, flat1):
    u = trig(grid1, [(0.1, (1, 0), 0.3)])
    # every non-constant mode integrates to zero, before and after mollifying
    assert abs(mollification_mass_gap(u, 0.1, flat1)) <= 1e-14


def test_kl_ladder():
    g = make_grid(1, 64)
    ts = kl_ladder(g, 0.1, rungs=4)
    assert len(ts) == 16 and ts[-1] == 0.1 and ts[0] == pytest.approx(1 / 64)
    with pytest.raises(ScaleOutOfRange):
        kl_ladder(g, 0.5)


def test_kl_params_validation():
    with pytest.raises(ValueError):
        KLParams(0.0, 1.0)
    with pytest.raises(ValueError):
        KLParams(0.1, 0.0)
    with pytest.raises(ValueError):
        KLParams(0.1, 1.0, K=-1)
    p = KLParams.tied(0.04, 0.5, K=1.0)
    assert p.c == pytest.approx(0.2)


def test_kl_of_constant_is_constant(grid1):
    U = kiselman_legendre(np.full(grid1.shape, 1.5), KLParams(0.1, 0.3, K=2.0))
    np.testing.assert_allclose(U, 1.5, atol=1e-12)


@given(st.integers(0, 2**31 - 1), st.floats(0.01, 0.5), st.floats(0.01, 0.5))
def test_kl_properties(seed, c1, c2):
    g = make_grid(1, 32)
    k = make_kernel(g)
    u = _psh_field(g, seed)
    delta = 0.125
    K = monotone_constant(u, k, kl_ladder(g, delta))
    lo, hi = sorted((c1, c2))
    U_lo = kiselman_legendre(u, KLParams(delta, lo, K), k)
    U_hi = kiselman_legendre(u, KLParams(delta, hi, K), k)
    rho = mollify(u, delta, k)
    assert np.all(U_hi <= rho)  # exact: the delta rung carries zero penalty
    assert np.all(U_lo <= U_hi)
    # lower bound: rho_t u + K t^2 is monotone and rho_h u = u
    assert np.all(U_lo >= u - K * (delta + delta**2) - 1e-10)


def test_kl_full_result(grid1):
    u = _psh_field(grid1, 1)
    res = kiselman_legendre(u, KLParams(0.1, 0.05), full=True)
    assert res.ladder[-1] == 0.1 and res.argmin_rung.max() < len(res.ladder)
    assert res.ladder_gap == pytest.approx(0.05 * math.log(res.ladder[1] / res.ladder[0]))


def test_estimate_A_nonnegative(grid1, flat1):
    k = make_kernel(grid1)
    u = _psh_field(grid1, 2)
    A, samples = estimate_A(u, flat1, k, deltas=[0.1, 0.2], alphas=[0.5])
    assert A >= 0 and len(samples) == 2
    assert all(s["A_needed"] <= A for s in samples)


def test_gkz_smooth_field(grid1):
    k = make_kernel(grid1)
    u = _psh_field(grid1, 3)
    audit = gkz_modulus_test(u, 0.5, None, k, delta_ladder(grid1))
    assert audit.passed and np.isfinite(audit.C_prime)
    with pytest.raises(HypothesisViolated) as exc:
        gkz_modulus_test(u, 0.5, 1e-6 * audit.hypothesis_ratio, k, delta_ladder(grid1))
    assert exc.value.worst_t in k.t_grid
    with pytest.raises(ValueError):
        gkz_modulus_test(u, 1.5, None, k, delta_ladder(grid1))


def test_gkz_abs_sine_profile():
    """|sin(pi x1)|^a has modulus exponent a at small scales."""
    g = make_grid(1, 256)
    a = 0.5
    x1 = g.coords(sparse=False)[0]
    u = np.abs(np.sin(np.pi * x1)) ** a
    deltas = [2 / 256, 4 / 256, 8 / 256]
    from mage.spectral import fit_exponent, modulus_profile

    slope = fit_exponent(zip(deltas, modulus_profile(u, deltas)))[0]
    assert abs(slope - a) <= 0.05
