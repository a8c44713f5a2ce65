import math

import mpmath
import numpy as np
import pytest
import sympy
from hypothesis import given, settings, strategies as st

from hartree_lab.groundstate import default_grid
from hartree_lab.kernel import pair_matrix, sphere_area
from hartree_lab.radial import (GridError, RadialField, RieszKernel, check_dimension, h1_norm, l2_norm,
                                lp_norm, make_log_grid, norms, random_field, read_field_csv,
                                riesz_convolve, write_field_csv)


def interior(grid, lo=1e-2, hi=1e2):
    return (grid.r > lo) & (grid.r < hi)


def test_grid_echo(grid):
    assert grid.size == 2048
    assert grid.r[0] == 1e-4
    assert grid.r[-1] == 1e3
    assert np.all(np.diff(grid.r) > 0)


@pytest.mark.parametrize("args", [(6, 1e-4, 1e3, 128), (7, 1.0, 0.5, 128), (7, 0.0, 1.0, 128), (7, 1e-3, 1e3, 10)])
def test_grid_rejects_bad_input(args):
    with pytest.raises(GridError):
        make_log_grid(*args)


def test_dimension_below_seven_rejected():
    with pytest.raises(GridError):
        check_dimension(5)
    assert check_dimension(9) == 9


def test_indicator_integral(grid):
    N = grid.N
    val = grid.integrate(np.ones(grid.size), 1.0, 2.0)
    assert val == pytest.approx((2**N - 1) / N, rel=1e-8)


def test_beta_integral(grid):
    # the measure supplies r^6 at N = 7
    val = grid.integrate((1 + grid.r**2) ** -5)
    oracle = float(0.5 * mpmath.beta(mpmath.mpf(7) / 2, mpmath.mpf(3) / 2))
    assert val == pytest.approx(oracle, rel=1e-8)


# ---- kernel ---------------------------------------------------------
@given(st.floats(0.01, 100), st.floats(0.01, 100))
@settings(max_examples=30, deadline=None)
def test_kernel_symmetric(r, s):
    K = pair_matrix(np.array([r, s]), np.array([s, r]), 7)
    assert K[0, 0] == pytest.approx(K[1, 1], rel=1e-12)


@given(st.floats(0.01, 10), st.floats(0.01, 10), st.floats(0.1, 10))
@settings(max_examples=30, deadline=None)
def test_kernel_homogeneous(r, s, t):
    a = pair_matrix(np.array([t * r]), np.array([t * s]), 7)[0, 0]
    b = pair_matrix(np.array([r]), np.array([s]), 7)[0, 0]
    assert a == pytest.approx(t**-4 * b, rel=1e-10)


@pytest.mark.parametrize("N", [7, 8, 9])
def test_kernel_origin_limit(N):
    K = pair_matrix(np.array([2.0]), np.array([1e-9]), N)[0, 0]
    assert K == pytest.approx(sphere_area(N - 1) * 2.0**-4, rel=1e-12)


# ---- convolution ----------------------------------------------------
def test_convolution_of_zero(gs):
    assert np.all(riesz_convolve(gs.kernel, np.zeros(gs.grid.size)) == 0)


@pytest.mark.filterwarnings("ignore::UserWarning")
def test_convolution_nan_rejected(gs):
    f = np.zeros(gs.grid.size)
    f[3] = np.nan
    with pytest.raises(ValueError):
        riesz_convolve(gs.kernel, f)


def test_convolution_dimension_mismatch(gs):
    other = make_log_grid(8, 1e-4, 1e3, 2048)
    with pytest.raises(ValueError):
        riesz_convolve(gs.kernel, RadialField(other, np.zeros(other.size)))


def test_convolution_slow_decay_warns(gs):
    with pytest.warns(UserWarning):
        riesz_convolve(gs.kernel, np.ones(gs.grid.size))


def _slope(r, g, lo, hi):
    m = (r >= lo) & (r <= hi)
    return np.polyfit(np.log(r[m]), np.log(np.abs(g[m])), 1)[0]


def test_convolution_fast_decay_slope(gs):
    g = gs.conv(gs.W() ** 2)
    assert _slope(gs.grid.r, g, 1e2, 1e3) == pytest.approx(-4, abs=0.05)


def test_convolution_slow_decay_slope():
    # theta = 6 < N = 7: tail r^{N-4-theta}; the wide grid keeps the truncation out of the window
    wide = make_log_grid(7, 1e-2, 1e6, 1024)
    K = RieszKernel.build(wide)
    f = (1 + wide.r**2) ** -3
    g = K.convolve(f)
    assert _slope(wide.r, g, 1e2, 1e3) == pytest.approx(-3, abs=0.05)


def test_convolution_scaling(gs):
    grid = gs.grid
    k = 40
    lam = math.exp(k * grid.h)
    a = gs.conv(gs.W(lam) ** 2)
    b = gs.conv(gs.W() ** 2)
    # node i of the rescaled field sits at node i - k of the original
    m = interior(grid)
    idx = np.nonzero(m)[0]
    np.testing.assert_allclose(a[idx], lam**-2 * b[idx - k], rtol=1e-6)


# ---- Laplacian ------------------------------------------------------
def test_laplacian_of_r_squared(grid):
    lap = grid.laplacian(grid.r**2)
    m = interior(grid)
    np.testing.assert_allclose(lap[m], 2 * grid.N, rtol=1e-6)


def test_laplacian_of_constant(grid):
    # measured against the row scale of the operator, which grows like r^-2 h^-2 at the inner edge
    lap = grid.laplacian(np.ones(grid.size))
    rows = np.asarray(abs(grid.lap_matrix).sum(axis=1)).ravel()
    assert np.max(np.abs(lap) / rows) <= 1e-10


def test_laplacian_analytic_bubble(grid):
    x = sympy.symbols("x", positive=True)
    N = grid.N
    u = (1 + x**2) ** sympy.Rational(-(N - 2), 2)
    lap = sympy.diff(u, x, 2) + (N - 1) / x * sympy.diff(u, x)
    exact = sympy.lambdify(x, sympy.simplify(lap), "numpy")(grid.r)
    got = grid.laplacian((1 + grid.r**2) ** (-(N - 2) / 2))
    m = interior(grid)
    np.testing.assert_allclose(got[m], exact[m], rtol=1e-5)


def _bump(grid, r0, s, phase=0.0):
    return np.exp(-(((grid.r - r0) / s) ** 2)) * np.exp(1j * phase)


@given(st.floats(0.05, 20), st.floats(0.05, 20), st.floats(0.2, 0.8), st.floats(0.2, 0.8))
@settings(max_examples=25, deadline=None)
def test_laplacian_self_adjoint(r1, r2, s1, s2):
    grid = default_grid(7)
    u, v = _bump(grid, r1, s1 * r1).real, _bump(grid, r2, s2 * r2).real
    lhs = grid.inner(grid.laplacian(u), v)
    rhs = grid.inner(u, grid.laplacian(v))
    scale = h1_norm(grid, u) * h1_norm(grid, v)
    assert abs(lhs - rhs) <= 1e-6 * scale


def test_laplacian_by_parts(grid, rng):
    for _ in range(5):
        u = random_field(grid, rng)
        assert -grid.inner(u, grid.laplacian(u)) == pytest.approx(h1_norm(grid, u) ** 2, rel=1e-10)


def test_minus_laplacian_positive(grid, rng):
    for _ in range(20):
        u = random_field(grid, rng)
        assert -grid.inner(u, grid.laplacian(u)) > 0


# ---- norms ----------------------------------------------------------
def test_norms_of_zero(grid):
    out = norms(grid, np.zeros(grid.size), p=3.0)
    assert out["l2"] == 0 and out["h1dot"] == 0 and out["lp"] == 0


@pytest.mark.parametrize("p", [0.5, float("inf"), float("nan")])
def test_norm_rejects_p(grid, p):
    with pytest.raises(ValueError):
        lp_norm(grid, np.ones(grid.size), p)


def test_l2_of_W_is_C1(gs, C):
    out = norms(gs.grid, gs.W())
    # the grid sum alone misses the harmonic tail beyond r_max (about 3e-8 of C1)
    assert out["l2"] ** 2 + out["tail"] == pytest.approx(C.C1, rel=1e-8)
    assert out["l2"] == l2_norm(gs.grid, gs.W())


def test_sobolev_sanity(gs, rng):
    grid = gs.grid
    p = 2 * grid.N / (grid.N - 2)
    W = gs.W()
    S = lp_norm(grid, W, p) / h1_norm(grid, W)
    assert np.isfinite(S)
    worst = 0.0
    for _ in range(100):
        g = random_field(grid, rng, bumps=int(rng.integers(1, 4)))
        worst = max(worst, lp_norm(grid, g, p) / h1_norm(grid, g))
    assert worst <= S * (1 + 1e-6)


def test_field_csv_round_trip(grid, tmp_path, rng):
    u = random_field(grid, rng)
    write_field_csv(tmp_path / "u.csv", grid, u)
    g2, v = read_field_csv(tmp_path / "u.csv")
    assert g2.N == grid.N and g2.size == grid.size
    np.testing.assert_array_equal(v, u)


def test_field_value_count_checked(grid):
    with pytest.raises(ValueError):
        RadialField(grid, np.zeros(3))
