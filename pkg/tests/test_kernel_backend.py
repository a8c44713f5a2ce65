import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hartree_lab import kernel
from hartree_lab.radial import RieszKernel

needs_ext = pytest.mark.skipif(kernel.BACKEND != "cython", reason="compiled kernel not built")


@needs_ext
@pytest.mark.parametrize("N", [7, 8, 11])
def test_profile_backends_agree(N):
    rho = np.concatenate([np.linspace(0, 0.99, 200), 1 - np.logspace(-1, -12, 100)])
    a = kernel.angular_profile(rho, N, backend="cython")
    b = kernel.angular_profile(rho, N, backend="numpy")
    np.testing.assert_allclose(a, b, rtol=1e-13)


@needs_ext
@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(1e-3, 1e3), min_size=1, max_size=8), st.lists(st.floats(1e-3, 1e3), min_size=1, max_size=8))
def test_pair_matrix_backends_agree(r, s):
    r, s = np.array(r), np.array(s)
    ok = np.abs(r[:, None] - s[None, :]) > 1e-9 * np.maximum(r[:, None], s[None, :])
    a = kernel.pair_matrix(r, s, 7, backend="cython")
    b = kernel.pair_matrix(r, s, 7, backend="numpy")
    np.testing.assert_allclose(a[ok], b[ok], rtol=1e-12)


@needs_ext
def test_riesz_kernel_backends_agree(grid):
    a = RieszKernel.build(grid, backend="cython")
    b = RieszKernel.build(grid, backend="numpy")
    f = np.exp(-grid.r**2)
    np.testing.assert_allclose(a.convolve(f), b.convolve(f), rtol=1e-12)


def test_profile_at_zero():
    # rho = 0: the integrand is sin^{N-2} only
    N = 7
    expect = kernel.sphere_area(N - 2) * math.sqrt(math.pi) * math.gamma((N - 1) / 2) / math.gamma(N / 2)
    assert kernel.angular_profile(np.array([0.0]), N, backend="numpy")[0] == pytest.approx(expect, rel=1e-14)


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernel.angular_profile(np.array([0.5]), 7, backend="fortran")
