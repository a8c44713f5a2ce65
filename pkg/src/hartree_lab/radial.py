"""Radial grids, quadrature, differential operators and the Riesz convolution.

Everything lives on a logarithmic grid r_i = r_min e^{i h}.  In the variable
s = log r the grid is uniform, so derivatives are high-order centered
differences in s.  The Laplacian is assembled in flux form

    Delta = -W^{-1} D^T Q D,   W = diag(w),  Q = diag(h r^{N-2}),

which makes it exactly self-adjoint for the quadrature inner product.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from numpy.typing import NDArray
from scipy.interpolate import make_interp_spline

from .kernel import angular_profile, pair_matrix, sphere_area

MIN_DIMENSION = 7

# 8th-order centered first derivative, offsets -4..4
_D1 = np.array([1 / 280, -4 / 105, 1 / 5, -4 / 5, 0.0, 4 / 5, -1 / 5, 4 / 105, -1 / 280])
_HALF = 4
_EXTRAP = 9  # points used for the outer polynomial extrapolation


class GridError(ValueError):
    pass


def check_dimension(N: int) -> int:
    if int(N) != N or N < MIN_DIMENSION:
        raise GridError(f"dimension must be an integer N >= {MIN_DIMENSION}, got {N}")
    return int(N)


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Logarithmic radial grid with weights for the measure r^{N-1} dr."""

    N: int
    r: NDArray[np.float64]
    w: NDArray[np.float64]
    h: float

    @property
    def size(self) -> int:
        return self.r.size

    @property
    def r_min(self) -> float:
        return float(self.r[0])

    @property
    def r_max(self) -> float:
        return float(self.r[-1])

    @property
    def sphere(self) -> float:
        """|S^{N-1}|, the angular factor of every integral over R^N."""
        return sphere_area(self.N - 1)

    def describe(self) -> dict:
        return {"r_min": self.r_min, "r_max": self.r_max, "points": self.size}

    # ---- quadrature -------------------------------------------------
    def integrate(self, values, r_lo: float | None = None, r_hi: float | None = None):
        """int phi(r) r^{N-1} dr for sampled phi.

        Without bounds this is the trapezoid rule in s = log r, which is
        spectrally accurate for smooth fields.  With bounds, phi is taken
        piecewise linear in s and integrated exactly against r^{N-1} dr, so
        constants are integrated exactly over arbitrary sub-intervals.
        """
        values = np.asarray(values)
        if r_lo is None and r_hi is None:
            return np.sum(self.w * values, axis=-1)
        lo = self.r_min if r_lo is None else max(r_lo, self.r_min)
        hi = self.r_max if r_hi is None else min(r_hi, self.r_max)
        if hi <= lo:
            return 0.0 * values[..., 0]
        s = np.log(self.r)
        s_lo, s_hi = math.log(lo), math.log(hi)
        i0 = max(int(np.searchsorted(s, s_lo, side="right")) - 1, 0)
        i1 = min(int(np.searchsorted(s, s_hi, side="left")), self.size - 1)
        total = 0.0 * values[..., 0]
        for i in range(i0, i1):
            a = max(s[i], s_lo)
            b = min(s[i + 1], s_hi)
            if b <= a:
                continue
            total = total + _cell_moment(s[i], s[i + 1], a, b, values[..., i], values[..., i + 1], self.N)
        return total

    def integrate_space(self, values):
        """int over R^N of a radial function."""
        return self.sphere * self.integrate(values)

    def inner(self, u, v) -> float:
        """<u, v> = Re int conj(u) v dx over R^N."""
        return float(np.real(self.sphere * np.sum(self.w * np.conj(u) * v)))

    # ---- differential operators ------------------------------------
    @cached_property
    def ds_matrix(self) -> sp.csr_matrix:
        """d/ds with even-Taylor closure at r_min and polynomial extrapolation at r_max."""
        n = self.size
        rows, cols, vals = [], [], []
        left = _even_ghost_rows(self.r, _HALF)
        right = _extrap_ghost_rows(n, _HALF, _EXTRAP)
        for i in range(n):
            for k, c in enumerate(_D1):
                if c == 0.0:
                    continue
                j = i + k - _HALF
                if 0 <= j < n:
                    rows.append(i), cols.append(j), vals.append(c)
                elif j < 0:
                    cj, cv = left[-j - 1]
                    rows.extend([i] * len(cj)), cols.extend(cj), vals.extend(c * cv)
                else:
                    cj, cv = right[j - n]
                    rows.extend([i] * len(cj)), cols.extend(cj), vals.extend(c * cv)
        D = sp.csr_matrix((vals, (rows, cols)), shape=(n, n)) / self.h
        D.sum_duplicates()
        return D

    @cached_property
    def dr_matrix(self) -> sp.csr_matrix:
        return sp.diags(1.0 / self.r) @ self.ds_matrix

    @cached_property
    def flux_weights(self) -> NDArray[np.float64]:
        q = self.h * self.r ** (self.N - 2)
        q[0] *= 0.5
        q[-1] *= 0.5
        return q

    @cached_property
    def stiffness(self) -> sp.csr_matrix:
        """D^T Q D, the discrete Dirichlet form (symmetric, PSD)."""
        D = self.ds_matrix
        return (D.T @ sp.diags(self.flux_weights) @ D).tocsr()

    @cached_property
    def lap_matrix(self) -> sp.csr_matrix:
        return (-sp.diags(1.0 / self.w) @ self.stiffness).tocsr()

    def ds(self, u):
        return _apply(self.ds_matrix, u)

    def dr(self, u):
        return _apply(self.dr_matrix, u)

    def laplacian(self, u):
        return _apply(self.lap_matrix, u)

    def euler(self, u):
        """r d/dr."""
        return self.ds(u)

    # ---- interpolation ---------------------------------------------
    def interpolate(self, values, r_new, outside: str = "zero"):
        """Degree-7 spline in s; constant extension inward (even fields).

        ``outside`` chooses the extension beyond r_max: "zero" or "decay"
        (continuation by the r^{-(N-2)} law).
        """
        r_new = np.asarray(r_new, dtype=float)
        s = np.log(self.r)
        values = np.asarray(values)
        spl = make_interp_spline(s, values, k=7)
        x = np.log(np.clip(r_new, self.r_min, self.r_max))
        out = spl(x)
        below = r_new < self.r_min
        out[below] = values[0]
        above = r_new > self.r_max
        if outside == "zero":
            out[above] = 0.0
        elif outside == "decay":
            out[above] = values[-1] * (r_new[above] / self.r_max) ** (-(self.N - 2))
        else:
            raise ValueError(f"unknown extension {outside!r}")
        return out


def _apply(M, u):
    u = np.asarray(u)
    if np.iscomplexobj(u):
        return M @ u.real + 1j * (M @ u.imag)
    return M @ u


def _cell_moment(sa, sb, a, b, fa, fb, N):
    """int_a^b (linear interpolant of f on [sa, sb]) e^{N s} ds exactly."""
    slope = (fb - fa) / (sb - sa)
    # int_a^b (fa + slope (s - sa)) e^{Ns} ds
    ea, eb = math.exp(N * a), math.exp(N * b)
    m0 = (eb - ea) / N
    m1 = (eb * (b - sa) - ea * (a - sa)) / N - m0 / N
    return fa * m0 + slope * m1


def _even_ghost_rows(r, count):
    """Ghost values below r_min from the even Taylor fit a + b r^2 + c r^4."""
    # work in x = (r/r_0)^2 so the Vandermonde system is well conditioned
    x0 = (r[:3] / r[0]) ** 2
    Vinv = np.linalg.inv(np.vander(x0, 3, increasing=True))
    h = math.log(r[1] / r[0])
    rows = []
    for k in range(1, count + 1):
        xg = math.exp(-2 * k * h)
        coef = np.array([1.0, xg, xg**2]) @ Vinv
        coef[0] += 1.0 - coef.sum()  # reproduce constants exactly
        rows.append((np.arange(3), coef))
    return rows


def _extrap_ghost_rows(n, count, m):
    """Ghost values beyond r_max by degree m-1 polynomial extrapolation in s."""
    nodes = np.arange(m, dtype=float)
    rows = []
    for k in range(1, count + 1):
        x = m - 1 + k
        coef = np.empty(m)
        for j in range(m):
            others = np.delete(nodes, j)
            coef[j] = np.prod((x - others) / (nodes[j] - others))
        rows.append((np.arange(n - m, n), coef))
    return rows


def make_log_grid(N: int = 7, r_min: float = 1e-4, r_max: float = 1e3, points: int = 2048) -> RadialGrid:
    """Logarithmic grid with trapezoid-in-log weights for r^{N-1} dr."""
    N = check_dimension(N)
    if not (0.0 < r_min < r_max) or not (math.isfinite(r_min) and math.isfinite(r_max)):
        raise GridError(f"need 0 < r_min < r_max, got {r_min}, {r_max}")
    if points < 64:
        raise GridError("need at least 64 points")
    s = np.linspace(math.log(r_min), math.log(r_max), points)
    r = np.exp(s)
    r[0], r[-1] = r_min, r_max
    h = float(s[1] - s[0])
    w = h * r**N
    w[0] *= 0.5
    w[-1] *= 0.5
    return RadialGrid(N=N, r=r, w=w, h=h)


def grid_from_nodes(N: int, r) -> RadialGrid:
    r = np.asarray(r, dtype=float)
    s = np.log(r)
    ds = np.diff(s)
    if np.any(ds <= 0):
        raise GridError("nodes must be strictly increasing")
    if np.max(np.abs(ds - ds.mean())) > 1e-9 * max(1.0, abs(s).max()):
        raise GridError("only logarithmic grids are supported")
    return make_log_grid(N, float(r[0]), float(r[-1]), r.size)


@dataclass(frozen=True, eq=False)
class RadialField:
    """Complex samples of a radial function, even at the origin."""

    grid: RadialGrid
    values: NDArray

    def __post_init__(self):
        if np.shape(self.values) != (self.grid.size,):
            raise ValueError("value count must equal node count")

    def laplacian(self) -> "RadialField":
        return RadialField(self.grid, self.grid.laplacian(self.values))

    def norms(self, p: float | None = None) -> dict:
        return norms(self.grid, self.values, p)


def l2_norm(grid: RadialGrid, u) -> float:
    return math.sqrt(max(grid.sphere * float(np.sum(grid.w * np.abs(u) ** 2)), 0.0))


def h1_norm(grid: RadialGrid, u) -> float:
    du = grid.ds(u)
    return math.sqrt(grid.sphere * float(np.sum(grid.flux_weights * np.abs(du) ** 2)))


def h1_inner(grid: RadialGrid, u, v) -> float:
    return float(np.real(grid.sphere * np.sum(grid.flux_weights * np.conj(grid.ds(u)) * grid.ds(v))))


def lp_norm(grid: RadialGrid, u, p: float) -> float:
    if not (p >= 1.0) or not math.isfinite(p):
        raise ValueError(f"p must lie in [1, inf), got {p}")
    return (grid.sphere * float(np.sum(grid.w * np.abs(u) ** p))) ** (1.0 / p)


def norms(grid: RadialGrid, u, p: float | None = None) -> dict:
    """L2, homogeneous H1 and optionally L^p norms over R^N.

    ``tail`` estimates the truncated L2 mass beyond r_max assuming the
    field continues with r^{-(N-2)} decay.
    """
    out = {"l2": l2_norm(grid, u), "h1dot": h1_norm(grid, u)}
    if p is not None:
        out["lp"] = lp_norm(grid, u, p)
    N, R = grid.N, grid.r_max
    tail_exp = 2 * (N - 2) - N
    out["tail"] = grid.sphere * abs(u[-1]) ** 2 * R**N / tail_exp if tail_exp > 0 else math.inf
    return out


@dataclass(frozen=True, eq=False)
class RieszKernel:
    """Dense matrix K(r_i, s_j) realizing |x|^{-4} * f for radial f."""

    grid: RadialGrid
    matrix: NDArray[np.float64]
    diag: NDArray[np.float64] | None = None

    @property
    def N(self) -> int:
        return self.grid.N

    @classmethod
    def build(cls, grid: RadialGrid, backend: str | None = None) -> "RieszKernel":
        n = grid.size
        # on a log grid min/max = exp(-|i-j| h): one profile value per offset
        prof = angular_profile(np.exp(-grid.h * np.arange(n)), grid.N, backend=backend)
        idx = np.arange(n)
        off = np.abs(idx[:, None] - idx[None, :])
        big = np.maximum(grid.r[:, None], grid.r[None, :])
        K = prof[off] / big**4
        return cls(grid=grid, matrix=K, diag=_diagonal_correction(grid))

    def convolve(self, f):
        """g(r_i) = sum_j K(r_i, s_j) f(s_j) w_j + d_i f_i."""
        f = np.asarray(f)
        if f.shape[-1] != self.grid.size:
            raise ValueError("field and kernel grids differ")
        if np.any(np.isnan(f)):
            raise ValueError("NaN in convolution input")
        out = (f * self.grid.w) @ self.matrix.T if f.ndim > 1 else self.matrix @ (self.grid.w * f)
        if self.diag is not None:
            out = out + self.diag * f
        return out

    def weighted_matrix(self) -> NDArray[np.float64]:
        """Dense matrix of the linear map f -> convolve(f)."""
        A = self.matrix * self.grid.w[None, :]
        if self.diag is not None:
            A[np.diag_indices_from(A)] += self.diag
        return A

    def convolve_at(self, f, r_eval):
        """Convolution evaluated at arbitrary radii."""
        K = pair_matrix(np.atleast_1d(r_eval), self.grid.r, self.N)
        return K @ (self.grid.w * np.asarray(f))


# zeta'(-2) = -zeta(3) / (4 pi^2)
_ZETA_PRIME_M2 = -0.030448457058393270


def _diagonal_correction(grid: RadialGrid):
    """Trapezoid correction for the diagonal kink of K at N = 7.

    In s = log r the kernel behaves like 2|S^{N-2}| r^-4 x^2 log|x| across the
    diagonal (x = log(s/r)), which caps the plain trapezoid rule at O(h^3).
    The generalized Euler-Maclaurin term for x^2 log|x| at a node is
    -2 zeta'(-2) h^3 per unit coefficient; subtracting it restores high
    order.  For N >= 8 the non-analytic term is weaker and is left alone.
    """
    if grid.N != 7:
        return None
    return 2.0 * _ZETA_PRIME_M2 * grid.h**3 * 2.0 * sphere_area(grid.N - 2) * grid.r ** (grid.N - 4)


def _slow_decay(grid: RadialGrid, vals) -> bool:
    """Local power at the outer edge is shallower than r^-4 (negligible tails ignored)."""
    scale = np.max(np.abs(vals)) if vals.size else 0.0
    f1, f0 = abs(vals[-1]), abs(vals[-9])
    if scale == 0.0 or f1 <= 1e-14 * scale:
        return False
    if f0 == 0.0:
        return True
    p = -math.log(f1 / f0) / math.log(grid.r[-1] / grid.r[-9])
    return p < 4.0 - 0.05


def riesz_convolve(kernel: RieszKernel, f, grid: RadialGrid | None = None):
    """|x|^{-4} * f for real radial f.

    Accepts a RadialField or raw samples.  Warns when f does not decay
    at least like r^{-4} at the outer edge.
    """
    if isinstance(f, RadialField):
        if f.grid.N != kernel.N:
            raise ValueError(f"dimension mismatch: field N={f.grid.N}, kernel N={kernel.N}")
        vals = f.values
    else:
        vals = np.asarray(f)
    if np.iscomplexobj(vals):
        if np.any(vals.imag != 0):
            raise ValueError("riesz_convolve expects a real field")
        vals = vals.real
    if _slow_decay(kernel.grid, vals):
        warnings.warn("input decays slower than r^-4 at r_max; truncation error may dominate")
    g = kernel.convolve(vals)
    if isinstance(f, RadialField):
        return RadialField(f.grid, g)
    return g


# ---- CSV I/O --------------------------------------------------------
def write_field_csv(path, grid: RadialGrid, u) -> None:
    u = np.asarray(u, dtype=complex)
    with open(path, "w") as fh:
        fh.write(f"# N={grid.N} r_max={grid.r_max:.17g}\n")
        fh.write("r,Re(u),Im(u)\n")
        for r, z in zip(grid.r, u):
            fh.write(f"{r:.17g},{z.real:.17g},{z.imag:.17g}\n")


def read_field_csv(path) -> tuple[RadialGrid, NDArray[np.complex128]]:
    text = Path(path).read_text().splitlines()
    if not text or not text[0].startswith("#"):
        raise ValueError("missing '# N=... r_max=...' header")
    meta = dict(tok.split("=") for tok in text[0][1:].split())
    N = int(meta["N"])
    data = np.loadtxt(text[2:], delimiter=",", ndmin=2)
    grid = grid_from_nodes(N, data[:, 0])
    return grid, data[:, 1] + 1j * data[:, 2]


def random_field(grid: RadialGrid, rng: np.random.Generator, bumps: int = 3,
                 complex_: bool = True, r_range=None):
    """Sum of Gaussian bumps exp(-(r-r0)^2/s^2) e^{i phi}, r0 log-uniform."""
    lo, hi = r_range or (10 * grid.r_min, grid.r_max / 10)
    u = np.zeros(grid.size, dtype=complex if complex_ else float)
    for _ in range(bumps):
        r0 = math.exp(rng.uniform(math.log(lo), math.log(hi)))
        s = r0 * rng.uniform(0.15, 0.8)
        amp = rng.normal()
        bump = np.exp(-(((grid.r - r0) / s) ** 2))
        if complex_:
            bump = bump * np.exp(1j * rng.uniform(0, 2 * math.pi))
        # scale so that each bump has unit H1 norm up to the random amplitude
        u = u + amp * bump / max(h1_norm(grid, bump), 1e-300)
    return u
