"""Linearization around the bubble: L+, L-, the unstable pair (nu, Y1, Y2),
the dual fields alpha^{+-} and the vectors cY^{+-}.

Operators are dense matrices acting on real samples.  They are self-adjoint
for the quadrature inner product, i.e. w_i A_ij = w_j A_ji.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.linalg as sl
from numpy.typing import NDArray

from .groundstate import GroundState, ground_state
from .nonlinear import fprime_apply
from .radial import RadialGrid, _apply, l2_norm

log = logging.getLogger(__name__)

SYMMETRY_TOL = 1e-8


class SpectrumError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class DiscreteOperator:
    grid: RadialGrid
    matrix: NDArray[np.float64]
    label: str

    def apply(self, u):
        return _apply(self.matrix, u)

    __call__ = apply

    def symmetry_defect(self) -> float:
        """max |w_i A_ij - w_j A_ji| / max |w_i A_ij|."""
        B = self.grid.w[:, None] * self.matrix
        scale = np.max(np.abs(B))
        return float(np.max(np.abs(B - B.T)) / scale) if scale > 0 else 0.0

    def form(self, u, v=None) -> float:
        v = u if v is None else v
        return self.grid.inner(u, self.apply(v))

    def symmetrized(self) -> "DiscreteOperator":
        w = self.grid.w
        A = self.matrix
        S = 0.5 * (A + A.T * w[None, :] / w[:, None])
        return DiscreteOperator(self.grid, S, self.label)

    def similar(self) -> NDArray[np.float64]:
        """sqrt(W) A sqrt(W)^-1, symmetric in the Euclidean sense."""
        sw = np.sqrt(self.grid.w)
        T = sw[:, None] * self.matrix / sw[None, :]
        return 0.5 * (T + T.T)


@dataclass(frozen=True, eq=False)
class _Blocks:
    gs: GroundState
    lap: NDArray[np.float64]
    V: NDArray[np.float64]
    nonlocal_: NDArray[np.float64]


@lru_cache(maxsize=4)
def _blocks(gs: GroundState) -> _Blocks:
    g = gs.grid
    W = gs.W()
    V = gs.conv(W**2)
    # h -> 2 (K*(W h)) W
    nl = 2.0 * W[:, None] * gs.kernel.weighted_matrix() * W[None, :]
    return _Blocks(gs, g.lap_matrix.toarray(), V, nl)


def _check(op: DiscreteOperator, tol: float = SYMMETRY_TOL) -> DiscreteOperator:
    d = op.symmetry_defect()
    if d > tol:
        raise SpectrumError(f"{op.label}: symmetry defect {d:.3e} exceeds {tol:.0e}")
    return op.symmetrized()


def _gs(N, grid, gs):
    return gs if gs is not None else ground_state(N, grid)


def build_vminus(N: int = 7, grid: RadialGrid | None = None, gs: GroundState | None = None) -> DiscreteOperator:
    b = _blocks(_gs(N, grid, gs))
    return _check(DiscreteOperator(b.gs.grid, -np.diag(b.V), "Vminus"))


def build_vplus(N: int = 7, grid: RadialGrid | None = None, gs: GroundState | None = None) -> DiscreteOperator:
    b = _blocks(_gs(N, grid, gs))
    return _check(DiscreteOperator(b.gs.grid, -np.diag(b.V) - b.nonlocal_, "Vplus"))


def build_lminus(N: int = 7, grid: RadialGrid | None = None, gs: GroundState | None = None) -> DiscreteOperator:
    b = _blocks(_gs(N, grid, gs))
    return _check(DiscreteOperator(b.gs.grid, -b.lap - np.diag(b.V), "Lminus"))


def build_lplus(N: int = 7, grid: RadialGrid | None = None, gs: GroundState | None = None) -> DiscreteOperator:
    b = _blocks(_gs(N, grid, gs))
    return _check(DiscreteOperator(b.gs.grid, -b.lap - np.diag(b.V) - b.nonlocal_, "Lplus"))


def build_minus_lm_lp(N: int = 7, grid: RadialGrid | None = None, gs: GroundState | None = None) -> DiscreteOperator:
    gs = _gs(N, grid, gs)
    Lm, Lp = build_lminus(gs=gs), build_lplus(gs=gs)
    return DiscreteOperator(gs.grid, -Lm.matrix @ Lp.matrix, "minusLmLp")


# ---- unstable pair --------------------------------------------------
@dataclass(frozen=True, eq=False)
class EigenPair:
    grid: RadialGrid
    nu: float
    Y1: NDArray[np.float64]
    Y2: NDArray[np.float64]
    M: float
    rhoY: float
    residuals: dict = field(default_factory=dict)

    @property
    def N(self) -> int:
        return self.grid.N

    def sample(self, which: str, r=None, lam: float = 1.0):
        """(Y)_lam(r) = lam^{-(N-2)/2} Y(r/lam) for Y in {Y1, Y2}."""
        Y = {"Y1": self.Y1, "Y2": self.Y2}[which]
        if r is None:
            r = self.grid.r
        if lam == 1.0 and r is self.grid.r:
            return Y.copy()
        r = np.asarray(r, dtype=float)
        return lam ** (-(self.N - 2) / 2) * self.grid.interpolate(Y, r / lam, outside="zero")

    def summary(self) -> dict:
        return {"nu": self.nu, "M": self.M, "rhoY": self.rhoY, "residuals": dict(self.residuals)}


def _start_shift(Lm_t, Lp_t, imag_tol: float) -> list[float]:
    """Candidate nu from the dense spectrum of -L- L+ (similar form)."""
    ev = np.linalg.eigvals(-Lm_t @ Lp_t)
    keep = (ev.real > 0) & (np.abs(ev.imag) <= imag_tol * np.abs(ev))
    if not np.any(keep):
        raise SpectrumError("no real positive eigenvalue of -L-L+; grid too coarse?")
    cand = np.sort(ev.real[keep])
    # The physical nu^2 is O(1); huge values are boundary artefacts of the stencil.
    return [math.sqrt(c) for c in cand if c < 1e3]


def _shifted_block(Lm_t, Lp_t, nu):
    """[[0, L-], [-L+, 0]] - nu I, assembled in place."""
    n = Lm_t.shape[0]
    J = np.zeros((2 * n, 2 * n))
    J[:n, n:] = Lm_t
    J[n:, :n] = -Lp_t
    J[np.diag_indices(2 * n)] = -nu
    return J


def solve_eigen(N: int = 7, grid: RadialGrid | None = None, nu_guess: float | None = None,
                gs: GroundState | None = None, tol: float = 1e-10, imag_tol: float = 1e-8,
                decay_tol: float = 1e-8, seed: int = 0) -> EigenPair:
    gs = _gs(N, grid, gs)
    return _solve_eigen(gs, nu_guess, tol, imag_tol, decay_tol, seed)


@lru_cache(maxsize=4)
def _solve_eigen(gs, nu_guess, tol, imag_tol, decay_tol, seed) -> EigenPair:
    g = gs.grid
    n = g.size
    Lp, Lm = build_lplus(gs=gs), build_lminus(gs=gs)
    Lp_t, Lm_t = Lp.similar(), Lm.similar()
    sw = np.sqrt(g.w)
    shifts = [nu_guess] if nu_guess is not None else _start_shift(Lm_t, Lp_t, imag_tol)[::-1]
    rng = np.random.default_rng(seed)
    W = gs.W()
    last = None
    for nu0 in shifts:
        lu = sl.lu_factor(_shifted_block(Lm_t, Lp_t, nu0), overwrite_a=True, check_finite=False)
        y = np.concatenate([sw * W * rng.random(n), sw * W * rng.random(n)])
        nu = nu0
        for _ in range(30):
            y = sl.lu_solve(lu, y)
            y /= np.linalg.norm(y[:n])
            y1, y2 = y[:n], y[n:]
            nu = float(y1 @ (Lm_t @ y2) / (y1 @ y1))
            res = max(np.linalg.norm(Lp_t @ y1 + nu * y2), np.linalg.norm(Lm_t @ y2 - nu * y1)) / abs(nu)
            if res < tol:
                break
        Y1, Y2 = y[:n] / sw, y[n:] / sw
        tail = abs(Y1[-1]) / np.max(np.abs(Y1))
        last = (nu0, nu, res, tail)
        if nu > 0 and tail <= decay_tol:
            break
    else:
        raise SpectrumError(f"no decaying unstable mode found (last shift, nu, res, tail = {last})")
    s = l2_norm(g, Y1)
    sign = 1.0 if Y1[np.argmax(np.abs(Y1))] > 0 else -1.0
    Y1, Y2 = sign * Y1 / s, sign * Y2 / s
    M = g.inner(Y1, Y2)
    residuals = {
        "plus": l2_norm(g, Lp(Y1) + nu * Y2) / nu,
        "minus": l2_norm(g, Lm(Y2) - nu * Y1) / nu,
        "decay": abs(Y1[-1]) / np.max(np.abs(Y1)),
        "shift": last[0],
    }
    log.info("unstable pair nu=%.12g M=%.8g residuals=%s", nu, M, residuals)
    return EigenPair(g, nu, Y1, Y2, M, l2_norm(g, Y2), residuals)


def orthogonality(pair: EigenPair, gs: GroundState | None = None) -> dict:
    """Cosines <W,Y1>/(|W||Y1|) and <LW,Y2>/(|LW||Y2|)."""
    gs = gs or ground_state(pair.N, pair.grid)
    g = pair.grid
    W, LW = gs.W(), gs.LW()
    return {
        "W_Y1": g.inner(W, pair.Y1) / (l2_norm(g, W) * l2_norm(g, pair.Y1)),
        "LW_Y2": g.inner(LW, pair.Y2) / (l2_norm(g, LW) * l2_norm(g, pair.Y2)),
    }


def kernel_residuals(gs: GroundState) -> dict:
    """|L- W|/|W| and |L+ LW|/|LW|."""
    g = gs.grid
    W, LW = gs.W(), gs.LW()
    return {
        "Lminus_W": l2_norm(g, build_lminus(gs=gs)(W)) / l2_norm(g, W),
        "Lplus_LW": l2_norm(g, build_lplus(gs=gs)(LW)) / l2_norm(g, LW),
    }


# ---- dual fields ----------------------------------------------------
def alpha_fields(theta: float, lam: float, pair: EigenPair | None = None):
    """alpha^{+-} = e^{i theta} lam^-2 (Y2_lam +- i Y1_lam)."""
    if lam <= 0:
        raise ValueError("scale must be positive")
    pair = pair or solve_eigen()
    y1, y2 = pair.sample("Y1", lam=lam), pair.sample("Y2", lam=lam)
    ph = np.exp(1j * theta) / lam**2
    return ph * (y2 + 1j * y1), ph * (y2 - 1j * y1)


def cY_fields(theta: float, lam: float, pair: EigenPair | None = None):
    """cY^{+-} = e^{i theta}/(2M) (Y1_lam +- i Y2_lam)."""
    if lam <= 0:
        raise ValueError("scale must be positive")
    pair = pair or solve_eigen()
    y1, y2 = pair.sample("Y1", lam=lam), pair.sample("Y2", lam=lam)
    ph = np.exp(1j * theta) / (2.0 * pair.M)
    return ph * (y1 + 1j * y2), ph * (y1 - 1j * y2)


def apply_Z(theta: float, lam: float, g, gs: GroundState | None = None):
    """Z g = i Delta g + i f'(e^{i theta} W_lam) g."""
    if lam <= 0:
        raise ValueError("scale must be positive")
    gs = gs or ground_state()
    g = np.asarray(g, dtype=complex)
    B = gs.W(lam, theta)
    return 1j * gs.grid.laplacian(g) + 1j * fprime_apply(gs.conv, B, g)


def apply_Z_block(theta: float, lam: float, g, gs: GroundState | None = None):
    """(e^{i theta}/lam^2)(L- g2 - i L+ g1)_lam evaluated on the grid.

    Valid for lam = 1 directly and for lam = e^{kh} (a shift by k nodes);
    other scales go through interpolation.
    """
    gs = gs or ground_state()
    grid = gs.grid
    g = np.asarray(g, dtype=complex)
    Lp, Lm = build_lplus(gs=gs), build_lminus(gs=gs)
    out = Lm(g.imag) - 1j * Lp(g.real)
    if lam != 1.0:
        out = lam ** (-(grid.N - 2) / 2) * grid.interpolate(out, grid.r / lam)
    return np.exp(1j * theta) / lam**2 * out


def rescale(grid: RadialGrid, u, lam: float):
    """u_lam(r) = lam^{-(N-2)/2} u(r/lam) by spline interpolation."""
    u = np.asarray(u)
    f = lambda v: grid.interpolate(v, grid.r / lam)
    if np.iscomplexobj(u):
        out = f(u.real) + 1j * f(u.imag)
    else:
        out = f(u)
    return lam ** (-(grid.N - 2) / 2) * out
