"""Two-bubble decomposition and the modulation equations."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .groundstate import GroundState, constants, ground_state
from .linops import EigenPair, alpha_fields, solve_eigen
from .nonlinear import f_apply, fprime_apply
from .radial import h1_norm

log = logging.getLogger(__name__)


class ModulationError(RuntimeError):
    """Decomposition failed or the modulation system is degenerate."""


def wrap_phase(x: float) -> float:
    """Representative in (-pi, pi]."""
    y = math.remainder(x, 2 * math.pi)
    return math.pi if y == -math.pi else y


@dataclass(frozen=True, eq=False)
class ModulationState:
    zeta: float
    mu: float
    theta: float
    lam: float
    g: np.ndarray
    a1p: float = 0.0
    a1m: float = 0.0
    a2p: float = 0.0
    a2m: float = 0.0
    residuals: tuple = ()

    @property
    def params(self) -> np.ndarray:
        return np.array([self.zeta, self.mu, self.theta, self.lam])

    def summary(self, gs: GroundState | None = None) -> dict:
        out = {k: float(getattr(self, k)) for k in ("zeta", "mu", "theta", "lam", "a1p", "a1m", "a2p", "a2m")}
        out["residuals"] = [float(r) for r in self.residuals]
        if gs is not None:
            out["g_h1"] = h1_norm(gs.grid, self.g)
        return out


# ---- fields attached to the parameters ---------------------------------
def bubble_fields(gs: GroundState, p):
    """A = e^{i zeta}W_mu, B = e^{i theta}W_lam and their Lambda versions."""
    zeta, mu, theta, lam = p
    r, b = gs.grid.r, gs.bubble
    return {
        "A": b.W(r, mu, zeta) + 0j, "LA": b.LW(r, mu, zeta) + 0j, "LLA": b.LLW(r, mu, zeta) + 0j,
        "B": b.W(r, lam, theta) + 0j, "LB": b.LW(r, lam, theta) + 0j, "LLB": b.LLW(r, lam, theta) + 0j,
    }


def compose(gs: GroundState, p, g=None):
    f = bubble_fields(gs, p)
    u = f["A"] + f["B"]
    return u if g is None else u + g


def constraint_fields(gs: GroundState, p, F=None):
    """i e^{i zeta} LW_mu, -e^{i zeta} W_mu, i e^{i theta} LW_lam, -e^{i theta} W_lam."""
    F = F or bubble_fields(gs, p)
    return [1j * F["LA"], -F["A"], 1j * F["LB"], -F["B"]]


def constraint_residuals(gs: GroundState, p, u) -> np.ndarray:
    F = bubble_fields(gs, p)
    g = u - F["A"] - F["B"]
    return np.array([gs.grid.inner(phi, g) for phi in constraint_fields(gs, p, F)])


def _param_derivatives(F, p):
    """d/dp of (constraint fields) and of the ansatz A + B, analytic."""
    zeta, mu, theta, lam = p
    dphi = [  # rows: constraint k; columns: zeta, mu, theta, lam
        [-F["LA"], -1j * F["LLA"] / mu, 0, 0],
        [-1j * F["A"], F["LA"] / mu, 0, 0],
        [0, 0, -F["LB"], -1j * F["LLB"] / lam],
        [0, 0, -1j * F["B"], F["LB"] / lam],
    ]
    dU = [1j * F["A"], -F["LA"] / mu, 1j * F["B"], -F["LB"] / lam]
    return dphi, dU


def constraint_jacobian(gs: GroundState, p, g) -> np.ndarray:
    """J_kp = <d_p phi_k, g> - <phi_k, d_p U>."""
    grid = gs.grid
    F = bubble_fields(gs, p)
    phis = constraint_fields(gs, p, F)
    dphi, dU = _param_derivatives(F, p)
    J = np.empty((4, 4))
    for k in range(4):
        for j in range(4):
            t = 0.0 if np.isscalar(dphi[k][j]) else grid.inner(dphi[k][j], g)
            J[k, j] = t - grid.inner(phis[k], dU[j])
    return J


def _scaled(J, p):
    """Columns rescaled to the unknowns (mu^2 zeta', mu mu', lam^2 theta', lam lam')."""
    _, mu, _, lam = p
    return J / np.array([mu**2, mu, lam**2, lam])[None, :]


def decompose(u, guess, gs: GroundState | None = None, pair: EigenPair | None = None,
              tol: float = 1e-10, maxiter: int = 50, cond_max: float = 1e8) -> ModulationState:
    """Newton solve of the four orthogonality conditions for (zeta, mu, theta, lam)."""
    gs = gs or ground_state()
    u = np.asarray(u, dtype=complex)
    p = np.array(guess, dtype=float)
    scale = max(h1_norm(gs.grid, u), 1.0)
    res = constraint_residuals(gs, p, u)
    for it in range(maxiter):
        g = u - compose(gs, p)
        J = constraint_jacobian(gs, p, g)
        c = np.linalg.cond(_scaled(J, p))
        if not np.isfinite(c) or c > cond_max:
            raise ModulationError(f"near-degenerate modulation (cond {c:.3g})")
        step = np.linalg.solve(J, -res)
        p = p + step
        if p[1] <= 0 or p[3] <= 0:
            raise ModulationError(f"Newton left the admissible set at iteration {it}: {p}")
        res = constraint_residuals(gs, p, u)
        # residuals are pairings with unit-size fields; scaled by |u| for the test
        if np.max(np.abs(res)) <= tol * scale and np.max(np.abs(step)) < 1e-6:
            break
    else:
        raise ModulationError(f"Newton did not converge; residuals {res}")
    p[0], p[2] = wrap_phase(p[0]), wrap_phase(p[2])
    g = u - compose(gs, p)
    return with_modes(ModulationState(*p, g=g, residuals=tuple(res)), gs, pair)


def with_modes(s: ModulationState, gs: GroundState, pair: EigenPair | None = None) -> ModulationState:
    pair = pair or solve_eigen(gs.N, gs.grid)
    grid = gs.grid
    a1p, a1m = (grid.inner(a, s.g) for a in alpha_fields(s.zeta, s.mu, pair))
    a2p, a2m = (grid.inner(a, s.g) for a in alpha_fields(s.theta, s.lam, pair))
    return replace(s, a1p=a1p, a1m=a1m, a2p=a2p, a2m=a2m)


# ---- modulation system -------------------------------------------------
@dataclass
class ModulationSystem:
    M: np.ndarray
    B: np.ndarray
    K: float
    rates: dict
    diag_dominant: bool
    generic: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"M": self.M.tolist(), "B": self.B.tolist(), "K": self.K,
                "rates": self.rates, "diag_dominant": self.diag_dominant}


def interaction_K(gs: GroundState, s: ModulationState) -> float:
    """K = -<e^{i theta} LW_lam, f(U+g) - f(U) - f'(U)g>, U = A + B."""
    K = gs.conv
    F = bubble_fields(gs, s.params)
    U = F["A"] + F["B"]
    rem = f_apply(K, U + s.g) - f_apply(K, U) - fprime_apply(K, U, s.g)
    return -gs.grid.inner(F["LB"], rem)


def explicit_matrix(gs: GroundState, s: ModulationState) -> np.ndarray:
    """M_ij written row by row as obtained from differentiating each pairing."""
    ip = gs.grid.inner
    zeta, mu, theta, lam = s.params
    F = bubble_fields(gs, s.params)
    A, LA, LLA, B, LB, LLB, g = F["A"], F["LA"], F["LLA"], F["B"], F["LB"], F["LLB"], s.g
    m2, l2 = mu**-2, lam**-2
    return np.array([
        [m2 * (-ip(1j * LA, 1j * A) - ip(LA, g)), m2 * (ip(1j * LA, LA) - ip(1j * LLA, g)),
         l2 * ip(1j * LA, -1j * B), l2 * ip(1j * LA, LB)],
        [m2 * (ip(A, 1j * A) - ip(1j * A, g)), m2 * (-ip(A, LA) + ip(LA, g)),
         l2 * ip(A, 1j * B), l2 * ip(-A, LB)],
        [m2 * ip(1j * LB, -1j * A), m2 * ip(1j * LB, LA),
         l2 * (ip(1j * LB, -1j * B) - ip(LB, g)), l2 * (ip(1j * LB, LB) - ip(1j * LLB, g))],
        [m2 * ip(B, 1j * A), -m2 * ip(B, LA),
         l2 * (ip(B, 1j * B) - ip(1j * B, g)), l2 * (ip(-B, LB) + ip(LB, g))],
    ])


def explicit_sources(gs: GroundState, s: ModulationState) -> np.ndarray:
    """B_i after removing i Delta g with the kernel of the adjoint linearization."""
    ip, K = gs.grid.inner, gs.conv
    F = bubble_fields(gs, s.params)
    A, B, g = F["A"], F["B"], s.g
    N0 = f_apply(K, A + B + g) - f_apply(K, A) - f_apply(K, B)
    fA, fB = fprime_apply(K, A, g), fprime_apply(K, B, g)
    return np.array([
        -ip(F["LA"], N0 - fA),
        ip(A, 1j * (N0 - fA)),
        -ip(F["LB"], N0 - fB),
        ip(B, 1j * (N0 - fB)),
    ])


def generic_system(gs: GroundState, s: ModulationState, h: float = 1e-5):
    """Same system from d/dt <phi_k(p), g> = 0 with finite-difference d_p phi_k."""
    grid, K = gs.grid, gs.conv
    p = s.params
    F = bubble_fields(gs, p)
    phis = constraint_fields(gs, p, F)
    _, dU = _param_derivatives(F, p)
    M = np.empty((4, 4))
    for j in range(4):
        e = np.zeros(4)
        e[j] = h * (p[j] if j in (1, 3) else 1.0)
        plus, minus = constraint_fields(gs, p + e), constraint_fields(gs, p - e)
        for k in range(4):
            dphi = (plus[k] - minus[k]) / (2 * e[j])
            M[k, j] = grid.inner(dphi, s.g) - grid.inner(phis[k], dU[j])
    M = _scaled(M, p)
    Rg = 1j * grid.laplacian(s.g) + 1j * (f_apply(K, F["A"] + F["B"] + s.g) - f_apply(K, F["A"]) - f_apply(K, F["B"]))
    Bv = np.array([-grid.inner(phi, Rg) for phi in phis])
    return M, Bv


def diagonally_dominant(M) -> bool:
    d = np.abs(np.diag(M))
    off = np.sum(np.abs(M), axis=1) - d
    return bool(np.all(d > off))


def assemble_system(s: ModulationState, gs: GroundState | None = None, generic: bool = False) -> ModulationSystem:
    gs = gs or ground_state()
    M, B = explicit_matrix(gs, s), explicit_sources(gs, s)
    dom = diagonally_dominant(M)
    if not dom:
        log.warning("modulation matrix not diagonally dominant at lam=%g", s.lam)
    try:
        x = np.linalg.solve(M, B)
    except np.linalg.LinAlgError as exc:
        raise ModulationError("singular modulation matrix") from exc
    mu, lam = s.mu, s.lam
    rates = {"zeta": x[0] / mu**2, "mu": x[1] / mu, "theta": x[2] / lam**2, "lam": x[3] / lam}
    out = ModulationSystem(M, B, interaction_K(gs, s), rates, dom)
    if generic:
        Mg, Bg = generic_system(gs, s)
        out.generic = {"M": Mg, "B": Bg,
                       "M_err": float(np.max(np.abs(Mg - M)) / np.max(np.abs(M))),
                       "B_err": float(np.max(np.abs(Bg - B)))}
    return out


# ---- reduced dynamics --------------------------------------------------
def reduced_rates(theta: float, lam: float, K: float = 0.0, N: int = 7, t: float | None = None,
                  c: float = 1.0, C=None) -> dict:
    """Leading-order rates for lam and theta; zeta', mu' only bounded."""
    if lam <= 0:
        raise ValueError("lam must be positive")
    C = C or constants(N)
    out = {
        "lambda_dot": 3 * C.C2 / C.C1 * lam ** ((N - 4) / 2),
        "theta_dot": -C.C3 / C.C1 * theta * lam ** ((N - 6) / 2) + K / (lam**2 * C.C1),
    }
    if t is not None:
        bound = c * abs(t) ** (-(N - 3) / (N - 6))
        out["zeta_dot_bound"] = bound
        out["mu_dot_bound"] = bound
    return out


def kappa_trajectory(t, N: int = 7, C=None):
    C = C or constants(N)
    return C.kappa * np.abs(t) ** (-2.0 / (N - 6))


def mode_rates(s: ModulationState, nu: float, t: float | None = None, c: float = 1.0, N: int = 7) -> dict:
    """Model rates of the stable/unstable components and envelope radii."""
    out = {
        "da1p": nu / s.mu**2 * s.a1p, "da1m": -nu / s.mu**2 * s.a1m,
        "da2p": nu / s.lam**2 * s.a2p, "da2m": -nu / s.lam**2 * s.a2m,
    }
    if t is not None:
        e = abs(t) ** (-N / (2 * (N - 6)))
        out["env1"] = c / s.mu**2 * e
        out["env2"] = c / s.lam**2 * e
    return out


# ---- initial data ------------------------------------------------------
class BoxError(ValueError):
    """Initial parameters outside the admissible box."""


def initial_box(T: float, N: int = 7, C=None) -> dict:
    C = C or constants(N)
    aT = abs(T)
    return {
        "lam_center": C.kappa * aT ** (-2 / (N - 6)),
        "lam_radius": 0.5 * aT ** (-5 / (2 * (N - 6))),
        "a_radius": 0.5 * aT ** (-N / (2 * (N - 6))),
    }


def build_initial_data(T: float, lam0: float, a1_0: float, a2_0: float, gs: GroundState | None = None,
                       pair: EigenPair | None = None, check_box: bool = True, cond_max: float = 1e12):
    """u(T) = -iW + W_lam0 + g0 with g0 in the span of the eight constraint fields.

    g0 solves the four orthogonality conditions at (-pi/2, 1, 0, lam0) and
    the four mode conditions (a1^-, a1^+, a2^-, a2^+) = (0, a1_0, 0, a2_0).
    Returns (u, g0, info).
    """
    gs = gs or ground_state()
    pair = pair or solve_eigen(gs.N, gs.grid)
    grid, N = gs.grid, gs.N
    if T >= 0:
        raise BoxError("T must be negative")
    if not 100 * grid.r_min <= lam0 <= grid.r_max / 100:
        raise BoxError(f"lam0 = {lam0:.3g} is not resolved by the grid [{grid.r_min:.3g}, {grid.r_max:.3g}]; "
                       "choose T with kappa |T|^-2/(N-6) inside the grid")
    box = initial_box(T, N)
    if check_box and (abs(lam0 - box["lam_center"]) > box["lam_radius"]
                      or abs(a1_0) > box["a_radius"] or abs(a2_0) > box["a_radius"]):
        raise BoxError(f"(lam0, a1, a2) = ({lam0}, {a1_0}, {a2_0}) outside box {box}")
    p = np.array([-math.pi / 2, 1.0, 0.0, lam0])
    a1p, a1m = alpha_fields(-math.pi / 2, 1.0, pair)
    a2p, a2m = alpha_fields(0.0, lam0, pair)
    fields = constraint_fields(gs, p) + [a1m, a1p, a2m, a2p]
    rhs = np.array([0, 0, 0, 0, 0, a1_0, 0, a2_0], dtype=float)
    G = np.array([[grid.inner(a, b) for b in fields] for a in fields])
    # fields have very different sizes; equilibrate before judging conditioning
    d = 1.0 / np.sqrt(np.abs(np.diag(G)))
    Gs = d[:, None] * G * d[None, :]
    cond = np.linalg.cond(Gs)
    if cond > cond_max:
        raise ModulationError(f"ill-conditioned constraint Gram matrix (cond {cond:.3g})")
    c = d * np.linalg.solve(Gs, d * rhs)
    g0 = sum(ck * fk for ck, fk in zip(c, fields))
    u = compose(gs, p, g0)
    info = {"cond": cond, "g_h1": h1_norm(grid, g0), "pairings": [grid.inner(f, g0) for f in fields],
            "size_scale": abs(T) ** (-N / (2 * (N - 6)))}
    return u, g0, info
