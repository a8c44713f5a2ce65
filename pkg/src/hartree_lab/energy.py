"""Energy functional, two-bubble expansion and sampled coercivity checks."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .groundstate import GroundState, ground_state
from .linops import EigenPair, alpha_fields, solve_eigen
from .nonlinear import F_density, f_apply, fprime_apply
from .radial import RadialGrid, h1_inner, h1_norm, l2_norm, random_field

log = logging.getLogger(__name__)


class GaugeError(ValueError):
    """Configuration outside the small-gauge regime."""


@dataclass
class TwoBubbleConfig:
    zeta: float = -math.pi / 2
    mu: float = 1.0
    theta: float = 0.0
    lam: float = 0.05
    g: np.ndarray | None = None

    def __post_init__(self):
        if not (self.lam > 0 and self.mu > 0):
            raise ValueError("scales must be positive")

    def gauge(self, grid: RadialGrid | None = None) -> float:
        gn = 0.0 if self.g is None or grid is None else h1_norm(grid, self.g)
        return abs(self.zeta + math.pi / 2) + abs(self.mu - 1) + abs(self.theta) + self.lam + gn

    def bubbles(self, gs: GroundState):
        return gs.W(self.mu, self.zeta) + 0j, gs.W(self.lam, self.theta) + 0j

    def background(self, gs: GroundState):
        A, B = self.bubbles(gs)
        return A + B

    def field(self, gs: GroundState):
        u = self.background(gs)
        return u if self.g is None else u + self.g


# ---- energy and derivatives ----------------------------------------
def _finite(u):
    u = np.asarray(u)
    if not np.all(np.isfinite(u)):
        raise FloatingPointError("non-finite field")
    return u


def kinetic_tail(grid: RadialGrid, u) -> float:
    """int_{|x|>r_max} |grad u|^2 for a harmonic tail u = u(R)(R/r)^{N-2}."""
    N, R = grid.N, grid.r_max
    return grid.sphere * (N - 2) * R ** (N - 2) * abs(u[-1]) ** 2


def energy(gs: GroundState, u, tail: bool = True) -> float:
    """E(u) = 1/2 |grad u|^2 - int F(u).

    With ``tail`` the kinetic energy beyond the outer node is added assuming
    harmonic decay; the potential tail is O(R^{-(3N-8)}) and dropped.
    Without it, E is the exact discrete functional whose gradient is
    ``gradient``.
    """
    u = _finite(u)
    g = gs.grid
    kin = h1_norm(g, u) ** 2 + (kinetic_tail(g, u) if tail else 0.0)
    return 0.5 * kin - g.sphere * float(np.sum(g.w * F_density(gs.conv, u)))


def gradient(gs: GroundState, u):
    """DE(u) = -Delta u - f(u), the L2 gradient of the discrete energy."""
    u = np.asarray(u)
    return -gs.grid.laplacian(u) - f_apply(gs.conv, u)


def hessian_apply(gs: GroundState, u, g):
    """D^2E(u) g = -Delta g - f'(u) g."""
    return -gs.grid.laplacian(np.asarray(g)) - fprime_apply(gs.conv, u, g)


def hessian_form(gs: GroundState, u, g) -> float:
    """<D^2E(u)g, g>, with the kinetic part in flux form."""
    return h1_norm(gs.grid, g) ** 2 - gs.grid.inner(fprime_apply(gs.conv, u, g), g)


def taylor_remainder(gs: GroundState, bg, g) -> float:
    """E(bg+g) - E(bg) - <DE(bg),g> - 1/2 <D^2E(bg)g,g>."""
    grid = gs.grid
    first = h1_inner(grid, bg, g) - grid.inner(f_apply(gs.conv, bg), g)
    return energy(gs, bg + g, False) - energy(gs, bg, False) - first - 0.5 * hessian_form(gs, bg, g)


# ---- two bubbles ---------------------------------------------------
def two_bubble_energy_gap(cfg: TwoBubbleConfig, gs: GroundState | None = None,
                          max_gauge: float = 0.3) -> dict:
    """E(A + B) - 2E(W) for A = e^{i zeta}W_mu, B = e^{i theta}W_lam.

    ``gap`` is assembled from the cross terms only, so it does not carry the
    grid error of E(W_lam) - E(W).  ``direct`` is the plain difference.
    ``density`` is the lowest order pure-modulus interaction
    -1/2 int (K*|A|^2)|B|^2 and ``phase`` the part linear in Re(A conj B).
    """
    gs = gs or ground_state()
    if cfg.gauge() > max_gauge:
        raise GaugeError(f"gauge {cfg.gauge():.3g} exceeds {max_gauge}")
    grid, K = gs.grid, gs.conv
    A, B = cfg.bubbles(gs)
    rA, rB = np.abs(A) ** 2, np.abs(B) ** 2
    m = 2.0 * np.real(np.conj(A) * B)
    S = grid.sphere
    kin = h1_inner(grid, A, B)
    kA, kB, km = K(rA), K(rB), K(m)
    density = -0.25 * S * float(np.sum(grid.w * (kA * rB + kB * rA)))
    phase = kin - 0.5 * S * float(np.sum(grid.w * (kA + kB) * m))
    quad = -0.25 * S * float(np.sum(grid.w * km * m))
    gap = density + phase + quad
    N = grid.N
    from .groundstate import constants

    C2 = constants(N, grid).C2
    return {
        "gap": gap,
        "model": C2 * cfg.theta * cfg.lam ** ((N - 2) / 2),
        "density": density,
        "phase": phase,
        "quadratic": quad,
        "direct": energy(gs, A + B) - 2.0 * energy(gs, gs.W()),
        "gauge": cfg.gauge(),
    }


def linear_term(cfg: TwoBubbleConfig, gs: GroundState | None = None) -> dict:
    """<DE(A + B), g>; ``identity`` is -<f(A+B) - f(A) - f(B), g>."""
    gs = gs or ground_state()
    if cfg.g is None:
        return {"value": 0.0, "identity": 0.0}
    grid, K = gs.grid, gs.conv
    A, B = cfg.bubbles(gs)
    g = cfg.g
    value = h1_inner(grid, A + B, g) - grid.inner(f_apply(K, A + B), g)
    ident = -grid.inner(f_apply(K, A + B) - f_apply(K, A) - f_apply(K, B), g)
    return {"value": value, "identity": ident, "g_h1": h1_norm(grid, g)}


# ---- projections ---------------------------------------------------
def project_pi_psi(grid: RadialGrid, u, r_cut: float) -> dict:
    """Pi_r u = u(r) inside r, u outside; Psi_r u = u - Pi_r u."""
    if not (grid.r_min <= r_cut <= grid.r_max):
        raise ValueError("r_cut outside grid range")
    u = np.asarray(u)
    val = grid.interpolate(u.real, np.array([r_cut]))[0]
    if np.iscomplexobj(u):
        val = val + 1j * grid.interpolate(u.imag, np.array([r_cut]))[0]
    inside = grid.r < r_cut
    pi = np.where(inside, val, u)
    return {"pi": pi, "psi": u - pi, "value": val}


def outer_h1(grid: RadialGrid, u, r: float) -> float:
    """(int_{|x| >= r} |grad u|^2)^{1/2} on the flux nodes."""
    du = grid.ds(u)
    mask = grid.r >= r
    return math.sqrt(grid.sphere * float(np.sum((grid.flux_weights * np.abs(du) ** 2)[mask])))


def strauss_ratio(grid: RadialGrid, u, r: float) -> float:
    """|u(r)| r^{(N-2)/2} / |Pi_r u|_H1."""
    val = abs(project_pi_psi(grid, u, r)["value"])
    den = outer_h1(grid, u, r)
    return val * r ** ((grid.N - 2) / 2) / den if den > 0 else math.inf


def strauss_constant(gs: GroundState, r_range=(1.0, 100.0), samples: int = 40) -> float:
    """Strauss constant measured from W (sharp value 1/sqrt((N-2)|S^{N-1}|))."""
    rs = np.geomspace(*r_range, samples)
    return max(strauss_ratio(gs.grid, gs.W(), r) for r in rs)


def orth_fields(cfg: TwoBubbleConfig, gs: GroundState):
    """The four constraint fields paired with g."""
    return [
        1j * gs.LW(cfg.mu, cfg.zeta),
        -gs.W(cfg.mu, cfg.zeta) + 0j,
        1j * gs.LW(cfg.lam, cfg.theta),
        -gs.W(cfg.lam, cfg.theta) + 0j,
    ]


def project_orthogonal(grid: RadialGrid, g, fields):
    """Remove the span of ``fields`` so that <f_k, g> = 0 for each k.

    <.,.> is the real L2 pairing, and the projection is L2-orthogonal.
    """
    g = np.asarray(g, dtype=complex)
    G = np.array([[grid.inner(a, b) for b in fields] for a in fields])
    rhs = np.array([grid.inner(a, g) for a in fields])
    c = np.linalg.solve(G, rhs)
    return g - sum(ck * fk for ck, fk in zip(c, fields))


def h_lambda_apply(cfg: TwoBubbleConfig, g, gs: GroundState | None = None):
    """H_lam g = -Delta g - f'(A)g - f'(B)g: the two bubbles decoupled."""
    gs = gs or ground_state()
    A, B = cfg.bubbles(gs)
    g = np.asarray(g, dtype=complex)
    return -gs.grid.laplacian(g) - fprime_apply(gs.conv, A, g) - fprime_apply(gs.conv, B, g)


def h_lambda_form(cfg: TwoBubbleConfig, g, gs: GroundState) -> float:
    A, B = cfg.bubbles(gs)
    K = gs.conv
    return h1_norm(gs.grid, g) ** 2 - gs.grid.inner(fprime_apply(K, A, g) + fprime_apply(K, B, g), g)


# ---- coercivity ----------------------------------------------------
@dataclass
class QuadraticFormReport:
    lam: float
    trials: int
    form: np.ndarray
    corrections: np.ndarray
    h1sq: np.ndarray
    min_ratio: float
    max_ratio: float
    violations: int
    regional: dict = field(default_factory=dict)
    eigen_direction: dict = field(default_factory=dict)

    @property
    def constant(self) -> float:
        """C with Q(g) >= |g|^2 / C."""
        return 1.0 / self.min_ratio if self.min_ratio > 0 else math.inf

    def to_dict(self) -> dict:
        return {
            "lam": self.lam, "trials": self.trials,
            "min_ratio": self.min_ratio, "max_ratio": self.max_ratio,
            "C": self.constant, "violations": self.violations,
            "regional": self.regional, "eigen_direction": self.eigen_direction,
        }


def all_alphas(cfg: TwoBubbleConfig, pair: EigenPair):
    return [*alpha_fields(cfg.zeta, cfg.mu, pair), *alpha_fields(cfg.theta, cfg.lam, pair)]


def _a_coeffs(grid, g, alphas):
    return np.array([grid.inner(a, g) for a in alphas])


def corrected_form(cfg: TwoBubbleConfig, g, gs: GroundState, pair: EigenPair, alphas=None):
    """(1/2 <D^2E(A+B)g,g>, nu/(2M) sum (a_j^{+-})^2).

    a_1^{+-} pair g with alpha^{+-}_{zeta,mu}, a_2^{+-} with alpha^{+-}_{theta,lam}.
    """
    if alphas is None:
        alphas = all_alphas(cfg, pair)
    a = _a_coeffs(gs.grid, g, alphas)
    form = 0.5 * hessian_form(gs, cfg.background(gs), g)
    return form, pair.nu / (2 * pair.M) * float(np.sum(a**2))


def _region_h1(grid, u, r_cut, inside: bool):
    du2 = grid.flux_weights * np.abs(grid.ds(u)) ** 2
    mask = grid.r <= r_cut if inside else grid.r > r_cut
    return grid.sphere * float(np.sum(du2[mask]))


def regional_forms(gs: GroundState, pair: EigenPair, g_real, r1: float, r2: float, c: float) -> dict:
    """Real-field regional quadratic forms and their penalty terms.

    Returns for each inequality the pair (lhs, penalty) so that the
    inequality reads lhs >= -C * penalty (or lhs >= c|g|^2 - C penalty for
    the global ones, where lhs already has c|g|^2 subtracted).
    """
    grid, K = gs.grid, gs.conv
    W, LW = gs.W(), gs.LW()
    V = K(W**2)
    g = np.asarray(g_real, dtype=float)
    pot_m = grid.inner(V * g, g)
    pot_p = pot_m + 2.0 * grid.inner(K(W * g) * W, g)
    tot = h1_norm(grid, g) ** 2
    pen_p = grid.inner(W, g) ** 2 + grid.inner(pair.Y2, g) ** 2
    pen_m = grid.inner(LW, g) ** 2
    out = {}
    for name, pot, pen in (("plus", pot_p, pen_p), ("minus", pot_m, pen_m)):
        out[f"{name}_1"] = (tot - pot - c * tot, pen)
        lo1, hi1 = _region_h1(grid, g, r1, True), _region_h1(grid, g, r1, False)
        out[f"{name}_2"] = ((1 - 2 * c) * lo1 + c * hi1 - pot, pen)
        lo2, hi2 = _region_h1(grid, g, r2, True), _region_h1(grid, g, r2, False)
        out[f"{name}_3"] = (c * lo2 + (1 - 2 * c) * hi2 - pot, pen)
    return out


def fit_penalty(pairs) -> dict:
    """Smallest C with lhs + C * penalty >= 0 over all samples."""
    lhs = np.array([p[0] for p in pairs])
    pen = np.array([p[1] for p in pairs])
    neg = lhs < 0
    bad = int(np.sum(neg & (pen <= 1e-14 * np.abs(lhs))))
    C = float(np.max(-lhs[neg] / pen[neg])) if np.any(neg & (pen > 0)) else 0.0
    return {"C": C, "violations": bad, "min_lhs": float(lhs.min())}


def coercivity_suite(cfg: TwoBubbleConfig, trials: int = 500, gs: GroundState | None = None,
                     pair: EigenPair | None = None, seed: int = 0, dump: str | Path | None = None,
                     r1: float = 20.0, r2: float = 0.05, c: float = 0.02) -> QuadraticFormReport:
    """Sample Q(g) = 1/2<D^2E g,g> + nu/(2M) sum a^2 over projected random g."""
    gs = gs or ground_state()
    pair = pair or solve_eigen(gs.N, gs.grid)
    grid = gs.grid
    rng = np.random.default_rng(seed)
    fields = orth_fields(cfg, gs)
    alphas = all_alphas(cfg, pair)
    forms, corr, h1 = np.empty(trials), np.empty(trials), np.empty(trials)
    bad = []
    regional = []
    for k in range(trials):
        g = project_orthogonal(grid, random_field(grid, rng, bumps=int(rng.integers(1, 4))), fields)
        forms[k], corr[k] = corrected_form(cfg, g, gs, pair, alphas)
        h1[k] = h1_norm(grid, g) ** 2
        if forms[k] + corr[k] <= 0:
            bad.append((k, g))
        if k < 200:
            # real-field forms around W at unit scale, both components
            regional.append(regional_forms(gs, pair, g.real, r1, r2, c))
            regional.append(regional_forms(gs, pair, g.imag, r1, r2, c))
    ratio = (forms + corr) / h1
    reg = {key: fit_penalty([row[key] for row in regional]) for key in regional[0]} if regional else {}
    # g along the unstable mode direction, projected
    yp = project_orthogonal(grid, pair.sample("Y1", lam=cfg.mu) * np.exp(1j * cfg.zeta), fields)
    f1, c1 = corrected_form(cfg, yp, gs, pair, alphas)
    eig = {"form": f1, "correction": c1, "ratio": (f1 + c1) / h1_norm(grid, yp) ** 2}
    if bad and dump is not None:
        _dump_violations(dump, grid, bad)
    rep = QuadraticFormReport(cfg.lam, trials, forms, corr, h1, float(ratio.min()), float(ratio.max()),
                              len(bad), reg, eig)
    log.info("coercivity lam=%g min ratio %.4g violations %d", cfg.lam, rep.min_ratio, rep.violations)
    return rep


def _dump_violations(path, grid, bad):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["trial", "r", "re", "im"])
        for k, g in bad:
            for r, v in zip(grid.r, g):
                w.writerow([k, f"{r:.17g}", f"{v.real:.17g}", f"{v.imag:.17g}"])
