"""Cut-off virial weight, the operators A(lam), A0(lam) and the corrected phase psi.

The weight is built in the log variable s = log(r/R)/log(Rt/R) so that the
outer radius Rt = R exp(Theta/c) never has to be formed: for c = 1e-3 it is
far beyond floating point range.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import trapezoid

from .groundstate import GroundState, constants, ground_state
from .nonlinear import f_apply, fprime_apply
from .radial import RadialGrid, h1_norm, random_field

THETA = 2.5  # > max |sigma'| = 35/16 keeps q'' >= -c


class AuditError(RuntimeError):
    """A property of the virial weight failed its audit."""


_SMOOTHSTEP = np.poly1d([-20.0, 70.0, -84.0, 35.0, 0.0, 0.0, 0.0, 0.0])


def _sigma(s, k: int = 0):
    """k-th derivative of 1 - S(s), S = 35s^4 - 84s^5 + 70s^6 - 20s^7 (C^3 smoothstep)."""
    s = np.clip(np.asarray(s, dtype=float), 0.0, 1.0)
    if k == 0:
        return 1.0 - _SMOOTHSTEP(s)
    return -_SMOOTHSTEP.deriv(k)(s)


@dataclass(frozen=True)
class VirialWeight:
    N: int
    c: float
    R: float
    log_Rt: float
    audit: dict = field(default_factory=dict, compare=False)

    @property
    def L(self) -> float:
        """log(Rt/R) = Theta/c."""
        return self.log_Rt - math.log(self.R)

    @property
    def R_tilde(self) -> float:
        return math.exp(self.log_Rt) if self.log_Rt < 700 else math.inf

    def s(self, r):
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore"):
            return np.clip((np.log(r) - math.log(self.R)) / self.L, 0.0, 1.0)

    def dq(self, r):
        """q'(r) = r sigma(s)."""
        r = np.asarray(r, dtype=float)
        return r * _sigma(self.s(r))

    def d2q(self, r):
        s = self.s(r)
        return _sigma(s) + _sigma(s, 1) / self.L

    def lap(self, r):
        """Delta q = q'' + (N-1) q'/r."""
        s = self.s(r)
        return self.N * _sigma(s) + _sigma(s, 1) / self.L

    def bilap(self, r):
        """Delta^2 q, as r^-2 times a function of s."""
        r = np.asarray(r, dtype=float)
        return self.bilap_scaled(self.s(r)) / r**2

    def bilap_scaled(self, s):
        """r^2 Delta^2 q in terms of s."""
        N, L = self.N, self.L
        s1, s2, s3 = _sigma(s, 1), _sigma(s, 2), _sigma(s, 3)
        return (N * s2 + s3 / L) / L**2 + (N - 2) * (N * s1 + s2 / L) / L

    def q(self, r):
        """q(r) = int_0^r q'; equals r^2/2 up to R (only finite r are supported)."""
        r = np.atleast_1d(np.asarray(r, dtype=float))
        out = 0.5 * np.minimum(r, self.R) ** 2
        for i, ri in enumerate(r):
            if ri > self.R:
                t = np.geomspace(self.R, ri, 2001)
                out[i] += trapezoid(self.dq(t), t)
        return out


def audit_weight(w: VirialWeight, points: int = 20480) -> dict:
    """P1-P5 on a fine uniform grid in s (log-uniform in r over [R, Rt])."""
    s = np.linspace(0.0, 1.0, points)
    sig, s1 = _sigma(s), _sigma(s, 1)
    d2q = sig + s1 / w.L
    lap = w.N * sig + s1 / w.L
    r2b = w.bilap_scaled(s)
    inner = np.geomspace(1e-3 * w.R, w.R, 200)
    out = {
        "P1": float(np.max(np.abs(w.dq(inner) - inner))),          # q' = r below R
        "P2": float(abs(_sigma(1.0))),                              # q' = 0 from Rt on
        "P3_grad": float(np.max(sig)),                              # |q'|/r <= 1
        "P3_lap": float(np.max(np.abs(lap))),                       # |Delta q| <= N + 1
        "P4_d2q": float(np.min(d2q)),                               # >= -c
        "P4_dq_r": float(np.min(sig)),                              # >= -c
        "P5": float(np.max(r2b)),                                   # <= c
    }
    checks = {
        "P1": out["P1"] == 0.0,
        "P2": out["P2"] == 0.0,
        "P3": out["P3_grad"] <= 1.0 and out["P3_lap"] <= w.N + 1,
        "P4": out["P4_d2q"] >= -w.c and out["P4_dq_r"] >= -w.c,
        "P5": out["P5"] <= w.c,
    }
    out["margins"] = {
        "P3": min(1.0 - out["P3_grad"], w.N + 1 - out["P3_lap"]),
        "P4": min(out["P4_d2q"], out["P4_dq_r"]) + w.c,
        "P5": w.c - out["P5"],
    }
    out["pass"] = checks
    return out


def build_weight(c: float = 1e-3, R: float = 20.0, N: int = 7, theta: float = THETA) -> VirialWeight:
    if not (0 < c <= 0.1) or R < 1:
        raise ValueError("need 0 < c <= 0.1 and R >= 1")
    w = VirialWeight(N, c, R, math.log(R) + theta / c)
    rep = audit_weight(w)
    bad = [k for k, ok in rep["pass"].items() if not ok]
    if bad:
        raise AuditError(f"virial weight fails {bad}: {rep}")
    return VirialWeight(N, c, R, w.log_Rt, rep)


# ---- operators -----------------------------------------------------------
def _apply(grid: RadialGrid, w: VirialWeight, lam: float, h, factor: float):
    h = np.asarray(h)
    x = grid.r / lam
    return factor / lam**2 * w.lap(x) * h + w.dq(x) / lam * grid.dr(h)


def apply_A(grid: RadialGrid, w: VirialWeight, lam: float, h):
    """A(lam)h = (N-2)/(2N lam^2) Delta q(x/lam) h + lam^-1 q'(|x|/lam) d_r h."""
    return _apply(grid, w, lam, h, (grid.N - 2) / (2 * grid.N))


def apply_A0(grid: RadialGrid, w: VirialWeight, lam: float, h):
    """A0(lam)h = 1/(2 lam^2) Delta q(x/lam) h + lam^-1 q'(|x|/lam) d_r h."""
    return _apply(grid, w, lam, h, 0.5)


def antisymmetry_defect(grid: RadialGrid, w: VirialWeight, lam: float, h1, h2) -> float:
    """|<h1, A0 h2> + <A0 h1, h2>| relative to |<h1, A0 h2>|."""
    a = grid.inner(h1, apply_A0(grid, w, lam, h2))
    b = grid.inner(apply_A0(grid, w, lam, h1), h2)
    return abs(a + b) / max(abs(a), abs(b), 1e-300)


def region_h1(grid: RadialGrid, u, r_cut: float) -> float:
    """int_{|x| <= r_cut} |grad u|^2."""
    du2 = grid.flux_weights * np.abs(grid.ds(u)) ** 2
    return grid.sphere * float(np.sum(du2[grid.r <= r_cut]))


def pohozaev_check(grid: RadialGrid, w: VirialWeight, lam: float, h, c0: float | None = None) -> dict:
    """<A0(lam)h, Delta h> against (c0/lam^2)|h|^2 - lam^-2 int_{|x|<=R lam} |grad h|^2."""
    c0 = 2.0 * w.c if c0 is None else c0
    lhs = grid.inner(apply_A0(grid, w, lam, h), grid.laplacian(h))
    rhs = (c0 * h1_norm(grid, h) ** 2 - region_h1(grid, h, w.R * lam)) / lam**2
    return {"lhs": lhs, "rhs": rhs, "margin": rhs - lhs, "c0": c0}


# ---- phase correction ----------------------------------------------------
def psi(state, w: VirialWeight, gs: GroundState | None = None, C1: float | None = None) -> dict:
    """psi = theta - <g, i A0(lam) g> / (2 |W|^2)."""
    gs = gs or ground_state()
    grid = gs.grid
    C1 = C1 or constants(gs.N, grid).C1
    g = np.asarray(state.g, dtype=complex)
    Ag = apply_A0(grid, w, state.lam, g)
    z = grid.sphere * np.sum(grid.w * np.conj(g) * 1j * Ag)
    corr = float(z.real) / (2 * C1)
    return {"psi": state.theta - corr, "theta": state.theta, "correction": corr, "imag": float(z.imag)}


def psi_rate_audit(times, psis, N: int = 7) -> dict:
    """Fitted c1 in psi' >= -c1 |t|^{-(N-5)/(N-6)} from finite differences."""
    t = np.asarray(times, dtype=float)
    p = np.asarray(psis, dtype=float)
    if t.size < 3:
        raise ValueError("trajectory too short for differencing")
    dp = np.gradient(p, t)
    env = np.abs(t) ** (-(N - 5) / (N - 6))
    c1 = float(max(0.0, np.max(-dp / env)))
    return {"c1": c1, "min_rate": float(dp.min()), "rates": dp}


# ---- identities ----------------------------------------------------------
def generator(grid: RadialGrid, u):
    """Lambda u = (N-2)/2 u + r d_r u."""
    return (grid.N - 2) / 2 * u + grid.r * grid.dr(u)


def lambda_identity_check(gs: GroundState, u, v) -> dict:
    """<f(u+v) - f(u) - f'(u)v, Lambda u> against -<f(u+v) - f(u), Lambda v>."""
    grid, K = gs.grid, gs.conv
    lhs = grid.inner(f_apply(K, u + v) - f_apply(K, u) - fprime_apply(K, u, v), generator(grid, u))
    rhs = -grid.inner(f_apply(K, u + v) - f_apply(K, u), generator(grid, v))
    scale = max(abs(lhs), abs(rhs))
    return {"lhs": lhs, "rhs": rhs, "residual": abs(lhs - rhs) / scale if scale > 0 else 0.0}


def by_parts_check(gs: GroundState, w: VirialWeight, u, g, lam: float) -> dict:
    """<A(lam)u, f(u+g) - f(u) - f'(u)g> against -<A(lam)g, f(u+g) - f(u)>."""
    grid, K = gs.grid, gs.conv
    lhs = grid.inner(apply_A(grid, w, lam, u), f_apply(K, u + g) - f_apply(K, u) - fprime_apply(K, u, g))
    rhs = -grid.inner(apply_A(grid, w, lam, g), f_apply(K, u + g) - f_apply(K, u))
    gn = h1_norm(grid, g)
    return {"lhs": lhs, "rhs": rhs, "diff": lhs - rhs, "ratio": abs(lhs - rhs) / gn**2 if gn else 0.0}


def pohozaev_audit(gs: GroundState, w: VirialWeight, lam: float = 1.0, samples: int = 100, seed: int = 0) -> dict:
    rng = np.random.default_rng(seed)
    margins = []
    for _ in range(samples):
        h = random_field(gs.grid, rng)
        m = pohozaev_check(gs.grid, w, lam, h)
        margins.append(m["margin"] / (h1_norm(gs.grid, h) ** 2 / lam**2))
    margins = np.array(margins)
    return {"min_margin": float(margins.min()), "violations": int(np.sum(margins < 0)), "samples": samples}
