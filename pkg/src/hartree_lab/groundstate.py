"""The bubble W, its rescalings and generators, and the integrals C1, C2, C3.

Profiles of the form p(r^2) (1 + r^2)^{-b} are closed under r d/dr and the
radial Laplacian, so Lambda W, Lambda_0 W, Lambda Lambda W and Delta Lambda W
are evaluated exactly rather than by finite differences.

Normalization.  The unit-scale solution is c0 (1 + r^2)^{-(N-2)/2} with c0
fitted numerically.  The reference bubble used by the two-bubble
construction is the member of that scaling family with W(0) = 1, i.e.
W = (c0 W~)_ell with ell = c0^{2/(N-2)}; the interaction asymptotics
(energy gap, B4, kappa) assume this normalization.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.special import beta

from .radial import RadialGrid, RieszKernel, check_dimension, h1_norm, make_log_grid


class FitError(RuntimeError):
    pass


@dataclass(frozen=True)
class Profile:
    """f(r) = p(r^2) (1 + r^2)^{-b} with p given by ascending coefficients."""

    coef: tuple
    b: float

    def __call__(self, r):
        rho = np.asarray(r, dtype=float) ** 2
        d = len(self.coef) - 1
        # p(rho) (1+rho)^-d written in t = rho/(1+rho), u = 1/(1+rho): no overflow
        u = 1.0 / (1.0 + rho)
        t = rho * u
        acc = np.zeros_like(rho)
        for k, c in enumerate(self.coef):
            acc = acc + c * t**k * u ** (d - k)
        return acc * u ** (self.b - d)

    def _lift(self, extra: int) -> np.ndarray:
        """Coefficients after multiplying numerator and denominator by (1+rho)^extra."""
        c = np.array(self.coef, dtype=float)
        for _ in range(extra):
            c = P.polymul(c, [1.0, 1.0])
        return c

    def euler(self) -> "Profile":
        """r d/dr."""
        c = np.array(self.coef, dtype=float)
        dp = P.polyder(c) if c.size > 1 else np.zeros(1)
        term1 = P.polymul(P.polymul([0.0, 2.0], dp), [1.0, 1.0])
        term2 = P.polymul([0.0, -2.0 * self.b], c)
        return Profile(tuple(P.polyadd(term1, term2)), self.b + 1)

    def add(self, other: "Profile", scale: float = 1.0) -> "Profile":
        b = max(self.b, other.b)
        e1, e2 = b - self.b, b - other.b
        if abs(e1 - round(e1)) > 1e-12 or abs(e2 - round(e2)) > 1e-12:
            raise ValueError("exponents must differ by integers")
        return Profile(tuple(P.polyadd(self._lift(int(round(e1))), scale * other._lift(int(round(e2))))), b)

    def mul(self, s: float) -> "Profile":
        return Profile(tuple(s * np.array(self.coef, dtype=float)), self.b)

    def generator(self, shift: float) -> "Profile":
        """shift + r d/dr: Lambda for shift (N-2)/2, Lambda_0 for N/2."""
        return self.euler().add(self, shift)

    def laplacian(self, N: int) -> "Profile":
        """Delta = r^{-2}(E^2 + (N-2)E); the numerator carries a factor rho."""
        e1 = self.euler()
        num = e1.euler().add(e1, N - 2)
        c = np.array(num.coef, dtype=float)
        if abs(c[0]) > 1e-12 * max(1.0, np.abs(c).max()):
            raise ValueError("profile is not even at the origin")
        # divide by rho, keep exponent: r^{-2} p(rho)/(1+rho)^b with p = rho q
        return Profile(tuple(c[1:]) if c.size > 1 else (0.0,), num.b)

    def dr(self, r):
        """d/dr = (r d/dr)/r, evaluated stably as r * (q(rho) ...)."""
        e = self.euler()
        c = np.array(e.coef, dtype=float)
        q = Profile(tuple(c[1:]) if c.size > 1 else (0.0,), e.b)
        return np.asarray(r) * q(r)

    def far_coefficient(self) -> float:
        """c with f ~ c r^{-2(b - deg p)} as r -> infinity."""
        return float(self.coef[-1])

    def decay_power(self) -> float:
        return 2.0 * (self.b - (len(self.coef) - 1))


def unit_profile(N: int) -> Profile:
    """(1 + r^2)^{-(N-2)/2}."""
    return Profile((1.0,), (N - 2) / 2)


@dataclass(frozen=True)
class Bubble:
    """Bubble W(r) = amp * P(r/ell) for the unit-scale profile P.

    ``amp`` includes the scaling factor, so W = c0 ell^{-(N-2)/2} P(r/ell).
    Fields are sampled through ``sample(profile, lam, theta)`` which returns
    e^{i theta} (F)_lam with (F)_lam(r) = lam^{-(N-2)/2} F(r/lam).
    """

    N: int
    c0: float
    ell: float = 1.0

    @property
    def a(self) -> float:
        return (self.N - 2) / 2

    @property
    def amp(self) -> float:
        return self.c0 * self.ell ** (-self.a)

    @property
    def peak(self) -> float:
        return self.amp

    @classmethod
    def unit_scale(cls, N: int, c0: float) -> "Bubble":
        return cls(N, c0, 1.0)

    @classmethod
    def unit_peak(cls, N: int, c0: float) -> "Bubble":
        return cls(N, c0, c0 ** (2.0 / (N - 2)))

    @property
    def W_profile(self) -> Profile:
        return unit_profile(self.N)

    @property
    def LW_profile(self) -> Profile:
        return self.W_profile.generator(self.a)

    @property
    def L0W_profile(self) -> Profile:
        return self.W_profile.generator(self.N / 2)

    @property
    def LLW_profile(self) -> Profile:
        return self.LW_profile.generator(self.a)

    def sample(self, prof: Profile, r, lam: float = 1.0, theta: float = 0.0):
        """e^{i theta} lam^{-(N-2)/2} F(r/lam) for F = amp * prof(./ell)."""
        L = lam * self.ell
        vals = self.amp * lam ** (-self.a) * prof(np.asarray(r) / L)
        if theta == 0.0:
            return vals
        return np.exp(1j * theta) * vals

    def W(self, r, lam=1.0, theta=0.0):
        return self.sample(self.W_profile, r, lam, theta)

    def LW(self, r, lam=1.0, theta=0.0):
        return self.sample(self.LW_profile, r, lam, theta)

    def L0W(self, r, lam=1.0, theta=0.0):
        """(Lambda_0 W) rescaled with the H1 scaling (used only at lam = 1)."""
        return self.sample(self.L0W_profile, r, lam, theta)

    def LLW(self, r, lam=1.0, theta=0.0):
        return self.sample(self.LLW_profile, r, lam, theta)

    def lapW(self, r, lam=1.0):
        """Delta W_lam, exact."""
        L = lam * self.ell
        return self.amp * lam ** (-self.a) * self.W_profile.laplacian(self.N)(np.asarray(r) / L) / L**2

    def lapLW(self, r, lam=1.0):
        L = lam * self.ell
        return self.amp * lam ** (-self.a) * self.LW_profile.laplacian(self.N)(np.asarray(r) / L) / L**2

    def dW(self, r, lam=1.0):
        """d/dr W_lam, exact."""
        L = lam * self.ell
        return self.amp * lam ** (-self.a) * self.W_profile.dr(np.asarray(r) / L) / L

    def far_coefficient(self, which: str = "W") -> float:
        """c with F ~ c r^{-(N-2)} at infinity, F in {W, LW}."""
        prof = {"W": self.W_profile, "LW": self.LW_profile}[which]
        return self.amp * self.ell ** (self.N - 2) * prof.far_coefficient()


def fit_amplitude(N: int, grid: RadialGrid, kernel: RieszKernel | None = None,
                  window=(1e-2, 1e2), tol: float = 1e-5) -> float:
    """c0 such that c0 (1+r^2)^{-(N-2)/2} solves -Delta W = (|x|^-4 * W^2) W.

    The ratio rho = -Delta W~ / ((|x|^-4 * W~^2) W~) must be constant; by
    cubic homogeneity c0^2 equals that constant.
    """
    N = check_dimension(N)
    # keep clear of the boundary closures
    window = (max(window[0], 30 * grid.r_min), min(window[1], grid.r_max / 10))
    if window[0] > 0.5 or window[1] < 10.0:
        raise FitError("grid does not resolve the unit scale")
    kernel = kernel or RieszKernel.build(grid)
    Wt = unit_profile(N)(grid.r)
    lap = grid.laplacian(Wt)
    conv = kernel.convolve(Wt**2)
    m = (grid.r >= window[0]) & (grid.r <= window[1])
    rho = -lap[m] / (conv[m] * Wt[m])
    spread = rho.max() / rho.min() - 1.0
    if not np.all(np.isfinite(rho)) or spread > tol:
        raise FitError(f"ratio not constant: min {rho.min():.10g}, max {rho.max():.10g}")
    return math.sqrt(float(np.mean(rho)))


def amplitude_closed_form(N: int) -> float:
    """c0 from the exact convolution |x|^-4 * (1+|y|^2)^{-(N-2)} = I (1+|x|^2)^{-2}."""
    from .kernel import sphere_area

    I = sphere_area(N - 1) * 0.5 * beta((N - 4) / 2, N / 2)
    return math.sqrt(N * (N - 2) / I)


@dataclass
class Constants:
    N: int
    c0: float
    ell: float
    C1: float
    C2: float
    C3: float
    kappa: float
    normW2: float
    nu: float | None = None
    M: float | None = None
    rhoY: float | None = None
    checks: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)

    def kappa_from_stored(self) -> float:
        return kappa_formula(self.N, self.C1, self.C2)

    def to_json(self) -> str:
        out = {k: v for k, v in asdict(self).items()}
        return json.dumps(out, indent=2, default=float)


def kappa_formula(N: int, C1: float, C2: float) -> float:
    return (2.0 * C1 / (3.0 * (N - 6) * C2)) ** (2.0 / (N - 6))


def _tail(grid: RadialGrid, integrand) -> float:
    """int_{r_max}^inf of a power-law tail, power fitted on the last nodes."""
    f1, f0 = integrand[-1], integrand[-9]
    if f1 == 0.0 or f0 == 0.0 or np.sign(f1) != np.sign(f0):
        return 0.0
    p = -math.log(f1 / f0) / math.log(grid.r[-1] / grid.r[-9])
    if p <= grid.N:
        return math.nan
    return grid.sphere * f1 * grid.r_max**grid.N / (p - grid.N)


def integrate_with_tail(grid: RadialGrid, integrand) -> float:
    return grid.sphere * float(grid.integrate(integrand)) + _tail(grid, integrand)


@dataclass(frozen=True, eq=False)
class GroundState:
    """Fitted bubble bundled with the grid and kernel it was fitted on."""

    grid: RadialGrid
    kernel: RieszKernel
    bubble: Bubble

    @property
    def N(self) -> int:
        return self.grid.N

    def W(self, lam=1.0, theta=0.0):
        return self.bubble.W(self.grid.r, lam, theta)

    def LW(self, lam=1.0, theta=0.0):
        return self.bubble.LW(self.grid.r, lam, theta)

    def conv(self, f):
        return self.kernel.convolve(f)

    def elliptic_residual(self) -> float:
        W = self.W()
        lap = self.grid.laplacian(W)
        res = lap + self.conv(W**2) * W
        from .radial import l2_norm

        return l2_norm(self.grid, res) / l2_norm(self.grid, lap)


def ground_state(N: int = 7, grid: RadialGrid | None = None, normalization: str = "peak") -> GroundState:
    grid = grid or default_grid(N)
    return _ground_state(grid, normalization)


@lru_cache(maxsize=8)
def _ground_state(grid: RadialGrid, normalization: str) -> GroundState:
    kernel = RieszKernel.build(grid)
    c0 = fit_amplitude(grid.N, grid, kernel)
    if normalization == "peak":
        b = Bubble.unit_peak(grid.N, c0)
    elif normalization == "unit":
        b = Bubble.unit_scale(grid.N, c0)
    else:
        raise ValueError(f"unknown normalization {normalization!r}")
    return GroundState(grid, kernel, b)


@lru_cache(maxsize=4)
def default_grid(N: int = 7, points: int = 2048) -> RadialGrid:
    return make_log_grid(N, 1e-4, 1e3, points)


def lambda_w(gs: GroundState):
    return gs.LW()


def lambda0_w(gs: GroundState):
    return gs.bubble.L0W(gs.grid.r)


def constants(N: int = 7, grid: RadialGrid | None = None, normalization: str = "peak",
              check_tol: float = 1e-5) -> Constants:
    """C1, C2, C3 and kappa with independent cross-checks.

    C2 route B and C3 route B are the integration-by-parts values: the
    boundary fluxes -int Delta W and int Delta Lambda W, obtained from the
    exact far-field coefficient of W and Lambda W.
    """
    gs = ground_state(N, grid, normalization)
    g, b = gs.grid, gs.bubble
    W, LW = gs.W(), gs.LW()
    V = gs.conv(W**2)
    C1 = integrate_with_tail(g, W**2)
    C1_beta = b.amp**2 * b.ell**N * g.sphere * 0.5 * beta(N / 2, (N - 4) / 2)
    C2 = integrate_with_tail(g, V * W)
    S = g.sphere
    C2_flux = (N - 2) * S * b.far_coefficient("W")
    c3_int = -(V * LW + 2.0 * gs.conv(W * LW) * W)
    C3 = integrate_with_tail(g, c3_int)
    C3_flux = -(N - 2) * S * b.far_coefficient("LW")
    grad2 = h1_norm(g, W) ** 2
    checks = {
        "C1_beta": C1_beta,
        "C1_rel": abs(C1 / C1_beta - 1),
        "C2_flux": C2_flux,
        "C2_rel": abs(C2 / C2_flux - 1),
        "C3_flux": C3_flux,
        "C3_rel": abs(C3 / C3_flux - 1),
        "grad_W_sq": grad2,
        "VW2": integrate_with_tail(g, V * W**2),
        "elliptic_residual": gs.elliptic_residual(),
        "ground_state_reading": "(1+r^2)^{-(N-2)/2}: decaying exponent",
        "normalization": normalization,
    }
    if checks["C2_rel"] > check_tol or checks["C3_rel"] > check_tol:
        raise FitError(f"constant cross-check failed: {checks}")
    return Constants(N=N, c0=b.c0, ell=b.ell, C1=C1, C2=C2, C3=C3,
                     kappa=kappa_formula(N, C1, C2), normW2=C1, checks=checks,
                     grid=g.describe())
