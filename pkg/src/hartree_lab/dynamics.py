"""Time evolution: split-step PDE, reduced modulation ODE, bootstrap monitor, shooting.

Sign conventions follow the equation i u_t + Delta u + (|x|^-4 * |u|^2) u = 0,
so u_t = i Delta u + i V u with V = |x|^-4 * |u|^2.  Time runs forward from
T < 0 toward T0 < 0.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spl
from scipy.integrate import solve_ivp

from .energy import energy
from .groundstate import GroundState, constants, ground_state
from .linops import EigenPair, solve_eigen
from .modulation import ModulationError, ModulationState, decompose, initial_box, interaction_K
from .radial import h1_norm, l2_norm

log = logging.getLogger(__name__)

BLOWUP = 1e6
COLUMNS = ("zeta", "mu", "theta", "lam", "a1p", "a1m", "a2p", "a2m", "g_norm")


# ---- PDE -------------------------------------------------------------------
def dt_max(scale: float) -> float:
    """Empirical split-step stability bound for a bubble of size `scale`.

    The implicit linear step is unconditionally stable, but the exponential
    potential step couples the stiffest (phase ~ pi) grid modes; runs stay
    clean for dt below ~1e-3 scale^2.
    """
    return 1e-3 * scale**2


@dataclass
class EvolutionConfig:
    dt: float = 1e-4
    t_start: float = 0.0
    t_end: float = 1.0
    order: int = 2  # 1 Lie, 2 Strang
    monitor_every: int = 10
    nonlinear: bool = True
    scale: float = 1.0  # smallest bubble scale, only used for the recorded dt bound
    sentinel: float = BLOWUP

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.order not in (1, 2):
            raise ValueError("order must be 1 (Lie) or 2 (Strang)")
        if self.t_end <= self.t_start:
            raise ValueError("t_end must exceed t_start")
        if self.monitor_every < 1:
            raise ValueError("monitor_every must be >= 1")

    @property
    def steps(self) -> int:
        return int(round((self.t_end - self.t_start) / self.dt))

    @property
    def dt_max(self) -> float:
        return dt_max(self.scale)


@dataclass
class PDERun:
    times: np.ndarray
    frames: list
    energy: np.ndarray
    mass: np.ndarray
    status: str
    dt: float
    dt_max: float

    @property
    def energy_drift(self) -> float:
        return float(np.max(np.abs(self.energy - self.energy[0])) / abs(self.energy[0]))

    @property
    def mass_drift(self) -> float:
        return float(np.max(np.abs(self.mass - self.mass[0])) / self.mass[0])


class _LinearStep:
    """Crank-Nicolson for u_t = i Delta u: (I - i dt/2 L) u+ = (I + i dt/2 L) u."""

    def __init__(self, grid, dt):
        L = grid.lap_matrix
        I = sp.identity(grid.size, format="csc", dtype=complex)
        self._lu = spl.splu((I - 0.5j * dt * L).tocsc())
        self._rhs = (I + 0.5j * dt * L).tocsr()

    def __call__(self, u):
        return self._lu.solve(self._rhs @ u)


def evolve_pde(u0, cfg: EvolutionConfig, gs: GroundState | None = None) -> PDERun:
    """Split-step evolution; frames are kept every `monitor_every` steps."""
    gs = gs or ground_state()
    grid = gs.grid
    u = np.array(u0, dtype=complex)
    if u.shape != grid.r.shape:
        raise ValueError("u0 is not on the configured grid")
    if cfg.dt > cfg.dt_max:
        log.warning("dt = %g exceeds the recorded bound %g for scale %g", cfg.dt, cfg.dt_max, cfg.scale)
    lin = _LinearStep(grid, cfg.dt)
    dt = cfg.dt

    def pot(u, tau):
        if not cfg.nonlinear:
            return u
        # |u| is constant along this substep, so the phase rotation is exact
        return u * np.exp(1j * tau * gs.conv(np.abs(u) ** 2))

    times, frames, E, Q = [cfg.t_start], [u.copy()], [energy(gs, u)], [l2_norm(grid, u)]
    status = "ok"
    for k in range(1, cfg.steps + 1):
        if cfg.order == 2:
            u = pot(lin(pot(u, 0.5 * dt)), 0.5 * dt)
        else:
            u = pot(lin(u), dt)
        if not np.all(np.isfinite(u)) or np.max(np.abs(u)) > cfg.sentinel:
            status = "blowup"
            log.warning("blow-up sentinel at step %d (t = %g)", k, cfg.t_start + k * dt)
            break
        if k % cfg.monitor_every == 0 or k == cfg.steps:
            times.append(cfg.t_start + k * dt)
            frames.append(u.copy())
            E.append(energy(gs, u))
            Q.append(l2_norm(grid, u))
    return PDERun(np.array(times), frames, np.array(E), np.array(Q), status, dt, cfg.dt_max)


# ---- trajectories ------------------------------------------------------------
@dataclass
class Trajectory:
    t: np.ndarray
    data: dict
    status: str = "ok"
    source: str = "reduced"
    closure: str = "K=0"
    notes: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.t)

    def __getitem__(self, key):
        return self.data[key]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", *COLUMNS])
            for i in range(len(self.t)):
                w.writerow(["%.17g" % self.t[i], *("%.17g" % self.data[c][i] for c in COLUMNS)])


def track_modulation(run: PDERun, guess, t_offset: float = 0.0, gs: GroundState | None = None,
                     pair: EigenPair | None = None) -> Trajectory:
    """Decompose every frame with warm starts; truncate at the first failure."""
    gs = gs or ground_state()
    pair = pair or solve_eigen(gs.N, gs.grid)
    p = np.asarray(guess, dtype=float)
    rows, ts, status, diag = [], [], "ok", {}
    for t, u in zip(run.times, run.frames):
        try:
            s = decompose(u, p, gs, pair)
        except ModulationError as exc:
            status, diag = "truncated", {"t": float(t + t_offset), "reason": str(exc)}
            log.warning("decomposition lost at t = %g: %s", t + t_offset, exc)
            break
        # keep phases continuous for the warm start
        z = p[0] + math.remainder(s.zeta - p[0], 2 * math.pi)
        th = p[2] + math.remainder(s.theta - p[2], 2 * math.pi)
        p = np.array([z, s.mu, th, s.lam])
        rows.append([z, s.mu, th, s.lam, s.a1p, s.a1m, s.a2p, s.a2m, h1_norm(gs.grid, s.g)])
        ts.append(t + t_offset)
    arr = np.array(rows).reshape(-1, len(COLUMNS))
    return Trajectory(np.array(ts), {c: arr[:, i] for i, c in enumerate(COLUMNS)}, status, "pde",
                      closure="none (full PDE)", notes=diag)


def drift_constant(traj: Trajectory) -> float:
    """Smallest C with |lam'/lam| <= C |t|^-1 along the trajectory."""
    lam, t = traj["lam"], traj.t
    if len(t) < 3:
        raise ValueError("trajectory too short")
    rate = np.gradient(lam, t) / lam
    return float(np.max(np.abs(rate) * np.abs(t)))


# ---- reduced system ------------------------------------------------------
@dataclass
class ReducedState:
    zeta: float = -math.pi / 2
    mu: float = 1.0
    theta: float = 0.0
    lam: float = 1.0
    a1p: float = 0.0
    a1m: float = 0.0
    a2p: float = 0.0
    a2m: float = 0.0

    @classmethod
    def from_modulation(cls, s: ModulationState) -> "ReducedState":
        return cls(s.zeta, s.mu, s.theta, s.lam, s.a1p, s.a1m, s.a2p, s.a2m)


def _mode(a0: float, G, sign: int):
    """a0 exp(sign G) without overflow warnings; |a| saturates at inf."""
    if a0 == 0.0:
        return np.zeros_like(G)
    with np.errstate(over="ignore"):
        return math.copysign(1.0, a0) * np.exp(math.log(abs(a0)) + sign * G)


def envelopes(t, N: int = 7) -> dict:
    """Right-hand sides of the bootstrap hypotheses at time t."""
    at = np.abs(t)
    k = N - 6
    return {
        "zeta": at ** (-3 / k),
        "mu": at ** (-3 / k),
        "theta": at ** (-1 / k),
        "lam": at ** (-5 / (2 * k)),
        "g": at ** (-(N - 1) / (2 * k)),
        "a1p": at ** (-N / (2 * k)),
        "a2p": at ** (-N / (2 * k)),
    }


def integrate_reduced(T: float, state0: ReducedState, t_end: float, N: int = 7, closure: str = "zero",
                      kappa_K: float = 0.0, freeze_lambda: bool = False, samples: int = 400,
                      stop_on_exit: bool = False, rtol: float = 1e-11, C=None, nu: float | None = None) -> Trajectory:
    """Reduced system for (zeta, mu, theta, lam, a1+-, a2+-) from t = T to t_end.

    lam' = 3 C2/C1 lam^{(N-4)/2}, theta' = -C3/C1 theta lam^{(N-6)/2} + K/(lam^2 C1),
    zeta' = mu' = 0 (only bounded in the full system), a_j^+- ' = +-nu/s_j^2 a_j^+-.
    The modes are linear, so they are carried as a_j(T) exp(+-G_j) with
    G_j' = nu/s_j^2; this keeps the stiff nu/lam^2 growth out of the step control.
    closure: "zero" (K = 0) or "quadratic" (K = kappa_K (a2+^2 + a2-^2)).
    """
    if not T < t_end < 0:
        raise ValueError("need T < t_end < 0")
    if closure not in ("zero", "quadratic"):
        raise ValueError(f"unknown closure {closure!r}")
    if state0.lam <= 0 or state0.mu <= 0:
        raise ValueError("scales must be positive")
    C = C or constants(N)
    if nu is None:
        nu = solve_eigen(N).nu
    cl, c3 = 3 * C.C2 / C.C1, C.C3 / C.C1
    a0 = state0

    def modes(G1, G2):
        return (_mode(a0.a1p, G1, 1), _mode(a0.a1m, G1, -1), _mode(a0.a2p, G2, 1), _mode(a0.a2m, G2, -1))

    def rhs(t, y):
        zeta, mu, theta, lam, G1, G2 = y
        lam = max(lam, 1e-300)
        K = 0.0
        if closure == "quadratic":
            _, _, a2p, a2m = modes(G1, G2)
            K = kappa_K * (a2p**2 + a2m**2)
        dlam = 0.0 if freeze_lambda else cl * lam ** ((N - 4) / 2)
        dth = -c3 * theta * lam ** ((N - 6) / 2) + K / (lam**2 * C.C1)
        return [0.0, 0.0, dth, dlam, nu / mu**2, nu / lam**2]

    env = envelopes
    events = []
    if stop_on_exit:
        def _ev(name):
            def ev(t, y):
                G1, G2 = y[4], y[5]
                if name == "a1p":
                    a, G = a0.a1p, G1
                elif name == "a2p":
                    a, G = a0.a2p, G2
                else:
                    return env(t, N)["lam"] - abs(y[3] - C.kappa * abs(t) ** (-2 / (N - 6)))
                if a == 0.0:
                    return 1.0
                return math.log(env(t, N)[name]) - (math.log(abs(a)) + G)
            ev.terminal = True
            ev.direction = -1
            ev.__name__ = name
            return ev
        events = [_ev("a1p"), _ev("a2p"), _ev("lam")]

    # blow-up of lam in finite time: lam^{-(N-6)/2} hits zero
    def blow(t, y):
        return 1e6 - y[3]
    blow.terminal = True
    events.append(blow)

    y0 = [a0.zeta, a0.mu, a0.theta, a0.lam, 0.0, 0.0]
    t_eval = -np.geomspace(abs(T), abs(t_end), samples)
    # G_j are quadratures driven by (mu, lam): keep them out of the error control
    lam_atol = 1e-6 * min(a0.lam, 1.0) * rtol
    atol = [rtol, rtol, rtol, lam_atol, 1e300, 1e300]
    sol = solve_ivp(rhs, (T, t_end), y0, method="DOP853", t_eval=t_eval, rtol=rtol, atol=atol,
                    events=events or None)
    status = "ok"
    exit_info = {}
    if sol.status == -1:
        status = "step-failure"
        log.warning("reduced integration stopped: %s", sol.message)
    elif sol.status == 1:
        for ev, te in zip(events, sol.t_events):
            if len(te):
                status = f"exit:{ev.__name__}"
                exit_info = {"t": float(te[0]), "face": ev.__name__}
                break
    zeta, mu, theta, lam, G1, G2 = sol.y
    a1p, a1m, a2p, a2m = modes(G1, G2)
    if exit_info:
        ye = sol.y_events[[e.__name__ for e in events].index(exit_info["face"])][0]
        m = modes(np.array([ye[4]]), np.array([ye[5]]))
        exit_info.update(a1p=float(m[0][0]), a2p=float(m[2][0]), lam=float(ye[3]))
    gnorm = np.sqrt(a1p**2 + a1m**2 + a2p**2 + a2m**2)
    data = dict(zeta=zeta, mu=mu, theta=theta, lam=lam, a1p=a1p, a1m=a1m, a2p=a2p, a2m=a2m, g_norm=gnorm)
    label = "K=0" if closure == "zero" else f"K=kappa_K*(a2p^2+a2m^2), kappa_K={kappa_K:.17g}"
    notes = {"G1": G1, "G2": G2, "nu": nu, "exit": exit_info, "nfev": int(sol.nfev),
             "g_norm": "mode-amplitude proxy sqrt(sum a^2)"}
    return Trajectory(sol.t, data, status, "reduced", label, notes)


def measure_kappa_K(lam: float = 0.05, eps=(1e-3, 2e-3, 4e-3), gs: GroundState | None = None,
                    pair: EigenPair | None = None) -> float:
    """Fit K ~ kappa_K (a2+^2 + a2-^2) on states carrying only an a2+ component."""
    from .modulation import ModulationState, build_initial_data, with_modes

    gs = gs or ground_state()
    pair = pair or solve_eigen(gs.N, gs.grid)
    xs, ys = [], []
    for e in eps:
        _, g0, _ = build_initial_data(-1.0, lam, 0.0, e, gs, pair, check_box=False)
        s = with_modes(ModulationState(-math.pi / 2, 1.0, 0.0, lam, g0), gs, pair)
        xs.append(s.a2p**2 + s.a2m**2)
        ys.append(interaction_K(gs, s))
    xs, ys = np.array(xs), np.array(ys)
    return float(xs @ ys / (xs @ xs))


# ---- bootstrap monitor ---------------------------------------------------
@dataclass
class BootstrapMonitor:
    t: np.ndarray
    margins: dict          # hypothesis slacks, bound - value
    improved: dict         # slacks of the halved bounds
    first_violation: dict  # name -> first t with negative hypothesis slack (or None)
    ok: bool
    improved_ok: bool

    def summary(self) -> dict:
        return {
            "ok": self.ok,
            "improved_ok": self.improved_ok,
            "first_violation": self.first_violation,
            "min_margin": {k: float(np.min(v)) for k, v in self.margins.items()},
            "min_improved_margin": {k: float(np.min(v)) for k, v in self.improved.items()},
        }


def monitor_bootstrap(traj: Trajectory, N: int = 7, C=None) -> BootstrapMonitor:
    C = C or constants(N)
    t = traj.t
    env = envelopes(t, N)
    values = {
        "zeta": np.abs(traj["zeta"] + math.pi / 2),
        "mu": np.abs(traj["mu"] - 1),
        "theta": np.abs(traj["theta"]),
        "lam": np.abs(traj["lam"] - C.kappa * np.abs(t) ** (-2 / (N - 6))),
        "g": np.abs(traj["g_norm"]),
        "a1p": np.abs(traj["a1p"]),
        "a2p": np.abs(traj["a2p"]),
    }
    margins = {k: env[k] - v for k, v in values.items()}
    improved = {k: 0.5 * env[k] - v for k, v in values.items()}
    first = {}
    for k, m in margins.items():
        bad = np.flatnonzero(~(m >= 0))
        first[k] = float(t[bad[0]]) if bad.size else None
    ok = all(v is None for v in first.values())
    improved_ok = all(bool(np.all(m >= 0)) for m in improved.values())
    return BootstrapMonitor(t, margins, improved, first, ok, improved_ok)


# ---- shooting ----------------------------------------------------------------
@dataclass
class ShootResult:
    T: float
    t_end: float
    winner: tuple | None
    margins: dict
    brackets: dict
    faces: dict
    samples_used: int
    closure: str

    def to_dict(self) -> dict:
        return {
            "T": self.T, "t_end": self.t_end,
            "winner": None if self.winner is None else dict(zip(("lambda0", "a1_0", "a2_0"), self.winner)),
            "margins": self.margins, "brackets": self.brackets, "faces": self.faces,
            "samples_used": self.samples_used, "closure": self.closure,
        }


def _run(T, t_end, lam0, a1, a2, N, C, nu, closure, kappa_K, stop=True):
    s0 = ReducedState(lam=lam0, a1p=a1, a2p=a2)
    return integrate_reduced(T, s0, t_end, N, closure, kappa_K, stop_on_exit=stop, samples=200, C=C, nu=nu)


def _exit_sign(tr: Trajectory, axis: str) -> int:
    """+1 / -1 if the run left through the +/- face of `axis`, 0 if it survived or left elsewhere."""
    ex = tr.notes["exit"]
    if not ex or ex["face"] != axis:
        return 0
    return int(math.copysign(1, ex[axis]))


def face_diagnostics(T: float, t_end: float, N: int = 7, C=None, nu: float | None = None,
                     closure: str = "zero", kappa_K: float = 0.0) -> dict:
    """Start on each face of the (a1, a2) square and on the lam0 faces; record the exit."""
    C = C or constants(N)
    nu = nu if nu is not None else solve_eigen(N).nu
    box = initial_box(T, N, C)
    lc, r = box["lam_center"], box["a_radius"]
    lam_lo = max(lc - box["lam_radius"], 1e-3 * lc)
    starts = {
        "a1+": (lc, r, 0.0), "a1-": (lc, -r, 0.0), "a2+": (lc, 0.0, r), "a2-": (lc, 0.0, -r),
        "lam+": (lc + box["lam_radius"], 0.0, 0.0), "lam-": (lam_lo, 0.0, 0.0),
    }
    out = {}
    for name, (l0, a1, a2) in starts.items():
        tr = _run(T, t_end, l0, a1, a2, N, C, nu, closure, kappa_K)
        ex = tr.notes["exit"]
        out[name] = {"start": [l0, a1, a2], "status": tr.status, "exit_t": ex.get("t"),
                     "exit_value": ex.get(ex.get("face")) if ex else None}
    # outward mapping: the +face leaves with a > 0, the -face with a < 0
    out["outward"] = all(
        out[f"{ax}{sg}"]["status"] == f"exit:{ax}p" and math.copysign(1, out[f"{ax}{sg}"]["exit_value"]) == (1 if sg == "+" else -1)
        for ax in ("a1", "a2") for sg in "+-")
    return out


def scan_bracket(T: float, t_end: float, axis: str, samples: int, N: int = 7, C=None, nu=None,
                 closure: str = "zero", kappa_K: float = 0.0) -> dict:
    """Uniform scan of one unstable axis (others at 0); returns the bracketing cell around survivors."""
    C = C or constants(N)
    nu = nu if nu is not None else solve_eigen(N).nu
    box = initial_box(T, N, C)
    r = box["a_radius"]
    xs = np.linspace(-r, r, samples)
    signs = []
    for x in xs:
        a1, a2 = (x, 0.0) if axis == "a1" else (0.0, x)
        signs.append(_exit_sign(_run(T, t_end, box["lam_center"], a1, a2, N, C, nu, closure, kappa_K), axis + "p"))
    signs = np.array(signs)
    neg = xs[signs < 0]
    pos = xs[signs > 0]
    lo = neg.max() if neg.size else -r
    hi = pos.min() if pos.size else r
    return {"lo": float(lo), "hi": float(hi), "diameter": float(hi - lo), "signs": signs.tolist()}


def shoot(T: float = -100.0, samples: int = 64, t_end: float | None = None, N: int = 7,
          closure: str = "zero", kappa_K: float = 0.0, C=None, nu: float | None = None) -> ShootResult:
    """Bisection over the initial box for a run that keeps every bootstrap bound up to t_end.

    lam0 is scanned first (a = 0) and the run with the widest lam margin is kept;
    a1 and a2 are then bisected on their exit faces, the mechanism behind the
    topological argument: starts on the + face leave with a > 0 and starts on
    the - face leave with a < 0, so an interior point never leaves.
    """
    if samples < 8:
        raise ValueError("need at least 8 samples")
    t_end = T / 10 if t_end is None else t_end
    C = C or constants(N)
    nu = nu if nu is not None else solve_eigen(N).nu
    box = initial_box(T, N, C)
    lc, lr, r = box["lam_center"], box["lam_radius"], box["a_radius"]
    used = 0

    n_lam = max(samples // 4, 3)
    lam_lo = max(lc - lr, 1e-3 * lc)
    best, best_m, lam_ok = None, -np.inf, []
    for l0 in np.unique(np.concatenate([[lc], np.linspace(lam_lo, lc + lr, n_lam - 1)])):
        tr = _run(T, t_end, l0, 0.0, 0.0, N, C, nu, closure, kappa_K)
        used += 1
        if tr.status != "ok":
            continue
        m = float(np.min(monitor_bootstrap(tr, N, C).improved["lam"]))
        lam_ok.append(float(l0))
        if m > best_m:
            best, best_m = float(l0), m
    brackets = {"lam": [min(lam_ok), max(lam_ok)] if lam_ok else None}
    if best is None:
        return ShootResult(T, t_end, None, {}, brackets, {}, used, closure)

    winner = {"a1": 0.0, "a2": 0.0}
    per_axis = (samples - used) // 2
    for axis in ("a1", "a2"):
        lo, hi = -r, r
        found = None
        for _ in range(per_axis):
            mid = 0.5 * (lo + hi)
            a1, a2 = (mid, winner["a2"]) if axis == "a1" else (winner["a1"], mid)
            sgn = _exit_sign(_run(T, t_end, best, a1, a2, N, C, nu, closure, kappa_K), axis + "p")
            used += 1
            if sgn > 0:
                hi = mid
            elif sgn < 0:
                lo = mid
            else:
                found = mid
                break
        winner[axis] = found if found is not None else 0.5 * (lo + hi)
        brackets[axis] = [lo, hi]

    tr = _run(T, t_end, best, winner["a1"], winner["a2"], N, C, nu, closure, kappa_K, stop=False)
    used += 1
    mon = monitor_bootstrap(tr, N, C)
    margins = {"hypothesis": mon.summary()["min_margin"], "improved": mon.summary()["min_improved_margin"],
               "ok": mon.ok, "improved_ok": mon.improved_ok, "status": tr.status}
    ok = tr.status == "ok" and mon.improved_ok
    faces = face_diagnostics(T, t_end, N, C, nu, closure, kappa_K)
    return ShootResult(T, t_end, (best, winner["a1"], winner["a2"]) if ok else None, margins, brackets,
                       faces, used, tr.closure)
