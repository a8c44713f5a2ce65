"""Command-line interface.

Exit codes: 0 success, 1 usage or input error, 2 verification failure.
"""
from __future__ import annotations

import logging
import math
import sys
from pathlib import Path
from types import SimpleNamespace

import click
import numpy as np

from .radial import GridError, check_dimension
from .reporting import Case, RunConfig, cached_constants, dumps, threads, write_csv, write_report

log = logging.getLogger("hartree_lab")


class VerificationFailed(Exception):
    pass


def _cfg(ctx) -> RunConfig:
    return ctx.obj["cfg"]


def _param(ctx, name, value, default=None):
    """Flag value if given, else the config file's params.<name>, else the default."""
    if value is not None:
        return value
    return _cfg(ctx).params.get(name, default)


def _dim(N) -> int:
    try:
        return check_dimension(N)
    except GridError as exc:
        raise click.UsageError(f"{exc} (the analysis assumes N >= 7)") from None


def _outdir(ctx) -> Path:
    p = Path(_cfg(ctx).out)
    try:
        p.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise click.UsageError(f"output directory {p} is not writable: {exc}") from None
    return p


def _emit(path: Path, obj) -> None:
    text = dumps(obj)
    path.write_text(text + "\n")
    click.echo(text)


def _constants_ns(N: int) -> SimpleNamespace:
    d = cached_constants(N)
    return SimpleNamespace(**d)


@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.option("--config", "config_path", type=click.Path(dir_okay=False), default=None,
              help="flat key=value file; flags override it")
@click.option("--out", default=None, help="output directory")
@click.option("--seed", type=int, default=None)
@click.option("-v", "--verbose", is_flag=True)
@click.pass_context
def cli(ctx, config_path, out, seed, verbose):
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig.load(config_path) if config_path else RunConfig()
    except (OSError, ValueError) as exc:
        raise click.UsageError(f"bad config file: {exc}") from None
    if out is not None:
        cfg.out = out
    if seed is not None:
        cfg.seed = seed
    ctx.obj = {"cfg": cfg}


@cli.command()
@click.option("--N", "N", type=int, default=7)
@click.option("--refresh", is_flag=True, help="recompute even if cached")
@click.pass_context
def constants(ctx, N, refresh):
    """C1, C2, C3, kappa and the unstable-pair scalars."""
    N = _dim(N)
    from .groundstate import constants as compute

    C = compute(N)
    out = {k: getattr(C, k) for k in ("N", "c0", "ell", "C1", "C2", "C3", "kappa")}
    out["checks"] = {k: v for k, v in C.checks.items() if isinstance(v, (int, float))}
    out.update({k: v for k, v in cached_constants(N, refresh=refresh).items() if k in ("nu", "M", "rhoY")})
    _emit(_outdir(ctx) / "constants.json", out)


@cli.command()
@click.option("--N", "N", type=int, default=7)
@click.pass_context
def spectrum(ctx, N):
    """Unstable pair (nu, Y1, Y2); profiles written as CSV."""
    N = _dim(N)
    from .groundstate import ground_state
    from .linops import kernel_residuals, orthogonality, solve_eigen

    gs = ground_state(N)
    pair = solve_eigen(N, gs.grid)
    out = _outdir(ctx)
    write_csv(out / "eigen_pair.csv", ["r", "Y1", "Y2"], zip(gs.grid.r, pair.Y1, pair.Y2))
    _emit(out / "spectrum.json", {**pair.summary(), "kernel": kernel_residuals(gs), "orthogonality": orthogonality(pair, gs)})


@cli.command()
@click.option("--input", "path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="field CSV (r, re, im); default: a two-bubble demo field")
@click.option("--guess", default="-1.5707963267948966,1,0,0.05", help="zeta,mu,theta,lam")
@click.option("--N", "N", type=int, default=7)
@click.pass_context
def decompose(ctx, path, guess, N):
    """Modulation parameters of a field."""
    N = _dim(N)
    from .groundstate import ground_state
    from .modulation import ModulationError, compose, decompose as run
    from .radial import read_field_csv

    gs = ground_state(N)
    try:
        p = [float(x) for x in guess.split(",")]
        if len(p) != 4:
            raise ValueError
    except ValueError:
        raise click.UsageError("--guess needs four comma-separated numbers") from None
    if path:
        grid, u = read_field_csv(path)
        if grid.size != gs.grid.size or not np.allclose(grid.r, gs.grid.r, rtol=1e-12):
            u = gs.grid.interpolate(u, gs.grid.r)
    else:
        u = compose(gs, p)
    try:
        s = run(u, p, gs)
    except ModulationError as exc:
        raise click.UsageError(f"decomposition failed: {exc}") from None
    _emit(_outdir(ctx) / "decompose.json", s.summary(gs))


def _lambda0(value, T, N, C):
    if value in (None, "auto"):
        return C.kappa * abs(T) ** (-2 / (N - 6))
    return float(value)


@cli.command()
@click.option("--T", "T", type=float, default=None)
@click.option("--t-end", type=float, default=None, help="default T/10")
@click.option("--lambda0", default=None, help="'auto' = kappa |T|^{-2/(N-6)}")
@click.option("--a1", type=float, default=None)
@click.option("--a2", type=float, default=None)
@click.option("--closure", type=click.Choice(["zero", "quadratic"]), default=None)
@click.option("--kappa-K", "kappa_K", type=float, default=None)
@click.option("--N", "N", type=int, default=7)
@click.pass_context
def ode(ctx, T, t_end, lambda0, a1, a2, closure, kappa_K, N):
    """Reduced modulation/mode system from the kappa start."""
    N = _dim(N)
    from .dynamics import ReducedState, integrate_reduced, monitor_bootstrap

    T = float(_param(ctx, "T", T, -100.0))
    t_end = float(_param(ctx, "t_end", t_end, T / 10))
    if not T < t_end < 0:
        raise click.UsageError("need T < t_end < 0")
    C = _constants_ns(N)
    lam0 = _lambda0(_param(ctx, "lambda0", lambda0), T, N, C)
    s0 = ReducedState(lam=lam0, a1p=float(_param(ctx, "a1", a1, 0.0)), a2p=float(_param(ctx, "a2", a2, 0.0)))
    tr = integrate_reduced(T, s0, t_end, N, _param(ctx, "closure", closure, "zero"),
                           float(_param(ctx, "kappa_K", kappa_K, 0.0)), C=C, nu=C.nu)
    mon = monitor_bootstrap(tr, N, C)
    out = _outdir(ctx)
    tr.write_csv(out / "trajectory.csv")
    _emit(out / "ode.json", {"T": T, "t_end": t_end, "lambda0": lam0, "status": tr.status, "closure": tr.closure,
                             "g_norm": tr.notes["g_norm"], "bootstrap": mon.summary()})


@cli.command()
@click.option("--init", "init", type=click.Choice(["two-bubble", "W"]), default="two-bubble")
@click.option("--T", "T", type=float, default=None)
@click.option("--lambda0", default=None)
@click.option("--dt", type=float, default=None)
@click.option("--frames", type=int, default=None, help="number of stored frames")
@click.option("--duration", type=float, default=None, help="evolution time (default 1000 dt)")
@click.option("--N", "N", type=int, default=7)
@click.pass_context
def evolve(ctx, init, T, lambda0, dt, frames, duration, N):
    """Split-step PDE run; frames CSV plus tracked trajectory CSV."""
    N = _dim(N)
    from .dynamics import EvolutionConfig, evolve_pde, track_modulation
    from .groundstate import ground_state
    from .linops import solve_eigen
    from .modulation import BoxError, build_initial_data

    gs = ground_state(N)
    dt = float(_param(ctx, "dt", dt, 1e-4))
    frames = int(_param(ctx, "frames", frames, 100))
    duration = float(_param(ctx, "duration", duration, 1000 * dt))
    steps = max(1, int(round(duration / dt)))
    every = max(1, steps // max(frames, 1))
    out = _outdir(ctx)
    if init == "W":
        u0, guess, T, scale = gs.W() + 0j, None, 0.0, 1.0
    else:
        C = _constants_ns(N)
        T = float(_param(ctx, "T", T, -50.0))
        lam0 = _lambda0(_param(ctx, "lambda0", lambda0), T, N, C)
        pair = solve_eigen(N, gs.grid)
        try:
            u0, _, info = build_initial_data(T, lam0, 0.0, 0.0, gs, pair)
        except BoxError as exc:
            lam_ok = 0.05
            T_ok = -((C.kappa / lam_ok) ** ((N - 6) / 2))
            raise click.UsageError(f"{exc}. For a desk-scale run use e.g. --T {T_ok:.6g} (lambda0 = {lam_ok})") from None
        guess, scale = [-math.pi / 2, 1.0, 0.0, lam0], lam0
    run = evolve_pde(u0, EvolutionConfig(dt=dt, t_start=0.0, t_end=steps * dt, monitor_every=every, scale=scale), gs)
    rows = ((k, T + t, r, v.real, v.imag) for k, (t, u) in enumerate(zip(run.times, run.frames)) for r, v in zip(gs.grid.r, u))
    write_csv(out / "frames.csv", ["frame", "t", "r", "re", "im"], ((k, float(t), float(r), float(a), float(b)) for k, t, r, a, b in rows))
    summary = {"init": init, "T": T, "dt": dt, "dt_max": run.dt_max, "steps": steps, "status": run.status,
               "energy_drift": run.energy_drift, "mass_drift": run.mass_drift}
    if guess is not None:
        tr = track_modulation(run, guess, T, gs)
        tr.write_csv(out / "trajectory.csv")
        summary["tracking"] = {"status": tr.status, **tr.notes}
    _emit(out / "evolve.json", summary)
    if run.status != "ok":
        raise VerificationFailed("blow-up sentinel triggered")


@cli.command()
@click.option("--T", "T", type=float, default=None)
@click.option("--samples", type=int, default=None)
@click.option("--t-end", type=float, default=None)
@click.option("--N", "N", type=int, default=7)
@click.pass_context
def shoot(ctx, T, samples, t_end, N):
    """Survivor search over the initial box of the reduced system."""
    N = _dim(N)
    from .dynamics import shoot as run

    T = float(_param(ctx, "T", T, -100.0))
    samples = int(_param(ctx, "samples", samples, 64))
    t_end = _param(ctx, "t_end", t_end)
    C = _constants_ns(N)
    try:
        res = run(T, samples, None if t_end is None else float(t_end), N, C=C, nu=C.nu)
    except ValueError as exc:
        raise click.UsageError(str(exc)) from None
    _emit(_outdir(ctx) / "shoot.json", res.to_dict())
    if res.winner is None:
        raise VerificationFailed("no survivor at the sampled resolution")


@cli.group()
def virial():
    """Virial weight tools."""


@virial.command("audit")
@click.option("--c", "c", type=float, default=1e-3)
@click.option("--R", "R", type=float, default=20.0)
@click.option("--N", "N", type=int, default=7)
@click.pass_context
def virial_audit(ctx, c, R, N):
    """Audit P1-P5 of the cut-off weight."""
    N = _dim(N)
    from .virial import AuditError, VirialWeight, audit_weight, build_weight, THETA

    try:
        w = build_weight(c, R, N)
        rep, ok = w.audit, True
    except ValueError as exc:
        raise click.UsageError(str(exc)) from None
    except AuditError:
        rep, ok = audit_weight(VirialWeight(N, c, R, math.log(R) + THETA / c)), False
    _emit(_outdir(ctx) / "virial_audit.json", {"c": c, "R": R, "N": N, "log_R_tilde": math.log(R) + THETA / c, **rep})
    if not ok:
        raise VerificationFailed("virial weight audit failed")


def _run_one(args):
    key, N, seed, out = args
    from .acceptance import CRITERIA, Context

    return key, CRITERIA[key][1](Context(N, seed, out))


@cli.command()
@click.option("--suite", default="all", help="all or one of the suite names")
@click.option("--N", "N", type=int, default=7)
@click.pass_context
def verify(ctx, suite, N):
    """Run acceptance checks; exit 2 if any fails."""
    N = _dim(N)
    from .acceptance import CRITERIA, SUITES

    if suite != "all" and suite not in SUITES:
        raise click.UsageError(f"unknown suite {suite!r}; choose from all, {', '.join(SUITES)}")
    out = _outdir(ctx)
    seed = _cfg(ctx).seed
    keys = sorted(CRITERIA) if suite == "all" else [SUITES[suite]]
    jobs = [(k, N, seed, str(out)) for k in keys]
    n = min(threads(), len(jobs))
    if n > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(n) as pool:
            results = dict(pool.map(_run_one, jobs))
    else:
        results = dict(map(_run_one, jobs))
    cases: list[Case] = [c for k in keys for c in results[k]]
    # the single writer: failure inputs and the report are written here only
    for c in cases:
        if not c.passed and c.inputs is None:
            p = out / "failures" / f"{c.name}.json"
            p.parent.mkdir(parents=True, exist_ok=True)
            p.write_text(dumps({"name": c.name, "details": c.details}) + "\n")
            c.inputs = str(p)
    write_report(out / "report.json", suite, cases)
    for c in cases:
        click.echo(c.line())
    if not all(c.passed for c in cases):
        raise VerificationFailed(f"{sum(not c.passed for c in cases)} case(s) failed")


def main(argv=None) -> int:
    try:
        rv = cli.main(args=argv, prog_name="hartree-lab", standalone_mode=False)
    except VerificationFailed as exc:
        click.echo(f"verification failed: {exc}", err=True)
        return 2
    except click.ClickException as exc:
        exc.show()
        return 1
    except click.exceptions.Abort:
        return 1
    except (GridError, ValueError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 1
    return rv if isinstance(rv, int) else 0


if __name__ == "__main__":
    sys.exit(main())
