"""Run configuration, JSON/CSV output and the result cache."""
from __future__ import annotations

import csv
import json
import math
import os
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

_F = "__f17__"


def _prep(obj):
    if isinstance(obj, dict):
        return {str(k): _prep(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_prep(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_prep(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return None if not math.isfinite(x) else _F + "%.17g" % x
    if isinstance(obj, Path):
        return str(obj)
    return obj


def dumps(obj, indent: int = 2) -> str:
    """JSON with every float written to 17 significant digits; non-finite floats become null."""
    text = json.dumps(_prep(obj), indent=indent, sort_keys=False)
    return re.sub(r'"%s([^"]*)"' % _F, r"\1", text)


@dataclass
class Case:
    name: str
    paper_ref: str
    status: str  # "pass" | "fail"
    margin: float
    tolerance: float
    details: dict = field(default_factory=dict)
    inputs: str | None = None

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    def line(self) -> str:
        return f"[{self.status.upper():4s}] {self.name}: margin {self.margin:.3g} (tol {self.tolerance:.3g})"

    def to_dict(self) -> dict:
        d = {"name": self.name, "paper_ref": self.paper_ref, "status": self.status,
             "margin": self.margin, "tolerance": self.tolerance}
        if self.inputs is not None:
            d["inputs"] = self.inputs
        if self.details:
            d["details"] = self.details
        return d


def check(name: str, ref: str, value: float, tol: float, upper: bool = True, **details) -> Case:
    """Case for value <= tol (upper) or value >= tol; margin is the signed slack."""
    margin = (tol - value) if upper else (value - tol)
    ok = bool(np.isfinite(margin) and margin >= 0)
    return Case(name, ref, "pass" if ok else "fail", float(margin), float(tol), {"value": value, **details})


def write_report(path, suite: str, cases) -> dict:
    doc = {"suite": suite, "cases": [c.to_dict() for c in cases]}
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(doc) + "\n")
    return doc


def write_csv(path, header, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([("%.17g" % v) if isinstance(v, (float, np.floating)) else v for v in row])


# ---- configuration -------------------------------------------------------
def _parse(text: str):
    if text in ("true", "false"):
        return text == "true"
    if text == "none":
        return None
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return "none"
    if isinstance(v, float):
        return repr(v)
    return str(v)


@dataclass
class RunConfig:
    N: int = 7
    points: int = 2048
    r_min: float = 1e-4
    r_max: float = 1e3
    seed: int = 0
    out: str = "results"
    tol: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)

    def to_text(self) -> str:
        lines = []
        for k, v in asdict(self).items():
            if isinstance(v, dict):
                lines += [f"{k}.{kk}={_fmt(vv)}" for kk, vv in sorted(v.items())]
            else:
                lines.append(f"{k}={_fmt(v)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        cfg = cls()
        for n, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"line {n}: expected key=value, got {raw!r}")
            key, val = (s.strip() for s in line.split("=", 1))
            if "." in key:
                group, sub = key.split(".", 1)
                if group not in ("tol", "params"):
                    raise ValueError(f"line {n}: unknown group {group!r}")
                getattr(cfg, group)[sub] = _parse(val)
            elif key in cls.__dataclass_fields__:
                setattr(cfg, key, _parse(val))
            else:
                raise ValueError(f"line {n}: unknown key {key!r}")
        return cfg

    def save(self, path) -> None:
        Path(path).write_text(self.to_text())

    @classmethod
    def load(cls, path) -> "RunConfig":
        return cls.from_text(Path(path).read_text())


# ---- cache of expensive scalars -------------------------------------------
def cache_dir() -> Path:
    return Path(os.environ.get("HARTREE_LAB_CACHE", Path.home() / ".cache" / "hartree_lab"))


def cached_constants(N: int = 7, points: int = 2048, refresh: bool = False) -> dict:
    """C1, C2, C3, kappa and the unstable pair scalars; computed once and stored as JSON."""
    path = cache_dir() / f"constants_N{N}_n{points}.json"
    if path.exists() and not refresh:
        return json.loads(path.read_text())
    from .groundstate import constants, default_grid
    from .linops import solve_eigen

    grid = default_grid(N, points)
    C = constants(N, grid)
    pair = solve_eigen(N, grid)
    out = {"N": N, "points": points, "c0": C.c0, "C1": C.C1, "C2": C.C2, "C3": C.C3, "kappa": C.kappa,
           "nu": pair.nu, "M": pair.M, "rhoY": pair.rhoY}
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(out) + "\n")
    return out


def threads() -> int:
    try:
        return max(1, int(os.environ.get("HARTREE_LAB_THREADS", "1")))
    except ValueError:
        return 1
