"""TOML run configuration: parsing and field-level validation."""

from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10
    import tomli as tomllib

from .domain import Domain
from .energy import Nonlinearity
from .weights import Weight, check_s_range, embedding_exponents, largest_admissible_s


class ConfigError(ValueError):
    """Invalid configuration; ``errors`` lists every violation found."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.errors))


SECTIONS = {
    "": {"case", "seed", "output", "domain", "mesh", "weight", "problem", "tolerances"},
    "domain": {"kind", "bounds", "center", "radius"},
    "mesh": {"resolution"},
    "weight": {"kind", "value", "alpha", "path"},
    "problem": {"p", "q", "lambda", "lambda_fraction", "r", "k", "eps_floor", "s", "f"},
    "problem.f": {"kind", "c0", "c1", "beta"},
    "tolerances": {"solve", "residual", "cauchy", "eigen"},
}


@dataclass
class RunConfig:
    case: str
    domain: Domain
    resolution: int
    weight: Weight
    p: float
    q: float
    lam: float | None = None
    lambda_fraction: float | None = None
    f: Nonlinearity | None = None
    r: float | None = None
    k: float = 0.5
    eps_floor: float = 2.0**-20
    s: float | None = None
    solve_tol: float = 1e-10
    residual_tol: float | None = None
    cauchy_tol: float = 1e-6
    eigen_tol: float = 1e-8
    seed: int = 0
    output: Path = Path("spl-out")
    raw: dict = field(default_factory=dict, repr=False)

    @property
    def schedule(self) -> tuple[float, ...]:
        """Dyadic eps levels 2^-1, 2^-2, ... down to ``eps_floor``."""
        levels = max(1, int(round(-math.log2(self.eps_floor))))
        return tuple(2.0**-j for j in range(1, levels + 1))

    @property
    def residual_target(self) -> float:
        if self.residual_tol is not None:
            return self.residual_tol
        return 1e-6 if self.case == "I" else 1e-5

    def echo(self) -> dict:
        return self.raw


def _unknown(table: dict, section: str, errors: list[str]):
    allowed = SECTIONS[section]
    for key in table:
        if key not in allowed:
            where = f"[{section}] " if section else ""
            errors.append(f"{where}unknown key {key!r} (allowed: {', '.join(sorted(allowed))})")


def _num(table: dict, key: str, errors: list[str], where: str, default=None, kind=float):
    if key not in table:
        return default
    val = table[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        errors.append(f"{where}.{key} must be a number, got {val!r}")
        return default
    if kind is int and int(val) != val:
        errors.append(f"{where}.{key} must be an integer")
        return default
    return kind(val)


def _domain(t: dict, errors: list[str]) -> Domain | None:
    kind = t.get("kind", "interval")
    try:
        if kind == "interval":
            a, b = t.get("bounds", [-1.0, 1.0])
            return Domain.interval(float(a), float(b))
        if kind == "rectangle":
            x0, x1, y0, y1 = t.get("bounds", [-1.0, 1.0, -1.0, 1.0])
            return Domain.rectangle(float(x0), float(x1), float(y0), float(y1))
        if kind == "disk":
            cx, cy = t.get("center", [0.0, 0.0])
            return Domain.disk(float(cx), float(cy), float(t.get("radius", 1.0)))
        errors.append(f"domain.kind must be interval, rectangle or disk, got {kind!r}")
    except (TypeError, ValueError) as exc:
        errors.append(f"domain: {exc}")
    return None


def _weight(t: dict, n: int, p: float, base: Path, errors: list[str]) -> Weight | None:
    kind = t.get("kind", "constant")
    try:
        if kind == "constant":
            return Weight.constant(_num(t, "value", errors, "weight", 1.0), n=n, p=p)
        if kind == "power":
            alpha = _num(t, "alpha", errors, "weight", 0.0)
            return Weight.power(alpha, n=n, p=p)
        if kind == "table":
            if "path" not in t:
                errors.append("weight.path is required for a tabulated weight")
                return None
            path = Path(t["path"])
            path = path if path.is_absolute() else base / path
            if not path.is_file():
                errors.append(f"weight.path: file not found: {path}")
                return None
            w = Weight.from_csv(path, p=p)
            if w.n != n:
                errors.append(f"weight table is {w.n}D but the domain is {n}D")
            return w
        errors.append(f"weight.kind must be constant, power or table, got {kind!r}")
    except (TypeError, ValueError) as exc:
        errors.append(f"weight: {exc}")
    return None


def build_config(data: dict, base: Path = Path("."), case: str | None = None) -> RunConfig:
    """Validate a parsed TOML mapping; raises ConfigError listing all problems."""
    errors: list[str] = []
    _unknown(data, "", errors)
    for sec in ("domain", "mesh", "weight", "problem", "tolerances"):
        if sec in data and not isinstance(data[sec], dict):
            errors.append(f"[{sec}] must be a table")
            data = {**data, sec: {}}
        _unknown(data.get(sec, {}), sec, errors)
    prob = data.get("problem", {})
    if isinstance(prob.get("f"), dict):
        _unknown(prob["f"], "problem.f", errors)

    file_case = data.get("case")
    if case is None:
        case = file_case
    elif file_case is not None and str(file_case) != case:
        errors.append(f"case {file_case!r} in the file conflicts with --case {case}")
    if case not in ("I", "II"):
        errors.append(f"case must be 'I' or 'II', got {case!r}")

    domain = _domain(data.get("domain", {}), errors)
    res = _num(data.get("mesh", {}), "resolution", errors, "mesh", 512, int)
    if res is not None and res < 2:
        errors.append("mesh.resolution must be at least 2")

    p = _num(prob, "p", errors, "problem", 2.0)
    q = _num(prob, "q", errors, "problem", 0.5)
    if p is not None and not p > 1:
        errors.append(f"p must exceed 1, got {p:g}")
    if q is not None and not 0 < q < 1:
        errors.append(f"q must lie in (0,1), got {q:g}")
    lam = _num(prob, "lambda", errors, "problem")
    frac = _num(prob, "lambda_fraction", errors, "problem")
    if lam is not None and frac is not None:
        errors.append("give either problem.lambda or problem.lambda_fraction, not both")
    if lam is None and frac is None:
        if case == "II":
            frac = 0.1
        else:
            errors.append("problem.lambda is required")
    if lam is not None and not lam > 0:
        errors.append(f"lambda must be positive, got {lam:g}")
    if frac is not None and not frac > 0:
        errors.append(f"lambda_fraction must be positive, got {frac:g}")
    if frac is not None and case == "I":
        errors.append("problem.lambda_fraction applies to case II only")

    n = domain.dim if domain is not None else 1
    wt = _weight(data.get("weight", {}), n, p if p and p > 1 else 2.0, base, errors)

    f = None
    r = _num(prob, "r", errors, "problem")
    k = _num(prob, "k", errors, "problem", 0.5)
    eps_floor = _num(prob, "eps_floor", errors, "problem", 2.0**-20)
    s = _num(prob, "s", errors, "problem")
    if case == "I":
        for key in ("r", "k", "eps_floor"):
            if key in prob:
                errors.append(f"problem.{key} applies to case II only")
        ft = prob.get("f", {"kind": "affine"})
        try:
            fk = ft.get("kind", "affine")
            if fk == "affine":
                f = Nonlinearity("affine", c0=float(ft.get("c0", 1.0)), c1=float(ft.get("c1", 1.0)))
            elif fk == "power_shift":
                f = Nonlinearity("power_shift", c0=float(ft.get("c0", 1.0)), beta=float(ft.get("beta", 1.0)))
                if p and q and not f.beta < q + p - 1:
                    errors.append(f"f.beta must be below q+p-1 = {q + p - 1:g}, got {f.beta:g}")
            else:
                errors.append(f"f.kind must be affine or power_shift, got {fk!r}")
            if f is not None and not f.c0 > 0:
                errors.append("f(0) > 0 is required (f.c0 must be positive)")
        except (TypeError, ValueError, AttributeError) as exc:
            errors.append(f"problem.f: {exc}")
    elif case == "II":
        if "f" in prob:
            errors.append("problem.f applies to case I only")
        if r is None:
            r = 3.0
        if k is not None and not 0 < k < 1:
            errors.append(f"k must lie in (0,1), got {k:g}")
        if eps_floor is not None and not 0 < eps_floor < 1:
            errors.append(f"eps_floor must lie in (0,1), got {eps_floor:g}")
        if p and p > 1:
            if not r > p - 1:
                errors.append(f"r must lie in the open interval (p-1, p_s*-1); got r = {r:g} <= p-1 = {p - 1:g}")
            elif wt is not None:
                try:
                    s_eff = s if s is not None else largest_admissible_s(wt)
                    check_s_range(p, s_eff, n)
                    star = embedding_exponents(p, s_eff, n).p_s_star
                    if not r < star - 1:
                        errors.append(f"r must lie in the open interval (p-1, p_s*-1) = ({p - 1:g}, {star - 1:g}); got r = {r:g}")
                except ValueError as exc:
                    errors.append(f"problem.s: {exc}")

    tol = data.get("tolerances", {})
    solve_tol = _num(tol, "solve", errors, "tolerances", 1e-10)
    residual_tol = _num(tol, "residual", errors, "tolerances")
    cauchy_tol = _num(tol, "cauchy", errors, "tolerances", 1e-6)
    eigen_tol = _num(tol, "eigen", errors, "tolerances", 1e-8)
    for name, v in (("solve", solve_tol), ("residual", residual_tol), ("cauchy", cauchy_tol), ("eigen", eigen_tol)):
        if v is not None and not v > 0:
            errors.append(f"tolerances.{name} must be positive")
    seed = _num(data, "seed", errors, "seed", 0, int)
    output = data.get("output", "spl-out")

    if errors:
        raise ConfigError(errors)
    return RunConfig(
        case=case,
        domain=domain,
        resolution=res,
        weight=wt,
        p=p,
        q=q,
        lam=lam,
        lambda_fraction=frac,
        f=f,
        r=r,
        k=k,
        eps_floor=eps_floor,
        s=s,
        solve_tol=solve_tol,
        residual_tol=residual_tol,
        cauchy_tol=cauchy_tol,
        eigen_tol=eigen_tol,
        seed=seed,
        output=Path(output),
        raw=data,
    )


def parse_config(path, case: str | None = None, overrides: dict | None = None) -> RunConfig:
    """Read and validate a TOML run file.  ``overrides`` patch ``[problem]`` keys."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError([f"config file not found: {path}"])
    try:
        data = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([f"{path}: {exc}"]) from exc
    if overrides:
        prob = dict(data.get("problem", {}))
        given = {k: v for k, v in overrides.items() if v is not None}
        if "lambda" in given:
            prob.pop("lambda_fraction", None)
        prob.update(given)
        data["problem"] = prob
    return build_config(data, path.parent, case)
