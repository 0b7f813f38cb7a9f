"""Command-line entry point: ``spl solve`` and ``spl eigen``.

Exit codes: 0 success, 1 solver failure, 2 configuration error,
3 a certificate failed.  Set SPL_LOG_LEVEL (e.g. DEBUG) for verbosity.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .case1 import StageError, solve_caseI
from .case2 import solve_caseII
from .config import ConfigError, RunConfig, parse_config
from .eigen import first_eigenpair
from .energy import CaseISpec, CaseIISpec
from .mesh import build_mesh, field_to_csv
from .quadrature import QuadratureError
from .solvers import SolverError

log = logging.getLogger("spl")

EXIT_OK, EXIT_SOLVER, EXIT_CONFIG, EXIT_CERT = 0, 1, 2, 3


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, Path):
        return str(obj)
    return obj


def write_report(path: Path, report: dict) -> Path:
    path.write_text(json.dumps(_jsonable(report), indent=2, sort_keys=True) + "\n")
    return path


def _run_caseI(cfg: RunConfig, mesh, out: Path) -> dict:
    spec = CaseISpec(cfg.p, cfg.q, cfg.lam, cfg.f)
    rep = solve_caseI(spec, cfg.weight, mesh, tol=cfg.solve_tol)
    certs = rep.certificates(cfg.residual_target)
    M = rep.interval
    field_to_csv(
        out / "solution.csv",
        mesh,
        u=rep.solution.values,
        lower=M.lower.values,
        upper=M.upper.values,
        v0=rep.v0.values,
        e1=rep.eigen.e1.values,
    )
    summary = rep.summary()
    seconds = summary.pop("seconds")
    return {
        "case": "I",
        "lambda": cfg.lam,
        "constants": {k: summary[k] for k in ("lambda1", "a_lambda", "A_lambda", "c_K")},
        "energy": summary["energy"],
        "residual": summary["residual"],
        "defects": {"sub_max": summary["sub_defect_max"], "super_min": summary["super_defect_min"]},
        "solution_min_on_compact": summary["solution_min_on_compact"],
        "strictly_inside_fraction": summary["strictly_inside_fraction"],
        "iterations": summary["iterations"],
        "energy_log": rep.energies,
        "certificates": certs,
        "timing": {"total": seconds},
    }


def _run_caseII(cfg: RunConfig, mesh, out: Path) -> dict:
    from .case2 import mp_geometry

    if mesh.dim < 3:
        log.info("n = %d is below the n >= 3 hypothesis of the analysis; running anyway", mesh.dim)
    eig = first_eigenpair(cfg.weight, cfg.p, mesh, tol=cfg.eigen_tol)
    probe = CaseIISpec(cfg.p, cfg.q, cfg.r, 1.0)
    geo = mp_geometry(probe, cfg.weight, mesh, eig, k=cfg.k, seed=cfg.seed, s=cfg.s)
    lam = cfg.lam if cfg.lam is not None else cfg.lambda_fraction * geo.Lambda
    spec = CaseIISpec(cfg.p, cfg.q, cfg.r, lam)
    rep = solve_caseII(
        spec,
        cfg.weight,
        mesh,
        k=cfg.k,
        schedule=cfg.schedule,
        seed=cfg.seed,
        residual_tol=cfg.residual_target,
        cauchy_tol=cfg.cauchy_tol,
        eig=eig,
        geo=geo,
    )
    sol = rep.solutions
    field_to_csv(out / "nu.csv", mesh, nu=sol.nu.values, xi=rep.barrier.values)
    field_to_csv(out / "zeta.csv", mesh, zeta=sol.zeta.values, xi=rep.barrier.values)
    with (out / "path_profile.csv").open("w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["t", "I"])
        for t, v in zip(sol.path.t, sol.path.values):
            wr.writerow([repr(float(t)), repr(float(v))])
    summary = rep.summary()
    certs = summary.pop("certificates")
    return {
        "case": "II",
        "lambda": lam,
        "constants": {k: summary[k] for k in ("lambda1", "k", "C_embed", "l", "R", "rho", "Lambda_est", "T", "Theta_est")},
        "energies": {"nu": summary["energy_nu"], "zeta": summary["energy_zeta"]},
        "separation": summary["separation"],
        "sphere_min": summary["sphere_min"],
        "residuals": {"nu": summary["residual_nu"], "zeta": summary["residual_zeta"]},
        "energy_identity_error": {"nu": summary["identity_error_nu"], "zeta": summary["identity_error_zeta"]},
        "converged": {"nu": summary["converged_nu"], "zeta": summary["converged_zeta"]},
        "below_analysis_dimension": mesh.dim < 3,
        "eps_log": [lv.record() for lv in sol.levels],
        "path_max_history": sol.path.max_history,
        "certificates": certs,
        "timing": rep.stage_seconds,
    }


def run(cfg: RunConfig, out: Path | None = None) -> tuple[dict, int]:
    """Execute the configured pipeline, write outputs, return (report, exit code)."""
    out = Path(out if out is not None else cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    mesh = build_mesh(cfg.domain, cfg.resolution)
    body = _run_caseI(cfg, mesh, out) if cfg.case == "I" else _run_caseII(cfg, mesh, out)
    body["timing"] = {**body["timing"], "wall_clock": time.perf_counter() - t0}
    report = {"config": cfg.echo(), "seed": cfg.seed, "version": __version__, **body}
    write_report(out / "report.json", report)
    failed = [k for k, v in body["certificates"].items() if v == "fail"]
    return report, EXIT_CERT if failed else EXIT_OK


def _eigen(cfg: RunConfig, out: Path) -> int:
    out.mkdir(parents=True, exist_ok=True)
    mesh = build_mesh(cfg.domain, cfg.resolution)
    eig = first_eigenpair(cfg.weight, cfg.p, mesh, tol=cfg.eigen_tol)
    eig.to_csv(out / "e1.csv")
    eig.to_json(out / "eigen.json")
    print(json.dumps(eig.record()))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="spl", description="Weighted p-Laplacian problems with singular nonlinearities.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    so = sub.add_parser("solve", help="run the case I or case II pipeline")
    so.add_argument("--case", choices=("I", "II"), required=True)
    so.add_argument("--config", required=True, type=Path)
    so.add_argument("--out", type=Path, default=None, help="output directory (default: config 'output')")
    so.add_argument("--seed", type=int, default=None)
    so.add_argument("--lambda", dest="lam", type=float, default=None)
    so.add_argument("--p", type=float, default=None)
    so.add_argument("--q", type=float, default=None)
    so.add_argument("--r", type=float, default=None)
    so.add_argument("--eps-floor", dest="eps_floor", type=float, default=None)
    so.add_argument("--k", type=float, default=None)

    ei = sub.add_parser("eigen", help="first eigenpair only")
    ei.add_argument("--config", required=True, type=Path)
    ei.add_argument("--out", type=Path, default=None)
    return ap


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("SPL_LOG_LEVEL", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    args = build_parser().parse_args(argv)
    try:
        if args.command == "eigen":
            cfg = parse_config(args.config)
            return _eigen(cfg, args.out or cfg.output)
        overrides = {"lambda": args.lam, "p": args.p, "q": args.q, "r": args.r, "eps_floor": args.eps_floor, "k": args.k}
        cfg = parse_config(args.config, case=args.case, overrides=overrides)
        if args.seed is not None:
            cfg.seed = args.seed
        report, code = run(cfg, args.out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (StageError, SolverError, QuadratureError) as exc:
        stage = getattr(exc, "stage", type(exc).__name__)
        print(f"solver failure [{stage}]: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    failed = [k for k, v in report["certificates"].items() if v != "pass"]
    for k in failed:
        print(f"certificate {k}: {report['certificates'][k]}", file=sys.stderr)
    print(json.dumps(_jsonable({"case": report["case"], "certificates": report["certificates"]})))
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
