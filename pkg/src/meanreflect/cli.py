"""Command-line entry point: ``mean-reflect <command> [options]``.

Exit codes: 0 success, 1 constraint or verification failure, 2 usage/config error.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import tempfile
import time
from pathlib import Path
from typing import Mapping

import numpy as np

from . import __version__
from . import skorokhod_det as det
from .config import (
    COMMANDS,
    ConfigError,
    RunConfig,
    build_investment,
    build_simulation,
    grid_of,
    list_scenarios,
    load_yaml,
    parse_config,
    path_source,
    scenario_path,
)
from .errors import ConstraintViolation, InvalidArgument, NumericalFailure
from .grid_paths import BarrierPair, sample
from .mean_sp import (
    MeanSkorokhodProblem,
    PathEnsemble,
    solve_mean_two_barrier,
    stability_constant,
    verify_minimality,
)

log = logging.getLogger("meanreflect")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


# ---------------------------------------------------------------------------
# Artifacts


def _atomic_write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def format_float(x: float) -> str:
    return "%.17g" % x


def csv_text(columns: Mapping[str, np.ndarray]) -> str:
    names = list(columns)
    cols = [np.asarray(columns[n], dtype=float) for n in names]
    lines = [",".join(names)]
    for row in zip(*cols):
        lines.append(",".join(format_float(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def write_csv(path: Path, columns: Mapping[str, np.ndarray]):
    _atomic_write(path, csv_text(columns))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path: Path, data: Mapping):
    _atomic_write(path, json.dumps(_jsonable(data), indent=2, sort_keys=True) + "\n")


def read_csv(path: Path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ConfigError(f"{path}: empty file")
    header, body = rows[0], rows[1:]
    try:
        data = np.array([[float(x) for x in r] for r in body], dtype=float).reshape(len(body), len(header))
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    return {name: data[:, i] for i, name in enumerate(header)}


def band_violation(sol, tol: float) -> float:
    slack = 2 * tol
    v = 0.0
    if sol.l is not None:
        v = max(v, float(np.max(sol.l - slack - sol.eh)))
    if sol.u is not None:
        v = max(v, float(np.max(sol.eh - sol.u - slack)))
    return v


# ---------------------------------------------------------------------------
# Commands; each returns (exit code, {artifact name: content}, meta extras)


def _cmd_sp(cfg: RunConfig):
    grid = grid_of(cfg)
    if cfg.get("y") is None:
        raise ConfigError("key 'y' is required for command 'sp'")
    y = sample(path_source(cfg["y"], grid, "y"), grid)
    lo = path_source(cfg.get("l"), grid, "l")
    up = path_source(cfg.get("u"), grid, "u")
    bp = BarrierPair(None if lo is None else sample(lo, grid), None if up is None else sample(up, grid))
    sol = det.solve_two_barrier_recursive(y, bp)
    kf = det.formula_k(y.values, bp.lower_values(len(grid)), bp.upper_values(len(grid)))
    gap = float(np.max(np.abs(kf - sol.k.values)))
    ax = det.check_axioms(y, bp, sol, det.CONTACT_TOL)
    cols = {"t": grid.points, "y": y.values, "l": bp.lower_values(len(grid)),
            "u": bp.upper_values(len(grid)), "k": sol.k.values, "x": sol.x.values}
    report = {"formula_gap": gap, "axioms_ok": ax.ok}
    code = EXIT_OK if ax.ok and gap <= 1e-10 else EXIT_FAIL
    return code, {"solution.csv": cols, "report.json": report}, {}


def _sde_meta(sim):
    C_h, C_lit = stability_constant(sim.h, sim.h)
    return {
        "h": sim.h.to_dict(),
        "terms": [t.to_dict() for t in sim.terms],
        "x0": sim.x0.to_dict(),
        "constants": {"C_h": C_h, "C_h_literal": C_lit, "c": [t.c for t in sim.terms],
                      "mu": [t.mu for t in sim.terms]},
    }


def _band_report(sol, tol):
    v = band_violation(sol, tol)
    return {"band_violation": v, "constraint_ok": v <= 0.0, "k_final": float(sol.k[-1])}


def _cmd_mean_sp(cfg: RunConfig):
    from .sde import plain_euler

    sim = build_simulation(cfg)
    grid = sim.grid()
    Y = PathEnsemble(grid, plain_euler(sim))
    lo, up = sim.barrier_values(grid)
    bp = BarrierPair(None if lo is None else sample(sim.lower, grid),
                     None if up is None else sample(sim.upper, grid))
    sol = solve_mean_two_barrier(MeanSkorokhodProblem(Y, sim.h, bp, sim.tol, sim.workers))
    rep = _band_report(sol, sim.tol)
    rep["minimality"] = verify_minimality(sol.k, sol.eh, sol.l, sol.u, sim.tol).to_dict()
    rep["formula_gap"] = sol.formula_gap
    code = EXIT_OK if rep["constraint_ok"] else EXIT_FAIL
    return code, {"solution.csv": sol.columns(), "report.json": rep}, _sde_meta(sim)


def _cmd_simulate(cfg: RunConfig):
    from .sde import euler_mean_reflected

    sim = build_simulation(cfg)
    sol = euler_mean_reflected(sim)
    rep = _band_report(sol, sim.tol)
    code = EXIT_OK if rep["constraint_ok"] else EXIT_FAIL
    timing = {"step_seconds_total": float(sum(sol.diagnostics["step_seconds"]))}
    return code, {"solution.csv": sol.columns(), "report.json": rep}, _sde_meta(sim), timing


def _cmd_picard(cfg: RunConfig):
    from .sde import euler_mean_reflected, picard_solve

    sim = build_simulation(cfg)
    sol, intervals = picard_solve(sim, cfg.get("picard_tol", 1e-10), cfg.get("max_iter", 200))
    eul = euler_mean_reflected(sim)
    gap = float(np.max(np.abs(sol.k - eul.k)))
    rep = _band_report(sol, sim.tol)
    rep["euler_gap"] = gap
    rep["intervals"] = [
        {"start": iv.start, "end": iv.end, "iterations": iv.iterations, "max_ratio": iv.max_ratio}
        for iv in intervals
    ]
    ok = rep["constraint_ok"] and gap <= cfg.get("picard_tol", 1e-10) + 10 * sim.tol
    return (EXIT_OK if ok else EXIT_FAIL), {"solution.csv": sol.columns(), "report.json": rep}, _sde_meta(sim)


def _cmd_converge(cfg: RunConfig):
    from .sde import convergence_study

    sim = build_simulation(cfg)
    n_list = cfg.get("n_list") or [sim.n]
    ref = cfg.get("reference_n") or max(n_list) * 4
    table = convergence_study(sim, n_list, ref)
    cols = {
        "n": [r.n for r in table.rows],
        "err_k": [r.err_k for r in table.rows],
        "err_X": [r.err_X for r in table.rows],
    }
    rep = {"reference_n": ref, "monotone_k": table.monotone, "monotone_X": table.monotone_X}
    ok = len(table.rows) < 2 or table.monotone
    return (EXIT_OK if ok else EXIT_FAIL), {"solution.csv": cols, "report.json": rep}, _sde_meta(sim)


def _cmd_invest(cfg: RunConfig):
    from .investment import investment_scenario

    params = build_investment(cfg)
    res = investment_scenario(params, n=cfg["steps"], q=cfg["horizon"], N=cfg["particles"],
                              seed=cfg["seed"], tol=cfg["tol"], workers=cfg["workers"])
    sol = res.solution
    strategy = {
        "t": sol.grid.points,
        "S_mean": res.S.mean(axis=1),
        "pi_mean": res.pi.mean(axis=1),
        "wealth_mean": res.wealth.mean(axis=1),
        "L": res.L,
        "U": res.U,
    }
    rep = res.summary()
    ok = res.admissible and res.identity_ok
    meta = {"h": params.h.to_dict(), "terms": res.diagnostics["terms"]}
    return (EXIT_OK if ok else EXIT_FAIL), {"solution.csv": sol.columns(), "strategy.csv": strategy,
                                            "report.json": rep}, meta


def _cmd_verify(cfg: RunConfig):
    src = cfg.get("input")
    if not src:
        raise ConfigError("command 'verify' needs an input solution file (--input or key 'input')")
    data = read_csv(Path(src))
    if "k" not in data:
        raise ConfigError(f"{src}: no 'k' column")
    if "eh" in data:
        eh = data["eh"]
    elif "x" in data:
        eh = data["x"]
    else:
        raise ConfigError(f"{src}: needs an 'eh' or 'x' column")
    rep = verify_minimality(data["k"], eh, data.get("l"), data.get("u"), cfg["tol"])
    return (EXIT_OK if rep.ok else EXIT_FAIL), {"report.json": rep.to_dict()}, {"input": str(src)}


HANDLERS = {
    "sp": _cmd_sp,
    "mean-sp": _cmd_mean_sp,
    "simulate": _cmd_simulate,
    "picard": _cmd_picard,
    "converge": _cmd_converge,
    "invest": _cmd_invest,
    "verify": _cmd_verify,
}


def run(cfg: RunConfig, write_timing: bool = False) -> tuple[int, Path]:
    """Execute a resolved configuration and write its artifacts; returns (exit code, run dir)."""
    t0 = time.perf_counter()
    out = HANDLERS[cfg.command](cfg)
    code, artifacts, extra = out[0], out[1], out[2]
    timing = out[3] if len(out) > 3 else {}
    run_dir = Path(cfg["out"]) / cfg.run_id
    for name, content in artifacts.items():
        if name.endswith(".csv"):
            write_csv(run_dir / name, content)
        else:
            write_json(run_dir / name, content)
    meta = {
        "command": cfg.command,
        "run_id": cfg.run_id,
        "version": __version__,
        "config": cfg.result_dict(),
        "seed": cfg["seed"],
        "N": cfg["particles"],
        "n": cfg["steps"],
        "q": cfg["horizon"],
        "exit_code": code,
        **extra,
    }
    write_json(run_dir / "meta.json", meta)
    if write_timing:
        timing = {"wall_time": time.perf_counter() - t0, **timing}
        write_json(run_dir / "timing.json", timing)
    return code, run_dir


# ---------------------------------------------------------------------------
# argparse front end


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mean-reflect", description="Mean-reflected Skorokhod problems and SDEs.")
    p.add_argument("command", nargs="?", choices=COMMANDS)
    p.add_argument("--config", help="YAML configuration file")
    p.add_argument("--scenario", help="name of a shipped scenario")
    p.add_argument("--seed", type=int)
    p.add_argument("--particles", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--horizon", type=float)
    p.add_argument("--tol", type=float)
    p.add_argument("--out")
    p.add_argument("--workers", type=int)
    p.add_argument("--input", help="solution file for 'verify'")
    p.add_argument("--timing", action="store_true", help="also write timing.json (not reproducible)")
    p.add_argument("--list-scenarios", action="store_true")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def config_from_args(args: argparse.Namespace) -> RunConfig:
    if args.config and args.scenario:
        raise ConfigError("use either --config or --scenario")
    data = {}
    if args.scenario:
        data = load_yaml(scenario_path(args.scenario))
    elif args.config:
        data = load_yaml(args.config)
    overrides = {k: getattr(args, k) for k in ("seed", "particles", "steps", "horizon", "tol", "out",
                                                 "workers", "input")}
    return parse_config(data, overrides, args.command)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.list_scenarios:
        print("\n".join(list_scenarios()))
        return EXIT_OK
    try:
        cfg = config_from_args(args)
        code, run_dir = run(cfg, args.timing)
    except (ConfigError, InvalidArgument) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConstraintViolation, NumericalFailure) as exc:
        print(f"failure: {exc}", file=sys.stderr)
        return EXIT_FAIL
    status = "ok" if code == EXIT_OK else "FAILED"
    print(f"{cfg.command} {status}: {run_dir}")
    if code != EXIT_OK and (run_dir / "report.json").exists():
        print((run_dir / "report.json").read_text(), file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
