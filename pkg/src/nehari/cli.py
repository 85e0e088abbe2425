"""Command-line front end: ``nehari <experiment> --config <path> [--output <dir>] [--threads <n>]``.

Every run writes ``summary.json`` plus one CSV per experiment into the output
directory.  Exit status is 0 on success, 1 on a configuration (or setup)
error and 2 when a solve does not converge.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from ._backend import BACKEND
from .analysis import (AnalysisError, BoundViolation, compare_potentials, concentration_scan,
                       continuity_scan, cutoff_gamma, decay_fit)
from .config import EXPERIMENTS, ConfigError, RunConfig, config_echo, load_config, resolve_threads
from .functional import FiberError
from .grid import CylGrid, LinearSolveError, write_field
from .maxwell import (ReconstructionError, curlcurl_residual, divergence, energy_curl, reconstruct,
                      scalar_energy_in_box, write_vtk)
from .model import ModelError
from .solver import (NonConvergence, Solution, constant_spec, continuation_sweep, solve_ground_state,
                     solve_limiting, solve_many)

EXIT_OK, EXIT_CONFIG, EXIT_NONCONVERGENCE = 0, 1, 2

SWEEP_COLUMNS = ("eps", "c_eps", "m_V0", "m_Vinf", "peak_s", "eps_times_peak_s", "width",
                 "profile_count", "nu_est", "grad_norm", "iters")


def fmt(x) -> str:
    """17 significant digits for floats; integers and strings unchanged."""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


class Output:
    """Writes confined to one directory."""

    def __init__(self, root):
        self.root = Path(root).resolve()
        self.root.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        p = (self.root / name).resolve()
        if p.parent != self.root:
            raise ValueError(f"refusing to write {name!r} outside {self.root}")
        return p

    def csv(self, name, header, rows):
        path = self.path(name)
        try:
            with path.open("w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(header)
                for row in rows:
                    w.writerow([fmt(v) for v in row])
        except OSError as exc:
            raise OSError(f"cannot write {path}: {exc.strerror}") from exc
        return path


def emit_sweep_csv(path, reports, m_V0: float, m_Vinf: float, nu_est=None):
    """One row per sweep member with the columns in ``SWEEP_COLUMNS``."""
    reports = list(reports)
    if not reports:
        raise ValueError("no sweep reports to write")
    if nu_est is None:
        nu_est = [float("nan")] * len(reports)
    path = Path(path)
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(SWEEP_COLUMNS)
            for rep, nu in zip(reports, nu_est):
                w.writerow([fmt(v) for v in (
                    rep.eps, rep.c_eps, m_V0, m_Vinf, rep.peak_s, rep.eps_times_peak_s, rep.width,
                    rep.profile_count_est, nu, rep.grad_norm, rep.iterations)])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc
    return path


def _sol_summary(sol: Solution) -> dict:
    E = sol.energy
    return {
        "c_eps": E.total,
        "norm_sq": E.norm_sq,
        "nehari_residual": abs(E.nehari) / E.norm_sq,
        "grad_norm": sol.grad_norm,
        "iterations": sol.iterations,
        "converged": sol.converged,
        "wallclock": sol.wallclock,
    }


def _dump_field(out: Output, name: str, sol: Solution):
    write_field(out.path(name), sol.u)


def _limits(cfg: RunConfig, workers: int):
    spec = cfg.problem
    pot = spec.potential
    ks = [pot.V0] if pot.V0 == pot.Vinfty else [pot.V0, pot.Vinfty]
    sols = _limit_solves(spec, ks, cfg, workers)
    return sols[0].c, sols[-1].c, sols


def _limit_solves(spec, ks, cfg, workers):
    if workers > 1 and len(ks) > 1:
        specs = [replace(constant_spec(spec, k), epsilon=1.0) for k in ks]
        return solve_many(specs, cfg.solver, workers)
    return [solve_limiting(k, spec, cfg=cfg.solver) for k in ks]


# --- experiments --------------------------------------------------------------

def run_solve(cfg, out, workers):
    sol = solve_ground_state(cfg.problem, cfg.solver)
    out.csv("solve.csv", ("eps", "c_eps", "norm_sq", "nehari_residual", "grad_norm", "iters"),
            [(cfg.problem.epsilon, sol.c, sol.energy.norm_sq, abs(sol.energy.nehari) / sol.energy.norm_sq,
              sol.grad_norm, sol.iterations)])
    if cfg.emit_fields:
        _dump_field(out, "u.txt", sol)
    return _sol_summary(sol)


def run_limit(cfg, out, workers):
    spec = cfg.problem
    ks = cfg.params["k"] or sorted({spec.potential.V0, spec.potential.Vinfty})
    sols = _limit_solves(spec, ks, cfg, workers)
    out.csv("limit.csv", ("k", "m_k", "grad_norm", "iters"),
            [(k, s.c, s.grad_norm, s.iterations) for k, s in zip(ks, sols)])
    if cfg.emit_fields:
        for i, s in enumerate(sols):
            _dump_field(out, f"u_limit_{i}.txt", s)
    return {"m_k": {fmt(k): s.c for k, s in zip(ks, sols)},
            "iterations": [s.iterations for s in sols],
            "grad_norm": [s.grad_norm for s in sols],
            "wallclock": sum(s.wallclock for s in sols)}


def run_sweep(cfg, out, workers):
    p = cfg.params
    m_V0, m_Vinf, _ = _limits(cfg, workers)
    if p["warm_start"] or workers <= 1:
        entries = continuation_sweep(cfg.problem, p["eps"], cfg.solver, warm_start=p["warm_start"])
        sols = [e.solution for e in entries]
        failed = [e for e in entries if e.error is not None]
    else:
        specs = [replace(cfg.problem, epsilon=e) for e in p["eps"]]
        sols = solve_many(specs, cfg.solver, workers)
        failed = []
    missing = [e.epsilon for e in failed if e.solution is None]
    if missing:
        raise NonConvergence(f"sweep members without an iterate: eps = {missing}", None)
    reports = concentration_scan(sols, m_V0, m_Vinf)
    nus = []
    for s in sols:
        try:
            nus.append(decay_fit(s, tuple(p["decay_window"])).nu_est)
        except AnalysisError:
            nus.append(float("nan"))
    emit_sweep_csv(out.path("sweep.csv"), reports, m_V0, m_Vinf, nus)
    if cfg.emit_fields:
        for i, s in enumerate(sols):
            _dump_field(out, f"u_sweep_{i}.txt", s)
    summary = {
        "m_V0": m_V0, "m_Vinf": m_Vinf,
        "c_eps": [r.c_eps for r in reports],
        "eps": [r.eps for r in reports],
        "peak_s": [r.peak_s for r in reports],
        "profile_count": [r.profile_count_est for r in reports],
        "nu_est": nus,
        "iterations": [r.iterations for r in reports],
        "grad_norm": [r.grad_norm for r in reports],
        "wallclock": sum(s.wallclock for s in sols),
    }
    if failed:
        summary["failed_eps"] = [e.epsilon for e in failed]
        raise _Partial(summary, f"sweep members did not converge: eps = {summary['failed_eps']}")
    return summary


def run_decay(cfg, out, workers):
    sol = solve_ground_state(cfg.problem, cfg.solver)
    fit = decay_fit(sol, tuple(cfg.params["window"]))
    out.csv("decay.csv", ("x_lo", "x_hi", "nu_est", "r2", "r2_exp", "nu_star", "n_samples", "r_ray"),
            [(fit.window[0], fit.window[1], fit.nu_est, fit.r2, fit.r2_exp, fit.nu_star, fit.n_samples, fit.r_ray)])
    if cfg.emit_fields:
        _dump_field(out, "u.txt", sol)
    res = _sol_summary(sol)
    res.update(nu_est=fit.nu_est, r2=fit.r2, r2_exp=fit.r2_exp, nu_star=fit.nu_star, window=list(fit.window))
    return res


def run_compare(cfg, out, workers):
    spec = cfg.problem
    base, other = spec.potential, cfg.params["other"]
    R, S = CylGrid.from_spec(spec).mesh()
    e = spec.epsilon
    vb, vo = base(e * R, e * S), other(e * R, e * S)
    if np.all(vo >= vb):
        hi, lo, hi_name = other, base, "other"
    elif np.all(vb >= vo):
        hi, lo, hi_name = base, other, "problem"
    else:
        raise AnalysisError("the two potentials are not ordered on the grid")
    cmp = compare_potentials(hi, lo, spec, cfg.solver, tol_rel=cfg.params["tol_rel"], check=False,
                             workers=workers)
    out.csv("compare.csv", ("which", "c", "grad_norm", "iters"),
            [("upper", cmp.c_hi, cmp.sol_hi.grad_norm, cmp.sol_hi.iterations),
             ("lower", cmp.c_lo, cmp.sol_lo.grad_norm, cmp.sol_lo.iterations)])
    return {"c_upper": cmp.c_hi, "c_lower": cmp.c_lo, "upper": hi_name, "ordered": cmp.ordered,
            "iterations": [cmp.sol_hi.iterations, cmp.sol_lo.iterations],
            "grad_norm": [cmp.sol_hi.grad_norm, cmp.sol_lo.grad_norm]}


def run_continuity(cfg, out, workers):
    rep = continuity_scan(cfg.problem.potential, cfg.params["h"], cfg.problem, cfg.solver,
                          tol_rel=cfg.params["tol_rel"], workers=workers)
    out.csv("continuity.csv", ("h", "c", "diff", "ratio"),
            [(r.h, r.c, r.diff, r.ratio) for r in rep.rows])
    return {"c_baseline": rep.baseline, "c": [r.c for r in rep.rows], "diff": [r.diff for r in rep.rows],
            "lipschitz_est": rep.lipschitz_est, "monotone": rep.monotone, "sign_ok": rep.sign_ok}


def run_reconstruct(cfg, out, workers):
    p = cfg.params
    spec = cfg.problem
    sol = solve_ground_state(spec, cfg.solver)
    L = p["half_width"]
    L_e = p["energy_half_width"] or L
    rows = []
    U = None
    for n in p["n"]:
        U = reconstruct(sol.u, n, L, p["order"])
        div = float(np.abs(divergence(U)).max())
        res = curlcurl_residual(U, spec.potential, spec.epsilon, spec.nonlinearity)
        Ue = U if L_e == L else reconstruct(sol.u, n, L_e, p["order"])
        ec = energy_curl(Ue, spec.potential, spec.epsilon, spec.nonlinearity)
        eb = scalar_energy_in_box(sol.u, spec, L_e - Ue.h)
        rows.append((n, U.h, div, res, ec, eb, abs(ec - eb) / abs(eb)))
    out.csv("reconstruct.csv", ("n", "h", "div_max", "residual", "energy_curl", "energy_box", "energy_rel_err"),
            rows)
    if p["vtk"]:
        write_vtk(out.path("U.vtk"), U)
    if cfg.emit_fields:
        _dump_field(out, "u.txt", sol)
    res = _sol_summary(sol)
    res.update(div_max=[r[2] for r in rows], residual=[r[3] for r in rows],
               energy_curl=[r[4] for r in rows], energy_box=[r[5] for r in rows],
               energy_rel_err=[r[6] for r in rows], n=list(p["n"]))
    return res


def run_cutoff(cfg, out, workers):
    k = cfg.params["k"] or cfg.problem.potential.V0
    w = solve_limiting(k, cfg.problem, cfg=cfg.solver)
    results = [cutoff_gamma(R, w, k) for R in cfg.params["R"]]
    out.csv("cutoff.csv", ("R", "gamma", "psi", "t_scale"),
            [(c.R, c.gamma, c.psi, c.t_scale) for c in results])
    return {"m_k": w.c, "k": k, "psi": [c.psi for c in results], "gamma": [c.gamma for c in results],
            "iterations": w.iterations, "grad_norm": w.grad_norm}


RUNNERS = {
    "solve": run_solve, "limit": run_limit, "sweep": run_sweep, "decay": run_decay,
    "compare": run_compare, "continuity": run_continuity, "reconstruct": run_reconstruct,
    "cutoff": run_cutoff,
}


class _Partial(Exception):
    """Results were written but some members did not converge."""

    def __init__(self, summary, message):
        super().__init__(message)
        self.summary = summary


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (np.bool_, bool)):
        return bool(x)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else None
    return x


def write_summary(out: Output, cfg: RunConfig, status: str, results: dict, threads: int, message=None):
    doc = {
        "version": __version__,
        "backend": BACKEND,
        "status": status,
        "experiment": cfg.experiment,
        "threads": threads,
        "config": config_echo(cfg),
        "results": results,
    }
    if message:
        doc["message"] = message
    with out.path("summary.json").open("w") as fh:
        json.dump(_jsonable(doc), fh, indent=2, sort_keys=True)
        fh.write("\n")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="nehari", description=__doc__.splitlines()[0])
    ap.add_argument("experiment", choices=EXPERIMENTS)
    ap.add_argument("--config", required=True, help="TOML run configuration")
    ap.add_argument("--output", help="output directory (overrides output_dir in the config)")
    ap.add_argument("--threads", type=int, help="worker processes for independent solves")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if cfg.experiment != args.experiment:
            raise ConfigError(f"'experiment' is {cfg.experiment!r} in {args.config} "
                              f"but {args.experiment!r} was requested")
        threads = resolve_threads(args.threads, cfg, os.environ)
        if args.threads is not None and args.threads < 1:
            raise ConfigError("'--threads' must be at least 1")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Output(args.output or cfg.output_dir)
    try:
        results = RUNNERS[cfg.experiment](cfg, out, threads)
    except _Partial as exc:
        write_summary(out, cfg, "nonconvergence", exc.summary, threads, str(exc))
        print(f"non-convergence: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except NonConvergence as exc:
        best = _sol_summary(exc.best) if exc.best is not None else {}
        write_summary(out, cfg, "nonconvergence", best, threads, str(exc))
        print(f"non-convergence in stage '{cfg.experiment}': {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except (AnalysisError, BoundViolation, ReconstructionError, FiberError, LinearSolveError, ModelError) as exc:
        write_summary(out, cfg, "error", {}, threads, f"stage '{cfg.experiment}': {exc}")
        print(f"error in stage '{cfg.experiment}': {exc}", file=sys.stderr)
        return EXIT_CONFIG
    write_summary(out, cfg, "ok", results, threads)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
