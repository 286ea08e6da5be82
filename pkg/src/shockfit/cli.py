"""Command line front end: ``shockfit {background,locate,sweep,linear,solve,verify}``.

Exit statuses: 0 success, 1 verification failure, 2 configuration error,
3 solvability or admissibility failure, 4 numerical divergence.
"""
from __future__ import annotations

import argparse
import csv
import itertools
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .background import NoShockError, ShockSolveError, critical_speed_squared, rh_residuals
from .config import ConfigError, RunConfig
from .gas import DomainError
from .linfield import CFLError, SolvabilityError, solve_linear
from .locator import AdmissibilityError, NoSolutionError, Solvability, locate_shock
from .nonlinear import (DivergenceError, IllConditionedError, RootError, SonicTransitionError,
                        solve_transonic)

log = logging.getLogger("shockfit")

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_SOLVE, EXIT_DIVERGE = 0, 1, 2, 3, 4
SWEEP_COLUMNS = ("sigma", "kappa", "case", "xi_dot", "n_roots", "admissible_margin",
                 "R_inf", "R_sup", "P_star", "status")
FIELD_COLUMNS = ("y1", "y2", "dp", "dtheta", "dq", "dS", "dZ")
LOG_COLUMNS = ("sweep", "dxi", "field_delta_norm", "slope_delta_norm", "contraction_ratio",
               "rh_residual_max")


def fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    return str(v)


def write_csv(path: Path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([fmt(v) for v in r])
    return path


def print_report(report: dict, stream=None):
    stream = stream or sys.stdout
    for k, v in report.items():
        if isinstance(v, (list, tuple, np.ndarray)):
            v = " ".join(fmt(x) for x in np.ravel(v))
        print(f"{k} = {fmt(v)}", file=stream)


def output_dir(cfg: RunConfig, out: str | None) -> Path:
    env = os.environ.get("SHOCKFIT_OUT")
    return Path(env or out or cfg.get("output", "directory"))


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    over = {}
    if getattr(args, "root_policy", None):
        over["numerics.root_policy"] = args.root_policy
    if getattr(args, "tol", None) is not None:
        over["numerics.tol"] = args.tol
    formats = cfg.get("output", "formats", required=False, default=["csv"])
    if not isinstance(formats, list) or any(f != "csv" for f in formats):
        raise ConfigError("output.formats supports only 'csv'", cfg.line("output", "formats"))
    return cfg.with_values(**over) if over else cfg


# ---------------------------------------------------------------- commands

def cmd_background(cfg: RunConfig, out: Path | None = None) -> dict:
    gas, shock, consts, *_ = cfg.build()
    res = rh_residuals(shock)
    report = {
        "p_minus": shock.p_minus, "rho_minus": shock.rho_minus, "q_minus": shock.q_minus,
        "M_minus": shock.M_minus, "p_plus": shock.p_plus, "rho_plus": shock.rho_plus,
        "q_plus": shock.q_plus, "M_plus": shock.M_plus,
        "p_ratio": shock.p_plus / shock.p_minus, "rho_ratio": shock.rho_plus / shock.rho_minus,
        "T_plus": shock.T_plus, "critical_speed_squared": critical_speed_squared(shock),
        "K1": consts.K1, "K2": consts.K2, "f1_plus": consts.f1_plus,
        "f1_minus": consts.f1_minus, "rh_residual_max": float(np.max(np.abs(res))),
    }
    if out is not None:
        write_csv(out / "background.csv", ("quantity", "value"), report.items())
    return report


def _location_row(solv, hyp, sigma, kappa, policy):
    loc = locate_shock(solv, hyp, sigma, kappa, policy)
    return loc, (sigma, kappa, hyp.case, loc.xi_dot, len(loc.all_roots), loc.margin,
                 loc.R_inf, loc.R_sup, loc.P_star, "ok")


def cmd_locate(cfg: RunConfig, out: Path | None = None) -> dict:
    gas, shock, consts, pert, hyp, num = cfg.build()
    solv = Solvability(shock, consts, pert)
    loc, row = _location_row(solv, hyp, pert.sigma, pert.kappa, num["root_policy"])
    if out is not None:
        write_csv(out / "locate.csv", SWEEP_COLUMNS, [row])
    return {"case": hyp.case, "sigma": pert.sigma, "kappa": pert.kappa, "xi_dot": loc.xi_dot,
            "roots": loc.all_roots, "xi_star": "none" if loc.xi_star is None else loc.xi_star,
            "admissible_margin": loc.margin, "beta0": loc.beta0, "R_inf": loc.R_inf,
            "R_sup": loc.R_sup, "P_star": loc.P_star}


def sweep_points(cfg: RunConfig):
    """(sigma, kappa, p_scale) triples in input order."""
    spec = cfg.get("sweep", required=False)
    if not isinstance(spec, dict) or not spec:
        raise ConfigError("sweep needs a 'sweep' section with sigma/kappa, scale or p_scale",
                          cfg.line("sweep"))
    hyp = cfg.hypothesis()
    gas = cfg.gas()
    sigma0, kappa0 = cfg.number("nozzle", "sigma"), gas.kappa

    def values(key):
        v = spec[key]
        if not isinstance(v, list) or not v or not all(
                isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
            raise ConfigError(f"sweep.{key} must be a non-empty list of numbers",
                              cfg.line("sweep", key))
        return [float(x) for x in v]

    if "p_scale" in spec:
        return [(sigma0, kappa0, f) for f in values("p_scale")]
    if "scale" in spec:
        try:
            return [hyp.partner(t) + (1.0,) for t in values("scale")]
        except DomainError as exc:
            raise ConfigError(f"sweep.scale: {exc}", cfg.line("sweep", "scale"))
    sig = values("sigma") if "sigma" in spec else [sigma0]
    kap = values("kappa") if "kappa" in spec else [kappa0]
    return [(s, k, 1.0) for s, k in itertools.product(sig, kap)]


def _sweep_worker(task):
    text, base_dir, sigma, kappa, scale, policy = task
    cfg = RunConfig.from_text(text, base_dir)
    gas, shock, consts, pert, hyp, num = cfg.build()
    pert = replace(pert, sigma=sigma, kappa=kappa,
                   exit_p_sigma=pert.exit_p_sigma.scaled(scale),
                   exit_p_kappa=pert.exit_p_kappa.scaled(scale))
    solv = Solvability(shock, consts, pert)
    nan = float("nan")
    try:
        return _location_row(solv, hyp, sigma, kappa, policy)[1]
    except NoSolutionError as exc:
        return (sigma, kappa, hyp.case, nan, 0, nan, exc.R_inf, exc.R_sup, exc.P_star,
                "no_solution")
    except AdmissibilityError:
        return (sigma, kappa, hyp.case, nan, 0, nan, nan, nan, nan, "inadmissible")
    except DomainError as exc:
        return (sigma, kappa, hyp.case, nan, 0, nan, nan, nan, nan,
                "invalid: " + str(exc).replace(",", ";"))


def cmd_sweep(cfg: RunConfig, out: Path | None = None, workers: int = 1):
    points = sweep_points(cfg)
    text = cfg.to_text()
    policy = cfg.numerics()["root_policy"]
    tasks = [(text, str(cfg.base_dir), s, k, f, policy) for s, k, f in points]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_worker, tasks))
    else:
        rows = [_sweep_worker(t) for t in tasks]
    if out is not None:
        write_csv(out / "sweep.csv", SWEEP_COLUMNS, rows)
    return rows


def _field_rows(fields, y1_of=None):
    y1, y2 = fields.grid.mesh()
    if y1_of is not None:
        y1 = y1_of(y1, y2)
    cols = [y1, y2] + list(fields.arrays())
    return zip(*(np.ravel(c) for c in cols))


def cmd_linear(cfg: RunConfig, out: Path | None = None) -> dict:
    gas, shock, consts, pert, hyp, num = cfg.build()
    lin = solve_linear(shock, consts, pert, hyp, num["nx_up"], num["nx_down"], num["ny"],
                       num["root_policy"], num["elliptic_tol"])
    if out is not None:
        write_csv(out / "linear_upstream.csv", FIELD_COLUMNS, _field_rows(lin.upstream))
        write_csv(out / "linear_downstream.csv", FIELD_COLUMNS, _field_rows(lin.downstream))
        write_csv(out / "linear_front.csv", ("y2", "psi", "psi_prime"),
                  zip(lin.downstream.grid.y2, lin.psi, lin.psi_slope))
    return {"xi_dot": lin.xi_dot, "compatibility_defect": lin.defect,
            "psi_prime_max": float(np.max(np.abs(lin.psi_slope))),
            "upstream_max": lin.upstream.max_norm(), "downstream_max": lin.downstream.max_norm()}


def cmd_solve(cfg: RunConfig, out: Path | None = None) -> dict:
    gas, shock, consts, pert, hyp, num = cfg.build()
    res = solve_transonic(gas, shock, consts, pert, hyp, num["nx_up"], num["nx_down"], num["ny"],
                          tol=num["tol"], max_sweeps=num["max_sweeps"],
                          policy=num["root_policy"], root_tol=num["root_tol"])
    rep = res.report
    if out is not None:
        up = res.upstream.perturbation(shock.upstream)
        write_csv(out / "solve_upstream.csv", FIELD_COLUMNS, _field_rows(up))
        L, xd = pert.L, res.front.xi_dot
        psi = res.front.psi

        def physical(z1, z2):
            return psi[None, :] + (z1 - xd) * (L - psi)[None, :] / (L - xd)

        write_csv(out / "solve_downstream.csv", FIELD_COLUMNS,
                  _field_rows(res.state.dU, physical))
        write_csv(out / "solve_front.csv", ("y2", "psi", "psi_prime"),
                  zip(res.front.y2, psi, res.front.slope))
        write_csv(out / "convergence.csv", LOG_COLUMNS,
                  ([h[c] for c in LOG_COLUMNS] for h in rep["history"]))
    keys = ("sweeps", "xi_dot", "xi", "dxi", "rh_residual_max", "slope_distance",
            "field_distance", "ball_radius", "tol")
    report = {k: rep[k] for k in keys}
    report["within_ball"] = rep["slope_distance"] < rep["ball_radius"]
    return report


def cmd_verify(cfg: RunConfig, quick: bool = False):
    from .verify import run_checks
    return run_checks(cfg, quick=quick)


# ---------------------------------------------------------------- entry point

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="shockfit", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH",
                        help="YAML run configuration (default: the shipped reference run)")
    common.add_argument("--out", metavar="DIR", help="output directory (SHOCKFIT_OUT wins)")
    common.add_argument("--root-policy", choices=("nearest", "smallest", "largest"))
    common.add_argument("--tol", type=float, metavar="X", help="nonlinear stopping tolerance")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in ("background", "locate", "linear", "solve"):
        sub.add_parser(name, parents=[common])
    sp = sub.add_parser("sweep", parents=[common])
    sp.add_argument("--workers", type=int, default=1, metavar="N")
    vp = sub.add_parser("verify", parents=[common])
    vp.add_argument("--quick", action="store_true", help="coarser nonlinear solve")
    return ap


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig.from_file(args.config) if args.config else RunConfig.default()
        cfg = _apply_overrides(cfg, args)
        out = output_dir(cfg, args.out)
        if args.command == "verify":
            checks = cmd_verify(cfg, args.quick)
            for c in checks:
                print(c.line())
            failed = sum(not c.passed for c in checks)
            print(f"{len(checks) - failed}/{len(checks)} checks passed")
            return EXIT_CHECK if failed else EXIT_OK
        if args.command == "sweep":
            if args.workers < 1:
                raise ConfigError("--workers must be at least 1")
            rows = cmd_sweep(cfg, out, args.workers)
            bad = [r for r in rows if r[-1] != "ok"]
            print(f"{len(rows)} points, {len(bad)} failed; wrote {out / 'sweep.csv'}")
            return EXIT_SOLVE if bad else EXIT_OK
        command = {"background": cmd_background, "locate": cmd_locate, "linear": cmd_linear,
                   "solve": cmd_solve}[args.command]
        print_report(command(cfg, out))
        return EXIT_OK
    except (ConfigError, CFLError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NoSolutionError as exc:
        print(f"no shock position: {exc}", file=sys.stderr)
        print(f"R range = ({fmt(exc.R_inf)}, {fmt(exc.R_sup)}), P* = {fmt(exc.P_star)}",
              file=sys.stderr)
        return EXIT_SOLVE
    except (AdmissibilityError, SolvabilityError, IllConditionedError, NoShockError) as exc:
        print(f"solvability failure: {exc}", file=sys.stderr)
        return EXIT_SOLVE
    except (DivergenceError, SonicTransitionError, RootError, ShockSolveError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        hist = getattr(exc, "history", None)
        if hist:
            last = hist[-1]
            print(f"last sweep {last['sweep']}: change "
                  f"{fmt(last['field_delta_norm'] + last['slope_delta_norm'])}", file=sys.stderr)
        return EXIT_DIVERGE
    except DomainError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def main(argv=None):
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
