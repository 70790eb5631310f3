"""Command-line surface: polytope generation, single fits, sweeps, profiles,
entropy curves, and SVG reports.

Conventions shared by every subcommand: data goes to stdout (or the --out
file), diagnostics and the fully resolved configuration go to stderr, and
exit codes are 0 for success, 2 for usage or input errors, and 3 for numeric
failures.  All randomness descends from --seed (or the config's master_seed),
so reruns with identical inputs produce byte-identical outputs regardless of
--workers.
"""

from __future__ import annotations

import argparse
import json
import math
import sys

import numpy as np

from .entropy import entropy_slope, sample_local_cloud
from .experiments import (
    DataVersionError,
    ExperimentConfig,
    RiskTable,
    TableParseError,
    _trimmed_mean,
    run_risk_sweep,
    truth_profile,
)
from .geometry import (
    DesignSet,
    Polytope,
    approx_error_sup,
    build_regular_polytope,
    build_well_separated_design,
    min_geodesic_separation,
)
from .solver import Observations, SolverBudget, SolverFailure, fit_lse, oracle_lse_2d
from .svgplot import profile_svg, risk_svg
from .widths import load_width_profile

_USAGE_ERROR = 2
_NUMERIC_ERROR = 3


class CliError(Exception):
    """Usage or input problem; maps to exit code 2."""


def _echo(text: str) -> None:
    print(text, file=sys.stderr)


def _emit(data: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(data)
        if data and not data.endswith("\n"):
            sys.stdout.write("\n")
    else:
        with open(out, "w") as fh:
            fh.write(data)


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise CliError(f"cannot read config file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CliError(f"config file is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise CliError("config file must hold a JSON object")
    return doc


def _resolve(defaults: dict, config: dict, flags: dict, known: set) -> dict:
    """Precedence: flags > config file > defaults.  Unknown keys rejected."""
    unknown = sorted(set(config) - known)
    if unknown:
        raise CliError(f"unknown config keys: {', '.join(unknown)}")
    resolved = dict(defaults)
    resolved.update(config)
    resolved.update({k: v for k, v in flags.items() if v is not None})
    return resolved


def _echo_resolved(resolved: dict) -> None:
    _echo("resolved-config: " + json.dumps(resolved, sort_keys=True, default=str))


def _experiment_config(resolved: dict) -> ExperimentConfig:
    keys = set(ExperimentConfig.__dataclass_fields__)
    doc = {k: v for k, v in resolved.items() if k in keys}
    return ExperimentConfig.from_dict(doc)


# ---------------------------------------------------------------- polytope-gen


def cmd_polytope_gen(args, config: dict) -> int:
    resolved = _resolve(
        {"m": None, "d": None, "master_seed": 0, "probes": 200_000},
        config,
        {"m": args.m, "d": args.d, "master_seed": args.seed, "probes": None},
        {"m", "d", "master_seed", "probes"},
    )
    if resolved["m"] is None or resolved["d"] is None:
        raise CliError("polytope-gen needs --m and --d")
    m, d, seed = int(resolved["m"]), int(resolved["d"]), int(resolved["master_seed"])
    _echo_resolved(resolved)
    try:
        body = build_regular_polytope(m, d, seed=seed)
    except ValueError as exc:
        raise CliError(str(exc)) from exc
    probes = min(int(resolved["probes"]), max(20 * m, 4096))
    err = approx_error_sup(body, probes=probes, seed=seed)
    sep = min_geodesic_separation(body.vertices)
    g = np.clip(body.vertices @ body.vertices.T, -1.0, 1.0)
    mult = int((np.arccos(g) <= 2.0 * sep + 1e-12).sum(axis=1).max())
    summary = {
        "m": body.m,
        "d": d,
        "seed": seed,
        "approx_error_probe": err,
        "probes": probes,
        "min_separation": sep,
        "sep_constant": sep * body.m ** (1.0 / (d - 1)),
        "multiplicity_at_2sep": mult,
    }
    _echo("validation: " + json.dumps(summary, sort_keys=True))
    _emit(body.to_json(), args.out)
    return 0


# ------------------------------------------------------------------------ fit


def _read_observations(path: str) -> tuple[Observations, np.ndarray | None]:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise CliError(f"cannot read observations: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise CliError(f"observations file is not valid JSON: {exc}") from exc
    try:
        design = DesignSet.from_json(json.dumps(doc["design"]))
        obs = Observations(design=design, y=np.asarray(doc["y"], dtype=float), sigma=float(doc.get("sigma", 1.0)))
    except (KeyError, TypeError, ValueError) as exc:
        raise CliError(f"malformed observations file: {exc}") from exc
    truth_vals = doc.get("true_values")
    if truth_vals is not None:
        truth_vals = np.asarray(truth_vals, dtype=float)
        if truth_vals.shape != obs.y.shape:
            raise CliError("true_values length does not match y")
    return obs, truth_vals


def cmd_fit(args, config: dict) -> int:
    resolved = _resolve(
        {"solver_tol": 1e-8, "solver_max_iter": 200_000, "restriction_radius": None},
        config,
        {
            "solver_tol": args.tol,
            "solver_max_iter": args.max_iter,
            "restriction_radius": args.restriction_radius,
        },
        {"solver_tol", "solver_max_iter", "restriction_radius"},
    )
    _echo_resolved(resolved)
    obs, truth_vals = _read_observations(args.obs)
    budget = SolverBudget(tol=float(resolved["solver_tol"]), max_iter=int(resolved["solver_max_iter"]))
    radius = resolved["restriction_radius"]
    radius = None if radius is None else float(radius)
    fit = fit_lse(obs, restriction_radius=radius, budget=budget)
    lines = [
        f"objective={fit.objective:.12g}",
        f"kkt_residual={fit.kkt_residual:.6g}",
        f"iterations={fit.iterations}",
        f"converged={str(fit.converged).lower()}",
    ]
    if truth_vals is not None:
        rf = float(np.mean((fit.h_hat.values - truth_vals) ** 2))
        lines.append(f"risk_fixed={rf:.12g}")
    if args.oracle_check:
        if obs.design.dim != 2:
            raise CliError("--oracle-check requires a d=2 design")
        oracle = oracle_lse_2d(obs)
        gap = abs(fit.objective - oracle.objective)
        ok = gap <= 1e-5 * (1.0 + abs(oracle.objective))
        lines.append(f"oracle_objective={oracle.objective:.12g}")
        lines.append(f"oracle_agreement={'ok' if ok else 'FAIL'} gap={gap:.3g}")
    _emit("\n".join(lines) + "\n", None)
    if args.fit_out:
        with open(args.fit_out, "w") as fh:
            fh.write(fit.to_json())
    return 0


# ----------------------------------------------------------------- risk-sweep


def cmd_risk_sweep(args, config: dict) -> int:
    keys = set(ExperimentConfig.__dataclass_fields__)
    resolved = _resolve({}, config, {"master_seed": args.seed}, keys)
    if "d" not in resolved or "n_grid" not in resolved:
        raise CliError("risk-sweep config needs at least d and n_grid")
    cfg = _experiment_config(resolved)
    _echo_resolved(cfg.to_dict())
    table = run_risk_sweep(cfg, workers=args.workers)
    _emit(table.to_csv(), args.out)
    return 0


# -------------------------------------------------------------- width-profile


_PROFILE_KEYS = {"profile_n", "replicate", "num_gaussians", "width_lo", "width_hi", "width_points"}


def cmd_width_profile(args, config: dict) -> int:
    keys = set(ExperimentConfig.__dataclass_fields__) | _PROFILE_KEYS
    resolved = _resolve(
        {"replicate": 0, "num_gaussians": 16, "width_lo": None, "width_hi": None, "width_points": 10},
        config,
        {"master_seed": args.seed, "profile_n": args.n},
        keys,
    )
    if "d" not in resolved:
        raise CliError("width-profile config needs d")
    profile_n = resolved.get("profile_n")
    if profile_n is None:
        grid = resolved.get("n_grid", ())
        if len(grid) != 1:
            raise CliError("width-profile needs profile_n (or a single-entry n_grid)")
        profile_n = grid[0]
    resolved.setdefault("n_grid", [int(profile_n)])
    cfg = _experiment_config(resolved)
    echo = dict(cfg.to_dict())
    echo.update({k: resolved[k] for k in _PROFILE_KEYS if k in resolved})
    _echo_resolved(echo)
    prof = truth_profile(
        cfg,
        n=int(profile_n),
        replicate=int(resolved["replicate"]),
        num_gaussians=int(resolved["num_gaussians"]),
        width_lo=resolved["width_lo"],
        width_hi=resolved["width_hi"],
        width_points=int(resolved["width_points"]),
    )
    _emit(prof.to_csv(), args.out)
    return 0


# -------------------------------------------------------------------- entropy


_ENTROPY_DEFAULTS = {
    "d": 5,
    "eps_lo": 0.017,
    "eps_hi": 0.034,
    "eps_points": 8,
    "count": 2200,
    "m": 32,
    "design_n": 256,
    "master_seed": 0,
    "center": "both",
}


def cmd_entropy(args, config: dict) -> int:
    resolved = _resolve(
        _ENTROPY_DEFAULTS,
        config,
        {"master_seed": args.seed, "center": args.center},
        set(_ENTROPY_DEFAULTS),
    )
    if resolved["center"] not in ("ball", "polytope", "both"):
        raise CliError("center must be ball, polytope, or both")
    _echo_resolved(resolved)
    d = int(resolved["d"])
    seed0 = int(resolved["master_seed"])
    eps_grid = np.geomspace(float(resolved["eps_lo"]), float(resolved["eps_hi"]), int(resolved["eps_points"]))
    design = build_well_separated_design(int(resolved["design_n"]), d, seed=seed0)
    kinds = ["ball", "polytope"] if resolved["center"] == "both" else [resolved["center"]]
    docs = []
    for kind in kinds:
        radius_mult = 2.0 if kind == "ball" else 1.0
        clouds = [
            sample_local_cloud(
                kind,
                radius_mult * float(eps),
                int(resolved["count"]),
                d,
                design,
                seed=(seed0, 1 + i, kind == "ball"),
                m=int(resolved["m"]),
            )
            for i, eps in enumerate(eps_grid)
        ]
        curve = entropy_slope(clouds, eps_grid)
        curve.seed = seed0
        curve.m = int(resolved["m"]) if kind == "polytope" else 0
        docs.append(curve.to_csv())
        _echo(
            f"{kind}: fitted_exponent={curve.fitted_exponent:.4g} "
            f"ci=({curve.fit_ci[0]:.4g},{curve.fit_ci[1]:.4g}) degenerate={curve.degenerate}"
        )
    _emit("\n".join(docs), args.out)
    return 0


# --------------------------------------------------------------------- report


def _risk_series(tables: list) -> list:
    series = []
    for table in tables:
        by_truth: dict = {}
        for row in table.rows:
            if not row.converged:
                continue
            by_truth.setdefault(row.truth, {}).setdefault(row.n, []).append(row.risk_fixed)
        for truth in sorted(by_truth):
            pts = [
                (n, _trimmed_mean(np.asarray(vals)))
                for n, vals in sorted(by_truth[truth].items())
            ]
            pts = [(n, v) for n, v in pts if v > 0]
            if pts:
                series.append((truth, pts))
    return series


def cmd_report(args, config: dict) -> int:
    del config
    if not args.inputs:
        raise CliError("report needs at least one input table or profile")
    tables = []
    profiles = []
    for path in args.inputs:
        try:
            with open(path) as fh:
                text = fh.read()
        except OSError as exc:
            raise CliError(f"cannot read input: {exc}") from exc
        try:
            profiles.append(load_width_profile(text))
            continue
        except Exception:
            pass
        from .experiments import load as load_table

        try:
            obj = load_table(path)
        except (TableParseError, DataVersionError, ValueError) as exc:
            raise CliError(f"{path}: not a readable table or profile ({exc})") from exc
        if not isinstance(obj, RiskTable):
            raise CliError(f"{path}: report accepts risk tables and width profiles")
        tables.append(obj)
    if tables and profiles:
        raise CliError("report cannot mix risk tables and width profiles in one figure")
    if profiles:
        if len(profiles) != 1:
            raise CliError("report renders exactly one width profile at a time")
        svg = profile_svg(profiles[0], title=args.title or "width and H profile")
    else:
        series = _risk_series(tables)
        if not series:
            raise CliError("no plottable rows in the given tables")
        d = args.d
        if d is None:
            ds = {int(t.config.get("d", 0)) for t in tables if t.config.get("d")}
            d = ds.pop() if len(ds) == 1 else None
        svg = risk_svg(series, d=d, title=args.title or "mean risk vs n")
    _emit(svg, args.out)
    return 0


# ----------------------------------------------------------------------- main


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="suppfit",
        description="Support-function least squares: fits, sweeps, width profiles, entropy curves, reports.",
    )
    p.add_argument("--seed", type=int, default=None, help="master seed (overrides config master_seed)")
    p.add_argument("--workers", type=int, default=1, help="worker processes for sweeps")
    p.add_argument("--config", default=None, help="JSON config file; flags take precedence")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("polytope-gen", help="build and validate a regular polytopal ball approximant")
    s.add_argument("--m", type=int, default=None, help="vertex count (m >= d+1)")
    s.add_argument("--d", type=int, default=None, help="ambient dimension")
    s.add_argument("--out", default=None, help="write the polytope JSON here instead of stdout")
    s.set_defaults(fn=cmd_polytope_gen)

    s = sub.add_parser("fit", help="one least-squares fit from an observations JSON file")
    s.add_argument("--obs", required=True, help="observations file: design doc, y, optional sigma/true_values")
    s.add_argument("--tol", type=float, default=None)
    s.add_argument("--max-iter", type=int, default=None, dest="max_iter")
    s.add_argument("--restriction-radius", type=float, default=None, dest="restriction_radius")
    s.add_argument("--oracle-check", action="store_true", help="cross-check against the exact d=2 solver")
    s.add_argument("--fit-out", default=None, help="also write the fitted vector and witnesses as JSON")
    s.set_defaults(fn=cmd_fit)

    s = sub.add_parser("risk-sweep", help="replicated risk table over an n grid")
    s.add_argument("--out", default=None, help="write the CSV here instead of stdout")
    s.set_defaults(fn=cmd_risk_sweep)

    s = sub.add_parser("width-profile", help="localized width and H profile at the configured truth")
    s.add_argument("--n", type=int, default=None, help="design size for the profile")
    s.add_argument("--out", default=None, help="write the CSV here instead of stdout")
    s.set_defaults(fn=cmd_width_profile)

    s = sub.add_parser("entropy", help="local packing curves at the ball and polytope centers")
    s.add_argument("--center", default=None, choices=["ball", "polytope", "both"])
    s.add_argument("--out", default=None, help="write the CSV here instead of stdout")
    s.set_defaults(fn=cmd_entropy)

    s = sub.add_parser("report", help="render risk tables or a width profile to SVG")
    s.add_argument("inputs", nargs="*", help="risk table CSVs, or one width profile CSV")
    s.add_argument("--out", default=None, help="write the SVG here instead of stdout")
    s.add_argument("--d", type=int, default=None, help="dimension for rate guide lines")
    s.add_argument("--title", default=None)
    s.set_defaults(fn=cmd_report)

    return p


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        config = _load_config_file(args.config)
        return args.fn(args, config)
    except CliError as exc:
        _echo(f"error: {exc}")
        return _USAGE_ERROR
    except (TableParseError, DataVersionError) as exc:
        _echo(f"error: {exc}")
        return _USAGE_ERROR
    except SolverFailure as exc:
        _echo(f"numeric failure: {exc}")
        return _NUMERIC_ERROR
    except (FloatingPointError, np.linalg.LinAlgError) as exc:
        _echo(f"numeric failure: {exc}")
        return _NUMERIC_ERROR


if __name__ == "__main__":
    sys.exit(main())
