"""Command-line interface: fit, simulate, predict, validate, serve.

Exit codes: 0 success, 1 usage error, 2 data or convergence error. All
diagnostics go to standard error; result tables go to the requested
output file or standard out.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from typing import IO, Sequence

import numpy as np

from .data import DataError, SchemaError, load_dataset, load_schema
from .estimator import (
    EstimationError,
    FittedModel,
    backward_stepwise,
    fit,
    get_link,
    wald_table,
)
from .evaluation import c_index, effect_trajectory, predict_rmtl, prediction_error
from .server import make_server
from .simulation import SimulationError, load_scenario, run_monte_carlo
from .stacking import TimeBasis, build_stacked, build_time_grid


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="dynrmtl", description="Dynamic-effect RMTL regression tools")
    sub = parser.add_subparsers(dest="command", metavar="command")

    p_fit = sub.add_parser("fit", help="fit a model from CSV data", add_help=True)
    p_fit.add_argument("--data", required=True, help="competing-risks CSV")
    p_fit.add_argument("--schema", required=True, help="covariate schema JSON")
    p_fit.add_argument("--lmin", default="auto", help="first horizon or 'auto' (10th pct)")
    p_fit.add_argument("--lmax", default="auto", help="last horizon or 'auto' (95th pct)")
    p_fit.add_argument("--grid-points", type=int, default=20, help="number of horizons")
    p_fit.add_argument("--link", choices=("identity", "log"), default="identity")
    p_fit.add_argument("--stepwise", action="store_true", help="backward term selection")
    p_fit.add_argument("--alpha", type=float, default=0.05, help="stepwise retention level")
    p_fit.add_argument("--out", required=True, help="model JSON output path")

    p_sim = sub.add_parser("simulate", help="run the Monte Carlo harness")
    p_sim.add_argument("--scenario", required=True, help="scenario JSON")
    p_sim.add_argument("--replications", type=int, required=True)
    p_sim.add_argument("--eval-points", default="0.75,1,1.5", help="comma-separated horizons")
    p_sim.add_argument("--grid-points", type=int, default=20)
    p_sim.add_argument("--link", choices=("identity", "log"), default="identity")
    p_sim.add_argument("--seed", type=int, default=20230101)
    p_sim.add_argument("--workers", type=int, default=1)
    p_sim.add_argument("--out", required=True, help="metrics CSV output path")

    p_pred = sub.add_parser("predict", help="predict RMTL trajectories for profiles")
    p_pred.add_argument("--model", required=True, help="model JSON")
    p_pred.add_argument("--profile", required=True, help="profile JSON (object or list)")
    p_pred.add_argument("--lmin", type=float, default=None)
    p_pred.add_argument("--lmax", type=float, default=None)
    p_pred.add_argument("--grid-points", type=int, default=None)
    p_pred.add_argument("--effects", action="store_true", help="also write effect curves")
    p_pred.add_argument("--out", default=None, help="trajectory CSV (default stdout)")

    p_val = sub.add_parser("validate", help="external validation metrics")
    p_val.add_argument("--model", required=True, help="model JSON")
    p_val.add_argument("--data", required=True, help="validation CSV (model schema)")
    p_val.add_argument("--lmin", type=float, default=None)
    p_val.add_argument("--lmax", type=float, default=None)
    p_val.add_argument("--grid-points", type=int, default=None)
    p_val.add_argument("--out", default=None, help="metrics CSV (default stdout)")

    p_srv = sub.add_parser("serve", help="serve the model over HTTP")
    p_srv.add_argument("--model", required=True, help="model JSON")
    p_srv.add_argument("--port", type=int, default=8000)
    p_srv.add_argument("--host", default="127.0.0.1")
    p_srv.add_argument("--static", default=None, help="directory with the UI bundle")

    return parser


def _parse_endpoint(raw) -> float | str:
    if raw is None or raw == "auto":
        return "auto"
    try:
        return float(raw)
    except (TypeError, ValueError):
        raise UsageError(f"expected a number or 'auto', got {raw!r}") from None


def _horizons(model: FittedModel, lmin, lmax, grid_points) -> np.ndarray:
    if lmin is None and lmax is None and grid_points is None:
        return np.asarray(model.grid.points)
    lo = float(model.grid.points[0]) if lmin is None else float(lmin)
    hi = float(model.grid.points[-1]) if lmax is None else float(lmax)
    n = grid_points or model.grid.n_points
    if n == 1:
        return np.array([hi])
    return np.linspace(lo, hi, n)


def _open_out(path) -> tuple[IO, bool]:
    if path is None:
        return sys.stdout, False
    return open(path, "w", encoding="utf-8", newline=""), True


def _load_profiles(path: str) -> list[dict]:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    if isinstance(doc, dict) and "profiles" in doc:
        doc = doc["profiles"]
    if isinstance(doc, dict):
        doc = [doc]
    if not isinstance(doc, list) or not all(isinstance(p, dict) for p in doc):
        raise SchemaError("profile JSON must be an object or a list of objects")
    return doc


def _print_wald(fitted: FittedModel, stream: IO) -> None:
    rows = wald_table(fitted)
    print(f"{'variable':<28} {'time function':<14} {'coefficient':>12} {'SE':>10} {'z':>9} {'p':>12}", file=stream)
    for row in rows:
        variable, _, timefn = row.term.rpartition(":")
        p_text = "<0.001" if row.p < 0.001 else f"{row.p:.3f}"
        if row.degenerate:
            p_text = "degenerate"
        print(
            f"{variable:<28} {timefn:<14} {row.coefficient:>12.4f} {row.se:>10.4f} "
            f"{row.z:>9.3f} {p_text:>12}",
            file=stream,
        )


def _cmd_fit(args) -> int:
    schema = load_schema(args.schema)
    dataset = load_dataset(args.data, schema)
    grid = build_time_grid(
        dataset,
        l_min=_parse_endpoint(args.lmin),
        l_max=_parse_endpoint(args.lmax),
        n_points=args.grid_points,
    )
    link = get_link(args.link)
    if args.stepwise:
        fitted = backward_stepwise(dataset, grid, link=link, alpha=args.alpha)
    else:
        stacked = build_stacked(dataset, grid, TimeBasis.full(schema.n_design_columns))
        fitted = fit(stacked, link)
    fitted.save(args.out)
    _print_wald(fitted, sys.stdout)
    report = fitted.convergence_report
    print(
        f"fit: n={fitted.n_subjects}, horizons={grid.n_points}, terms={fitted.basis.q}, "
        f"iterations={report.iterations}, equation norm={report.final_norm:.2e}",
        file=sys.stderr,
    )
    return 0


def _cmd_simulate(args) -> int:
    scenario = load_scenario(args.scenario)
    try:
        eval_points = [float(x) for x in args.eval_points.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"--eval-points must be comma-separated numbers, got {args.eval_points!r}") from None
    table = run_monte_carlo(
        scenario,
        replications=args.replications,
        eval_points=eval_points,
        master_seed=args.seed,
        link=get_link(args.link),
        grid_points=args.grid_points,
        n_workers=args.workers,
    )
    table.write_csv(args.out)
    print(
        f"simulate: {table.replications} replications, {table.failures} failed",
        file=sys.stderr,
    )
    return 0


def _cmd_predict(args) -> int:
    model = FittedModel.load(args.model)
    profiles = _load_profiles(args.profile)
    horizons = _horizons(model, args.lmin, args.lmax, args.grid_points)
    out, owned = _open_out(args.out)
    try:
        writer = csv.writer(out)
        writer.writerow(["profile", "l", "value", "se", "ci_lower", "ci_upper"])
        for idx, profile in enumerate(profiles):
            label = str(profile.get("label", idx + 1))
            values = {k: v for k, v in profile.items() if k != "label"}
            pred = predict_rmtl(model, values, horizons)
            for j in range(horizons.size):
                writer.writerow(
                    [
                        label,
                        f"{horizons[j]:g}",
                        f"{pred.values[j]:.6f}",
                        f"{pred.ses[j]:.6f}",
                        f"{pred.ci_lower[j]:.6f}",
                        f"{pred.ci_upper[j]:.6f}",
                    ]
                )
        if args.effects:
            writer.writerow([])
            writer.writerow(["covariate", "l", "effect", "se", "ci_lower", "ci_upper", "slope"])
            for name in model.schema.design_names:
                traj = effect_trajectory(model, name, horizons)
                for j in range(horizons.size):
                    writer.writerow(
                        [
                            name,
                            f"{horizons[j]:g}",
                            f"{traj.values[j]:.6f}",
                            f"{traj.ses[j]:.6f}",
                            f"{traj.ci_lower[j]:.6f}",
                            f"{traj.ci_upper[j]:.6f}",
                            f"{traj.slopes[j]:.6f}",
                        ]
                    )
    finally:
        if owned:
            out.close()
    return 0


def _cmd_validate(args) -> int:
    model = FittedModel.load(args.model)
    dataset = load_dataset(args.data, model.schema)
    horizons = _horizons(model, args.lmin, args.lmax, args.grid_points)
    out, owned = _open_out(args.out)
    try:
        writer = csv.writer(out)
        writer.writerow(["l", "c_index", "prediction_error"])
        for l in horizons:
            writer.writerow(
                [
                    f"{l:g}",
                    f"{c_index(model, dataset, float(l)):.6f}",
                    f"{prediction_error(model, dataset, float(l)):.6f}",
                ]
            )
    finally:
        if owned:
            out.close()
    return 0


def _cmd_serve(args) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(message)s")
    model = FittedModel.load(args.model)
    server = make_server(model, host=args.host, port=args.port, static_dir=args.static)
    host, port = server.server_address[:2]
    print(f"serving model on http://{host}:{port}", file=sys.stderr)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return 0


_COMMANDS = {
    "fit": _cmd_fit,
    "simulate": _cmd_simulate,
    "predict": _cmd_predict,
    "validate": _cmd_validate,
    "serve": _cmd_serve,
}


def run(argv: Sequence[str]) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a command is required (fit, simulate, predict, validate, serve)")
        return _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:
        # argparse --help exits 0; anything else is a usage problem
        return 0 if not exc.code else 1
    except (
        DataError,
        SchemaError,
        EstimationError,
        SimulationError,
        FileNotFoundError,
        json.JSONDecodeError,
        KeyError,
        ValueError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
