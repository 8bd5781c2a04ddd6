"""Command-line front end.

Subcommands: ``fit`` (write model/region coefficient files), ``solve``
(one horizon instance, optional problem export), ``run`` (one closed-loop
scenario), ``bench`` (full matrix from a config file), ``report`` (render
figures from a results CSV).
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .bench import (BenchConfig, ControllerSpec, _parse_controller,
                    build_controller, compute_metrics, load_config, run_matrix)
from .controllers import (box_from_reference, default_weights,
                          fit_constraint_region, fit_model, inflate_region)
from .encoder import export_problem
from .simloop import (Scenario, make_reference, run_closed_loop,
                      save_reference_csv, save_trace_csv)
from .mmps import save_model, save_region
from .vehicle import DEFAULT_PARAMS, load_params, save_params

__all__ = ["main"]


def _params(args):
    if getattr(args, "params", None):
        return load_params(args.params)
    return DEFAULT_PARAMS


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--maneuver", type=int, default=1, choices=range(1, 6))
    p.add_argument("--np", dest="np_steps", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--params", help="vehicle parameter file (key = value)")


def _cmd_fit(args) -> int:
    params = _params(args)
    ref = make_reference(args.maneuver, params)
    box = box_from_reference(ref, round(2.0 / ref.tsc))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    model, report, nrms = fit_model(args.preset, box, params, seed=args.seed)
    save_model(model, out / f"model_{args.preset}.txt")
    region = inflate_region(
        fit_constraint_region(args.constraint, box, params, seed=args.seed),
        1.05)
    save_region(region, out / f"region_{args.constraint}.txt")
    save_params(params, out / "vehicle.txt")
    save_reference_csv(ref, out / f"reference_{args.maneuver}.csv")
    for s, rms in enumerate(nrms):
        print(f"state {s}: fit rms {100.0 * rms:.3f}% of box span")
    print(f"wrote {out}/model_{args.preset}.txt and region_{args.constraint}.txt")
    return 0


def _controller_spec(args) -> ControllerSpec:
    return _parse_controller(args.controller, args.np_steps, args.seed,
                             {"time_limit": str(args.time_limit)})


def _cmd_solve(args) -> int:
    params = _params(args)
    scenario = Scenario(kind="ideal", maneuver=args.maneuver,
                        np_steps=args.np_steps, seed=args.seed)
    spec = _controller_spec(args)
    ref = make_reference(args.maneuver, params)
    controller = build_controller(spec, scenario, params, reference=ref)
    if args.export:
        if spec.kind != "hybrid":
            print("only hybrid controllers export a mixed-integer problem",
                  file=sys.stderr)
            return 1
        enc = controller._encode(ref.states[0], ref.window(0, args.np_steps))
        export_problem(enc.build(), args.export)
        print(f"wrote {args.export}")
    plan = controller.plan(ref.states[0], ref.window(0, args.np_steps))
    obj = "n/a" if plan.objective is None else f"{plan.objective:.6g}"
    print(f"status {plan.status} objective {obj} "
          f"solve {plan.wall_time:.3f}s encode {plan.encode_time:.3f}s")
    print("first input:", np.array2string(plan.inputs[0], precision=4))
    return 0


def _cmd_run(args) -> int:
    params = _params(args)
    scenario = Scenario(kind=args.scenario, maneuver=args.maneuver,
                        np_steps=args.np_steps, mu=args.mu,
                        steering_scale=args.steering_scale, seed=args.seed)
    spec = _controller_spec(args)
    controller = build_controller(spec, scenario, params)
    trace = run_closed_loop(controller, scenario, params)
    metrics = compute_metrics(trace)
    if args.out:
        save_trace_csv(trace, args.out)
        print(f"wrote {args.out}")
    print(f"{spec.label} maneuver {args.maneuver} {args.scenario}: "
          f"mean rel err {metrics.mean_rel_err:.2f}% "
          f"max {metrics.max_rel_err:.2f}% "
          f"mean solve {metrics.mean_wall_time:.3f}s "
          f"fallbacks {metrics.fallback_count}"
          + (" FAILED" if metrics.failed else ""))
    return 0


def _cmd_bench(args) -> int:
    cfg: BenchConfig = load_config(args.config)
    out_dir = args.out or cfg.out_dir
    results = run_matrix(cfg.scenarios, cfg.controllers, cfg.params,
                         seed=cfg.seed, parallelism=cfg.parallelism)
    from .report import emit_report
    written = emit_report(results, out_dir)
    bad = [c for c in results if c.error]
    for cell in bad:
        print(f"cell {cell.label} / {cell.scenario.kind} failed: {cell.error}",
              file=sys.stderr)
    print(f"{len(results)} cells ({len(bad)} failed); wrote {len(written)} "
          f"files to {out_dir}")
    return 0


def _cmd_report(args) -> int:
    from .report import emit_report, results_from_csv
    results = results_from_csv(args.results)
    written = emit_report(results, args.out)
    print(f"wrote {len(written)} files to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hybridmpc",
        description="Hybrid and nonlinear MPC benchmark for evasive maneuvers")
    sub = parser.add_subparsers(dest="command", required=True)

    p_fit = sub.add_parser("fit", help="fit model/region coefficient files")
    _add_common(p_fit)
    p_fit.add_argument("--preset", default="T", choices=("R", "S", "T"))
    p_fit.add_argument("--constraint", default="bmp",
                       choices=("rmp", "bmp", "rel", "bel"))
    p_fit.add_argument("--out", default="fit_out")
    p_fit.set_defaults(func=_cmd_fit)

    p_solve = sub.add_parser("solve", help="solve one horizon instance")
    _add_common(p_solve)
    p_solve.add_argument("--controller", default="T--BMP")
    p_solve.add_argument("--time-limit", type=float, default=10.0)
    p_solve.add_argument("--export", help="write the mixed-integer problem file")
    p_solve.set_defaults(func=_cmd_solve)

    p_run = sub.add_parser("run", help="run one closed-loop scenario")
    _add_common(p_run)
    p_run.add_argument("--scenario", default="ideal",
                       choices=("ideal", "friction_offset",
                                "friction_disturbance", "handling_limits"))
    p_run.add_argument("--controller", default="nlp_warm")
    p_run.add_argument("--mu", type=float, default=1.0)
    p_run.add_argument("--steering-scale", type=float, default=1.0)
    p_run.add_argument("--time-limit", type=float, default=10.0)
    p_run.add_argument("--out", help="trace CSV path")
    p_run.set_defaults(func=_cmd_run)

    p_bench = sub.add_parser("bench", help="run the benchmark matrix")
    p_bench.add_argument("--config", required=True)
    p_bench.add_argument("--out", help="output directory (overrides config)")
    p_bench.set_defaults(func=_cmd_bench)

    p_rep = sub.add_parser("report", help="render figures from results CSV")
    p_rep.add_argument("--results", required=True)
    p_rep.add_argument("--out", default="report_out")
    p_rep.set_defaults(func=_cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
