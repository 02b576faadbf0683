"""Command-line entry point: ``rct-lab {simulate,train,estimate,evaluate,report}``.

Exit codes: 0 success, 1 a threshold check failed, 2 configuration error,
3 input/output error (missing or malformed files).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import accuracy as acc
from .battery import ocv_at
from .config import apply_config, read_config, resolve_seed, run_config
from .engine import SessionState, estimate, estimate_baseline
from .errors import ConfigError, DomainError, EmptyTrainingSetError, TraceFormatError
from .evaluation import (
    default_model,
    report_from_files,
    run_aging_experiment,
    run_experiment,
    train_model,
)
from .resistance import RbfModel
from .scenarios import SCENARIOS, scenario_aging, training_setups
from .simulation import SessionTrace

EXIT_OK, EXIT_THRESHOLD, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3
EVAL_SCENARIOS = (*SCENARIOS, "aging", "all")

log = logging.getLogger("rct_lab")


def _setup(args):
    parser = read_config(args.config) if args.config else None
    setup = apply_config(SCENARIOS[args.scenario](), parser, args.seed)
    return setup, run_config(parser, getattr(args, "eta_multiplies", False))


def _model(path, run, law) -> RbfModel:
    path = path or run.model_file
    if path is not None:
        try:
            return RbfModel.load(path)
        except (KeyError, ValueError, json.JSONDecodeError) as exc:
            raise TraceFormatError(f"{path}: not a model file ({exc})") from exc
    return default_model(law, run.n_hidden, run.rbf_seed)


def cmd_simulate(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.scenario == "training":
        parser = read_config(args.config) if args.config else None
        seed = resolve_seed(None, args.seed)
        setups = training_setups(seed=100 if seed is None else seed)
        if parser is not None:
            setups = [apply_config(s, parser) for s in setups]
    else:
        setups = [_setup(args)[0]]
    for setup in setups:
        trace = setup.run()
        path = out / f"{setup.name}_trace.csv"
        trace.write_csv(path)
        print(f"{path}: {len(trace)} rows, {trace.duration_s / 60:.2f} min, "
              f"turning SOC {trace.turning_soc if trace.turning_soc is not None else '-'}")
    return EXIT_OK


def cmd_train(args) -> int:
    parser = read_config(args.config) if args.config else None
    run = run_config(parser)
    setup = apply_config(SCENARIOS["cv"](), parser)
    traces = [SessionTrace.read_csv(p) for p in args.traces]
    n_hidden = args.n_hidden or run.n_hidden
    seed = resolve_seed(run.rbf_seed, args.seed)
    summary = train_model(traces, setup.ocv, n_hidden, seed, out_model_file=args.out)
    print(json.dumps({
        "model_file": str(args.out),
        "n_hidden": summary.model.n_hidden,
        "n_samples": summary.n_samples,
        "voltage_rmse_v": summary.mse_v2 ** 0.5,
    }, indent=2))
    return EXIT_OK


def cmd_estimate(args) -> int:
    setup, run = _setup(args)
    trace = SessionTrace.read_csv(args.trace)
    model = _model(args.model, run, setup.law)
    start = float(trace.metadata.get("start_soc", trace.soc[0]))
    target = float(trace.metadata.get("target_soc", trace.soc[-1]))
    state = acc.AccuracyState(setup.initial_eta, start, target, run.alpha_slow, run.alpha_fast)
    at = trace.time_s[0] if args.at is None else args.at
    k_at = None
    for k in range(len(trace) - 1):
        if trace.time_s[k] > at:
            break
        if trace.stage[k] == "CC":
            state = acc.step(state, float(trace.soc[k]), float(trace.i_recv_a[k]), float(trace.i_cmd_a[k]))
        k_at = k
    if k_at is None:
        raise DomainError(f"no active sample at or before t={at} s")
    soc = float(trace.soc[k_at])
    obs = SessionState(soc, start, target, float(trace.temp_c[k_at]), trace.stage[k_at], float(trace.i_cmd_a[k_at]))
    prop = estimate(obs, setup.profile, setup.battery, setup.ocv, state, model, run.estimator)
    base = estimate_baseline(obs, setup.battery, setup.charger.max_current_a, obs.i_commanded_a, run.estimator)
    print(json.dumps({
        "time_s": float(trace.time_s[k_at]),
        "soc": soc,
        "ocv_v": ocv_at(setup.ocv, soc),
        "scenario": prop.scenario.kind.value,
        "eta_cc": prop.eta_cc_used,
        "proposed_min": prop.total_minutes,
        "proposed_cc_min": prop.cc_minutes,
        "proposed_cv_min": prop.cv_minutes,
        "baseline_min": base,
    }, indent=2))
    return EXIT_OK


def _print_summary(summary: dict) -> None:
    checks = summary.get("checks", {})
    r = summary["rmse_minutes"]
    imp = summary["improvement_percent"]
    print(f"{summary['scenario']}: RMSE proposed {r['proposed']:.3f} min, baseline {r['baseline']:.3f} min, "
          f"improvement {'n/a' if imp is None else f'{imp:.1f}%'}")
    for name, ok in checks.items():
        print(f"  {'PASS' if ok else 'FAIL'} {name}")


def cmd_evaluate(args) -> int:
    names = [n for n in SCENARIOS] + ["aging"] if args.scenario == "all" else [args.scenario]
    ok = True
    for name in names:
        if name == "aging":
            ok &= _evaluate_aging(args)
            continue
        args.scenario = name
        setup, run = _setup(args)
        model = _model(args.model, run, setup.law)
        report = run_experiment(setup, run.estimator, model, args.out, run.tick_s,
                                alpha_slow=run.alpha_slow, alpha_fast=run.alpha_fast)
        _print_summary(report.summary())
        ok &= report.passed
    return EXIT_OK if ok else EXIT_THRESHOLD


def _evaluate_aging(args) -> bool:
    parser = read_config(args.config) if args.config else None
    run = run_config(parser, args.eta_multiplies)
    seed = resolve_seed(None, args.seed)
    aging = scenario_aging(seed=1 if seed is None else seed)
    if run.learning_rate is not None or run.epochs is not None:
        aging = replace(aging, learning_rate=run.learning_rate or aging.learning_rate,
                        epochs=run.epochs or aging.epochs)
    model = _model(args.model, run, aging.model_law)
    result = run_aging_experiment(aging, run.estimator, model, args.out, run.tick_s)
    errors = result.max_abs_errors
    decreasing = all(b < a for a, b in zip(errors, errors[1:]))
    print("aging: max |error| per cycle " + ", ".join(f"{e:.3f}" for e in errors) + " min")
    print(f"  {'PASS' if decreasing else 'FAIL'} strictly_decreasing")
    return decreasing


def cmd_report(args) -> int:
    target = Path(args.path)
    paths = sorted(target.glob("*_report.json")) if target.is_dir() else [target]
    if not paths:
        raise FileNotFoundError(f"no *_report.json under {target}")
    ok = True
    for p in paths:
        report = report_from_files(p)
        _print_summary(report.summary())
        ok &= report.passed
    return EXIT_OK if ok else EXIT_THRESHOLD


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rct-lab", description="Remaining-charging-time estimation lab.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, scenarios=tuple(SCENARIOS), default="cc"):
        p.add_argument("--config", help="INI file overriding scenario fields")
        p.add_argument("--seed", type=int, help="charger noise seed (beats RCT_LAB_SEED and config)")
        p.add_argument("--scenario", choices=scenarios, default=default)

    p = sub.add_parser("simulate", help="simulate a charging session and write its trace")
    common(p, (*SCENARIOS, "training"))
    p.add_argument("--out", default="out", help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="fit the resistance network on CV rows of traces")
    p.add_argument("traces", nargs="+", help="trace CSV files")
    p.add_argument("--out", required=True, help="model JSON to write")
    p.add_argument("--n-hidden", type=int)
    p.add_argument("--seed", type=int, help="k-means seed")
    p.add_argument("--config")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("estimate", help="estimate remaining time at one point of a trace")
    common(p)
    p.add_argument("--trace", required=True)
    p.add_argument("--model", help="model JSON (default: train on the standard sessions)")
    p.add_argument("--at", type=float, help="elapsed time in seconds (default: first sample)")
    p.add_argument("--eta-multiplies", action="store_true", help="multiply by accuracy instead of dividing")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("evaluate", help="run scenarios end to end and check thresholds")
    common(p, EVAL_SCENARIOS, "all")
    p.add_argument("--model")
    p.add_argument("--out", help="directory for reports, series and traces")
    p.add_argument("--eta-multiplies", action="store_true", help="multiply by accuracy instead of dividing")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("report", help="summarize saved reports")
    p.add_argument("path", help="a *_report.json file or a directory of them")
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, TraceFormatError, EmptyTrainingSetError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
