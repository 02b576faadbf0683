"""Replay simulated sessions through both estimators and score them."""

from __future__ import annotations

import csv
import functools
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from . import accuracy as acc
from .battery import OcvCurve, ocv_at
from .engine import EstimatorConfig, SessionState, estimate, estimate_baseline, resistance_function
from .errors import DomainError, EmptyTrainingSetError, TraceFormatError
from .resistance import (
    DEFAULT_N_HIDDEN,
    RbfModel,
    TrainingBuffer,
    TrainingSample,
    build_model,
    online_update,
    voltage_mse,
)
from .scenarios import AgingSetup, SimulationSetup, training_setups
from .simulation import SessionTrace, TrueResistanceLaw, true_rct

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
DEFAULT_TICK_S = 10.0
SERIES_COLUMNS = ["time_s", "true_rct_min", "est_proposed_min", "est_baseline_min", "eta_cc", "predicted_R_ohm"]


def rmse(estimates: Sequence[float], truths: Sequence[float]) -> float:
    e = np.asarray(estimates, dtype=float)
    t = np.asarray(truths, dtype=float)
    if e.shape != t.shape or e.ndim != 1 or len(e) == 0:
        raise DomainError(f"need equal non-empty 1-D series, got {e.shape} and {t.shape}")
    return float(np.sqrt(np.mean((e - t) ** 2)))


@dataclass
class EvaluationReport:
    scenario: str
    series: dict[str, np.ndarray]
    tick_s: float = DEFAULT_TICK_S
    thresholds: dict = field(default_factory=dict)
    checks: dict[str, bool] = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    @property
    def errors_proposed(self) -> np.ndarray:
        return self.series["est_proposed_min"] - self.series["true_rct_min"]

    @property
    def errors_baseline(self) -> np.ndarray:
        return self.series["est_baseline_min"] - self.series["true_rct_min"]

    @property
    def rmse_proposed(self) -> float:
        return rmse(self.series["est_proposed_min"], self.series["true_rct_min"])

    @property
    def rmse_baseline(self) -> float:
        return rmse(self.series["est_baseline_min"], self.series["true_rct_min"])

    @property
    def improvement_percent(self) -> float:
        base = self.rmse_baseline
        return 100.0 * (1.0 - self.rmse_proposed / base) if base > 0 else float("nan")

    @property
    def max_abs_error_proposed(self) -> float:
        return float(np.max(np.abs(self.errors_proposed)))

    @property
    def max_abs_error_baseline(self) -> float:
        return float(np.max(np.abs(self.errors_baseline)))

    @property
    def baseline_under_fraction(self) -> float:
        return float(np.mean(self.errors_baseline < 0))

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def summary(self) -> dict:
        def num(x):
            return None if isinstance(x, float) and math.isnan(x) else x

        return {
            "schema_version": SCHEMA_VERSION,
            "scenario": self.scenario,
            "ticks": len(self.series["time_s"]),
            "tick_s": self.tick_s,
            "rmse_minutes": {"proposed": self.rmse_proposed, "baseline": self.rmse_baseline},
            "max_abs_error_min": {"proposed": self.max_abs_error_proposed, "baseline": self.max_abs_error_baseline},
            "improvement_percent": num(self.improvement_percent),
            "baseline_under_fraction": self.baseline_under_fraction,
            "thresholds": self.thresholds,
            "checks": self.checks,
            "passed": self.passed,
            "metadata": self.metadata,
        }

    def write(self, out_dir) -> tuple[Path, Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        report_path = out / f"{self.scenario}_report.json"
        series_path = out / f"{self.scenario}_series.csv"
        report_path.write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n")
        write_series_csv(series_path, self.series)
        return report_path, series_path


def write_series_csv(path, series: dict[str, np.ndarray]) -> None:
    with Path(path).open("w", newline="") as fh:
        fh.write(f"# schema_version={SCHEMA_VERSION}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SERIES_COLUMNS)
        for k in range(len(series["time_s"])):
            w.writerow([repr(float(series[c][k])) for c in SERIES_COLUMNS])


def read_series_csv(path) -> dict[str, np.ndarray]:
    with Path(path).open(newline="") as fh:
        lines = list(fh)
    body = [(n, ln) for n, ln in enumerate(lines, start=1) if not ln.startswith("#")]
    reader = csv.reader(ln for _, ln in body)
    header = next(reader, None)
    if header != SERIES_COLUMNS:
        raise TraceFormatError(f"{path}: expected columns {SERIES_COLUMNS}, got {header}")
    cols: dict[str, list] = {c: [] for c in SERIES_COLUMNS}
    for (lineno, _), row in zip(body[1:], reader):
        try:
            if len(row) != len(SERIES_COLUMNS):
                raise ValueError(f"{len(row)} fields")
            for c, v in zip(SERIES_COLUMNS, row):
                cols[c].append(float(v))
        except ValueError as exc:
            raise TraceFormatError(f"{path}:{lineno}: bad series row ({exc})") from exc
    return {c: np.array(v, dtype=float) for c, v in cols.items()}


def report_from_files(report_path, series_path=None) -> EvaluationReport:
    report_path = Path(report_path)
    try:
        summary = json.loads(report_path.read_text())
        scenario, tick_s = summary["scenario"], summary["tick_s"]
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise TraceFormatError(f"{report_path}: not a report file ({exc})") from exc
    if series_path is None:
        series_path = report_path.with_name(report_path.name.replace("_report.json", "_series.csv"))
    rep = EvaluationReport(
        scenario=scenario,
        series=read_series_csv(series_path),
        tick_s=tick_s,
        thresholds=summary.get("thresholds", {}),
        metadata=summary.get("metadata", {}),
    )
    rep.checks = evaluate_thresholds(rep, rep.thresholds)
    return rep


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


def samples_from_trace(trace: SessionTrace, ocv: OcvCurve, every_s: float = DEFAULT_TICK_S) -> list[TrainingSample]:
    """CV rows at multiples of ``every_s`` as training samples, oldest first."""
    start = float(trace.metadata.get("start_soc", trace.soc[0]))
    out = []
    for k in np.flatnonzero(trace.cv_mask):
        if not _on_tick(trace.time_s[k], every_s) or trace.i_recv_a[k] <= 0:
            continue
        soc = float(trace.soc[k])
        out.append(TrainingSample(
            soc=soc, start_soc=start, temperature_c=float(trace.temp_c[k]),
            current_a=float(trace.i_recv_a[k]), v_measured=float(trace.v_term_v[k]),
            ocv_v=float(ocv_at(ocv, soc)),
        ))
    return out


class TrainSummary(NamedTuple):
    model: RbfModel
    mse_v2: float
    n_samples: int


def train_model(
    traces: Iterable[SessionTrace],
    ocv: OcvCurve,
    n_hidden: int = DEFAULT_N_HIDDEN,
    seed: int = 0,
    out_model_file=None,
    every_s: float = DEFAULT_TICK_S,
) -> TrainSummary:
    samples = [s for tr in traces for s in samples_from_trace(tr, ocv, every_s)]
    if not samples:
        raise EmptyTrainingSetError("no CV rows found in the training traces")
    fit = build_model(samples, n_hidden=n_hidden, seed=seed)
    if out_model_file is not None:
        fit.model.save(out_model_file)
    log.info("trained %d-unit model on %d samples, voltage MSE %.3g V^2", fit.model.n_hidden, len(samples), fit.mse)
    return TrainSummary(fit.model, fit.mse, len(samples))


@functools.lru_cache(maxsize=8)
def default_model(law: TrueResistanceLaw = TrueResistanceLaw(), n_hidden: int = DEFAULT_N_HIDDEN, seed: int = 0) -> RbfModel:
    """Model trained on the standard ten simulated sessions from ``law``."""
    setups = training_setups(law)
    return train_model([s.run() for s in setups], setups[0].ocv, n_hidden, seed).model


# ---------------------------------------------------------------------------
# Tick loop
# ---------------------------------------------------------------------------


def _on_tick(t: float, tick_s: float) -> bool:
    q = t / tick_s
    return abs(q - round(q)) < 1e-9


def replay(
    trace: SessionTrace,
    setup: SimulationSetup,
    model: RbfModel,
    config: EstimatorConfig = EstimatorConfig(),
    tick_s: float = DEFAULT_TICK_S,
    alpha_slow: float = acc.DEFAULT_ALPHA_SLOW,
    alpha_fast: float = acc.DEFAULT_ALPHA_FAST,
    buffer: TrainingBuffer | None = None,
) -> dict[str, np.ndarray]:
    """Feed every sample causally to the estimators; estimate at each tick.

    Accuracy is updated on every CC row; CV rows falling on a tick are
    ingested into ``buffer`` when one is given.
    """
    start, target = setup.start_soc, setup.target_soc
    state = acc.AccuracyState(setup.initial_eta, start, target, alpha_slow, alpha_fast)
    r_fn = resistance_function(model)
    rows: dict[str, list] = {c: [] for c in SERIES_COLUMNS}
    for k in range(len(trace) - 1):
        soc, stage = float(trace.soc[k]), trace.stage[k]
        if stage == "CC":
            state = acc.step(state, soc, float(trace.i_recv_a[k]), float(trace.i_cmd_a[k]))
        t = float(trace.time_s[k])
        if not _on_tick(t, tick_s):
            continue
        temp = float(trace.temp_c[k])
        if stage == "CV" and buffer is not None:
            buffer.ingest(TrainingSample(soc, start, temp, float(trace.i_recv_a[k]),
                                         float(trace.v_term_v[k]), float(ocv_at(setup.ocv, soc))))
        obs = SessionState(soc, start, target, temp, stage, float(trace.i_cmd_a[k]))
        proposed = estimate(obs, setup.profile, setup.battery, setup.ocv, state, model, config)
        baseline = estimate_baseline(obs, setup.battery, setup.charger.max_current_a, float(trace.i_cmd_a[k]), config)
        rows["time_s"].append(t)
        rows["true_rct_min"].append(true_rct(trace, t))
        rows["est_proposed_min"].append(proposed.total_minutes)
        rows["est_baseline_min"].append(baseline)
        rows["eta_cc"].append(state.eta_cc)
        rows["predicted_R_ohm"].append(float(r_fn(soc, start, temp)))
    if not rows["time_s"]:
        raise DomainError("trace produced no estimation ticks")
    return {c: np.array(v, dtype=float) for c, v in rows.items()}


def evaluate_thresholds(report: EvaluationReport, thresholds: dict) -> dict[str, bool]:
    checks = {}
    tick_min = report.tick_s / 60.0
    for name, value in thresholds.items():
        if name == "min_improvement_percent":
            checks[name] = bool(report.improvement_percent >= value)
        elif name == "min_baseline_under_fraction":
            checks[name] = bool(report.baseline_under_fraction >= value)
        elif name == "max_final_error_ticks":
            final = max(abs(report.errors_proposed[-1]), abs(report.errors_baseline[-1]))
            checks[name] = bool(final <= value * tick_min)
        elif name == "max_final_quarter_error_ratio":
            checks[name] = bool(final_quarter_error_ratio(report) < value)
        else:
            raise DomainError(f"unknown threshold {name!r}")
    return checks


def final_quarter_error_ratio(report: EvaluationReport) -> float:
    """Largest proposed error over the last quarter of the session, relative to the first error."""
    t = report.series["time_s"]
    end = t[0] + report.series["true_rct_min"][0] * 60.0
    err = np.abs(report.errors_proposed)
    late = t >= t[0] + 0.75 * (end - t[0])
    return float(np.max(err[late]) / err[0])


def run_experiment(
    setup: SimulationSetup,
    config: EstimatorConfig = EstimatorConfig(),
    model: RbfModel | None = None,
    out_dir=None,
    tick_s: float = DEFAULT_TICK_S,
    **replay_kwargs,
) -> EvaluationReport:
    """Simulate ``setup``, replay it through both estimators and check its thresholds."""
    model = default_model(setup.law) if model is None else model
    trace = setup.run()
    series = replay(trace, setup, model, config, tick_s, **replay_kwargs)
    report = EvaluationReport(
        scenario=setup.name,
        series=series,
        tick_s=tick_s,
        thresholds=dict(setup.thresholds),
        metadata={
            "seed": setup.charger.seed,
            "start_soc": setup.start_soc,
            "target_soc": setup.target_soc,
            "initial_eta": setup.initial_eta,
            "eta_multiplies": config.eta_multiplies,
            "trace_config_hash": trace.metadata["config_hash"],
        },
    )
    report.checks = evaluate_thresholds(report, report.thresholds)
    if out_dir is not None:
        report.write(out_dir)
        trace.write_csv(Path(out_dir) / f"{setup.name}_trace.csv")
    return report


class AgingResult(NamedTuple):
    reports: list[EvaluationReport]
    max_abs_errors: list[float]
    models: list[RbfModel]


def run_aging_experiment(
    aging: AgingSetup,
    config: EstimatorConfig = EstimatorConfig(),
    model: RbfModel | None = None,
    out_dir=None,
    tick_s: float = DEFAULT_TICK_S,
) -> AgingResult:
    """Charge the aged pack repeatedly, refining the stale model online after every cycle."""
    model = default_model(aging.model_law) if model is None else model
    buffer = TrainingBuffer(capacity=aging.buffer_capacity)
    reports, models = [], [model]
    for k, setup in enumerate(aging.cycles):
        trace = setup.run()
        series = replay(trace, setup, model, config, tick_s, buffer=buffer)
        rep = EvaluationReport(setup.name, series, tick_s, metadata={"cycle": k + 1, "seed": setup.charger.seed})
        reports.append(rep)
        if out_dir is not None:
            rep.write(out_dir)
        if k + 1 < len(aging.cycles):
            upd = online_update(model, buffer, aging.learning_rate, aging.epochs, tau=aging.buffer_capacity / 4)
            model = upd.model
            models.append(model)
            log.info("cycle %d: buffer %d samples, voltage MSE %.3g -> %.3g",
                     k + 1, len(buffer), upd.loss_history[0], upd.loss_history[-1])
    errors = [r.max_abs_error_proposed for r in reports]
    if out_dir is not None:
        Path(out_dir, "aging_summary.json").write_text(json.dumps({
            "schema_version": SCHEMA_VERSION,
            "max_abs_error_min": errors,
            "rmse_min": [r.rmse_proposed for r in reports],
            "strictly_decreasing": all(b < a for a, b in zip(errors, errors[1:])),
        }, indent=2) + "\n")
    return AgingResult(reports, errors, models)


__all__ = [
    "EvaluationReport", "rmse", "replay", "run_experiment", "run_aging_experiment",
    "train_model", "samples_from_trace", "default_model", "voltage_mse",
]
