"""Remaining-charging-time estimation across the CC and CV stages, plus the baseline."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .accuracy import AccuracyState
from .battery import BatteryParams, OcvCurve, ocv_at
from .errors import DomainError, UnreachableTargetError
from .profile import (
    ChargeProfile,
    Partitioning,
    Scenario,
    ScenarioKind,
    classify_scenario,
    cv_turning_soc,
    partition_cc,
)
from .resistance import RbfModel, predict_resistance

ResistanceSource = Union[RbfModel, Callable]


@dataclass(frozen=True)
class EstimatorConfig:
    soc_step_cv: float = 0.01
    eta_cv: float = 1.0
    baseline_eta_cc: float = 0.9
    baseline_eta_cv: float = 1.0
    # reproduce the printed formulas, where the accuracy multiplies the time
    eta_multiplies: bool = False

    def __post_init__(self):
        if not 0 < self.soc_step_cv <= 0.05:
            raise DomainError("soc_step_cv must be in (0, 0.05]")
        for name in ("eta_cv", "baseline_eta_cc", "baseline_eta_cv"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive")


@dataclass(frozen=True)
class SessionState:
    """What the estimator can observe at one tick."""

    soc: float
    start_soc: float
    target_soc: float
    temperature_c: float
    stage: str = "CC"
    i_commanded_a: float | None = None


@dataclass(frozen=True)
class RctEstimate:
    total_minutes: float
    cc_minutes: float
    cv_minutes: float
    scenario: Scenario
    eta_cc_used: float

    @property
    def display_minutes(self) -> int:
        return int(round(self.total_minutes))


def _apply_eta(hours: float, eta: float, multiplies: bool) -> float:
    return hours * eta if multiplies else hours / eta


def rct_cc(partitioning: Partitioning, eta_cc: float, eta_multiplies: bool = False) -> float:
    """Hours to charge through every constant-command segment at accuracy ``eta_cc``."""
    if not eta_cc > 0:
        raise DomainError(f"eta_cc must be positive, got {eta_cc}")
    hours = sum(dsoc / rate for dsoc, rate in partitioning.segments)
    return _apply_eta(hours, eta_cc, eta_multiplies)


def cv_edges(from_soc: float, to_soc: float, step: float) -> np.ndarray:
    """Step edges from ``from_soc``; the last step is shortened to end on ``to_soc``."""
    if not from_soc < to_soc:
        raise DomainError(f"empty CV span ({from_soc}, {to_soc})")
    n = int(np.ceil((to_soc - from_soc) / step - 1e-9))
    edges = from_soc + step * np.arange(n + 1, dtype=float)
    edges[-1] = to_soc
    return edges


def resistance_function(model: ResistanceSource) -> Callable:
    """Uniform ``f(soc, start_soc, temperature_c)`` for a model or a plain callable."""
    if isinstance(model, RbfModel):
        def f(soc, start_soc, temperature_c):
            soc = np.asarray(soc, dtype=float)
            x = np.stack(np.broadcast_arrays(soc, start_soc, temperature_c), axis=-1)
            return predict_resistance(model, x)
        return f
    return model


def cv_c_rates(
    socs: np.ndarray,
    model: ResistanceSource,
    battery: BatteryParams,
    ocv_curve: OcvCurve,
    start_soc: float,
    temperature_c: float,
) -> np.ndarray:
    """Rint CV C-rate at each SOC with the terminal held at cutoff voltage."""
    socs = np.asarray(socs, dtype=float)
    r = np.asarray(resistance_function(model)(socs, start_soc, temperature_c), dtype=float)
    rates = (battery.cutoff_voltage_v - ocv_at(ocv_curve, socs)) / (r * battery.capacity_ah)
    return np.asarray(rates, dtype=float)


def rct_cv(
    span: tuple[float, float],
    model: ResistanceSource,
    battery: BatteryParams,
    ocv_curve: OcvCurve,
    start_soc: float,
    temperature_c: float,
    config: EstimatorConfig = EstimatorConfig(),
) -> float:
    """Hours to charge through ``span`` at constant voltage, summed over small SOC steps."""
    edges = cv_edges(span[0], span[1], config.soc_step_cv)
    mids = 0.5 * (edges[:-1] + edges[1:])
    rates = cv_c_rates(mids, model, battery, ocv_curve, start_soc, temperature_c)
    bad = np.flatnonzero(~(rates > 0))
    if len(bad):
        raise UnreachableTargetError(float(mids[bad[0]]))
    hours = float(np.sum(np.diff(edges) / rates))
    return _apply_eta(hours, config.eta_cv, config.eta_multiplies)


def predict_turning_soc(
    state: SessionState,
    profile: ChargeProfile,
    battery: BatteryParams,
    ocv: OcvCurve,
    eta_cc: float,
    model: ResistanceSource,
    config: EstimatorConfig = EstimatorConfig(),
) -> float:
    if state.stage == "CV":
        return state.soc
    r = resistance_function(model)
    eta = 1.0 if config.eta_multiplies else eta_cc
    return cv_turning_soc(
        profile, battery, ocv,
        lambda soc: r(soc, state.start_soc, state.temperature_c),
        eta=eta, soc_from=state.soc, vectorized=True,
    )


def estimate(
    state: SessionState,
    profile: ChargeProfile,
    battery: BatteryParams,
    ocv: OcvCurve,
    accuracy_state: AccuracyState,
    model: ResistanceSource,
    config: EstimatorConfig = EstimatorConfig(),
) -> RctEstimate:
    """Proposed estimate: scenario split, CC sum with tracked accuracy, CV sum with predicted resistance.

    Once the session has been observed in CV the turning SOC is the current SOC.
    """
    eta = accuracy_state.eta_cc
    turning = predict_turning_soc(state, profile, battery, ocv, eta, model, config)
    scenario = classify_scenario(state.soc, state.target_soc, turning)
    cc_h = cv_h = 0.0
    if scenario.cc_span is not None:
        cc_h = rct_cc(partition_cc(profile, *scenario.cc_span), eta, config.eta_multiplies)
    if scenario.cv_span is not None:
        cv_h = rct_cv(scenario.cv_span, model, battery, ocv, state.start_soc, state.temperature_c, config)
    return RctEstimate(60.0 * (cc_h + cv_h), 60.0 * cc_h, 60.0 * cv_h, scenario, eta)


def estimate_baseline(
    state: SessionState,
    battery: BatteryParams,
    charger_max_current_a: float,
    commanded_current_a: float,
    config: EstimatorConfig = EstimatorConfig(),
) -> float:
    """Conventional estimate in minutes: remaining charge over the present current and a fixed accuracy."""
    if not charger_max_current_a > 0 or not commanded_current_a > 0:
        raise DomainError("charger and commanded currents must be positive")
    eta = config.baseline_eta_cv if state.stage == "CV" else config.baseline_eta_cc
    delta_soc = state.target_soc - state.soc
    hours = delta_soc * battery.capacity_ah / min(charger_max_current_a, commanded_current_a)
    return 60.0 * _apply_eta(hours, eta, config.eta_multiplies)
