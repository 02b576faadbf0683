"""Remaining-charging-time estimation for DC fast charging.

The proposed estimator splits the remaining SOC span at a predicted CC/CV
turning point. The CC part uses the designed current profile and an online
estimate of how much of the commanded current the charger delivers. The CV
part uses a learned Rint resistance map (an RBF network over SOC, starting
SOC and temperature).
"""

from .accuracy import AccuracyState, initial_eta, instantaneous_accuracy, step, update_rate
from .battery import BatteryParams, OcvCurve, cv_c_rate, default_ocv_curve, ocv_at, resistance_from_measurement
from .engine import EstimatorConfig, RctEstimate, SessionState, estimate, estimate_baseline, rct_cc, rct_cv
from .errors import (
    ConfigError,
    DomainError,
    EmptyTrainingSetError,
    NegativeCurrentError,
    NoCommandError,
    RctError,
    TraceFormatError,
    UnmeasurableResistanceError,
    UnreachableTargetError,
)
from .evaluation import EvaluationReport, rmse, run_aging_experiment, run_experiment, train_model
from .profile import ChargeProfile, Scenario, ScenarioKind, classify_scenario, cv_turning_soc, partition_cc
from .resistance import RbfModel, TrainingBuffer, TrainingSample, fit_centers, fit_weights, online_update
from .simulation import ChargerModel, SessionTrace, TrueResistanceLaw, simulate_session, true_rct

__version__ = "0.1.0"
