"""Preconfigured simulation setups mirroring the field experiments at desk scale."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .accuracy import initial_eta
from .battery import BatteryParams, OcvCurve, default_ocv_curve
from .profile import ChargeProfile, default_profile
from .simulation import ChargerModel, SessionTrace, TrueResistanceLaw, simulate_session

CC_CHARGER = "gbt-dc-250a"
CV_CHARGER = "gbt-dc-ideal"
# received current steps up 41 minutes in; time-weighted mean accuracy ~0.748
CC_ACCURACY_SCHEDULE = ((0.0, 0.72), (41 * 60.0, 0.85))
CC_NOISE = 0.05
CV_PROFILE = ChargeProfile(((0.0, 0.5, 1.5), (0.5, 1.0, 1.2)))
CHARGER_MAX_A = 10.0


@dataclass(frozen=True)
class SimulationSetup:
    name: str
    battery: BatteryParams
    ocv: OcvCurve
    profile: ChargeProfile
    charger: ChargerModel
    law: TrueResistanceLaw
    start_soc: float
    target_soc: float
    temperature_schedule: tuple[tuple[float, float], ...] = ((0.0, 25.0),)
    dt_s: float = 1.0
    initial_eta: float = 0.9
    thresholds: dict = field(default_factory=dict, compare=False)

    def run(self) -> SessionTrace:
        return simulate_session(
            self.battery, self.ocv, self.profile, self.charger, self.law,
            self.start_soc, self.target_soc, self.temperature_schedule, self.dt_s,
            battery_id=self.name,
        )

    def with_seed(self, seed: int) -> SimulationSetup:
        return replace(self, charger=replace(self.charger, seed=seed))


@dataclass(frozen=True)
class AgingSetup:
    """Repeated CV sessions on an aged pack, starting from a model of the fresh pack."""

    cycles: tuple[SimulationSetup, ...]
    model_law: TrueResistanceLaw
    # a few epochs per session; long runs overshoot mid-span in RCT terms
    learning_rate: float = 0.01
    epochs: int = 10
    buffer_capacity: int = 500


def scenario_cc(seed: int = 1, init_eta: float | None = None) -> SimulationSetup:
    """5% -> 70% SOC entirely in CC behind a derating, jittery charger."""
    return SimulationSetup(
        name="cc",
        battery=BatteryParams(),
        ocv=default_ocv_curve(),
        profile=default_profile(),
        charger=ChargerModel(CHARGER_MAX_A, CC_ACCURACY_SCHEDULE, CC_NOISE, seed, CC_CHARGER),
        law=TrueResistanceLaw(),
        start_soc=0.05,
        target_soc=0.70,
        initial_eta=initial_eta(CC_CHARGER) if init_eta is None else init_eta,
        thresholds={"min_improvement_percent": 60.0, "max_final_error_ticks": 1.0},
    )


def scenario_cc_wrong_init(seed: int = 1) -> SimulationSetup:
    setup = scenario_cc(seed, init_eta=0.5)
    return replace(
        setup,
        name="cc-wrong-init",
        thresholds={"max_final_quarter_error_ratio": 0.1, "max_final_error_ticks": 1.0},
    )


def scenario_cv(seed: int = 1, aging_scale: float = 1.0) -> SimulationSetup:
    """71% -> 90% SOC with the pack already in CV from the first sample."""
    return SimulationSetup(
        name="cv",
        battery=BatteryParams(),
        ocv=default_ocv_curve(),
        profile=CV_PROFILE,
        charger=ChargerModel(CHARGER_MAX_A, ((0.0, 1.0),), 0.0, seed, CV_CHARGER),
        law=TrueResistanceLaw(aging_scale=aging_scale),
        start_soc=0.71,
        target_soc=0.90,
        initial_eta=initial_eta(CV_CHARGER),
        thresholds={
            "min_improvement_percent": 70.0,
            "min_baseline_under_fraction": 0.9,
            "max_final_error_ticks": 1.0,
        },
    )


def scenario_aging(seed: int = 1, aging_scale: float = 1.15, cycles: int = 3) -> AgingSetup:
    return AgingSetup(
        cycles=tuple(
            replace(scenario_cv(seed + k, aging_scale), name=f"aging-{k + 1}", thresholds={})
            for k in range(cycles)
        ),
        model_law=TrueResistanceLaw(),
    )


TRAINING_START_SOCS = (0.10, 0.20, 0.30, 0.40, 0.50, 0.55, 0.60, 0.65, 0.72, 0.80)
TRAINING_TEMPS_C = (25.0, 15.0, 35.0, 45.0, 20.0, 30.0, 40.0, 25.0, 15.0, 35.0)


def training_setups(law: TrueResistanceLaw | None = None, n: int = 10, seed: int = 100) -> list[SimulationSetup]:
    """Full charges (to cut-off current) over a spread of starting SOC and temperature."""
    law = law or TrueResistanceLaw()
    base = scenario_cv()
    setups = []
    for k in range(n):
        start = TRAINING_START_SOCS[k % len(TRAINING_START_SOCS)]
        temp = TRAINING_TEMPS_C[k % len(TRAINING_TEMPS_C)]
        setups.append(replace(
            base,
            name=f"train-{k}",
            law=law,
            charger=replace(base.charger, seed=seed + k),
            start_soc=start,
            target_soc=1.0,
            temperature_schedule=((0.0, temp),),
            thresholds={},
        ))
    return setups


SCENARIOS = {
    "cc": scenario_cc,
    "cc-wrong-init": scenario_cc_wrong_init,
    "cv": scenario_cv,
}
