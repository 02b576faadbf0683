"""Designed CC current profile, SOC partitioning and scenario classification."""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Callable

import numpy as np

from .battery import BatteryParams, OcvCurve, ocv_at
from .errors import DomainError, TraceFormatError

COVERAGE_TOL = 1e-12
TURNING_SCAN_STEP = 0.01
TURNING_TOL = 1e-4


@dataclass(frozen=True)
class ChargeProfile:
    """Piecewise-constant commanded C-rate over contiguous SOC steps."""

    steps: tuple[tuple[float, float, float], ...]

    def __post_init__(self):
        steps = tuple((float(a), float(b), float(c)) for a, b, c in self.steps)
        if not steps:
            raise DomainError("charge profile needs at least one step")
        for k, (lo, hi, rate) in enumerate(steps):
            if not lo < hi:
                raise DomainError(f"step {k}: soc_from {lo} must be below soc_to {hi}")
            if not rate > 0:
                raise DomainError(f"step {k}: commanded C-rate must be positive, got {rate}")
            if k and steps[k - 1][1] != lo:
                raise DomainError(f"step {k}: not contiguous with previous step")
            if k and rate > steps[k - 1][2]:
                raise DomainError(f"step {k}: commanded C-rate increases with SOC")
        object.__setattr__(self, "steps", steps)

    @property
    def coverage(self) -> tuple[float, float]:
        return self.steps[0][0], self.steps[-1][1]

    @property
    def boundaries(self) -> list[float]:
        return [s[0] for s in self.steps] + [self.steps[-1][1]]

    def commanded_c_rate(self, soc: float) -> float:
        """Commanded C-rate at ``soc``; a shared boundary belongs to the upper step."""
        lo, hi = self.coverage
        if soc < lo - COVERAGE_TOL or soc > hi + COVERAGE_TOL:
            raise DomainError(f"SOC {soc} outside profile coverage {self.coverage}")
        for a, b, rate in self.steps:
            if soc < b:
                return rate
        return self.steps[-1][2]


@dataclass(frozen=True)
class Partitioning:
    segments: tuple[tuple[float, float], ...]

    @property
    def count(self) -> int:
        return len(self.segments)

    @property
    def total_soc(self) -> float:
        return sum(d for d, _ in self.segments)


class ScenarioKind(enum.Enum):
    CC_ONLY = "CC_ONLY"
    CV_ONLY = "CV_ONLY"
    CC_THEN_CV = "CC_THEN_CV"


@dataclass(frozen=True)
class Scenario:
    kind: ScenarioKind
    cc_span: tuple[float, float] | None = None
    cv_span: tuple[float, float] | None = None

    def __post_init__(self):
        has = (self.cc_span is not None, self.cv_span is not None)
        expected = {
            ScenarioKind.CC_ONLY: (True, False),
            ScenarioKind.CV_ONLY: (False, True),
            ScenarioKind.CC_THEN_CV: (True, True),
        }[self.kind]
        if has != expected:
            raise DomainError(f"{self.kind.value} scenario has spans {self.cc_span}, {self.cv_span}")
        if self.kind is ScenarioKind.CC_THEN_CV and self.cc_span[1] != self.cv_span[0]:
            raise DomainError("CC and CV spans must meet at the turning SOC")


def partition_cc(profile: ChargeProfile, start_soc: float, end_soc: float) -> Partitioning:
    """Split ``[start_soc, end_soc]`` into constant-command segments."""
    lo, hi = profile.coverage
    if not start_soc < end_soc:
        raise DomainError(f"empty SOC span ({start_soc}, {end_soc})")
    if start_soc < lo - COVERAGE_TOL or end_soc > hi + COVERAGE_TOL:
        raise DomainError(f"span ({start_soc}, {end_soc}) outside profile coverage {profile.coverage}")
    segments = []
    for a, b, rate in profile.steps:
        left, right = max(a, start_soc), min(b, end_soc)
        if right > left:
            segments.append((right - left, rate))
    return Partitioning(tuple(segments))


def cv_turning_soc(
    profile: ChargeProfile,
    battery: BatteryParams,
    ocv: OcvCurve,
    resistance_provider: Callable[[float], float],
    *,
    eta: float = 1.0,
    soc_from: float | None = None,
    vectorized: bool = False,
) -> float:
    """Smallest SOC where the Rint terminal voltage under the profile current hits cutoff.

    The coverage is scanned on a 1% grid and the first bracketing interval is
    bisected. ``eta`` scales the commanded current to the current actually
    expected at the terminals; ``vectorized`` lets the scan call
    ``resistance_provider`` once with an array. Returns 1.0 when cutoff is
    never reached within coverage.
    """
    lo, hi = profile.coverage
    if soc_from is not None:
        lo = max(lo, soc_from)

    def overshoot(soc: float) -> float:
        current = profile.commanded_c_rate(soc) * eta * battery.capacity_ah
        return ocv_at(ocv, soc) + resistance_provider(soc) * current - battery.cutoff_voltage_v

    n = int(np.ceil((hi - lo) / TURNING_SCAN_STEP - 1e-9))
    grid = [lo + k * TURNING_SCAN_STEP for k in range(n)] + [hi]
    if vectorized:
        arr = np.array(grid)
        rates = np.array([profile.commanded_c_rate(s) for s in grid])
        values = (ocv_at(ocv, arr) + np.asarray(resistance_provider(arr)) * rates * eta * battery.capacity_ah
                  - battery.cutoff_voltage_v)
    else:
        values = [overshoot(s) for s in grid]
    if values[0] >= 0:
        return grid[0]
    for k in range(1, len(grid)):
        if values[k] >= 0:
            below, above = grid[k - 1], grid[k]
            while above - below > TURNING_TOL:
                mid = 0.5 * (below + above)
                if overshoot(mid) >= 0:
                    above = mid
                else:
                    below = mid
            return above
    return 1.0


def classify_scenario(current_soc: float, target_soc: float, turning_soc: float) -> Scenario:
    if not current_soc < target_soc:
        raise DomainError(f"current SOC {current_soc} must be below target SOC {target_soc}")
    if current_soc >= turning_soc:
        return Scenario(ScenarioKind.CV_ONLY, cv_span=(current_soc, target_soc))
    if target_soc <= turning_soc:
        return Scenario(ScenarioKind.CC_ONLY, cc_span=(current_soc, target_soc))
    return Scenario(
        ScenarioKind.CC_THEN_CV,
        cc_span=(current_soc, turning_soc),
        cv_span=(turning_soc, target_soc),
    )


def load_profile_csv(path) -> ChargeProfile:
    """Read a profile with header ``soc_from,soc_to,c_rate``."""
    path = Path(path)
    with path.open(newline="") as fh:
        return _parse_profile(csv.DictReader(fh), str(path))


def _parse_profile(reader, source: str) -> ChargeProfile:
    header = [f.strip() for f in reader.fieldnames or []]
    if header != ["soc_from", "soc_to", "c_rate"]:
        raise TraceFormatError(f"{source}: expected header 'soc_from,soc_to,c_rate', got {header}")
    steps = []
    for lineno, row in enumerate(reader, start=2):
        try:
            steps.append((float(row["soc_from"]), float(row["soc_to"]), float(row["c_rate"])))
        except (TypeError, ValueError) as exc:
            raise TraceFormatError(f"{source}:{lineno}: bad profile row {row}") from exc
    try:
        return ChargeProfile(tuple(steps))
    except DomainError as exc:
        raise TraceFormatError(f"{source}: {exc}") from exc


def default_profile() -> ChargeProfile:
    text = resources.files("rct_lab.data").joinpath("default_profile.csv").read_text()
    return _parse_profile(csv.DictReader(text.splitlines()), "default_profile.csv")
