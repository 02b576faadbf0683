"""Battery parameters, OCV-SOC lookup and Rint-model algebra.

All quantities are expressed at one consistent "battery" level (cell or pack,
whichever the parameters describe). C-rates are in 1/hour, so a SOC span
divided by a C-rate gives hours.
"""

from __future__ import annotations

import bisect
import csv
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import (
    DomainError,
    NegativeCurrentError,
    TraceFormatError,
    UnmeasurableResistanceError,
)

SOC_TOL = 1e-9


@dataclass(frozen=True)
class BatteryParams:
    capacity_ah: float = 4.8
    cutoff_voltage_v: float = 4.2
    cutoff_current_c: float = 0.05
    nominal_temperature_c: float = 25.0

    def __post_init__(self):
        if not self.capacity_ah > 0:
            raise DomainError(f"capacity_ah must be positive, got {self.capacity_ah}")
        if not self.cutoff_voltage_v > 0:
            raise DomainError(f"cutoff_voltage_v must be positive, got {self.cutoff_voltage_v}")
        if not 0 < self.cutoff_current_c < 1:
            raise DomainError(f"cutoff_current_c must be in (0, 1), got {self.cutoff_current_c}")

    @property
    def cutoff_current_a(self) -> float:
        return self.cutoff_current_c * self.capacity_ah


@dataclass(frozen=True)
class OcvCurve:
    """Piecewise-linear open-circuit voltage as a function of SOC."""

    points: tuple[tuple[float, float], ...]
    _soc: np.ndarray = field(init=False, repr=False, compare=False)
    _ocv: np.ndarray = field(init=False, repr=False, compare=False)
    _soc_list: list = field(init=False, repr=False, compare=False)
    _ocv_list: list = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        pts = tuple((float(s), float(v)) for s, v in self.points)
        if len(pts) < 2:
            raise DomainError("OCV curve needs at least 2 points")
        soc = np.array([p[0] for p in pts])
        ocv = np.array([p[1] for p in pts])
        if np.any(np.diff(soc) <= 0):
            raise DomainError("OCV curve SOC values must be strictly increasing")
        if np.any(np.diff(ocv) < 0):
            raise DomainError("OCV curve voltages must be non-decreasing")
        if soc[0] != 0.0 or soc[-1] != 1.0:
            raise DomainError("OCV curve must cover SOC 0.0 through 1.0")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "_soc", soc)
        object.__setattr__(self, "_ocv", ocv)
        object.__setattr__(self, "_soc_list", soc.tolist())
        object.__setattr__(self, "_ocv_list", ocv.tolist())

    def __call__(self, soc):
        return ocv_at(self, soc)

    @property
    def soc_knots(self) -> np.ndarray:
        return self._soc.copy()

    @property
    def ocv_knots(self) -> np.ndarray:
        return self._ocv.copy()


@dataclass(frozen=True)
class RintState:
    soc: float
    resistance_ohm: float
    temperature_c: float

    def __post_init__(self):
        if not 0.0 <= self.soc <= 1.0:
            raise DomainError(f"soc must be in [0, 1], got {self.soc}")
        if not self.resistance_ohm > 0:
            raise DomainError(f"resistance must be positive, got {self.resistance_ohm}")


def ocv_at(curve: OcvCurve, soc):
    """Linearly interpolated OCV in volts; accepts a scalar or an array of SOC."""
    if isinstance(soc, float):
        if not -SOC_TOL <= soc <= 1.0 + SOC_TOL:
            raise DomainError(f"SOC outside [0, 1]: {soc}")
        k = min(max(bisect.bisect_right(curve._soc_list, soc) - 1, 0), len(curve._soc_list) - 2)
        s0, s1 = curve._soc_list[k], curve._soc_list[k + 1]
        v0, v1 = curve._ocv_list[k], curve._ocv_list[k + 1]
        frac = min(max((soc - s0) / (s1 - s0), 0.0), 1.0)
        return v0 + frac * (v1 - v0)
    arr = np.asarray(soc, dtype=float)
    if np.any(arr < -SOC_TOL) or np.any(arr > 1.0 + SOC_TOL) or np.any(np.isnan(arr)):
        raise DomainError(f"SOC outside [0, 1]: {soc}")
    out = np.interp(arr, curve._soc, curve._ocv)
    return float(out) if out.ndim == 0 else out


def cv_c_rate(v_terminal: float, ocv: float, resistance_ohm: float, capacity_ah: float) -> float:
    """C-rate (1/h) drawn at fixed terminal voltage through the Rint resistance."""
    if not resistance_ohm > 0:
        raise DomainError(f"resistance must be positive, got {resistance_ohm}")
    if not capacity_ah > 0:
        raise DomainError(f"capacity must be positive, got {capacity_ah}")
    if v_terminal < ocv:
        raise NegativeCurrentError(
            f"terminal voltage {v_terminal} V is below OCV {ocv} V; CV model invalid"
        )
    return (v_terminal - ocv) / (resistance_ohm * capacity_ah)


def resistance_from_measurement(v_terminal: float, ocv: float, current_a: float) -> float:
    """Rint resistance implied by one (V, OCV, I) measurement."""
    if current_a == 0:
        raise UnmeasurableResistanceError("resistance is unmeasurable at zero current")
    return (v_terminal - ocv) / current_a


def load_ocv_csv(path) -> OcvCurve:
    """Read an OCV table with header ``soc,ocv_v``."""
    path = Path(path)
    with path.open(newline="") as fh:
        return _parse_ocv(csv.DictReader(fh), str(path))


def _parse_ocv(reader, source: str) -> OcvCurve:
    if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["soc", "ocv_v"]:
        raise TraceFormatError(f"{source}: expected header 'soc,ocv_v', got {reader.fieldnames}")
    points = []
    for lineno, row in enumerate(reader, start=2):
        try:
            points.append((float(row["soc"]), float(row["ocv_v"])))
        except (TypeError, ValueError) as exc:
            raise TraceFormatError(f"{source}:{lineno}: bad OCV row {row}") from exc
    return OcvCurve(tuple(points))


def default_ocv_curve() -> OcvCurve:
    """The synthetic curve shipped with the package (steep ends, flat middle)."""
    text = resources.files("rct_lab.data").joinpath("default_ocv.csv").read_text()
    return _parse_ocv(csv.DictReader(text.splitlines()), "default_ocv.csv")
