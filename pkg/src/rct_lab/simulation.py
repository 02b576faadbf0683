"""Ground-truth CC-CV charging sessions for a Rint battery behind an imperfect charger."""

from __future__ import annotations

import bisect
import csv
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .battery import BatteryParams, OcvCurve, ocv_at
from .errors import DomainError, TraceFormatError
from .profile import ChargeProfile

TRACE_HEADER = ["time_s", "soc", "stage", "i_cmd_a", "i_recv_a", "v_term_v", "temp_c"]
STAGES = ("CC", "CV", "DONE")


@dataclass(frozen=True)
class ChargerModel:
    """Charger delivering ``min(command, max_current_a) * accuracy(t)`` in CC.

    ``accuracy_schedule`` is piecewise constant in time; ``noise_amplitude``
    adds seeded uniform multiplicative jitter within +/- amplitude.
    """

    max_current_a: float
    accuracy_schedule: tuple[tuple[float, float], ...] = ((0.0, 1.0),)
    noise_amplitude: float = 0.0
    seed: int = 0
    charger_type: str = "generic"

    def __post_init__(self):
        sched = tuple((float(t), float(a)) for t, a in self.accuracy_schedule)
        if not sched:
            raise DomainError("accuracy schedule is empty")
        times = [t for t, _ in sched]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise DomainError("accuracy schedule times must be strictly increasing")
        if any(not 0 < a <= 1.2 for _, a in sched):
            raise DomainError("accuracy values must lie in (0, 1.2]")
        if not self.max_current_a > 0:
            raise DomainError("max_current_a must be positive")
        if not 0 <= self.noise_amplitude < 1:
            raise DomainError("noise_amplitude must be in [0, 1)")
        object.__setattr__(self, "accuracy_schedule", sched)
        object.__setattr__(self, "_times", times)

    def accuracy_at(self, time_s: float) -> float:
        k = max(bisect.bisect_right(self._times, time_s) - 1, 0)
        return self.accuracy_schedule[k][1]


@dataclass(frozen=True)
class TrueResistanceLaw:
    """Synthetic CV-stage resistance: falls with temperature, rises steeply as SOC -> 1,
    grows with the starting SOC, and scales with ageing."""

    r_base_ohm: float = 0.05
    temp_coeff: float = 0.01
    end_rise_gain: float = 5.0
    end_rise_rate: float = 20.0
    start_soc_coeff: float = 0.1
    aging_scale: float = 1.0
    reference_temp_c: float = 25.0

    def __post_init__(self):
        if not self.r_base_ohm > 0:
            raise DomainError("r_base_ohm must be positive")
        if self.aging_scale < 1:
            raise DomainError("aging_scale must be >= 1")
        if self.temp_coeff <= 0 or self.end_rise_gain < 0 or self.start_soc_coeff < 0:
            raise DomainError("law shape parameters out of range")

    @property
    def max_temperature_c(self) -> float:
        """Temperature above which the linear temperature factor stops being positive."""
        return self.reference_temp_c + 1.0 / self.temp_coeff

    def __call__(self, soc, start_soc, temperature_c):
        if isinstance(soc, float) and isinstance(start_soc, float) and isinstance(temperature_c, float):
            if temperature_c >= self.max_temperature_c:
                raise DomainError(f"temperature must stay below {self.max_temperature_c} C")
            return (
                self.r_base_ohm
                * (1.0 - self.temp_coeff * (temperature_c - self.reference_temp_c))
                * (1.0 + self.end_rise_gain * math.exp(self.end_rise_rate * (soc - 1.0)))
                * (1.0 + self.start_soc_coeff * start_soc)
                * self.aging_scale
            )
        temp = np.asarray(temperature_c, dtype=float)
        if np.any(temp >= self.max_temperature_c):
            raise DomainError(f"temperature must stay below {self.max_temperature_c} C")
        out = (
            self.r_base_ohm
            * (1.0 - self.temp_coeff * (temp - self.reference_temp_c))
            * (1.0 + self.end_rise_gain * np.exp(self.end_rise_rate * (np.asarray(soc, dtype=float) - 1.0)))
            * (1.0 + self.start_soc_coeff * np.asarray(start_soc, dtype=float))
            * self.aging_scale
        )
        return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True, eq=False)
class SessionTrace:
    time_s: np.ndarray
    soc: np.ndarray
    stage: tuple[str, ...]
    i_cmd_a: np.ndarray
    i_recv_a: np.ndarray
    v_term_v: np.ndarray
    temp_c: np.ndarray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        for name in ("time_s", "soc", "i_cmd_a", "i_recv_a", "v_term_v", "temp_c"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "stage", tuple(self.stage))
        n = len(self.time_s)
        if n == 0 or any(len(getattr(self, c)) != n for c in ("soc", "stage", "i_cmd_a", "i_recv_a", "v_term_v", "temp_c")):
            raise DomainError("trace columns must be non-empty and of equal length")
        if np.any(np.diff(self.time_s) <= 0):
            raise DomainError("trace time must be strictly increasing")
        if np.any(np.diff(self.soc) < 0):
            raise DomainError("trace SOC must be non-decreasing")
        order = [STAGES.index(s) for s in self.stage]
        if any(b < a for a, b in zip(order, order[1:])):
            raise DomainError("stages must progress CC -> CV -> DONE")

    def __len__(self) -> int:
        return len(self.time_s)

    @property
    def start_time_s(self) -> float:
        return float(self.time_s[0])

    @property
    def end_time_s(self) -> float:
        return float(self.time_s[-1])

    @property
    def duration_s(self) -> float:
        return self.end_time_s - self.start_time_s

    @property
    def cv_mask(self) -> np.ndarray:
        return np.array([s == "CV" for s in self.stage])

    @property
    def cc_mask(self) -> np.ndarray:
        return np.array([s == "CC" for s in self.stage])

    @property
    def turning_soc(self) -> float | None:
        """SOC of the first CV row, or None when the session never entered CV."""
        idx = np.flatnonzero(self.cv_mask)
        return float(self.soc[idx[0]]) if len(idx) else None

    def stage_duration_s(self, stage: str) -> float:
        """Time spent in ``stage`` (each row lasts until the next row's timestamp)."""
        mask = np.array([s == stage for s in self.stage[:-1]])
        return float(np.sum(np.diff(self.time_s)[mask]))

    def write_csv(self, path) -> None:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_HEADER)
            for k in range(len(self)):
                w.writerow([
                    repr(float(self.time_s[k])), repr(float(self.soc[k])), self.stage[k],
                    repr(float(self.i_cmd_a[k])), repr(float(self.i_recv_a[k])),
                    repr(float(self.v_term_v[k])), repr(float(self.temp_c[k])),
                ])
        path.with_suffix(".json").write_text(json.dumps(self.metadata, indent=2, sort_keys=True) + "\n")

    @classmethod
    def read_csv(cls, path) -> SessionTrace:
        path = Path(path)
        cols: dict[str, list] = {h: [] for h in TRACE_HEADER}
        with path.open(newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != TRACE_HEADER:
                raise TraceFormatError(f"{path}: expected header {','.join(TRACE_HEADER)}")
            for lineno, row in enumerate(reader, start=2):
                try:
                    if row["stage"] not in STAGES:
                        raise ValueError(row["stage"])
                    for h in TRACE_HEADER:
                        cols[h].append(row[h] if h == "stage" else float(row[h]))
                except (TypeError, ValueError) as exc:
                    raise TraceFormatError(f"{path}:{lineno}: bad trace row ({exc})") from exc
        meta_path = path.with_suffix(".json")
        metadata = json.loads(meta_path.read_text()) if meta_path.exists() else {}
        try:
            return cls(cols["time_s"], cols["soc"], cols["stage"], cols["i_cmd_a"],
                       cols["i_recv_a"], cols["v_term_v"], cols["temp_c"], metadata)
        except DomainError as exc:
            raise TraceFormatError(f"{path}: {exc}") from exc


def temperature_at(schedule: tuple[tuple[float, float], ...], time_s: float) -> float:
    times = [t for t, _ in schedule]
    k = max(bisect.bisect_right(times, time_s) - 1, 0)
    return schedule[k][1]


def config_hash(*parts) -> str:
    blob = json.dumps([asdict(p) if hasattr(p, "__dataclass_fields__") else p for p in parts],
                      sort_keys=True, default=repr)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def simulate_session(
    battery: BatteryParams,
    ocv: OcvCurve,
    profile: ChargeProfile,
    charger: ChargerModel,
    law: Callable,
    start_soc: float,
    target_soc: float,
    temperature_schedule: tuple[tuple[float, float], ...] = ((0.0, 25.0),),
    dt_s: float = 1.0,
    max_duration_s: float = 48 * 3600.0,
    battery_id: str = "battery",
) -> SessionTrace:
    """Euler-integrate one charging session until the target SOC or the cut-off current.

    Row k holds the state at ``time_s[k]`` and the current applied over the
    following step. The last step is shortened so SOC lands exactly on the
    target; a final DONE row closes the trace.
    """
    if not start_soc < target_soc:
        raise DomainError("start_soc must be below target_soc")
    if start_soc < 0 or target_soc > 1:
        raise DomainError("SOC span must lie in [0, 1]")
    if not dt_s > 0:
        raise DomainError("dt_s must be positive")
    schedule = tuple((float(t), float(v)) for t, v in temperature_schedule)
    rng = np.random.default_rng(charger.seed)
    as_per_soc = 3600.0 * battery.capacity_ah
    cutoff_v = battery.cutoff_voltage_v

    rows = []
    soc, stage, k = start_soc, "CC", 0
    t = 0.0
    cutoff_reached = False
    while True:
        t = k * dt_s
        if t > max_duration_s:
            raise DomainError("session exceeded max_duration_s")
        temp = temperature_at(schedule, t)
        r = law(soc, start_soc, temp)
        ocv_v = ocv_at(ocv, soc)
        if stage == "CC":
            i_cmd = profile.commanded_c_rate(soc) * battery.capacity_ah
            ratio = charger.accuracy_at(t)
            if charger.noise_amplitude:
                ratio *= 1.0 + rng.uniform(-charger.noise_amplitude, charger.noise_amplitude)
            i = min(i_cmd, charger.max_current_a) * min(ratio, 1.2)
            v = ocv_v + r * i
            if v >= cutoff_v:
                stage = "CV"
        if stage == "CV":
            i = (cutoff_v - ocv_v) / r
            if i < battery.cutoff_current_a:
                cutoff_reached = True
                break
            i_cmd, v = i, cutoff_v
        rows.append((t, soc, stage, i_cmd, i, v, temp))
        dsoc = i * dt_s / as_per_soc
        if soc + dsoc >= target_soc:
            t = t + (target_soc - soc) * as_per_soc / i
            soc = target_soc
            break
        soc += dsoc
        k += 1

    final_temp = temperature_at(schedule, t)
    rows.append((t, soc, "DONE", 0.0, 0.0, ocv_at(ocv, soc), final_temp))
    cols = list(zip(*rows))
    metadata = {
        "start_soc": start_soc,
        "target_soc": target_soc,
        "final_soc": soc,
        "cutoff_reached": cutoff_reached,
        "charger_id": charger.charger_type,
        "battery_id": battery_id,
        "seed": charger.seed,
        "dt_s": dt_s,
        "config_hash": config_hash(battery, ocv.points, profile.steps, charger, law, start_soc,
                                   target_soc, schedule, dt_s),
    }
    return SessionTrace(*cols, metadata=metadata)


def true_rct(trace: SessionTrace, at_time_s: float) -> float:
    """Remaining minutes until the session ends, measured from ``at_time_s``."""
    if at_time_s < trace.start_time_s or at_time_s > trace.end_time_s:
        raise DomainError(f"time {at_time_s} outside trace [{trace.start_time_s}, {trace.end_time_s}]")
    return (trace.end_time_s - at_time_s) / 60.0
