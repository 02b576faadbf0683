"""Online CC charging-accuracy estimate with a SOC-progress-dependent EMA rate."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

from .errors import DomainError, NoCommandError, TraceFormatError

DEFAULT_ALPHA_SLOW = 0.01
DEFAULT_ALPHA_FAST = 0.2
DEFAULT_ETA_CAP = 1.2
UNKNOWN_CHARGER_ETA = 0.9


@dataclass(frozen=True)
class AccuracyState:
    eta_cc: float
    start_soc: float
    target_soc: float
    alpha_slow: float = DEFAULT_ALPHA_SLOW
    alpha_fast: float = DEFAULT_ALPHA_FAST
    eta_cap: float = DEFAULT_ETA_CAP

    def __post_init__(self):
        if not 0 < self.alpha_slow < self.alpha_fast < 1:
            raise DomainError(
                f"need 0 < alpha_slow < alpha_fast < 1, got {self.alpha_slow}, {self.alpha_fast}"
            )
        if not 0 < self.eta_cc <= self.eta_cap:
            raise DomainError(f"eta_cc must be in (0, {self.eta_cap}], got {self.eta_cc}")
        if not self.start_soc < self.target_soc:
            raise DomainError("start_soc must be below target_soc")


def instantaneous_accuracy(i_received: float, i_commanded: float, cap: float = DEFAULT_ETA_CAP) -> float:
    """Received over commanded current, clamped to ``[0, cap]``."""
    if not i_commanded > 0:
        raise NoCommandError(f"commanded current must be positive, got {i_commanded}")
    return min(max(i_received / i_commanded, 0.0), cap)


def update_rate(state: AccuracyState, current_soc: float) -> float:
    """EMA rate: alpha_slow near the starting SOC, alpha_fast at the target."""
    start, target = state.start_soc, state.target_soc
    if current_soc < start or current_soc > target:
        raise DomainError(f"current SOC {current_soc} outside [{start}, {target}]")
    if current_soc == start:
        # exponent -> -inf as current approaches start
        return state.alpha_slow
    blend = math.exp((current_soc - target) / (current_soc - start))
    return state.alpha_slow + (state.alpha_fast - state.alpha_slow) * blend


def step(state: AccuracyState, current_soc: float, i_received: float, i_commanded: float) -> AccuracyState:
    """One EMA update; samples without a positive command leave the state unchanged."""
    try:
        eta_now = instantaneous_accuracy(i_received, i_commanded, state.eta_cap)
    except NoCommandError:
        return state
    alpha = update_rate(state, current_soc)
    return replace(state, eta_cc=(1.0 - alpha) * state.eta_cc + alpha * eta_now)


def load_charger_table(path=None) -> dict[str, float]:
    """Charger type -> historical accuracy, from CSV ``charger_type,historical_eta``."""
    if path is None:
        text = resources.files("rct_lab.data").joinpath("chargers.csv").read_text()
        source = "chargers.csv"
    else:
        text = Path(path).read_text()
        source = str(path)
    reader = csv.DictReader(text.splitlines())
    if [f.strip() for f in reader.fieldnames or []] != ["charger_type", "historical_eta"]:
        raise TraceFormatError(f"{source}: expected header 'charger_type,historical_eta'")
    table = {}
    for lineno, row in enumerate(reader, start=2):
        try:
            table[row["charger_type"].strip()] = float(row["historical_eta"])
        except (AttributeError, TypeError, ValueError) as exc:
            raise TraceFormatError(f"{source}:{lineno}: bad charger row {row}") from exc
    return table


def initial_eta(charger_type: str | None, table: dict[str, float] | None = None) -> float:
    """Historical accuracy for a charger type, or the generic fallback when unknown."""
    table = load_charger_table() if table is None else table
    return table.get(charger_type, UNKNOWN_CHARGER_ETA)
