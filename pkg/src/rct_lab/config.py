"""INI-style experiment configuration.

A config file overrides fields of a named base scenario. Every section and
key is optional::

    [battery]
    capacity_ah = 4.8
    cutoff_voltage_v = 4.2
    cutoff_current_c = 0.05
    ocv_file = my_ocv.csv

    [profile]
    file = my_profile.csv

    [charger]
    max_current_a = 10
    accuracy_schedule = 0:0.72, 2460:0.85
    noise_amplitude = 0.05
    charger_type = gbt-dc-250a

    [law]
    r_base_ohm = 0.05
    aging_scale = 1.0

    [session]
    start_soc = 0.05
    target_soc = 0.70
    temperature_c = 25
    dt_s = 1
    seed = 1

    [estimator]
    initial_eta = 0.7
    alpha_slow = 0.01
    alpha_fast = 0.2
    soc_step_cv = 0.01
    eta_multiplies = false
    tick_s = 10
    charger_table = chargers.csv

    [rbf]
    n_hidden = 25
    seed = 0
    model_file = model.json
    learning_rate = 0.01
    epochs = 10

Relative file paths resolve against the config file's directory.
"""

from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from . import accuracy as acc
from .battery import load_ocv_csv
from .engine import EstimatorConfig
from .errors import ConfigError, DomainError
from .profile import load_profile_csv
from .resistance import DEFAULT_N_HIDDEN
from .scenarios import SimulationSetup
from .simulation import TrueResistanceLaw

SEED_ENV = "RCT_LAB_SEED"

KNOWN_KEYS = {
    "battery": {"capacity_ah", "cutoff_voltage_v", "cutoff_current_c", "nominal_temperature_c", "ocv_file"},
    "profile": {"file"},
    "charger": {"max_current_a", "accuracy_schedule", "noise_amplitude", "charger_type"},
    "law": {f.name for f in fields(TrueResistanceLaw)},
    "session": {"start_soc", "target_soc", "temperature_c", "dt_s", "seed"},
    "estimator": {"initial_eta", "alpha_slow", "alpha_fast", "soc_step_cv", "eta_cv", "baseline_eta_cc",
                  "baseline_eta_cv", "eta_multiplies", "tick_s", "charger_table"},
    "rbf": {"n_hidden", "seed", "model_file", "learning_rate", "epochs"},
}


@dataclass
class RunConfig:
    """Everything a CLI run needs beyond the scenario itself."""

    estimator: EstimatorConfig = field(default_factory=EstimatorConfig)
    alpha_slow: float = acc.DEFAULT_ALPHA_SLOW
    alpha_fast: float = acc.DEFAULT_ALPHA_FAST
    tick_s: float = 10.0
    n_hidden: int = DEFAULT_N_HIDDEN
    rbf_seed: int = 0
    model_file: Path | None = None
    learning_rate: float | None = None
    epochs: int | None = None


def read_config(path) -> configparser.ConfigParser:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from exc
    except configparser.ParsingError as exc:
        lineno, line = exc.errors[0]
        raise ConfigError(f"{path}:{lineno}: cannot parse {line.strip()!r}") from exc
    except configparser.Error as exc:
        lineno = getattr(exc, "lineno", None)
        where = f"{path}:{lineno}" if lineno else str(path)
        raise ConfigError(f"{where}: {exc.message}") from exc
    for section in parser.sections():
        if section not in KNOWN_KEYS:
            raise ConfigError(f"{path}: unknown section [{section}]")
        unknown = set(parser[section]) - KNOWN_KEYS[section]
        if unknown:
            raise ConfigError(f"{path}: unknown key(s) in [{section}]: {', '.join(sorted(unknown))}")
    parser.source_path = Path(path)  # type: ignore[attr-defined]
    return parser


def _get(parser, section, key, conv):
    if not parser.has_option(section, key):
        return None
    raw = parser.get(section, key)
    try:
        return conv(raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{parser.source_path}: [{section}] {key} = {raw!r}: {exc}") from exc


def _path(parser, raw: str) -> Path:
    p = Path(raw)
    return p if p.is_absolute() else parser.source_path.parent / p


def _bool(raw: str) -> bool:
    v = raw.strip().lower()
    if v in {"1", "true", "yes", "on"}:
        return True
    if v in {"0", "false", "no", "off"}:
        return False
    raise ValueError("expected a boolean")


def parse_schedule(raw: str) -> tuple[tuple[float, float], ...]:
    """``"0:0.72, 2460:0.85"`` -> ((0.0, 0.72), (2460.0, 0.85))."""
    out = []
    for item in raw.split(","):
        t, _, v = item.strip().partition(":")
        if not _:
            raise ValueError(f"schedule entry {item.strip()!r} is not time:value")
        out.append((float(t), float(v)))
    return tuple(out)


def resolve_seed(config_seed: int | None, cli_seed: int | None = None) -> int | None:
    """CLI flag beats the environment, which beats the config file."""
    if cli_seed is not None:
        return cli_seed
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV}={env!r} is not an integer") from exc
    return config_seed


def apply_config(
    setup: SimulationSetup,
    parser: configparser.ConfigParser | None,
    cli_seed: int | None = None,
) -> SimulationSetup:
    """Override ``setup`` with the values present in ``parser``."""
    seed = resolve_seed(_get(parser, "session", "seed", int) if parser else None, cli_seed)
    if seed is not None:
        setup = setup.with_seed(seed)
    if parser is None:
        return setup
    try:
        batt = {k: _get(parser, "battery", k, float) for k in
                ("capacity_ah", "cutoff_voltage_v", "cutoff_current_c", "nominal_temperature_c")}
        batt = {k: v for k, v in batt.items() if v is not None}
        if batt:
            setup = replace(setup, battery=replace(setup.battery, **batt))
        ocv_file = _get(parser, "battery", "ocv_file", str)
        if ocv_file:
            setup = replace(setup, ocv=load_ocv_csv(_path(parser, ocv_file)))
        profile_file = _get(parser, "profile", "file", str)
        if profile_file:
            setup = replace(setup, profile=load_profile_csv(_path(parser, profile_file)))

        charger = {
            "max_current_a": _get(parser, "charger", "max_current_a", float),
            "accuracy_schedule": _get(parser, "charger", "accuracy_schedule", parse_schedule),
            "noise_amplitude": _get(parser, "charger", "noise_amplitude", float),
            "charger_type": _get(parser, "charger", "charger_type", str),
        }
        charger = {k: v for k, v in charger.items() if v is not None}
        if charger:
            setup = replace(setup, charger=replace(setup.charger, **charger))

        law = {k: _get(parser, "law", k, float) for k in KNOWN_KEYS["law"]}
        law = {k: v for k, v in law.items() if v is not None}
        if law:
            setup = replace(setup, law=replace(setup.law, **law))

        session = {k: _get(parser, "session", k, float) for k in ("start_soc", "target_soc", "dt_s")}
        session = {k: v for k, v in session.items() if v is not None}
        temp = _get(parser, "session", "temperature_c", float)
        if temp is not None:
            session["temperature_schedule"] = ((0.0, temp),)
        init_eta = _get(parser, "estimator", "initial_eta", float)
        table_file = _get(parser, "estimator", "charger_table", str)
        if init_eta is not None:
            session["initial_eta"] = init_eta
        elif table_file or "charger_type" in charger:
            table = acc.load_charger_table(_path(parser, table_file) if table_file else None)
            session["initial_eta"] = acc.initial_eta(setup.charger.charger_type, table)
        if session:
            setup = replace(setup, **session)
    except DomainError as exc:
        raise ConfigError(f"{parser.source_path}: {exc}") from exc
    return setup


def run_config(parser: configparser.ConfigParser | None, eta_multiplies: bool = False) -> RunConfig:
    cfg = RunConfig()
    if parser is not None:
        est = {k: _get(parser, "estimator", k, float) for k in ("soc_step_cv", "eta_cv", "baseline_eta_cc", "baseline_eta_cv")}
        est = {k: v for k, v in est.items() if v is not None}
        mult = _get(parser, "estimator", "eta_multiplies", _bool)
        if mult is not None:
            est["eta_multiplies"] = mult
        try:
            cfg.estimator = EstimatorConfig(**est)
        except DomainError as exc:
            raise ConfigError(f"{parser.source_path}: {exc}") from exc
        for attr, section, key, conv in (
            ("alpha_slow", "estimator", "alpha_slow", float),
            ("alpha_fast", "estimator", "alpha_fast", float),
            ("tick_s", "estimator", "tick_s", float),
            ("n_hidden", "rbf", "n_hidden", int),
            ("rbf_seed", "rbf", "seed", int),
            ("learning_rate", "rbf", "learning_rate", float),
            ("epochs", "rbf", "epochs", int),
        ):
            value = _get(parser, section, key, conv)
            if value is not None:
                setattr(cfg, attr, value)
        model_file = _get(parser, "rbf", "model_file", str)
        if model_file:
            cfg.model_file = _path(parser, model_file)
    if eta_multiplies:
        cfg.estimator = replace(cfg.estimator, eta_multiplies=True)
    return cfg
