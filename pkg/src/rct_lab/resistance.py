"""RBF-network prediction of CV-stage battery resistance.

The network maps (soc, start_soc, temperature_c) to an ohmic resistance
through Gaussian hidden units and a linear output layer. Centers come from
k-means on training inputs, output weights from a linear least-squares fit
against measured terminal voltage, and the weights are later refined online
by gradient descent with newer samples weighted more heavily.
"""

from __future__ import annotations

import csv
import json
import logging
import warnings
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .battery import OcvCurve, ocv_at
from .errors import DomainError, EmptyTrainingSetError, TraceFormatError

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
DEFAULT_N_HIDDEN = 25
DEFAULT_FLOOR_OHM = 1e-4
DEFAULT_DISCARD_THRESHOLD = 500
SPREAD_NEIGHBOURS = 2
MIN_SPREAD = 1e-3
# Resistance varies mostly along SOC while start SOC and temperature are
# constant within a session, so SOC gets a wider share of the scaled space.
INPUT_WEIGHTS = (3.0, 1.0, 1.0)
# widen units beyond the neighbour distance so they overlap smoothly
SPREAD_SCALE = 3.0
KMEANS_MAX_ITER = 300
DIVERGENCE_PATIENCE = 5

BUFFER_HEADER = ["serial", "soc", "start_soc", "temp_c", "current_a", "v_meas", "ocv_v"]


@dataclass(frozen=True, eq=False)
class RbfModel:
    centers: np.ndarray  # (n_hidden, 3), raw input units
    spreads: np.ndarray  # (n_hidden,), in scaled input space
    weights: np.ndarray  # (n_hidden,)
    input_scaling: tuple[tuple[float, float], ...]  # per input: (offset, scale)
    floor_ohm: float = DEFAULT_FLOOR_OHM

    def __post_init__(self):
        centers = np.atleast_2d(np.asarray(self.centers, dtype=float))
        spreads = np.asarray(self.spreads, dtype=float).ravel()
        weights = np.asarray(self.weights, dtype=float).ravel()
        scaling = tuple((float(o), float(s)) for o, s in self.input_scaling)
        n = centers.shape[0]
        if n < 1 or centers.shape[1] != 3:
            raise DomainError(f"centers must have shape (n>=1, 3), got {centers.shape}")
        if spreads.shape != (n,) or weights.shape != (n,):
            raise DomainError("centers, spreads and weights must have equal length")
        if np.any(spreads <= 0):
            raise DomainError("every spread must be positive")
        if len(scaling) != 3 or any(s <= 0 for _, s in scaling):
            raise DomainError("input_scaling needs three (offset, scale>0) pairs")
        if not self.floor_ohm > 0:
            raise DomainError("floor_ohm must be positive")
        for name, arr in (("centers", centers), ("spreads", spreads), ("weights", weights)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "input_scaling", scaling)

    @property
    def n_hidden(self) -> int:
        return self.centers.shape[0]

    def scale(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        offset = np.array([o for o, _ in self.input_scaling])
        scale = np.array([s for _, s in self.input_scaling])
        return (x - offset) / scale

    def with_weights(self, weights) -> RbfModel:
        return replace(self, weights=np.array(weights, dtype=float))

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "n_hidden": self.n_hidden,
            "centers": self.centers.tolist(),
            "spreads": self.spreads.tolist(),
            "weights": self.weights.tolist(),
            "input_scaling": [list(p) for p in self.input_scaling],
            "floor_ohm": self.floor_ohm,
        }

    @classmethod
    def from_dict(cls, d: dict) -> RbfModel:
        try:
            model = cls(
                centers=np.array(d["centers"], dtype=float),
                spreads=np.array(d["spreads"], dtype=float),
                weights=np.array(d["weights"], dtype=float),
                input_scaling=tuple(tuple(p) for p in d["input_scaling"]),
                floor_ohm=float(d["floor_ohm"]),
            )
        except KeyError as exc:
            raise TraceFormatError(f"model JSON missing field {exc}") from exc
        if int(d.get("n_hidden", model.n_hidden)) != model.n_hidden:
            raise TraceFormatError("model JSON n_hidden disagrees with centers")
        return model

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> RbfModel:
        try:
            d = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise TraceFormatError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from exc
        return cls.from_dict(d)


def activations(model: RbfModel, x) -> np.ndarray:
    """Gaussian hidden-unit outputs for one input (shape (n,)) or a batch (shape (m, n))."""
    xs = model.scale(x)
    cs = model.scale(model.centers)
    sq = np.sum((xs[..., None, :] - cs) ** 2, axis=-1)
    return np.exp(-sq / (2.0 * model.spreads**2))


def linear_output(model: RbfModel, x) -> np.ndarray | float:
    """Weighted sum of activations without the resistance floor."""
    out = activations(model, x) @ model.weights
    return float(out) if np.ndim(out) == 0 else out


def predict_resistance(model: RbfModel, x) -> np.ndarray | float:
    """Predicted resistance in ohms, never below ``model.floor_ohm``."""
    out = np.maximum(activations(model, x) @ model.weights, model.floor_ohm)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# Offline training: k-means centers, least-squares weights
# ---------------------------------------------------------------------------


class KMeansResult(NamedTuple):
    centroids: np.ndarray
    labels: np.ndarray
    inertia_history: list[float]
    n_iter: int


class CenterFit(NamedTuple):
    centers: np.ndarray
    spreads: np.ndarray
    input_scaling: tuple[tuple[float, float], ...]
    inertia_history: list[float]


def _kmeans_pp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centroids = [x[rng.integers(len(x))]]
    d2 = np.sum((x - centroids[0]) ** 2, axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total == 0:
            idx = rng.integers(len(x))
        else:
            idx = rng.choice(len(x), p=d2 / total)
        centroids.append(x[idx])
        d2 = np.minimum(d2, np.sum((x - x[idx]) ** 2, axis=1))
    return np.array(centroids)


def kmeans(x, k: int, seed: int = 0, max_iter: int = KMEANS_MAX_ITER) -> KMeansResult:
    """Lloyd's algorithm from a k-means++ start.

    ``inertia_history[j]`` is the within-cluster sum of squares after the
    j-th assignment step, so the list is non-increasing.
    """
    x = np.asarray(x, dtype=float)
    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp_init(x, k, rng)
    history: list[float] = []
    labels = np.zeros(len(x), dtype=int)
    for it in range(1, max_iter + 1):
        d2 = np.sum((x[:, None, :] - centroids[None, :, :]) ** 2, axis=2)
        labels = np.argmin(d2, axis=1)
        history.append(float(d2[np.arange(len(x)), labels].sum()))
        new = centroids.copy()
        for j in range(k):
            members = x[labels == j]
            if len(members):
                new[j] = members.mean(axis=0)
        if np.array_equal(new, centroids):
            return KMeansResult(centroids, labels, history, it)
        centroids = new
    d2 = np.sum((x[:, None, :] - centroids[None, :, :]) ** 2, axis=2)
    labels = np.argmin(d2, axis=1)
    history.append(float(d2[np.arange(len(x)), labels].sum()))
    return KMeansResult(centroids, labels, history, max_iter)


def scaling_for(data, weights=INPUT_WEIGHTS) -> tuple[tuple[float, float], ...]:
    """Per-dimension (offset, scale) mapping the data range onto [0, weight]."""
    data = np.atleast_2d(np.asarray(data, dtype=float))
    lo, hi = data.min(axis=0), data.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0) / np.asarray(weights, dtype=float)
    return tuple((float(a), float(b)) for a, b in zip(lo, span))


def spreads_for(
    scaled_centers: np.ndarray,
    neighbours: int = SPREAD_NEIGHBOURS,
    scale: float = SPREAD_SCALE,
) -> np.ndarray:
    """``scale`` times the mean distance from each center to its nearest ``neighbours`` others."""
    n = len(scaled_centers)
    if n == 1:
        return np.array([max(scale, MIN_SPREAD)])
    d = np.sqrt(np.sum((scaled_centers[:, None, :] - scaled_centers[None, :, :]) ** 2, axis=2))
    np.fill_diagonal(d, np.inf)
    p = min(neighbours, n - 1)
    nearest = np.sort(d, axis=1)[:, :p]
    return np.maximum(scale * nearest.mean(axis=1), MIN_SPREAD)


def fit_centers(
    data,
    n_hidden: int = DEFAULT_N_HIDDEN,
    seed: int = 0,
    input_scaling: tuple[tuple[float, float], ...] | None = None,
    spread_scale: float = SPREAD_SCALE,
) -> CenterFit:
    """Choose RBF centers by k-means in scaled input space and derive spreads."""
    data = np.atleast_2d(np.asarray(data, dtype=float))
    if n_hidden < 1:
        raise DomainError("n_hidden must be at least 1")
    if len(data) < n_hidden:
        raise DomainError(f"need at least {n_hidden} samples, got {len(data)}")
    distinct = len(np.unique(data, axis=0))
    if distinct < n_hidden:
        log.warning("only %d distinct inputs; reducing n_hidden from %d", distinct, n_hidden)
        n_hidden = distinct
    scaling = input_scaling or scaling_for(data)
    offset = np.array([o for o, _ in scaling])
    scale = np.array([s for _, s in scaling])
    result = kmeans((data - offset) / scale, n_hidden, seed=seed)
    centers = result.centroids * scale + offset
    return CenterFit(centers, spreads_for(result.centroids, scale=spread_scale), scaling, result.inertia_history)


# ---------------------------------------------------------------------------
# Training data store
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrainingSample:
    soc: float
    start_soc: float
    temperature_c: float
    current_a: float
    v_measured: float
    ocv_v: float
    serial: int = 0

    def __post_init__(self):
        if not self.current_a > 0:
            raise DomainError(f"CV sample current must be positive, got {self.current_a}")
        if self.serial < 0:
            raise DomainError("serial must be non-negative")

    @property
    def inputs(self) -> tuple[float, float, float]:
        return (self.soc, self.start_soc, self.temperature_c)


@dataclass
class TrainingBuffer:
    """Newest-first sample store; a sample's serial is its age in insertions.

    Samples whose serial would exceed ``discard_threshold`` are dropped.
    """

    capacity: int = DEFAULT_DISCARD_THRESHOLD
    discard_threshold: int | None = None
    _items: deque = field(default_factory=deque, repr=False)

    def __post_init__(self):
        if self.discard_threshold is None:
            self.discard_threshold = self.capacity - 1
        if self.capacity < 1 or not 0 <= self.discard_threshold < self.capacity:
            raise DomainError("need capacity >= 1 and 0 <= discard_threshold < capacity")

    def __len__(self) -> int:
        return len(self._items)

    def ingest(self, sample: TrainingSample) -> None:
        self._items.appendleft(sample)
        while len(self._items) > self.discard_threshold + 1:
            self._items.pop()

    @property
    def samples(self) -> list[TrainingSample]:
        return [replace(s, serial=k) for k, s in enumerate(self._items)]

    def serials(self) -> np.ndarray:
        return np.arange(len(self._items))

    def arrays(self) -> dict[str, np.ndarray]:
        items = list(self._items)
        return {
            "inputs": np.array([s.inputs for s in items], dtype=float).reshape(-1, 3),
            "current_a": np.array([s.current_a for s in items], dtype=float),
            "v_measured": np.array([s.v_measured for s in items], dtype=float),
            "ocv_v": np.array([s.ocv_v for s in items], dtype=float),
            "serial": self.serials().astype(float),
        }

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(BUFFER_HEADER)
            for s in self.samples:
                w.writerow([s.serial, repr(s.soc), repr(s.start_soc), repr(s.temperature_c),
                            repr(s.current_a), repr(s.v_measured), repr(s.ocv_v)])

    @classmethod
    def from_csv(cls, path, capacity: int = DEFAULT_DISCARD_THRESHOLD) -> TrainingBuffer:
        with Path(path).open(newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames != BUFFER_HEADER:
                raise TraceFormatError(f"{path}: expected header {','.join(BUFFER_HEADER)}")
            rows = []
            for lineno, row in enumerate(reader, start=2):
                try:
                    rows.append((int(row["serial"]), TrainingSample(
                        float(row["soc"]), float(row["start_soc"]), float(row["temp_c"]),
                        float(row["current_a"]), float(row["v_meas"]), float(row["ocv_v"]),
                    )))
                except (TypeError, ValueError) as exc:
                    raise TraceFormatError(f"{path}:{lineno}: bad buffer row") from exc
        buf = cls(capacity=capacity)
        for _, sample in sorted(rows, key=lambda r: -r[0]):
            buf.ingest(sample)
        return buf


def ingest_sample(buffer: TrainingBuffer, sample: TrainingSample) -> TrainingBuffer:
    buffer.ingest(sample)
    return buffer


def _training_arrays(samples, ocv: OcvCurve | None):
    if isinstance(samples, TrainingBuffer):
        arr = samples.arrays()
    else:
        buf = TrainingBuffer(capacity=max(len(samples), 1))
        for s in reversed(list(samples)):
            buf.ingest(s)
        arr = buf.arrays()
    if len(arr["current_a"]) == 0:
        raise EmptyTrainingSetError("training buffer is empty")
    if ocv is not None:
        arr["ocv_v"] = np.asarray(ocv_at(ocv, arr["inputs"][:, 0]), dtype=float).reshape(-1)
    return arr


def design_matrix(model: RbfModel, inputs: np.ndarray, current_a: np.ndarray) -> np.ndarray:
    """Columns H_i(x_j) * I_j, so that design @ W is the predicted overpotential."""
    return activations(model, inputs) * current_a[:, None]


class WeightFit(NamedTuple):
    model: RbfModel
    mse: float
    rank: int
    condition: float


def fit_weights(model: RbfModel, buffer, ocv: OcvCurve | None = None) -> WeightFit:
    """Least-squares output weights against measured terminal voltage.

    ``buffer`` is a TrainingBuffer or a sequence of TrainingSample. When
    ``ocv`` is given the OCV of every sample is recomputed from its SOC,
    otherwise the stored ``ocv_v`` values are used. ``mse`` is the mean
    squared terminal-voltage error in V^2.
    """
    arr = _training_arrays(buffer, ocv)
    a = design_matrix(model, arr["inputs"], arr["current_a"])
    b = arr["v_measured"] - arr["ocv_v"]
    w, _, rank, sv = np.linalg.lstsq(a, b, rcond=None)
    cond = float(sv[0] / sv[-1]) if len(sv) and sv[-1] > 0 else float("inf")
    if rank < a.shape[1]:
        warnings.warn(
            f"rank-deficient RBF design matrix (rank {rank} < {a.shape[1]}, cond {cond:.3g});"
            " using minimum-norm weights",
            RuntimeWarning,
            stacklevel=2,
        )
    mse = float(np.mean((a @ w - b) ** 2))
    return WeightFit(model.with_weights(w), mse, int(rank), cond)


def voltage_mse(model: RbfModel, buffer, ocv: OcvCurve | None = None) -> float:
    """Unweighted mean squared terminal-voltage error of the linear model."""
    arr = _training_arrays(buffer, ocv)
    a = design_matrix(model, arr["inputs"], arr["current_a"])
    return float(np.mean((a @ model.weights - (arr["v_measured"] - arr["ocv_v"])) ** 2))


# ---------------------------------------------------------------------------
# Online refinement
# ---------------------------------------------------------------------------


def recency_weights(serials: np.ndarray, tau: float) -> np.ndarray:
    """exp(-t/tau): newest sample (serial 0) gets weight 1."""
    return np.exp(-np.asarray(serials, dtype=float) / tau)


def online_loss(weights: np.ndarray, design: np.ndarray, target: np.ndarray, recency: np.ndarray) -> float:
    """(1/m) * sum_j recency_j * (V_pred_j - V_meas_j)^2."""
    resid = design @ weights - target
    return float(np.mean(recency * resid**2))


def online_gradient(weights: np.ndarray, design: np.ndarray, target: np.ndarray, recency: np.ndarray) -> np.ndarray:
    resid = design @ weights - target
    return (2.0 / len(target)) * design.T @ (recency * resid)


class OnlineUpdate(NamedTuple):
    model: RbfModel
    loss_history: list[float]
    learning_rate: float
    halvings: int


def online_update(
    model: RbfModel,
    buffer: TrainingBuffer,
    learning_rate: float,
    epochs: int,
    ocv: OcvCurve | None = None,
    tau: float | None = None,
) -> OnlineUpdate:
    """Full-batch gradient descent on the recency-weighted voltage error.

    Centers and spreads are left untouched. ``tau`` defaults to a quarter of
    the buffer capacity; ``tau=1`` gives plain exp(-t) weighting. If the loss
    rises for several epochs in a row the learning rate is halved.
    ``loss_history[0]`` is the loss before the first epoch.
    """
    if not learning_rate > 0:
        raise DomainError("learning_rate must be positive")
    if epochs < 0:
        raise DomainError("epochs must be non-negative")
    arr = _training_arrays(buffer, ocv)
    tau = buffer.capacity / 4.0 if tau is None else float(tau)
    if not tau > 0:
        raise DomainError("tau must be positive")
    design = design_matrix(model, arr["inputs"], arr["current_a"])
    target = arr["v_measured"] - arr["ocv_v"]
    recency = recency_weights(arr["serial"], tau)

    w = model.weights.copy()
    lr = learning_rate
    history = [online_loss(w, design, target, recency)]
    rises = halvings = 0
    for _ in range(epochs):
        w = w - lr * online_gradient(w, design, target, recency)
        history.append(online_loss(w, design, target, recency))
        rises = rises + 1 if history[-1] > history[-2] else 0
        if rises >= DIVERGENCE_PATIENCE:
            lr *= 0.5
            halvings += 1
            rises = 0
            log.warning("online update loss rose %d epochs running; learning rate -> %g",
                        DIVERGENCE_PATIENCE, lr)
    return OnlineUpdate(model.with_weights(w), history, lr, halvings)


def build_model(
    samples: Sequence[TrainingSample] | TrainingBuffer,
    n_hidden: int = DEFAULT_N_HIDDEN,
    seed: int = 0,
    floor_ohm: float = DEFAULT_FLOOR_OHM,
    ocv: OcvCurve | None = None,
) -> WeightFit:
    """Offline pipeline: k-means centers, then least-squares weights."""
    arr = _training_arrays(samples, ocv)
    fit = fit_centers(arr["inputs"], n_hidden, seed)
    model = RbfModel(fit.centers, fit.spreads, np.zeros(len(fit.spreads)), fit.input_scaling, floor_ohm)
    return fit_weights(model, samples, ocv)
