"""Learning, recognition and prediction modes.

Public update functions return new states and leave their input untouched; the
training loop owns a private copy and applies the same updates in place.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, List, Sequence, Tuple

import numpy as np

from .config import TrainConfig
from .errors import DataError, TrainingError
from .gradients import GradientSet, backpropagate, sequence_cost
from .net_core import (
    HiddenState,
    InputFrame,
    NetworkState,
    ObservationSequence,
    SequenceLabel,
    as_frames,
    forward_step,
    pb_activation,
    run_sequence_open_loop,
    transfer,
)


logger = logging.getLogger(__name__)


@dataclass
class PBEntry:
    label: SequenceLabel
    rho_d: np.ndarray
    rho_v: np.ndarray

    @property
    def pb_d(self) -> np.ndarray:
        return transfer(self.rho_d)

    @property
    def pb_v(self) -> np.ndarray:
        return transfer(self.rho_v)

    def activation(self) -> np.ndarray:
        return np.concatenate([self.pb_d, self.pb_v])


@dataclass
class PBTable:
    entries: List[PBEntry] = field(default_factory=list)

    def __post_init__(self) -> None:
        seen = set()
        for entry in self.entries:
            if entry.label in seen:
                raise DataError(f"PB table lists {entry.label.name} more than once")
            seen.add(entry.label)

    def __len__(self) -> int:
        return len(self.entries)

    def class_names(self) -> List[str]:
        names: List[str] = []
        for entry in self.entries:
            if entry.label.class_name not in names:
                names.append(entry.label.class_name)
        return names

    def activations(self) -> np.ndarray:
        return np.array([entry.activation() for entry in self.entries])

    def centroids(self) -> Tuple[List[str], np.ndarray]:
        names = self.class_names()
        acts = self.activations()
        classes = np.array([entry.label.class_name for entry in self.entries])
        return names, np.array([acts[classes == name].mean(axis=0) for name in names])


@dataclass
class RecognitionRecord:
    epoch: int
    cost: float
    rho_d: np.ndarray
    rho_v: np.ndarray

    @property
    def pb_d(self) -> np.ndarray:
        return transfer(self.rho_d)

    @property
    def pb_v(self) -> np.ndarray:
        return transfer(self.rho_v)


@dataclass
class RecognitionTrace:
    records: List[RecognitionRecord] = field(default_factory=list)
    label: str | None = None
    sequence: str = ""

    def __len__(self) -> int:
        return len(self.records)

    @property
    def final_rho(self) -> Tuple[np.ndarray, np.ndarray]:
        if not self.records:
            raise DataError("recognition trace is empty")
        last = self.records[-1]
        return last.rho_d, last.rho_v

    def final_activation(self) -> np.ndarray:
        rho_d, rho_v = self.final_rho
        return np.concatenate([transfer(rho_d), transfer(rho_v)])

    def converged(self, window: int = 100, rel_tol: float = 0.05, abs_tol: float = 0.01) -> bool:
        """Tail standard deviation of rho small relative to |rho|, or in absolute terms."""
        if not self.records:
            return False
        tail = np.array([np.concatenate([r.rho_d, r.rho_v]) for r in self.records[-window:]])
        spread = tail.std(axis=0)
        final = np.abs(tail[-1])
        return bool(np.all((spread < rel_tol * final) | (spread < abs_tol)))


def _adapt_rates(state: NetworkState, grads: GradientSet) -> None:
    cfg = state.config
    for name, g in grads.weight_items():
        sigma = state.prev_grad[name] * g
        lr = state.lr[name]
        grown = np.minimum(lr * cfg.xi_plus, cfg.eta_max)
        shrunk = np.maximum(lr * cfg.xi_minus, cfg.eta_min)
        state.lr[name] = np.where(sigma > 0.0, grown, np.where(sigma < 0.0, shrunk, lr))
        state.prev_grad[name] = g.copy()


def _descend(state: NetworkState, grads: GradientSet) -> None:
    for name, g in grads.weight_items():
        getattr(state, name)[...] -= state.lr[name] * g


def pb_update_rates(grads: GradientSet, length: int, m_gamma: float) -> Tuple[np.ndarray, np.ndarray]:
    """Per-unit PB rates, proportional to the mean absolute accumulated PB error."""
    if length <= 0:
        raise DataError(f"sequence length must be > 0 for the PB update (got {length})")
    return (
        m_gamma * np.abs(grads.delta_pb_d) / length,
        m_gamma * np.abs(grads.delta_pb_v) / length,
    )


def _step_pb(state: NetworkState, grads: GradientSet, length: int) -> None:
    gamma_d, gamma_v = pb_update_rates(grads, length, state.config.m_gamma)
    state.rho_d = state.rho_d + gamma_d * grads.delta_pb_d
    state.rho_v = state.rho_v + gamma_v * grads.delta_pb_v


def update_learning_rates(state: NetworkState, grads: GradientSet) -> NetworkState:
    new = state.copy()
    _adapt_rates(new, grads)
    return new


def apply_weight_update(state: NetworkState, grads: GradientSet) -> NetworkState:
    new = state.copy()
    _descend(new, grads)
    return new


def update_pb_learning(state: NetworkState, grads: GradientSet, length: int) -> NetworkState:
    new = state.copy()
    _step_pb(new, grads, length)
    return new


def _default_label(index: int) -> SequenceLabel:
    return SequenceLabel(shape="sequence", color="unlabelled", repeat=index)


def train(
    state: NetworkState,
    dataset: Sequence[ObservationSequence],
    cfg: TrainConfig,
    on_epoch: Callable[[int, NetworkState, float], None] | None = None,
) -> Tuple[NetworkState, PBTable, List[float]]:
    """Train shared weights plus one PB pair per sequence.

    Each epoch presents every sequence once. Weights and the presented sequence's
    PB values are updated after each sequence; per-weight learning rates adapt once
    per epoch from the epoch's summed gradients.
    ``on_epoch(epoch, state, cost)`` is called after every epoch.
    """
    cfg.check()
    if not dataset:
        raise DataError("training dataset is empty")
    n_input = state.config.n_input
    frames = [as_frames(seq, n_input) for seq in dataset]
    for i, f in enumerate(frames):
        if f.shape[0] < 2:
            raise DataError(f"training sequence {i} has {f.shape[0]} frames, need at least 2")
    labels = [
        seq.label if isinstance(seq, ObservationSequence) and seq.label is not None else _default_label(i)
        for i, seq in enumerate(dataset)
    ]

    trained = state.copy()
    pbs = [(np.zeros(state.config.n_pb_d), np.zeros(state.config.n_pb_v)) for _ in frames]
    order = np.arange(len(frames))
    rng = np.random.default_rng(cfg.seed)
    curve: List[float] = []

    for epoch in range(1, cfg.max_epochs + 1):
        if cfg.shuffle:
            rng.shuffle(order)
        epoch_grads = GradientSet.zeros(state.config)
        epoch_cost = 0.0
        for i in order:
            trained.rho_d, trained.rho_v = pbs[i]
            caches = run_sequence_open_loop(trained, frames[i])
            epoch_cost += sequence_cost(caches, frames[i])
            grads = backpropagate(trained, caches, frames[i])
            _descend(trained, grads)
            _step_pb(trained, grads, frames[i].shape[0])
            pbs[i] = (trained.rho_d, trained.rho_v)
            epoch_grads.accumulate(grads)
        if not np.isfinite(epoch_cost):
            raise TrainingError(f"training diverged at epoch {epoch} (cost={epoch_cost})", epoch=epoch)
        _adapt_rates(trained, epoch_grads)
        curve.append(epoch_cost)
        if on_epoch is not None:
            on_epoch(epoch, trained, epoch_cost)
        if epoch == 1 or epoch % cfg.log_every == 0:
            mean_lr = float(np.mean(np.concatenate([lr.ravel() for lr in trained.lr.values()])))
            logger.info("epoch %d cost=%.6e mean_lr=%.3e", epoch, epoch_cost, mean_lr)
        if epoch_cost <= cfg.target_cost:
            logger.info("target cost %.3e reached at epoch %d", cfg.target_cost, epoch)
            break

    trained.rho_d = np.zeros(state.config.n_pb_d)
    trained.rho_v = np.zeros(state.config.n_pb_v)
    table = PBTable([PBEntry(label, rho_d.copy(), rho_v.copy()) for label, (rho_d, rho_v) in zip(labels, pbs)])
    return trained, table, curve


def recognize(
    state: NetworkState,
    seq,
    window_len: int | None,
    epochs: int,
    table: PBTable | None = None,
    gamma: float | None = None,
) -> RecognitionTrace:
    """Fit PB values to an observed sequence with all weights frozen.

    Only the last ``window_len`` frames are used (the whole sequence when None);
    they are run as their own open-loop pass from a zero hidden state.
    """
    frames = as_frames(seq, state.config.n_input)
    length = frames.shape[0]
    window_len = length if window_len is None else window_len
    if window_len > length:
        raise DataError(f"window_len={window_len} exceeds sequence length {length}")
    if window_len < 2:
        raise DataError(f"window_len must be >= 2 (got {window_len})")
    if epochs < 0:
        raise DataError(f"epochs must be >= 0 (got {epochs})")
    window = frames[length - window_len:]
    gamma = state.config.gamma_recognition if gamma is None else gamma

    fitted = state.with_pb(np.zeros(state.config.n_pb_d), np.zeros(state.config.n_pb_v))
    name = seq.label.name if isinstance(seq, ObservationSequence) and seq.label else ""
    trace = RecognitionTrace(sequence=name)
    for epoch in range(1, epochs + 1):
        caches = run_sequence_open_loop(fitted, window)
        cost = sequence_cost(caches, window)
        grads = backpropagate(fitted, caches, window)
        fitted.rho_d = fitted.rho_d + gamma * grads.delta_pb_d
        fitted.rho_v = fitted.rho_v + gamma * grads.delta_pb_v
        if not (np.isfinite(cost) and np.all(np.isfinite(fitted.rho_d)) and np.all(np.isfinite(fitted.rho_v))):
            raise TrainingError(f"recognition diverged at epoch {epoch}", epoch=epoch)
        trace.records.append(RecognitionRecord(epoch, cost, fitted.rho_d.copy(), fitted.rho_v.copy()))

    if table is not None:
        pb_d, pb_v = pb_activation(fitted)
        trace.label = classify_pb((pb_d, pb_v), table)
    logger.debug("recognized %s rho_d=%s rho_v=%s label=%s", name or "sequence", fitted.rho_d, fitted.rho_v, trace.label)
    return trace


def predict(
    state: NetworkState,
    rho_d: Sequence[float],
    rho_v: Sequence[float],
    first_frame: InputFrame,
    steps: int,
) -> ObservationSequence:
    """Closed-loop generation: each one-step prediction is the next input."""
    if steps < 0:
        raise DataError(f"steps must be >= 0 (got {steps})")
    frozen = state.with_pb(rho_d, rho_v)
    pb = pb_activation(frozen)
    generated = [np.asarray(first_frame, dtype=np.float64).copy()]
    prev = HiddenState.zeros(state.config)
    for _ in range(steps):
        cache = forward_step(frozen, generated[-1], prev, pb)
        generated.append(cache.output.copy())
        prev = cache.hidden
    return ObservationSequence(np.array(generated))


@dataclass
class PredictionTrace:
    """A closed-loop rollout next to the observed sequence it should reproduce.

    Step 0 is the given first frame, so errors are taken over steps ``1..``.
    """

    sequence: str
    generated: np.ndarray
    truth: np.ndarray

    def __post_init__(self) -> None:
        if self.generated.shape != self.truth.shape:
            raise DataError(f"generated {self.generated.shape} and true {self.truth.shape} frames differ in shape")

    def squared_errors(self) -> np.ndarray:
        return (self.generated - self.truth) ** 2

    def per_unit_mse(self) -> np.ndarray:
        return self.squared_errors()[1:].mean(axis=0)

    def step_errors(self) -> np.ndarray:
        """Mean squared error over units, one value per step."""
        return self.squared_errors().mean(axis=1)


def _as_activation(pb_final) -> np.ndarray:
    if isinstance(pb_final, tuple):
        return np.concatenate([np.ravel(part) for part in pb_final])
    return np.ravel(np.asarray(pb_final, dtype=np.float64))


def class_distances(pb_final, table: PBTable) -> dict:
    """Euclidean distance from a PB activation to every class centroid."""
    if not len(table):
        raise DataError("PB table is empty")
    names, centroids = table.centroids()
    dists = np.linalg.norm(centroids - _as_activation(pb_final), axis=1)
    return dict(zip(names, (float(d) for d in dists)))


def classify_pb(pb_final, table: PBTable) -> str:
    """Nearest class centroid; ties go to the class listed first in the table."""
    if not len(table):
        raise DataError("PB table is empty")
    names, centroids = table.centroids()
    dists = np.linalg.norm(centroids - _as_activation(pb_final), axis=1)
    return names[int(np.argmin(dists))]
