"""Network data model and forward dynamics.

Two hidden streams (dorsal ``d`` and ventral ``v``) share one input layer. Each
stream has its own recurrent weights and receives the parametric-bias (PB)
activations of the *other* stream's PB group. The output layer is linear and
joins the streams by an element-wise (horizontal) product.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .config import NetworkConfig
from .errors import DataError, StructuralError


TRANSFER_SCALE = 1.7159
TRANSFER_SLOPE = 2.0 / 3.0

DORSAL_WEIGHTS = ("w_d", "v_d", "wbar_d", "u_d")
VENTRAL_WEIGHTS = ("w_v", "v_v", "wbar_v", "u_v")
WEIGHT_NAMES = DORSAL_WEIGHTS + VENTRAL_WEIGHTS

InputFrame = np.ndarray


def transfer(pre):
    """Scaled tanh, ``1.7159 * tanh(2/3 * pre)``; scalar or element-wise."""
    return TRANSFER_SCALE * np.tanh(TRANSFER_SLOPE * pre)


def transfer_derivative(pre):
    t = np.tanh(TRANSFER_SLOPE * pre)
    return TRANSFER_SCALE * TRANSFER_SLOPE * (1.0 - t * t)


def weight_shapes(config: NetworkConfig) -> Dict[str, Tuple[int, int]]:
    return {
        "w_d": (config.n_d, config.n_input),
        "v_d": (config.n_d, config.n_d),
        "wbar_d": (config.n_d, config.n_pb_into_dorsal),
        "u_d": (config.n_output, config.n_d),
        "w_v": (config.n_v, config.n_input),
        "v_v": (config.n_v, config.n_v),
        "wbar_v": (config.n_v, config.n_pb_into_ventral),
        "u_v": (config.n_output, config.n_v),
    }


@dataclass(frozen=True)
class SequenceLabel:
    shape: str
    color: str
    repeat: int = 0

    @property
    def class_name(self) -> str:
        return f"{self.shape}-{self.color}"

    @property
    def name(self) -> str:
        return f"{self.shape}-{self.color}-{self.repeat:02d}"


@dataclass
class ObservationSequence:
    """Time-ordered input frames, shape ``(T, n_input)``."""

    frames: np.ndarray
    label: SequenceLabel | None = None

    def __post_init__(self) -> None:
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 2:
            raise StructuralError(f"sequence frames must be 2-D (T, n_input), got shape {self.frames.shape}")

    def __len__(self) -> int:
        return int(self.frames.shape[0])

    def suffix(self, length: int) -> "ObservationSequence":
        return ObservationSequence(self.frames[len(self) - length:], self.label)


def as_frames(seq, n_input: int | None = None) -> np.ndarray:
    frames = seq.frames if isinstance(seq, ObservationSequence) else np.asarray(seq, dtype=np.float64)
    if frames.ndim != 2:
        raise StructuralError(f"sequence frames must be 2-D (T, n_input), got shape {frames.shape}")
    if n_input is not None and frames.shape[1] != n_input:
        raise StructuralError(f"sequence frames have {frames.shape[1]} components, network expects {n_input}")
    return frames


@dataclass
class HiddenState:
    s_d: np.ndarray
    s_v: np.ndarray

    @classmethod
    def zeros(cls, config: NetworkConfig) -> "HiddenState":
        return cls(np.zeros(config.n_d), np.zeros(config.n_v))


@dataclass
class StepCache:
    input: InputFrame
    pre_d: np.ndarray
    pre_v: np.ndarray
    hidden: HiddenState
    x_d: np.ndarray
    x_v: np.ndarray
    output: np.ndarray


@dataclass
class NetworkState:
    config: NetworkConfig
    w_d: np.ndarray
    v_d: np.ndarray
    wbar_d: np.ndarray
    u_d: np.ndarray
    w_v: np.ndarray
    v_v: np.ndarray
    wbar_v: np.ndarray
    u_v: np.ndarray
    rho_d: np.ndarray
    rho_v: np.ndarray
    lr: Dict[str, np.ndarray] = field(default_factory=dict)
    prev_grad: Dict[str, np.ndarray] = field(default_factory=dict)

    def weights(self) -> Dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in WEIGHT_NAMES}

    def copy(self) -> "NetworkState":
        return dataclasses.replace(
            self,
            **{name: getattr(self, name).copy() for name in WEIGHT_NAMES},
            rho_d=self.rho_d.copy(),
            rho_v=self.rho_v.copy(),
            lr={k: v.copy() for k, v in self.lr.items()},
            prev_grad={k: v.copy() for k, v in self.prev_grad.items()},
        )

    def with_pb(self, rho_d: Sequence[float], rho_v: Sequence[float]) -> "NetworkState":
        """View sharing the weight arrays but owning its own PB values."""
        rho_d = np.array(rho_d, dtype=np.float64).reshape(-1)
        rho_v = np.array(rho_v, dtype=np.float64).reshape(-1)
        if rho_d.shape != (self.config.n_pb_d,) or rho_v.shape != (self.config.n_pb_v,):
            raise StructuralError(
                f"PB shapes {rho_d.shape}/{rho_v.shape} do not match "
                f"({self.config.n_pb_d},)/({self.config.n_pb_v},)"
            )
        return dataclasses.replace(self, rho_d=rho_d, rho_v=rho_v)

    def check_shapes(self) -> None:
        for name, shape in weight_shapes(self.config).items():
            for kind, arrays in (("weight", self.weights()), ("lr", self.lr), ("prev_grad", self.prev_grad)):
                got = arrays[name].shape if name in arrays else None
                if got != shape:
                    raise StructuralError(f"{kind} {name} has shape {got}, expected {shape}")
        if self.rho_d.shape != (self.config.n_pb_d,) or self.rho_v.shape != (self.config.n_pb_v,):
            raise StructuralError("PB vectors do not match n_pb_d/n_pb_v")


def init_network(config: NetworkConfig, seed: int) -> NetworkState:
    config.check()
    rng = np.random.default_rng(seed)
    r = config.weight_init_range
    weights = {name: rng.uniform(-r, r, size=shape) for name, shape in weight_shapes(config).items()}
    lr = {
        name: np.full(w.shape, config.eta_dorsal if name in DORSAL_WEIGHTS else config.eta_ventral)
        for name, w in weights.items()
    }
    return NetworkState(
        config=config,
        **weights,
        rho_d=np.zeros(config.n_pb_d),
        rho_v=np.zeros(config.n_pb_v),
        lr=lr,
        prev_grad={name: np.zeros_like(w) for name, w in weights.items()},
    )


def pb_activation(state: NetworkState) -> Tuple[np.ndarray, np.ndarray]:
    return transfer(state.rho_d), transfer(state.rho_v)


def pb_inputs(state: NetworkState, pb_d: np.ndarray, pb_v: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """PB activations entering the (dorsal, ventral) hidden layers."""
    if state.config.pb_wiring == "cross":
        return pb_v, pb_d
    return pb_d, pb_v


def forward_step(
    state: NetworkState,
    input: InputFrame,
    prev: HiddenState,
    pb: Tuple[np.ndarray, np.ndarray] | None = None,
) -> StepCache:
    cfg = state.config
    frame = np.asarray(input, dtype=np.float64)
    if frame.shape != (cfg.n_input,):
        raise StructuralError(f"input frame has shape {frame.shape}, expected ({cfg.n_input},)")
    if prev.s_d.shape != (cfg.n_d,) or prev.s_v.shape != (cfg.n_v,):
        raise StructuralError(
            f"hidden state shapes {prev.s_d.shape}/{prev.s_v.shape} do not match ({cfg.n_d},)/({cfg.n_v},)"
        )
    pb_d, pb_v = pb if pb is not None else pb_activation(state)
    into_d, into_v = pb_inputs(state, pb_d, pb_v)

    pre_d = state.w_d @ frame + state.v_d @ prev.s_d + state.wbar_d @ into_d
    pre_v = state.w_v @ frame + state.v_v @ prev.s_v + state.wbar_v @ into_v
    hidden = HiddenState(transfer(pre_d), transfer(pre_v))
    x_d = state.u_d @ hidden.s_d
    x_v = state.u_v @ hidden.s_v
    return StepCache(
        input=frame,
        pre_d=pre_d,
        pre_v=pre_v,
        hidden=hidden,
        x_d=x_d,
        x_v=x_v,
        output=x_d * x_v,
    )


def run_sequence_open_loop(state: NetworkState, seq) -> List[StepCache]:
    frames = as_frames(seq, state.config.n_input)
    if frames.shape[0] < 2:
        raise DataError(f"sequence needs at least 2 frames, got {frames.shape[0]}")
    pb = pb_activation(state)
    prev = HiddenState.zeros(state.config)
    caches: List[StepCache] = []
    for frame in frames:
        cache = forward_step(state, frame, prev, pb)
        caches.append(cache)
        prev = cache.hidden
    return caches
