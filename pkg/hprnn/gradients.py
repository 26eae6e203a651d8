"""Sequence cost, backpropagation through time and a finite-difference oracle.

Sign conventions: weight gradients are ``dC/dw``. The PB entries
(``delta_pb_d``/``delta_pb_v``) hold the back-propagated PB error, which carries the
residual ``target - output`` and therefore equals ``-dC/drho`` (the chain through
the PB transfer function included). Adding it to ``rho`` descends the cost.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Dict, Iterator, List, Tuple

import numpy as np

from .config import NetworkConfig
from .errors import DataError
from .net_core import (
    WEIGHT_NAMES,
    NetworkState,
    StepCache,
    as_frames,
    init_network,
    pb_activation,
    pb_inputs,
    run_sequence_open_loop,
    transfer_derivative,
    weight_shapes,
)


@dataclass
class GradientSet:
    g_w_d: np.ndarray
    g_v_d: np.ndarray
    g_wbar_d: np.ndarray
    g_u_d: np.ndarray
    g_w_v: np.ndarray
    g_v_v: np.ndarray
    g_wbar_v: np.ndarray
    g_u_v: np.ndarray
    delta_pb_d: np.ndarray
    delta_pb_v: np.ndarray

    @classmethod
    def zeros(cls, config: NetworkConfig) -> "GradientSet":
        shapes = weight_shapes(config)
        return cls(
            **{f"g_{name}": np.zeros(shape) for name, shape in shapes.items()},
            delta_pb_d=np.zeros(config.n_pb_d),
            delta_pb_v=np.zeros(config.n_pb_v),
        )

    def by_name(self, name: str) -> np.ndarray:
        return getattr(self, f"g_{name}")

    def weight_items(self) -> Iterator[Tuple[str, np.ndarray]]:
        for name in WEIGHT_NAMES:
            yield name, self.by_name(name)

    def arrays(self) -> Dict[str, np.ndarray]:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def accumulate(self, other: "GradientSet") -> None:
        for f in fields(self):
            getattr(self, f.name)[...] += getattr(other, f.name)

    def scaled(self, factor: float) -> "GradientSet":
        return GradientSet(**{name: arr * factor for name, arr in self.arrays().items()})


def _target_frames(seq, targets, n_input: int) -> np.ndarray:
    return as_frames(seq if targets is None else targets, n_input)


def residuals(caches: List[StepCache], targets) -> np.ndarray:
    """``target(t+1) - output(t)`` for every cache that has a successor frame."""
    frames = as_frames(targets)
    if frames.shape[0] != len(caches):
        raise DataError(f"{len(caches)} caches but {frames.shape[0]} target frames")
    outputs = np.array([c.output for c in caches[:-1]]).reshape(len(caches) - 1, frames.shape[1])
    return frames[1:] - outputs


def sequence_cost(caches: List[StepCache], targets) -> float:
    r = residuals(caches, targets)
    return 0.5 * float(np.sum(r * r))


def cost_of(state: NetworkState, seq, targets=None) -> float:
    caches = run_sequence_open_loop(state, seq)
    return sequence_cost(caches, _target_frames(seq, targets, state.config.n_input))


def backpropagate(state: NetworkState, caches: List[StepCache], targets) -> GradientSet:
    """Gradients of the sequence cost given the forward caches."""
    cfg = state.config
    frames = as_frames(targets, cfg.n_input)
    if frames.shape[0] != len(caches):
        raise DataError(f"{len(caches)} caches but {frames.shape[0]} target frames")
    grads = GradientSet.zeros(cfg)
    pb_d, pb_v = pb_activation(state)
    into_d, into_v = pb_inputs(state, pb_d, pb_v)
    g_into_d = np.zeros_like(into_d)
    g_into_v = np.zeros_like(into_v)
    carry_d = np.zeros(cfg.n_d)
    carry_v = np.zeros(cfg.n_v)

    # The last cache has no target and nothing after it, so it contributes nothing.
    steps = len(caches) - 1
    dx_d_all = np.zeros((max(steps, 0), cfg.n_output))
    dx_v_all = np.zeros_like(dx_d_all)
    dpre_d_all = np.zeros((max(steps, 0), cfg.n_d))
    dpre_v_all = np.zeros((max(steps, 0), cfg.n_v))
    for t in range(steps - 1, -1, -1):
        c = caches[t]
        err = c.output - frames[t + 1]
        # product rule of the horizontal product
        dx_d = dx_d_all[t] = err * c.x_v
        dx_v = dx_v_all[t] = err * c.x_d
        dpre_d = dpre_d_all[t] = (state.u_d.T @ dx_d + carry_d) * transfer_derivative(c.pre_d)
        dpre_v = dpre_v_all[t] = (state.u_v.T @ dx_v + carry_v) * transfer_derivative(c.pre_v)
        carry_d = state.v_d.T @ dpre_d
        carry_v = state.v_v.T @ dpre_v

    if steps > 0:
        inputs = np.stack([c.input for c in caches[:steps]])
        s_d = np.stack([c.hidden.s_d for c in caches[:steps]])
        s_v = np.stack([c.hidden.s_v for c in caches[:steps]])
        prev_s_d = np.vstack([np.zeros((1, cfg.n_d)), s_d[:-1]])
        prev_s_v = np.vstack([np.zeros((1, cfg.n_v)), s_v[:-1]])
        sum_d = dpre_d_all.sum(axis=0)
        sum_v = dpre_v_all.sum(axis=0)
        grads.g_u_d += dx_d_all.T @ s_d
        grads.g_u_v += dx_v_all.T @ s_v
        grads.g_w_d += dpre_d_all.T @ inputs
        grads.g_v_d += dpre_d_all.T @ prev_s_d
        grads.g_wbar_d += np.outer(sum_d, into_d)
        grads.g_w_v += dpre_v_all.T @ inputs
        grads.g_v_v += dpre_v_all.T @ prev_s_v
        grads.g_wbar_v += np.outer(sum_v, into_v)
        g_into_d = state.wbar_d.T @ sum_d
        g_into_v = state.wbar_v.T @ sum_v

    if cfg.pb_wiring == "cross":
        g_pb_d, g_pb_v = g_into_v, g_into_d
    else:
        g_pb_d, g_pb_v = g_into_d, g_into_v
    grads.delta_pb_d = -g_pb_d * transfer_derivative(state.rho_d)
    grads.delta_pb_v = -g_pb_v * transfer_derivative(state.rho_v)
    return grads


def bptt(state: NetworkState, seq, targets=None) -> GradientSet:
    """Exact gradients over the fully unrolled sequence.

    ``targets`` defaults to ``seq`` itself (frame ``t+1`` is the target of step ``t``).
    """
    caches = run_sequence_open_loop(state, seq)
    return backpropagate(state, caches, _target_frames(seq, targets, state.config.n_input))


def finite_diff_gradient(state: NetworkState, seq, epsilon: float = 1e-5, targets=None) -> GradientSet:
    """Central differences for every weight entry and every PB internal value.

    The PB entries are stored as ``-dC/drho`` so that the result is directly
    comparable with :func:`bptt`.
    """
    if epsilon <= 0.0:
        raise DataError(f"epsilon must be > 0 (got {epsilon})")
    perturbed = state.copy()
    target_frames = _target_frames(seq, targets, state.config.n_input)
    grads = GradientSet.zeros(state.config)

    def central(array: np.ndarray, out: np.ndarray) -> None:
        for idx in np.ndindex(array.shape):
            original = array[idx]
            array[idx] = original + epsilon
            plus = cost_of(perturbed, seq, target_frames)
            array[idx] = original - epsilon
            minus = cost_of(perturbed, seq, target_frames)
            array[idx] = original
            out[idx] = (plus - minus) / (2.0 * epsilon)

    for name in WEIGHT_NAMES:
        central(getattr(perturbed, name), grads.by_name(name))
    central(perturbed.rho_d, grads.delta_pb_d)
    central(perturbed.rho_v, grads.delta_pb_v)
    grads.delta_pb_d *= -1.0
    grads.delta_pb_v *= -1.0
    return grads


def relative_errors(analytic: GradientSet, numeric: GradientSet, atol: float = 1e-8) -> Dict[str, float]:
    """Max relative error per array; entries whose absolute difference is within ``atol`` count as exact."""
    out: Dict[str, float] = {}
    numeric_arrays = numeric.arrays()
    for name, a in analytic.arrays().items():
        n = numeric_arrays[name]
        diff = np.abs(a - n)
        scale = np.maximum(np.abs(a), np.abs(n))
        rel = np.where(diff <= atol, 0.0, diff / np.where(scale > 0.0, scale, 1.0))
        out[name] = float(rel.max()) if rel.size else 0.0
    return out


@dataclass
class GradCheckResult:
    seed: int
    errors: Dict[str, float]
    tolerance: float

    @property
    def max_error(self) -> float:
        return max(self.errors.values())

    @property
    def passed(self) -> bool:
        return self.max_error <= self.tolerance


def random_problem(seed: int, n_d: int = 5, n_v: int = 5, length: int = 6) -> Tuple[NetworkState, np.ndarray]:
    """Random small network with nonzero PB values plus a random sequence."""
    config = NetworkConfig(n_d=n_d, n_v=n_v, weight_init_range=0.5)
    state = init_network(config, seed)
    rng = np.random.default_rng([seed, 1])
    state.rho_d = rng.uniform(-1.0, 1.0, size=config.n_pb_d)
    state.rho_v = rng.uniform(-1.0, 1.0, size=config.n_pb_v)
    frames = rng.uniform(0.0, 1.0, size=(length, config.n_input))
    return state, frames


def gradient_check(
    seed: int,
    n_d: int = 5,
    n_v: int = 5,
    length: int = 6,
    epsilon: float = 1e-5,
    tolerance: float = 1e-4,
    atol: float = 1e-8,
) -> GradCheckResult:
    state, frames = random_problem(seed, n_d, n_v, length)
    errors = relative_errors(bptt(state, frames), finite_diff_gradient(state, frames, epsilon), atol)
    return GradCheckResult(seed=seed, errors=errors, tolerance=tolerance)
