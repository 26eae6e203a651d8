import math

import numpy as np
import pytest

from hprnn.config import NetworkConfig
from hprnn.errors import ConfigurationError, DataError, StructuralError
from hprnn.net_core import (
    WEIGHT_NAMES,
    HiddenState,
    forward_step,
    init_network,
    pb_activation,
    pb_inputs,
    run_sequence_open_loop,
    transfer,
    transfer_derivative,
    weight_shapes,
)


def _zero_weights(state):
    for name in WEIGHT_NAMES:
        getattr(state, name)[...] = 0.0
    return state


def test_init_network_starts_pb_at_origin():
    state = init_network(NetworkConfig(), seed=42)
    np.testing.assert_array_equal(state.rho_d, [0.0])
    np.testing.assert_array_equal(state.rho_v, [0.0])


def test_init_network_is_deterministic():
    a = init_network(NetworkConfig(), seed=42)
    b = init_network(NetworkConfig(), seed=42)
    for name in WEIGHT_NAMES:
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name))
        np.testing.assert_array_equal(a.lr[name], b.lr[name])


def test_init_network_shapes_and_rates():
    cfg = NetworkConfig()
    state = init_network(cfg, seed=0)
    for name, shape in weight_shapes(cfg).items():
        assert getattr(state, name).shape == shape
        assert np.all(np.abs(getattr(state, name)) <= cfg.weight_init_range)
        assert not np.any(state.prev_grad[name])
    assert np.all(state.lr["w_d"] == cfg.eta_dorsal)
    assert np.all(state.lr["u_v"] == cfg.eta_ventral)


def test_init_network_rejects_inverted_rate_bounds():
    with pytest.raises(ConfigurationError, match="eta_min"):
        init_network(NetworkConfig(eta_min=1e-1, eta_max=1e-3), seed=0)


def test_transfer_values():
    assert transfer(0.0) == 0.0
    assert transfer(-0.7) == pytest.approx(-transfer(0.7))
    assert transfer(1.0) == pytest.approx(1.7159 * math.tanh(2.0 / 3.0), rel=1e-12)
    assert transfer(1.0) == pytest.approx(1.0, abs=1e-3)


def test_transfer_derivative_matches_central_difference():
    for x in (-2.0, -0.3, 0.0, 0.5, 1.7):
        numeric = (transfer(x + 1e-6) - transfer(x - 1e-6)) / 2e-6
        assert transfer_derivative(x) == pytest.approx(numeric, rel=1e-6)


def test_pb_activation(small_state):
    pb_d, pb_v = pb_activation(small_state)
    np.testing.assert_array_equal(pb_d, [0.0])
    np.testing.assert_array_equal(pb_v, [0.0])
    pb_d, _ = pb_activation(small_state.with_pb([1.0], [0.0]))
    assert pb_d[0] == pytest.approx(transfer(1.0))


def test_pb_inputs_cross_and_same_wiring(small_config):
    pb_d, pb_v = np.array([0.1]), np.array([0.2])
    cross = init_network(small_config, seed=0)
    into_d, into_v = pb_inputs(cross, pb_d, pb_v)
    assert into_d is pb_v and into_v is pb_d
    same = init_network(small_config.model_copy(update={"pb_wiring": "same"}), seed=0)
    into_d, into_v = pb_inputs(same, pb_d, pb_v)
    assert into_d is pb_d and into_v is pb_v


def test_uneven_pb_groups_follow_the_wiring():
    cfg = NetworkConfig(n_d=3, n_v=3, n_pb_d=2, n_pb_v=1)
    state = init_network(cfg, seed=0)
    assert state.wbar_d.shape == (3, 1)
    assert state.wbar_v.shape == (3, 2)
    cache = forward_step(state.with_pb([0.2, -0.4], [0.3]), np.full(4, 0.5), HiddenState.zeros(cfg))
    assert cache.output.shape == (4,)


def test_forward_step_with_zero_weights_outputs_zero(small_state):
    state = _zero_weights(small_state)
    cache = forward_step(state, np.array([0.3, 0.9, 0.1, 0.5]), HiddenState.zeros(state.config))
    np.testing.assert_array_equal(cache.output, np.zeros(4))


def test_forward_step_output_is_the_horizontal_product(small_state):
    state = small_state.with_pb([0.4], [-0.6])
    frame = np.array([0.2, 0.7, 0.0, 0.0])
    pb_d, _ = pb_activation(state)
    s_v = transfer(state.w_v @ frame + state.wbar_v @ pb_d)
    state.u_v = np.outer(np.ones(4), s_v) / float(s_v @ s_v)

    cache = forward_step(state, frame, HiddenState.zeros(state.config))
    np.testing.assert_allclose(cache.x_v, np.ones(4), rtol=1e-12)
    np.testing.assert_allclose(cache.output, cache.x_d, rtol=1e-12)


def test_forward_step_rejects_wrong_shapes(small_state):
    with pytest.raises(StructuralError):
        forward_step(small_state, np.zeros(3), HiddenState.zeros(small_state.config))
    with pytest.raises(StructuralError):
        forward_step(small_state, np.zeros(4), HiddenState(np.zeros(2), np.zeros(5)))


def test_run_sequence_open_loop_starts_from_zero_hidden_state(small_state, frames):
    caches = run_sequence_open_loop(small_state, frames[:2])
    assert len(caches) == 2
    first = forward_step(small_state, frames[0], HiddenState.zeros(small_state.config))
    np.testing.assert_array_equal(caches[0].output, first.output)
    second = forward_step(small_state, frames[1], caches[0].hidden)
    np.testing.assert_array_equal(caches[1].output, second.output)


def test_run_sequence_open_loop_is_pure(small_state, frames):
    before = {name: getattr(small_state, name).copy() for name in WEIGHT_NAMES}
    a = run_sequence_open_loop(small_state, frames)
    b = run_sequence_open_loop(small_state, frames)
    for ca, cb in zip(a, b):
        np.testing.assert_array_equal(ca.output, cb.output)
        np.testing.assert_array_equal(ca.hidden.s_d, cb.hidden.s_d)
    for name in WEIGHT_NAMES:
        np.testing.assert_array_equal(getattr(small_state, name), before[name])


def test_run_sequence_open_loop_rejects_short_sequences(small_state, frames):
    with pytest.raises(DataError):
        run_sequence_open_loop(small_state, frames[:1])


def test_with_pb_shares_weights_but_not_pb(small_state):
    view = small_state.with_pb([0.5], [0.5])
    assert view.w_d is small_state.w_d
    np.testing.assert_array_equal(small_state.rho_d, [0.0])
    with pytest.raises(StructuralError):
        small_state.with_pb([0.5, 0.1], [0.5])


def test_copy_is_independent(small_state):
    clone = small_state.copy()
    clone.w_d[0, 0] += 1.0
    clone.lr["w_d"][0, 0] = 0.0
    assert small_state.w_d[0, 0] != clone.w_d[0, 0]
    assert small_state.lr["w_d"][0, 0] == small_state.config.eta_dorsal
