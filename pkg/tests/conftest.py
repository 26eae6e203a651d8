from pathlib import Path

import numpy as np
import pytest

from hprnn.config import DatasetSpec, ExperimentConfig, NetworkConfig, RecognitionSettings, TrainConfig
from hprnn.net_core import ObservationSequence, SequenceLabel, init_network


@pytest.fixture
def small_config() -> NetworkConfig:
    return NetworkConfig(n_d=5, n_v=5, weight_init_range=0.5)


@pytest.fixture
def small_state(small_config):
    return init_network(small_config, seed=3)


@pytest.fixture
def frames() -> np.ndarray:
    rng = np.random.default_rng(11)
    return rng.uniform(0.0, 1.0, size=(6, 4))


@pytest.fixture
def labelled_sequence(frames) -> ObservationSequence:
    return ObservationSequence(frames, SequenceLabel("cosine", "yellow", 0))


def tiny_experiment(name: str, out: Path, **overrides) -> ExperimentConfig:
    """Full experiment pipeline with a network and budgets small enough for unit tests."""
    cfg = ExperimentConfig(
        name=name,
        seed=5,
        output_dir=str(out),
        network=NetworkConfig(n_d=4, n_v=4, eta_dorsal=1e-2, eta_ventral=1e-2, weight_init_range=0.3),
        train=TrainConfig(max_epochs=3, log_every=1),
        data=DatasetSpec(speed_factor=2.0 if name == "fig8" else 1.0),
        recognition=RecognitionSettings(epochs=3),
    )
    return cfg.model_copy(update=overrides)


@pytest.fixture
def tiny():
    return tiny_experiment
