"""Configuration schemas and experiment manifest loading.

Every schema is a pydantic model that rejects unknown keys. Field types are
validated by pydantic on construction; the domain invariants (bounds between
fields, counts) are enforced by each model's ``check()`` so that configs built in
code and configs loaded from YAML go through the same rules.
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from . import settings
from .errors import ConfigurationError, UsageError


logger = logging.getLogger(__name__)

Shape = Literal["cosine", "square", "circle"]
Color = Literal["yellow", "green"]

MANIFEST_NAMES = ("experiment.yaml", "experiment.yml", "experiment.json")
EXPERIMENT_NAMES = ("fig4", "fig5", "fig6", "fig7", "fig8")

# Rate schedule and budgets of the bundled experiments. NetworkConfig defaults
# keep xi at 1 +/- 1e-6.
EXPERIMENT_NETWORK: Dict[str, Any] = {"xi_plus": 1.001, "xi_minus": 0.99}
EXPERIMENT_EPOCHS = 10000
EXPERIMENT_RECOGNITION: Dict[str, Any] = {"window_len": None, "epochs": 3000, "gamma_recognition": 1.0e-3}


class _Schema(BaseModel):
    model_config = ConfigDict(extra="forbid")

    def check(self) -> None:  # pragma: no cover - overridden
        pass


class NetworkConfig(_Schema):
    n_input: int = 4
    n_output: int = 4
    n_d: int = 50
    n_v: int = 50
    n_pb_d: int = 1
    n_pb_v: int = 1
    eta_dorsal: float = 1.0e-3
    eta_ventral: float = 1.0e-5
    eta_min: float = 1.0e-7
    eta_max: float = 1.0e-1
    xi_plus: float = 1.000001
    xi_minus: float = 0.999999
    m_gamma: float = 1.0e-2
    gamma_recognition: float = 1.0e-3
    weight_init_range: float = 0.1
    # "cross": dorsal hidden units receive the ventral PB; "same" is an ablation.
    pb_wiring: Literal["cross", "same"] = "cross"

    def check(self) -> None:
        for name in ("n_input", "n_output", "n_d", "n_v", "n_pb_d", "n_pb_v"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1 (got {getattr(self, name)})")
        if self.n_output != self.n_input:
            raise ConfigurationError(
                f"n_output must equal n_input (got {self.n_output} != {self.n_input})"
            )
        if not 0.0 < self.eta_min <= self.eta_max:
            raise ConfigurationError(
                f"require 0 < eta_min <= eta_max (got eta_min={self.eta_min}, eta_max={self.eta_max})"
            )
        for name in ("eta_dorsal", "eta_ventral"):
            value = getattr(self, name)
            if not self.eta_min <= value <= self.eta_max:
                raise ConfigurationError(
                    f"{name}={value} outside [eta_min, eta_max]=[{self.eta_min}, {self.eta_max}]"
                )
        if not 0.0 < self.xi_minus <= 1.0 <= self.xi_plus:
            raise ConfigurationError(
                f"require 0 < xi_minus <= 1 <= xi_plus (got xi_minus={self.xi_minus}, xi_plus={self.xi_plus})"
            )
        if self.m_gamma < 0.0:
            raise ConfigurationError(f"m_gamma must be >= 0 (got {self.m_gamma})")
        if self.gamma_recognition <= 0.0:
            raise ConfigurationError(f"gamma_recognition must be > 0 (got {self.gamma_recognition})")
        if self.weight_init_range < 0.0:
            raise ConfigurationError(f"weight_init_range must be >= 0 (got {self.weight_init_range})")

    @property
    def n_pb_into_dorsal(self) -> int:
        return self.n_pb_v if self.pb_wiring == "cross" else self.n_pb_d

    @property
    def n_pb_into_ventral(self) -> int:
        return self.n_pb_d if self.pb_wiring == "cross" else self.n_pb_v


class TrainConfig(_Schema):
    max_epochs: int = 20000
    target_cost: float = 0.0
    shuffle: bool = False
    seed: int = 0
    log_every: int = 1000

    def check(self) -> None:
        if self.max_epochs < 1:
            raise ConfigurationError(f"max_epochs must be >= 1 (got {self.max_epochs})")
        if self.target_cost < 0.0:
            raise ConfigurationError(f"target_cost must be >= 0 (got {self.target_cost})")
        if self.log_every < 1:
            raise ConfigurationError(f"log_every must be >= 1 (got {self.log_every})")


class DatasetSpec(_Schema):
    shapes: List[Shape] = Field(default_factory=lambda: ["cosine", "square"])
    colors: List[Color] = Field(default_factory=lambda: ["yellow", "green"])
    repeats: int = 5
    points_per_loop: int = 20
    speed_factor: float = 1.0
    noise_sigma: float = 0.005
    seed: int = 0

    def check(self) -> None:
        if self.repeats < 1:
            raise ConfigurationError(f"repeats must be >= 1 (got {self.repeats})")
        if self.points_per_loop < 2:
            raise ConfigurationError(f"points_per_loop must be >= 2 (got {self.points_per_loop})")
        if self.speed_factor <= 0.0:
            raise ConfigurationError(f"speed_factor must be > 0 (got {self.speed_factor})")
        if self.noise_sigma < 0.0:
            raise ConfigurationError(f"noise_sigma must be >= 0 (got {self.noise_sigma})")


class RecognitionSettings(_Schema):
    window_len: int | None = None
    epochs: int = 3000
    gamma_recognition: float | None = None

    def check(self) -> None:
        if self.window_len is not None and self.window_len < 2:
            raise ConfigurationError(f"window_len must be >= 2 (got {self.window_len})")
        if self.epochs < 0:
            raise ConfigurationError(f"recognition epochs must be >= 0 (got {self.epochs})")
        if self.gamma_recognition is not None and self.gamma_recognition <= 0.0:
            raise ConfigurationError(f"gamma_recognition must be > 0 (got {self.gamma_recognition})")


class PredictionSettings(_Schema):
    steps: int = 19

    def check(self) -> None:
        if self.steps < 0:
            raise ConfigurationError(f"prediction steps must be >= 0 (got {self.steps})")


class ExperimentConfig(_Schema):
    name: str = "custom"
    description: str = ""
    seed: int = 42
    output_dir: str | None = None
    network: NetworkConfig = Field(default_factory=NetworkConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    data: DatasetSpec = Field(default_factory=DatasetSpec)
    recognition: RecognitionSettings = Field(default_factory=RecognitionSettings)
    prediction: PredictionSettings = Field(default_factory=PredictionSettings)

    def check(self) -> None:
        for part in (self.network, self.train, self.data, self.recognition, self.prediction):
            part.check()
        if self.network.n_input != 4:
            raise ConfigurationError(
                f"network.n_input must be 4 to match the two-colour frame encoding (got {self.network.n_input})"
            )

    def resolved_output_dir(self) -> Path:
        return Path(self.output_dir) if self.output_dir else settings.OUTPUT_DIR / self.name

    def effective_gamma_recognition(self) -> float:
        if self.recognition.gamma_recognition is not None:
            return self.recognition.gamma_recognition
        return self.network.gamma_recognition


def _validation_message(exc: ValidationError) -> str:
    first = exc.errors()[0]
    where = ".".join(str(part) for part in first.get("loc", ())) or "<root>"
    return f"{where}: {first.get('msg', 'invalid value')}"


def parse_experiment_config(data: Dict[str, Any]) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigurationError("experiment manifest must be a mapping at the top level")
    try:
        cfg = ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigurationError(_validation_message(exc)) from exc
    cfg.check()
    return cfg


def read_manifest(path: Path) -> Dict[str, Any]:
    """Read a manifest file, or the first manifest found in a folder."""
    candidates = [path] if path.is_file() else [path / name for name in MANIFEST_NAMES]
    for cand in candidates:
        if cand.exists():
            text = cand.read_text(encoding="utf-8")
            if cand.suffix in {".yaml", ".yml"}:
                try:
                    return yaml.safe_load(text) or {}
                except yaml.YAMLError as exc:
                    raise ConfigurationError(f"{cand}: invalid YAML ({exc})") from exc
            try:
                return json.loads(text)
            except json.JSONDecodeError as exc:
                raise ConfigurationError(f"{cand}: invalid JSON ({exc})") from exc
    raise UsageError(f"No experiment manifest found at {path} (experiment.yaml/experiment.json)")


def load_experiment_config(path: str | Path) -> ExperimentConfig:
    cfg = parse_experiment_config(read_manifest(Path(path)))
    logger.debug("loaded experiment config %s from %s", cfg.name, path)
    return cfg


def default_experiment_config(name: str) -> ExperimentConfig:
    """Built-in defaults for a named experiment, used when no manifest is on disk."""
    if name not in EXPERIMENT_NAMES:
        raise UsageError(f"Unknown experiment '{name}'. Choose from: {', '.join(EXPERIMENT_NAMES)}")
    cfg = ExperimentConfig(
        name=name,
        network=NetworkConfig(**EXPERIMENT_NETWORK),
        train=TrainConfig(max_epochs=EXPERIMENT_EPOCHS),
    )
    if name in {"fig5", "fig6", "fig7"}:
        cfg.recognition = RecognitionSettings(**EXPERIMENT_RECOGNITION)
    if name == "fig8":
        cfg.data = DatasetSpec(speed_factor=2.0)
    return cfg


def resolve_experiment(name: str, experiments_dir: Path | None = None) -> ExperimentConfig:
    root = experiments_dir or settings.EXPERIMENTS_DIR
    folder = root / name
    if folder.is_dir():
        cfg = load_experiment_config(folder)
        if cfg.name != name:
            cfg = cfg.model_copy(update={"name": name})
        return cfg
    logger.info("no manifest for %s under %s, using built-in defaults", name, root)
    return default_experiment_config(name)


def apply_overrides(
    cfg: ExperimentConfig,
    *,
    seed: int | None = None,
    epochs: int | None = None,
    speed_factor: float | None = None,
    noise_sigma: float | None = None,
    output_dir: str | None = None,
) -> ExperimentConfig:
    update: Dict[str, Any] = {}
    if seed is not None:
        update["seed"] = seed
    if epochs is not None:
        update["train"] = cfg.train.model_copy(update={"max_epochs": epochs})
    data_update: Dict[str, Any] = {}
    if speed_factor is not None:
        data_update["speed_factor"] = speed_factor
    if noise_sigma is not None:
        data_update["noise_sigma"] = noise_sigma
    if data_update:
        update["data"] = cfg.data.model_copy(update=data_update)
    if output_dir is not None:
        update["output_dir"] = output_dir
    merged = cfg.model_copy(update=update)
    merged.check()
    return merged
