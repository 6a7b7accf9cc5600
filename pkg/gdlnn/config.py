"""Configuration models, hyperparameter grids and JSON config files."""

import itertools
import json
import math
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Type, TypeVar

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigError

DEFAULT_BUDGET = 10 ** 7

LEARNING_RATES = (0.01, 0.005, 0.0005)
HIDDEN_DIMS = (20, 32, 64, 128)
WEIGHT_DECAYS = (0.0, 1e-3, 5e-4, 5e-5)
TOPK_FRACTIONS = (0.01, 0.2, 0.4, 0.6, 0.8, 1.0)

T = TypeVar("T", bound=BaseModel)


class MiningConfig(BaseModel):
    """Settings for GDL program mining."""

    model_config = ConfigDict(frozen=True)

    epsilon: float = Field(1.0, gt=0)
    k: int = Field(10, ge=1)
    match_budget: int = Field(DEFAULT_BUDGET, ge=1)
    seed: int = 0
    balanced: bool = False
    stop_on_plateau: bool = False
    max_seeds: Optional[int] = Field(None, ge=1)


class TrainConfig(BaseModel):
    """Settings for the MLP head."""

    model_config = ConfigDict(frozen=True)

    lr: float = 0.01
    hidden: int = 64
    layers: int = Field(2, ge=0)
    weight_decay: float = 5e-4
    dropout: float = Field(0.5, ge=0.0, lt=1.0)
    momentum: float = Field(0.9, ge=0.0, lt=1.0)
    epochs: int = Field(500, ge=1)
    patience: int = Field(100, ge=1)
    batch_size: int = Field(256, ge=1)
    full_batch_limit: int = Field(4096, ge=1)
    seed: int = 0
    override: bool = False

    @model_validator(mode="after")
    def _within_grid(self) -> "TrainConfig":
        if self.override:
            return self
        problems = []
        if self.lr not in LEARNING_RATES:
            problems.append(f"lr={self.lr} not in {LEARNING_RATES}")
        if self.hidden not in HIDDEN_DIMS:
            problems.append(f"hidden={self.hidden} not in {HIDDEN_DIMS}")
        if self.weight_decay not in WEIGHT_DECAYS:
            problems.append(f"weight_decay={self.weight_decay} not in {WEIGHT_DECAYS}")
        if self.dropout != 0.5:
            problems.append(f"dropout={self.dropout} is not 0.5")
        if problems:
            raise ValueError("; ".join(problems) + " (pass override=True to allow)")
        return self


class SplitConfig(BaseModel):
    """Train/validation/test split ratios."""

    model_config = ConfigDict(frozen=True)

    ratios: Tuple[float, float, float] = (0.8, 0.1, 0.1)
    seed: int = 0

    @field_validator("ratios")
    @classmethod
    def _sum_to_one(cls, ratios: Tuple[float, float, float]) -> Tuple[float, float, float]:
        if any(r < 0 for r in ratios) or not math.isclose(sum(ratios), 1.0, abs_tol=1e-9):
            raise ValueError(f"split ratios {ratios} must be nonnegative and sum to 1")
        return ratios


class ExplainConfig(BaseModel):
    """Settings for the local surrogate and subgraph refinement."""

    model_config = ConfigDict(frozen=True)

    samples: int = Field(1000, ge=100)
    select: int = Field(10, ge=1)
    ridge_alpha: float = Field(0.01, gt=0)
    kernel_width: Optional[float] = Field(None, gt=0)
    seed: int = 0
    budget: int = Field(DEFAULT_BUDGET, ge=1)


class RunConfig(BaseModel):
    """Everything a CLI invocation resolved, written next to its artifacts."""

    command: str
    data: Optional[str] = None
    format: str = "json"
    name: Optional[str] = None
    count: int = 1000
    split: SplitConfig = SplitConfig()
    mining: MiningConfig = MiningConfig()
    train: TrainConfig = TrainConfig()
    explain: ExplainConfig = ExplainConfig()
    activation: str = "sigma"
    out: Optional[str] = None
    layer: Optional[str] = None
    model: Optional[str] = None
    jobs: int = Field(1, ge=1)
    grid: bool = False
    verbosity: int = 0

    @field_validator("format")
    @classmethod
    def _known_format(cls, value: str) -> str:
        if value not in ("tu", "json", "ba2motifs"):
            raise ValueError(f"unknown dataset format {value!r}")
        return value

    @field_validator("activation")
    @classmethod
    def _known_activation(cls, value: str) -> str:
        if value not in ("sigma", "sigma_count"):
            raise ValueError(f"unknown activation {value!r}")
        return value


def make(model_cls: Type[T], **values: Any) -> T:
    """Build a config model, turning validation failures into ConfigError."""
    try:
        return model_cls(**values)
    except ValidationError as e:
        raise ConfigError(f"invalid {model_cls.__name__}: {e}") from e


def epsilon_grid(n: int) -> List[float]:
    """Candidate epsilons for a training set of n graphs."""
    values = [0.1, 1.0, 0.01 * n]
    return sorted({v for v in values if v > 0})


def topk_grid(n: int) -> List[int]:
    """Candidate GDL-layer widths for a training set of n graphs."""
    return sorted({max(1, math.ceil(f * n)) for f in TOPK_FRACTIONS})


def default_topk(n: int) -> int:
    return max(1, math.ceil(0.2 * n))


def train_grid(base: TrainConfig) -> List[TrainConfig]:
    """Expand learning rate, hidden width and weight decay around ``base``."""
    configs = []
    for lr, hidden, wd in itertools.product(LEARNING_RATES, HIDDEN_DIMS, WEIGHT_DECAYS):
        configs.append(base.model_copy(update={"lr": lr, "hidden": hidden, "weight_decay": wd}))
    return configs


def load_config(path: str) -> Dict[str, Any]:
    """Load a JSON config file.

    Args:
        path: Path to a JSON object

    Returns:
        The decoded dictionary
    """
    config_path = Path(path)
    if not config_path.exists():
        raise ConfigError(f"config file {path} does not exist")
    try:
        with open(config_path, 'r') as f:
            data = json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"cannot read config file {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"config file {path} must contain a JSON object")
    return data


def save_config(data: Dict[str, Any], path: str) -> None:
    """Write a dictionary as indented JSON."""
    config_path = Path(path)
    config_path.parent.mkdir(parents=True, exist_ok=True)
    with open(config_path, 'w') as f:
        json.dump(data, f, indent=2, sort_keys=True)


def save_run_config(run: RunConfig, artifact_path: str) -> Path:
    """Write ``<artifact>.run.json`` describing how an artifact was produced."""
    path = Path(str(artifact_path) + ".run.json")
    save_config(run.model_dump(mode="json"), str(path))
    return path
