"""Experiment configuration: TOML file + command-line overrides + model defaults."""

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from src.downstream.config import ClassifyConfig
from src.errors import ConfigError, DataError
from src.evaluation.config import EvalConfig
from src.losses.config import LossConfig
from src.manifest import dumps_toml, read_toml
from src.model.config import ModelConfig
from src.synth.config import CohortConfig
from src.training.config import TrainConfig

SECTIONS = ("cohort", "model", "loss", "train", "eval", "classify")
SEEDED = ("cohort", "train", "classify")


class RunConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    seed: int = 0
    cohort: CohortConfig = Field(default_factory=CohortConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    loss: LossConfig = Field(default_factory=LossConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    eval: EvalConfig = Field(default_factory=EvalConfig)
    classify: ClassifyConfig = Field(default_factory=ClassifyConfig)

    def to_toml(self) -> str:
        return dumps_toml(self.model_dump())

    def with_seed(self, seed: int) -> "RunConfig":
        """Copy with ``seed`` in the top level and every seeded section."""
        sections = {name: getattr(self, name).model_copy(update={"seed": seed}) for name in SEEDED}
        return self.model_copy(update={"seed": seed, **sections})

    def model_for(self, image_dims, image_spacing, image_origin) -> ModelConfig:
        """The model section with its image geometry taken from a cohort."""
        return self.model.model_copy(update={
            "image_dims": tuple(image_dims),
            "image_spacing": tuple(image_spacing),
            "image_origin": tuple(image_origin),
        })


def parse_override(text: str) -> Tuple[str, Any]:
    """``section.key=value`` with a TOML literal value (bare words are strings)."""
    key, sep, raw = text.partition("=")
    key = key.strip()
    if not sep or not key:
        raise ConfigError(f"override {text!r} is not of the form section.key=value")
    try:
        value = tomllib.loads(f"v = {raw.strip()}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw.strip()
    return key, value


def _assign(document: Dict[str, Any], dotted: str, value: Any) -> None:
    parts = dotted.split(".")
    target = document
    for part in parts[:-1]:
        node = target.setdefault(part, {})
        if not isinstance(node, dict):
            raise ConfigError(f"cannot set {dotted!r}: {part!r} is not a section")
        target = node
    target[parts[-1]] = value


def _describe(exc: ValidationError) -> str:
    return "; ".join(
        f"{'.'.join(str(p) for p in error['loc']) or '<root>'}: {error['msg']}" for error in exc.errors()
    )


def load_run_config(path: Optional[Union[str, Path]] = None, overrides: Iterable[Tuple[str, Any]] = (),
                    seed: Optional[int] = None, subjects: Optional[int] = None) -> RunConfig:
    """Precedence: explicit arguments and overrides > config file > defaults.

    The top-level seed fills every seeded section that does not set its own;
    an explicit ``seed`` argument replaces them all.
    """
    document: Dict[str, Any] = {}
    if path is not None:
        try:
            document = read_toml(path)
        except DataError as exc:
            raise ConfigError(str(exc)) from exc
    for key, value in overrides:
        _assign(document, key, value)
    if seed is not None:
        document["seed"] = seed
        for section in SEEDED:
            _assign(document, f"{section}.seed", seed)
    elif "seed" in document:
        for section in SEEDED:
            document.setdefault(section, {})
            if isinstance(document[section], dict):
                document[section].setdefault("seed", document["seed"])
    if subjects is not None:
        cohort = document.setdefault("cohort", {})
        cohort["num_subjects"] = subjects
        cohort.setdefault("num_train", min(CohortConfig.model_fields["num_train"].default, subjects - subjects // 3))
    try:
        return RunConfig.model_validate(document)
    except ValidationError as exc:
        raise ConfigError(f"invalid configuration: {_describe(exc)}") from exc
