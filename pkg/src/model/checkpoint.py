"""Model checkpoints: one LTF1 tensor per parameter plus manifest.toml."""

from pathlib import Path
from typing import Union

import numpy as np

from src.errors import DataError
from src.fields.ltf import load_tensor, save_tensor
from src.logger import logger
from src.manifest import read_toml, sha256_bytes, write_toml
from src.model.config import ModelConfig
from src.model.proposal import ProposalModel, init_model

MANIFEST = "manifest.toml"


def parameter_hash(model: ProposalModel) -> str:
    chunks = []
    for name in sorted(model.params):
        value = np.ascontiguousarray(model.params[name], dtype="<f8")
        chunks += [name.encode(), str(value.shape).encode(), value.tobytes()]
    return sha256_bytes(*chunks)


def save_checkpoint(model: ProposalModel, directory: Union[str, Path], **extra) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name, value in model.params.items():
        save_tensor(directory / f"{name}.ltf", value)
    write_toml(directory / MANIFEST, {
        "parameter_hash": parameter_hash(model),
        **{k: v for k, v in extra.items() if not isinstance(v, dict)},
        "model": model.config.model_dump(),
        "parameters": {name: "x".join(str(s) for s in value.shape) for name, value in model.params.items()},
    })
    logger.debug("Saved checkpoint", path=str(directory), hash=parameter_hash(model)[:12])
    return directory


def load_checkpoint(directory: Union[str, Path]) -> ProposalModel:
    directory = Path(directory)
    manifest = read_toml(directory / MANIFEST)
    if "model" not in manifest or "parameters" not in manifest:
        raise DataError(f"{directory / MANIFEST}: missing [model] or [parameters] section")
    config = ModelConfig.model_validate(manifest["model"])
    model = init_model(config, seed=0)

    params = {}
    for name, shape_text in manifest["parameters"].items():
        if name not in model.params:
            raise DataError(f"{directory}: unknown parameter {name!r} in manifest")
        record = load_tensor(directory / f"{name}.ltf")
        expected = tuple(int(s) for s in shape_text.split("x"))
        if record.array.shape != expected:
            raise DataError(f"{directory / (name + '.ltf')}: shape {record.array.shape}, manifest says {expected}")
        params[name] = record.array.astype(np.float64)
    return model.with_params(params)
