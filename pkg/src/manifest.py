"""TOML serialization for configs and run manifests, plus content hashes."""

import hashlib
import json
import math
import re
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from pathlib import Path
from typing import Any, Dict, Iterable, Mapping, Union

import numpy as np

from src.errors import DataError


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        value = float(value)
        if math.isnan(value):
            return "nan"
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        return repr(value)
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_format_value(v) for v in value) + "]"
    raise DataError(f"cannot write {type(value).__name__} to TOML")


_BARE_KEY = re.compile(r"^[A-Za-z0-9_-]+$")


def _format_key(key: str) -> str:
    return key if _BARE_KEY.match(key) else json.dumps(key)


def dumps_toml(document: Mapping[str, Any]) -> str:
    """Top-level scalars first, then one [section] per nested mapping."""
    lines = []
    for key, value in document.items():
        if value is not None and not isinstance(value, Mapping):
            lines.append(f"{_format_key(key)} = {_format_value(value)}")
    for section, table in document.items():
        if not isinstance(table, Mapping):
            continue
        if lines:
            lines.append("")
        lines.append(f"[{_format_key(section)}]")
        for key, value in table.items():
            if value is None:
                continue
            if isinstance(value, Mapping):
                raise DataError(f"nested table {section}.{key} is not supported")
            lines.append(f"{_format_key(key)} = {_format_value(value)}")
    return "\n".join(lines) + "\n"


def write_toml(path: Union[str, Path], document: Mapping[str, Any]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps_toml(document), encoding="utf-8")
    return path


def read_toml(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    try:
        with path.open("rb") as handle:
            return tomllib.load(handle)
    except FileNotFoundError as exc:
        raise DataError(f"no such file: {path}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise DataError(f"{path}: invalid TOML: {exc}") from exc


def sha256_bytes(*chunks: bytes) -> str:
    digest = hashlib.sha256()
    for chunk in chunks:
        digest.update(chunk)
    return digest.hexdigest()


def file_sha256(path: Union[str, Path]) -> str:
    return sha256_bytes(Path(path).read_bytes())


def tree_hashes(root: Union[str, Path], patterns: Iterable[str] = ("*",)) -> Dict[str, str]:
    """Relative path -> sha256 for every file under ``root`` matching ``patterns``."""
    root = Path(root)
    found = {}
    for pattern in patterns:
        for path in sorted(root.rglob(pattern)):
            if path.is_file() and path.name != "run.manifest":
                found[str(path.relative_to(root))] = file_sha256(path)
    return dict(sorted(found.items()))
