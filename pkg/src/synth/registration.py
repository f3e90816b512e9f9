"""Registration providers.

``register(target, source)`` returns the map defined on the target's grid
that sends target coordinates to source coordinates, so
``warp_image(source, field)`` resembles the target. The same field carries
landmarks of the target image into the source's frame, which is how the
losses and metrics use it (``to_anchor``).
"""

import threading
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

from src.errors import DataError
from src.fields.grid import TransformField
from src.fields.ltf import load_field, save_field
from src.fields.ops import compose, identity_map
from src.logger import logger
from src.synth.cohort import Cohort, Subject, parse_image_id


def oracle_registration(target: Subject, source: Subject, target_timepoint: int = 0,
                        source_timepoint: int = 0) -> TransformField:
    """Exact map through template space: from_template(source) o to_template(target).

    Registering an image to itself returns the identity exactly.
    """
    if target.template_hash != source.template_hash:
        raise DataError(
            f"subjects {target.subject_id} and {source.subject_id} were generated from different templates"
        )
    if target.subject_id == source.subject_id and target_timepoint == source_timepoint:
        return identity_map(target.image(target_timepoint).grid)
    return compose(source.from_template(source_timepoint), target.to_template(target_timepoint))


def load_external_field(path: Union[str, Path], dtype: Optional[str] = None) -> TransformField:
    """Displacement field written by any external registration tool as LTF1."""
    field = load_field(path, dtype)
    logger.debug("Loaded external field", path=str(path), dims=field.grid.dims)
    return field


class RegistrationProvider(ABC):
    @abstractmethod
    def register(self, target_id: str, source_id: str) -> TransformField:
        ...

    def to_anchor(self, image_id: str, anchor_id: str) -> TransformField:
        """Field carrying landmarks of ``image_id`` into ``anchor_id``'s frame."""
        return self.register(image_id, anchor_id)


class OracleRegistration(RegistrationProvider):
    def __init__(self, cohort: Cohort):
        self.cohort = cohort

    def register(self, target_id: str, source_id: str) -> TransformField:
        target, target_tp = parse_image_id(target_id)
        source, source_tp = parse_image_id(source_id)
        return oracle_registration(self.cohort.subject(target), self.cohort.subject(source), target_tp, source_tp)


def field_filename(target_id: str, source_id: str) -> str:
    return f"{target_id}__{source_id}.ltf"


class FileRegistration(RegistrationProvider):
    """Directory of precomputed fields named ``<target>__<source>.ltf``."""

    def __init__(self, directory: Union[str, Path], dtype: Optional[str] = None):
        self.directory = Path(directory)
        self.dtype = dtype
        if not self.directory.is_dir():
            raise DataError(f"registration directory not found: {self.directory}")

    def register(self, target_id: str, source_id: str) -> TransformField:
        path = self.directory / field_filename(target_id, source_id)
        if not path.is_file():
            raise DataError(f"no registration field for target {target_id!r} and source {source_id!r}: {path}")
        return load_external_field(path, self.dtype)


class RegistrationCache(RegistrationProvider):
    """Memoizes another provider in memory and optionally as LTF1 files on disk."""

    def __init__(self, provider: RegistrationProvider, directory: Optional[Union[str, Path]] = None):
        self.provider = provider
        self.directory = Path(directory) if directory is not None else None
        self._fields: Dict[Tuple[str, str], TransformField] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def __len__(self) -> int:
        return len(self._fields)

    def register(self, target_id: str, source_id: str) -> TransformField:
        key = (target_id, source_id)
        with self._lock:
            if key in self._fields:
                self.hits += 1
                return self._fields[key]
        field = self._load_or_compute(target_id, source_id)
        with self._lock:
            self.misses += 1
            return self._fields.setdefault(key, field)

    def _load_or_compute(self, target_id: str, source_id: str) -> TransformField:
        if self.directory is None:
            return self.provider.register(target_id, source_id)
        path = self.directory / field_filename(target_id, source_id)
        if path.is_file():
            return load_field(path)
        field = self.provider.register(target_id, source_id)
        save_field(path, field)
        return field
