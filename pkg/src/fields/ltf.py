"""LTF1 binary tensor format.

Layout (little-endian)::

    0   4s   magic "LTF1"
    4   u8   dtype (0 = f32, 1 = f64)
    5   u8   ndim
    6   u8   components per point (1 for images, dim for fields)
    7   u8   reserved (0)
    8   ndim x u64  dims
        ndim x f64  spacing
        ndim x f64  origin
        payload, row-major, components innermost
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from src.errors import DataError
from src.fields.grid import DenseField, Grid, Image, TransformField

MAGIC = b"LTF1"
DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
DTYPE_CODES = {np.dtype("float32"): 0, np.dtype("float64"): 1}
FIXED_HEADER = 8


@dataclass(frozen=True)
class TensorRecord:
    array: np.ndarray  # shape dims (+ (components,) when components > 1)
    spacing: tuple
    origin: tuple
    components: int
    dtype_code: int

    @property
    def dims(self) -> tuple:
        return self.array.shape[: len(self.spacing)]


def encode_tensor(array: np.ndarray, components: int = 1, spacing: Optional[Sequence[float]] = None,
                  origin: Optional[Sequence[float]] = None) -> bytes:
    array = np.asarray(array)
    if array.dtype not in DTYPE_CODES:
        array = array.astype(np.float64)
    dims = array.shape if components == 1 else array.shape[:-1]
    if components > 1 and array.shape[-1] != components:
        raise DataError(f"last axis has {array.shape[-1]} entries, expected {components} components")
    ndim = len(dims)
    if ndim == 0 or ndim > 255:
        raise DataError(f"cannot encode a tensor with {ndim} dims")
    spacing = np.ones(ndim) if spacing is None else np.asarray(spacing, dtype="<f8")
    origin = np.zeros(ndim) if origin is None else np.asarray(origin, dtype="<f8")
    header = MAGIC + bytes([DTYPE_CODES[array.dtype], ndim, components, 0])
    return b"".join([
        header,
        np.asarray(dims, dtype="<u8").tobytes(),
        np.asarray(spacing, dtype="<f8").tobytes(),
        np.asarray(origin, dtype="<f8").tobytes(),
        np.ascontiguousarray(array, dtype=array.dtype.newbyteorder("<")).tobytes(),
    ])


def decode_tensor(blob: bytes, source: str = "<bytes>") -> TensorRecord:
    if len(blob) < FIXED_HEADER:
        raise DataError(f"{source}: truncated header at byte 0: need {FIXED_HEADER} bytes, have {len(blob)}")
    if blob[:4] != MAGIC:
        raise DataError(f"{source}: bad magic at byte 0: expected {MAGIC!r}, found {blob[:4]!r}")
    dtype_code, ndim, components, reserved = blob[4], blob[5], blob[6], blob[7]
    if dtype_code not in DTYPES:
        raise DataError(f"{source}: unknown dtype code {dtype_code} at byte 4")
    if ndim == 0:
        raise DataError(f"{source}: ndim must be >= 1 at byte 5")
    if components == 0:
        raise DataError(f"{source}: components per point must be >= 1 at byte 6")

    offset = FIXED_HEADER
    header_end = offset + ndim * 24
    if len(blob) < header_end:
        raise DataError(
            f"{source}: truncated header at byte {len(blob)}: expected {header_end} header bytes"
        )
    dims = tuple(int(d) for d in np.frombuffer(blob, dtype="<u8", count=ndim, offset=offset))
    spacing = tuple(float(s) for s in np.frombuffer(blob, dtype="<f8", count=ndim, offset=offset + 8 * ndim))
    origin = tuple(float(o) for o in np.frombuffer(blob, dtype="<f8", count=ndim, offset=offset + 16 * ndim))

    dtype = DTYPES[dtype_code]
    count = int(np.prod(dims)) * components
    expected = count * dtype.itemsize
    actual = len(blob) - header_end
    if actual != expected:
        raise DataError(
            f"{source}: payload at byte {header_end} has {actual} bytes, expected {expected} "
            f"({count} values of {dtype.name})"
        )
    payload = np.frombuffer(blob, dtype=dtype, count=count, offset=header_end)
    shape = dims if components == 1 else dims + (components,)
    return TensorRecord(payload.reshape(shape).copy(), spacing, origin, components, dtype_code)


def save_tensor(path: Union[str, Path], array: np.ndarray, components: int = 1,
                spacing: Optional[Sequence[float]] = None, origin: Optional[Sequence[float]] = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode_tensor(array, components, spacing, origin))
    return path


def load_tensor(path: Union[str, Path]) -> TensorRecord:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such tensor file: {path}")
    return decode_tensor(path.read_bytes(), source=str(path))


def _grid_of(record: TensorRecord, source: str) -> Grid:
    try:
        return Grid(dims=record.dims, spacing=record.spacing, origin=record.origin)
    except ValueError as exc:
        raise DataError(f"{source}: invalid grid header: {exc}") from exc


def save_image(path: Union[str, Path], image: Image) -> Path:
    return save_tensor(path, image.values, 1, image.grid.spacing, image.grid.origin)


def load_image(path: Union[str, Path]) -> Image:
    record = load_tensor(path)
    if record.components != 1:
        raise DataError(f"{path}: components per point at byte 6 is {record.components}, images need 1")
    return Image(_grid_of(record, str(path)), record.array.astype(np.float64))


def save_field(path: Union[str, Path], field: Union[DenseField, TransformField]) -> Path:
    dense = field.displacement if isinstance(field, TransformField) else field
    return save_tensor(path, dense.vectors, dense.grid.dim, dense.grid.spacing, dense.grid.origin)


def load_dense_field(path: Union[str, Path], dtype: Optional[str] = None) -> DenseField:
    record = load_tensor(path)
    if dtype is not None and DTYPES[record.dtype_code] != np.dtype(dtype).newbyteorder("<"):
        raise DataError(
            f"{path}: dtype at byte 4 is {DTYPES[record.dtype_code].name}, expected {np.dtype(dtype).name}"
        )
    ndim = len(record.spacing)
    if record.components != ndim:
        raise DataError(
            f"{path}: components per point at byte 6 is {record.components}, a {ndim}D field needs {ndim}"
        )
    return DenseField(_grid_of(record, str(path)), record.array.astype(np.float64))


def load_field(path: Union[str, Path], dtype: Optional[str] = None) -> TransformField:
    return TransformField(load_dense_field(path, dtype))
