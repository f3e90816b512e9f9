"""Point proposal network: strided conv feature extractor and grid head.

Landmark i of an image is ``p_i = psi_p(f_i) + G_i`` where ``G_i`` is the
i-th node (row-major) of the feature grid, placed at the centers of the
downsampling cells of the image grid.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from src.autodiff import DiffValue, Tape
from src.autodiff import primitives as P
from src.errors import DataError, ShapeMismatchError
from src.fields.grid import Grid, Image
from src.logger import logger
from src.model.config import ModelConfig


@dataclass(frozen=True)
class ConvBlock:
    name: str
    in_channels: int
    out_channels: int
    kernel: Tuple[int, ...]
    stride: Tuple[int, ...]
    padding: Tuple[int, ...]


@dataclass(frozen=True)
class LandmarkSet:
    """Ordered landmarks of one image, row-major feature-grid order."""

    points: np.ndarray
    source_id: str = ""

    def __post_init__(self):
        points = np.array(self.points, dtype=np.float64)
        if points.ndim != 2 or points.shape[1] not in (2, 3):
            raise ShapeMismatchError(f"landmarks must be (N, 2|3), got {points.shape}")
        object.__setattr__(self, "points", points)

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


@dataclass
class ProposalModel:
    config: ModelConfig
    image_grid: Grid
    feature_grid: Grid
    blocks: List[ConvBlock]
    params: Dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def num_landmarks(self) -> int:
        return self.feature_grid.size

    @property
    def dim(self) -> int:
        return self.image_grid.dim

    def grid_points(self) -> np.ndarray:
        return self.feature_grid.points()

    def leaves(self, tape: Tape, requires_grad: bool = True, dtype=None) -> Dict[str, DiffValue]:
        """Parameters as named tape leaves, optionally cast (float32 training build)."""
        return {
            name: tape.leaf(value if dtype is None else value.astype(dtype), requires_grad=requires_grad, name=name)
            for name, value in self.params.items()
        }

    def with_params(self, params: Dict[str, np.ndarray]) -> "ProposalModel":
        missing = set(self.params) ^ set(params)
        if missing:
            raise ShapeMismatchError(f"parameter names differ: {sorted(missing)}")
        for name, value in params.items():
            if value.shape != self.params[name].shape:
                raise ShapeMismatchError(f"{name}: shape {value.shape} != {self.params[name].shape}")
        return ProposalModel(self.config, self.image_grid, self.feature_grid, self.blocks,
                             {name: np.array(params[name]) for name in self.params})

    def bound(self) -> Optional[float]:
        if self.config.bound_displacement is None:
            return None
        return self.config.bound_displacement * min(self.feature_grid.spacing)


def _downsampling_factors(config: ModelConfig) -> Tuple[int, ...]:
    if len(config.image_dims) != len(config.grid_dims):
        raise DataError(f"image dims {config.image_dims} and grid dims {config.grid_dims} differ in length")
    factors = []
    for image_n, grid_n in zip(config.image_dims, config.grid_dims):
        if grid_n < 1 or image_n % grid_n != 0:
            raise DataError(
                f"feature grid {config.grid_dims} is not an integer downsampling of image {config.image_dims}"
            )
        factors.append(image_n // grid_n)
    return tuple(factors)


def _plan_blocks(config: ModelConfig, factors: Tuple[int, ...]) -> List[ConvBlock]:
    dim = len(factors)
    halvings = min(int(np.log2(f & -f)) for f in factors)
    remaining = tuple(f // 2**halvings for f in factors)
    specs = [((3,) * dim, (2,) * dim, (1,) * dim)] * halvings
    if any(r > 1 for r in remaining):
        specs.append((remaining, remaining, (0,) * dim))
    if not specs:
        specs.append(((3,) * dim, (1,) * dim, (1,) * dim))

    blocks, in_channels = [], 1
    for index, (kernel, stride, padding) in enumerate(specs):
        out_channels = config.channels if index == len(specs) - 1 else config.hidden_channels
        blocks.append(ConvBlock(f"conv{index}", in_channels, out_channels, kernel, stride, padding))
        in_channels = out_channels
    return blocks


def init_model(config: ModelConfig, seed: int = 0) -> ProposalModel:
    """Deterministic initialization; the final head layer starts at zero."""
    image_grid = Grid(dims=tuple(config.image_dims), spacing=tuple(config.image_spacing),
                      origin=tuple(config.image_origin))
    factors = _downsampling_factors(config)
    feature_grid = image_grid.downsample(factors)
    blocks = _plan_blocks(config, factors)
    rng = np.random.default_rng(seed)
    dim = image_grid.dim

    params: Dict[str, np.ndarray] = {}
    for block in blocks:
        fan_in = block.in_channels * int(np.prod(block.kernel))
        params[f"{block.name}.weight"] = rng.normal(
            0.0, np.sqrt(2.0 / fan_in), size=(block.out_channels, block.in_channels) + block.kernel
        )
        params[f"{block.name}.bias"] = np.zeros(block.out_channels)
    params["head.hidden.weight"] = rng.normal(0.0, np.sqrt(1.0 / config.channels),
                                              size=(config.channels, config.head_hidden))
    params["head.hidden.bias"] = np.zeros(config.head_hidden)
    params["head.out.weight"] = np.zeros((config.head_hidden, dim))
    params["head.out.bias"] = np.zeros(dim)

    logger.debug("Initialized proposal model", seed=seed, blocks=len(blocks),
                 landmarks=feature_grid.size, parameters=sum(v.size for v in params.values()))
    return ProposalModel(config, image_grid, feature_grid, blocks, params)


def _image_values(model: ProposalModel, image: Union[Image, np.ndarray, DiffValue], tape: Tape,
                  dtype=np.float64) -> DiffValue:
    if isinstance(image, DiffValue):
        values = image
    else:
        if isinstance(image, Image):
            if image.grid.dims != model.image_grid.dims:
                raise ShapeMismatchError(f"image dims {image.grid.dims} != model image dims {model.image_grid.dims}")
            image = image.values
        values = tape.constant(np.asarray(image, dtype=dtype))
    if values.value.size != model.image_grid.size:
        raise ShapeMismatchError(f"image has {values.value.size} values, model expects {model.image_grid.size}")
    return P.reshape(values, (1,) + model.image_grid.dims)


def extract_features(model: ProposalModel, image, tape: Optional[Tape] = None,
                     params: Optional[Dict[str, DiffValue]] = None) -> DiffValue:
    """f = psi_f(I) as an (N, c) DiffValue in feature-grid row-major order."""
    tape = tape if tape is not None else Tape()
    params = params if params is not None else model.leaves(tape, requires_grad=False)
    x = _image_values(model, image, tape, params[model.blocks[0].name + ".weight"].value.dtype)
    spatial = (1,) * model.dim
    for block in model.blocks:
        x = P.conv(x, params[f"{block.name}.weight"], stride=block.stride, padding=block.padding)
        x = P.relu(x + P.reshape(params[f"{block.name}.bias"], (block.out_channels,) + spatial))
    if x.shape[1:] != model.feature_grid.dims:
        raise ShapeMismatchError(f"extractor output {x.shape[1:]} != feature grid {model.feature_grid.dims}")
    return P.transpose(P.reshape(x, (x.shape[0], -1)))


def head_output(model: ProposalModel, features: DiffValue, params: Dict[str, DiffValue]) -> DiffValue:
    """psi_p(f): per-cell displacement (N, dim) in mm."""
    hidden = P.relu(features @ params["head.hidden.weight"] + params["head.hidden.bias"])
    raw = hidden @ params["head.out.weight"]
    if model.config.head_output_scale != 1.0:
        raw = raw * model.config.head_output_scale
    raw = raw + params["head.out.bias"]
    bound = model.bound()
    if bound is not None:
        raw = P.tanh(raw / bound) * bound
    return raw


def propose_points(model: ProposalModel, image, tape: Tape, params: Dict[str, DiffValue]) -> DiffValue:
    """Differentiable landmark coordinates (N, dim) recorded on ``tape``."""
    features = extract_features(model, image, tape, params)
    raw = head_output(model, features, params)
    return raw + model.grid_points().astype(raw.value.dtype)


def propose(model: ProposalModel, image: Image, source_id: str = "") -> LandmarkSet:
    tape = Tape()
    points = propose_points(model, image, tape, model.leaves(tape, requires_grad=False))
    return LandmarkSet(points.value, source_id=source_id)
