"""Synthetic two-timepoint cohort with exact ground-truth maps.

Each subject has a stationary velocity field ``v``; its t0 image is the
template seen through ``exp(v)`` (subject -> template coordinates). The t1
image adds a nuisance deformation and, for progressing subjects, a radial
thinning of the ring around the +axis-0 cardinal point, both folded into a
second velocity ``w`` applied in t0 space.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from src.config import settings
from src.errors import ConfigError, DataError, NumericError
from src.fields.grid import DenseField, Grid, Image, TransformField
from src.fields.ltf import load_dense_field, load_image, save_field, save_image
from src.fields.ops import compose, exp_svf, negative_jacobian_fraction, warp_image
from src.logger import logger
from src.manifest import read_toml, sha256_bytes, write_toml
from src.model.proposal import LandmarkSet
from src.synth.config import CohortConfig
from src.synth.template import Template, make_template

TIMEPOINTS = (0, 1)
AXES = ("x", "y", "z")


def random_velocity(grid: Grid, rng: np.random.Generator, bumps: int, amplitude: float, width: float) -> DenseField:
    """Sum of Gaussian bumps with uniform centers and random vectors of norm <= amplitude."""
    x = grid.points()
    low, high = np.asarray(grid.origin), np.asarray(grid.origin) + grid.extent
    velocity = np.zeros_like(x)
    for _ in range(bumps):
        center = rng.uniform(low, high)
        direction = rng.normal(size=grid.dim)
        direction /= max(np.linalg.norm(direction), 1e-12)
        vector = direction * rng.uniform(0.0, amplitude)
        weight = np.exp(-np.sum((x - center) ** 2, axis=1) / (2.0 * width**2))
        velocity += weight[:, None] * vector
    return DenseField(grid, velocity.reshape(grid.dims + (grid.dim,)))


def thinning_velocity(grid: Grid, center: np.ndarray, config: CohortConfig, magnitude: float) -> DenseField:
    """Radial velocity pushing samples away from the ring radius near the +axis-0 site.

    Warping by its flow makes the ring look thinner there; the peak speed is
    ``magnitude`` mm.
    """
    x = grid.points() - center
    radius = np.linalg.norm(x, axis=1)
    safe = np.where(radius > 1e-9, radius, 1.0)
    e_r = np.where(radius[:, None] > 1e-9, x / safe[:, None], 0.0)
    rho = (radius - config.ring_radius) / config.ring_thickness
    radial = rho * np.exp(-(rho**2) / 8.0) / (2.0 * np.exp(-0.5))
    cos_angle = np.where(radius > 1e-9, x[:, 0] / safe, 0.0)
    window = np.exp(-(1.0 - cos_angle) / config.progression_window**2)
    velocity = (magnitude * radial * window)[:, None] * e_r
    return DenseField(grid, velocity.reshape(grid.dims + (grid.dim,)))


@dataclass(frozen=True)
class SubjectMaps:
    """Ground-truth maps of one subject at both timepoints."""

    to_template: Tuple[TransformField, TransformField]
    from_template: Tuple[TransformField, TransformField]


def subject_maps(velocity: DenseField, velocity_t1: DenseField, steps: int) -> SubjectMaps:
    to_t0, from_t0 = exp_svf(velocity, steps), exp_svf(velocity.scaled(-1.0), steps)
    extra, extra_inverse = exp_svf(velocity_t1, steps), exp_svf(velocity_t1.scaled(-1.0), steps)
    return SubjectMaps(
        to_template=(to_t0, compose(to_t0, extra)),
        from_template=(from_t0, compose(extra_inverse, from_t0)),
    )


@dataclass(frozen=True)
class Subject:
    subject_id: str
    image_t0: Image
    image_t1: Image
    velocity: DenseField
    velocity_t1: DenseField
    maps: SubjectMaps
    gt_landmarks: LandmarkSet
    gt_landmarks_t1: LandmarkSet
    label: int
    progression: float
    template_hash: str

    @property
    def map_t0(self) -> TransformField:
        """Template -> subject (t0) ground-truth map."""
        return self.maps.from_template[0]

    def image(self, timepoint: int) -> Image:
        return (self.image_t0, self.image_t1)[_timepoint(timepoint)]

    def landmarks(self, timepoint: int) -> LandmarkSet:
        return (self.gt_landmarks, self.gt_landmarks_t1)[_timepoint(timepoint)]

    def to_template(self, timepoint: int) -> TransformField:
        return self.maps.to_template[_timepoint(timepoint)]

    def from_template(self, timepoint: int) -> TransformField:
        return self.maps.from_template[_timepoint(timepoint)]


def _timepoint(timepoint: int) -> int:
    if timepoint not in TIMEPOINTS:
        raise DataError(f"timepoint must be 0 or 1, got {timepoint!r}")
    return timepoint


def thinning_magnitude(progression: float, config: CohortConfig) -> float:
    """Zero at or below the threshold; between half and full progression_mm above it."""
    threshold = config.progression_threshold
    if progression <= threshold:
        return 0.0
    return config.progression_mm * (0.5 + 0.5 * (progression - threshold) / (1.0 - threshold))


def sample_subject(config: CohortConfig, subject_seed: int, progression: Optional[float] = None,
                   subject_id: str = "000", template: Optional[Template] = None) -> Subject:
    """One subject drawn from ``subject_seed``; folding maps are redrawn with a warning."""
    template = template if template is not None else make_template(config)
    rng = np.random.default_rng(subject_seed)
    if progression is None:
        progression = float(rng.uniform())
    label = int(progression > config.progression_threshold)
    magnitude = thinning_magnitude(progression, config)
    grid = template.grid

    for attempt in range(config.max_resamples + 1):
        velocity = random_velocity(grid, rng, config.svf_bumps, config.svf_amplitude, config.svf_width)
        nuisance = random_velocity(grid, rng, config.svf_bumps, config.nuisance_amplitude, config.svf_width)
        from_t0 = exp_svf(velocity.scaled(-1.0), config.svf_steps)
        site = from_t0.apply(template.center[None, :])[0]
        thinning = thinning_velocity(grid, site, config, magnitude)
        velocity_t1 = DenseField(grid, nuisance.vectors + thinning.vectors)
        maps = subject_maps(velocity, velocity_t1, config.svf_steps)
        folds = max(negative_jacobian_fraction(m) for m in maps.to_template)
        if folds <= config.fold_threshold:
            break
        logger.warning("Resampling folding subject map", subject=subject_id, attempt=attempt,
                       negative_jacobian_fraction=round(folds, 4))
    else:
        raise NumericError(
            f"subject {subject_id}: maps still fold after {config.max_resamples} resamples "
            f"(negative-Jacobian fraction {folds:.4f})"
        )

    images = []
    for timepoint in TIMEPOINTS:
        values = warp_image(template.image, maps.to_template[timepoint]).values
        if config.noise_std > 0:
            values = values + rng.normal(0.0, config.noise_std, size=values.shape)
        images.append(Image(grid, values))

    return Subject(
        subject_id=subject_id,
        image_t0=images[0],
        image_t1=images[1],
        velocity=velocity,
        velocity_t1=velocity_t1,
        maps=maps,
        gt_landmarks=LandmarkSet(maps.from_template[0].apply(template.points), source_id=f"{subject_id}_t0"),
        gt_landmarks_t1=LandmarkSet(maps.from_template[1].apply(template.points), source_id=f"{subject_id}_t1"),
        label=label,
        progression=float(progression),
        template_hash=template.content_hash(),
    )


def progression_values(config: CohortConfig) -> np.ndarray:
    """Stratified progression draws: the labels split as evenly as the threshold allows."""
    rng = np.random.default_rng([config.seed, 7])
    n = config.num_subjects
    return (rng.permutation(n) + rng.uniform(size=n)) / n


def subject_seeds(config: CohortConfig) -> List[int]:
    return [int(s) for s in np.random.default_rng(config.seed).integers(0, 2**31 - 1, size=config.num_subjects)]


def subject_name(index: int) -> str:
    return f"{index:03d}"


def image_id(subject_id: str, timepoint: int) -> str:
    return f"{subject_id}_t{_timepoint(timepoint)}"


def parse_image_id(value: str) -> Tuple[str, int]:
    subject_id, sep, tp = value.rpartition("_t")
    if not sep or tp not in ("0", "1"):
        raise DataError(f"malformed image id {value!r}; expected <subject>_t0 or <subject>_t1")
    return subject_id, int(tp)


@dataclass
class Cohort:
    config: CohortConfig
    template: Template
    subjects: List[Subject]

    def __post_init__(self):
        self._by_id: Dict[str, Subject] = {s.subject_id: s for s in self.subjects}

    @property
    def grid(self) -> Grid:
        return self.template.grid

    def subject(self, subject_id: str) -> Subject:
        try:
            return self._by_id[subject_id]
        except KeyError:
            raise DataError(f"unknown subject {subject_id!r}") from None

    @property
    def train_subjects(self) -> List[Subject]:
        return self.subjects[: self.config.num_train]

    @property
    def test_subjects(self) -> List[Subject]:
        return self.subjects[self.config.num_train:]

    def image_ids(self, subjects: Optional[List[Subject]] = None) -> List[str]:
        subjects = self.subjects if subjects is None else subjects
        return [image_id(s.subject_id, tp) for s in subjects for tp in TIMEPOINTS]

    def image(self, value: str) -> Image:
        subject_id, timepoint = parse_image_id(value)
        return self.subject(subject_id).image(timepoint)

    def labels(self) -> pd.DataFrame:
        return pd.DataFrame({
            "subject_id": [s.subject_id for s in self.subjects],
            "label": [s.label for s in self.subjects],
            "progression": [s.progression for s in self.subjects],
            "split": ["train" if i < self.config.num_train else "test" for i in range(len(self.subjects))],
        })

    def payload_hash(self) -> str:
        chunks = [np.ascontiguousarray(s.image(tp).values, dtype="<f8").tobytes()
                  for s in self.subjects for tp in TIMEPOINTS]
        return sha256_bytes(*chunks)


def generate_cohort(config: CohortConfig) -> Cohort:
    template = make_template(config)
    progressions = progression_values(config)
    seeds = subject_seeds(config)
    logger.info("Generating cohort", subjects=config.num_subjects, dims=config.image_dims, seed=config.seed)

    def build(index: int) -> Subject:
        return sample_subject(config, seeds[index], float(progressions[index]), subject_name(index), template)

    with ThreadPoolExecutor(max_workers=settings.threads) as pool:
        subjects = list(pool.map(build, range(config.num_subjects)))
    cohort = Cohort(config, template, subjects)
    logger.info("Cohort ready", positives=int(sum(s.label for s in subjects)), hash=cohort.payload_hash()[:12])
    return cohort


def _landmark_frame(points: np.ndarray) -> pd.DataFrame:
    frame = pd.DataFrame(points, columns=list(AXES[: points.shape[1]]))
    frame.insert(0, "index", np.arange(points.shape[0]))
    return frame


def _read_landmarks(path: Path, dim: int) -> np.ndarray:
    if not path.is_file():
        raise DataError(f"missing landmark file: {path}")
    frame = pd.read_csv(path)
    columns = list(AXES[:dim])
    if list(frame.columns) != ["index"] + columns:
        raise DataError(f"{path}: expected columns {['index'] + columns}, got {list(frame.columns)}")
    return frame[columns].to_numpy(dtype=np.float64)


def write_cohort(cohort: Cohort, directory: Union[str, Path], force: bool = False) -> Path:
    directory = Path(directory)
    if directory.exists() and any(directory.iterdir()) and not force:
        raise ConfigError(f"output directory {directory} is not empty (use --force to overwrite)")
    directory.mkdir(parents=True, exist_ok=True)
    for s in cohort.subjects:
        stem = directory / f"subject_{s.subject_id}"
        save_image(f"{stem}_t0.ltf", s.image_t0)
        save_image(f"{stem}_t1.ltf", s.image_t1)
        save_field(f"{stem}_map.ltf", s.map_t0)
        save_field(f"{stem}_svf.ltf", s.velocity)
        save_field(f"{stem}_svf_t1.ltf", s.velocity_t1)
        _landmark_frame(s.gt_landmarks.points).to_csv(f"{stem}_gt.csv", index=False)
        _landmark_frame(s.gt_landmarks_t1.points).to_csv(f"{stem}_gt_t1.csv", index=False)
    cohort.labels().to_csv(directory / "labels.csv", index=False)
    write_toml(directory / "cohort.toml", {
        "seed": cohort.config.seed,
        "template_hash": cohort.template.content_hash(),
        "payload_hash": cohort.payload_hash(),
        "cohort": cohort.config.model_dump(),
    })
    logger.info("Wrote cohort", path=str(directory), subjects=len(cohort.subjects))
    return directory


def read_labels(directory: Union[str, Path]) -> pd.DataFrame:
    path = Path(directory) / "labels.csv"
    if not path.is_file():
        raise DataError(f"missing labels file: {path}")
    frame = pd.read_csv(path, dtype={"subject_id": str})
    missing = {"subject_id", "label"} - set(frame.columns)
    if missing:
        raise DataError(f"{path}: missing columns {sorted(missing)}")
    if not frame["label"].isin([0, 1]).all():
        raise DataError(f"{path}: labels must be 0 or 1")
    return frame


def load_cohort(directory: Union[str, Path]) -> Cohort:
    """Read a cohort directory; maps are rebuilt from the stored velocity fields."""
    directory = Path(directory)
    manifest = read_toml(directory / "cohort.toml")
    if "cohort" not in manifest:
        raise DataError(f"{directory / 'cohort.toml'}: missing [cohort] section")
    try:
        config = CohortConfig.model_validate(manifest["cohort"])
    except ValueError as exc:
        raise DataError(f"{directory / 'cohort.toml'}: {exc}") from exc
    template = make_template(config)
    if manifest.get("template_hash", template.content_hash()) != template.content_hash():
        raise DataError(f"{directory}: template does not match the recorded template hash")
    labels = read_labels(directory)

    subjects = []
    for row in labels.itertuples(index=False):
        stem = directory / f"subject_{row.subject_id}"
        velocity = load_dense_field(f"{stem}_svf.ltf")
        velocity_t1 = load_dense_field(f"{stem}_svf_t1.ltf")
        images = [load_image(f"{stem}_t{tp}.ltf") for tp in TIMEPOINTS]
        for item in (velocity, velocity_t1, *images):
            if not item.grid.same_as(template.grid):
                raise DataError(f"{stem}: grid {item.grid.dims} differs from the cohort grid {template.grid.dims}")
        subjects.append(Subject(
            subject_id=row.subject_id,
            image_t0=images[0],
            image_t1=images[1],
            velocity=velocity,
            velocity_t1=velocity_t1,
            maps=subject_maps(velocity, velocity_t1, config.svf_steps),
            gt_landmarks=LandmarkSet(_read_landmarks(Path(f"{stem}_gt.csv"), config.dim), f"{row.subject_id}_t0"),
            gt_landmarks_t1=LandmarkSet(_read_landmarks(Path(f"{stem}_gt_t1.csv"), config.dim), f"{row.subject_id}_t1"),
            label=int(row.label),
            progression=float(getattr(row, "progression", float("nan"))),
            template_hash=template.content_hash(),
        ))
    logger.info("Loaded cohort", path=str(directory), subjects=len(subjects))
    return Cohort(config, template, subjects)
