from dataclasses import dataclass
from typing import List, Sequence, Tuple, Union

import numpy as np

from src.errors import DataError
from src.fields.grid import Image, TransformField
from src.synth.cohort import Cohort
from src.synth.registration import RegistrationProvider


@dataclass(frozen=True)
class Triplet:
    """Image ids (a, b, c); c is the anchor frame."""

    a: str
    b: str
    c: str

    @property
    def ids(self) -> Tuple[str, str, str]:
        return self.a, self.b, self.c


@dataclass(frozen=True)
class TripletData:
    triplet: Triplet
    images: Tuple[Image, Image, Image]
    phi_ca: TransformField
    phi_cb: TransformField


def sample_triplet(images: Union[Cohort, Sequence[str]], rng: np.random.Generator) -> Triplet:
    """Three distinct images drawn uniformly without replacement; the third is the anchor."""
    if isinstance(images, Cohort):
        images = images.image_ids(images.train_subjects)
    images = list(images)
    if len(images) < 3:
        raise DataError(f"need at least 3 images to sample a triplet, got {len(images)}")
    a, b, c = rng.choice(len(images), size=3, replace=False)
    return Triplet(images[a], images[b], images[c])


def load_triplet(cohort: Cohort, registration: RegistrationProvider, triplet: Triplet) -> TripletData:
    return TripletData(
        triplet=triplet,
        images=tuple(cohort.image(i) for i in triplet.ids),
        phi_ca=registration.to_anchor(triplet.a, triplet.c),
        phi_cb=registration.to_anchor(triplet.b, triplet.c),
    )


def fixed_triplets(images: Sequence[str], count: int, seed: int) -> List[Triplet]:
    rng = np.random.default_rng([seed, 99])
    return [sample_triplet(images, rng) for _ in range(count)]
