from .config import TrainConfig
from .sampler import Triplet, TripletData, fixed_triplets, load_triplet, sample_triplet
from .optimizers import SGD, Adam, make_optimizer
from .log import STEP_COLUMNS, VALIDATION_COLUMNS, TrainLog
from .trainer import default_registration, lr_at, train, train_step, triplet_gradients, validate
from .degeneracy import SPREAD_COLUMNS, degeneracy_report, mean_spread, spread_trace

__all__ = [
    "TrainConfig",
    "Triplet",
    "TripletData",
    "fixed_triplets",
    "load_triplet",
    "sample_triplet",
    "SGD",
    "Adam",
    "make_optimizer",
    "STEP_COLUMNS",
    "VALIDATION_COLUMNS",
    "TrainLog",
    "default_registration",
    "lr_at",
    "train",
    "train_step",
    "triplet_gradients",
    "validate",
    "SPREAD_COLUMNS",
    "degeneracy_report",
    "mean_spread",
    "spread_trace",
]
