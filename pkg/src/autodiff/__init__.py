from .tape import Tape, DiffValue, Gradients, backward
from .gradcheck import GradientReport, check_gradients
from . import primitives
from .primitives import record

__all__ = ["Tape", "DiffValue", "Gradients", "backward", "GradientReport", "check_gradients", "primitives", "record"]
