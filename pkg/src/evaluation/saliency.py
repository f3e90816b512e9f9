import numpy as np

from src.autodiff import Tape, backward
from src.autodiff import primitives as P
from src.errors import DataError
from src.fields.grid import Image
from src.model.proposal import ProposalModel, extract_features, head_output


def saliency(model: ProposalModel, image: Image, index: int) -> Image:
    """|d ||psi_p(f_index)||^2 / dI| at every image node."""
    if not 0 <= index < model.num_landmarks:
        raise DataError(f"landmark index {index} out of range for {model.num_landmarks} landmarks")
    tape = Tape()
    params = model.leaves(tape, requires_grad=False)
    pixels = tape.leaf(np.asarray(image.values, dtype=np.float64), requires_grad=True, name="image")
    features = extract_features(model, pixels, tape, params)
    displacement = P.index_row(head_output(model, features, params), index)
    grads = backward(P.squared_norm(displacement))
    return Image(image.grid, np.abs(grads[pixels]).reshape(image.grid.dims))
