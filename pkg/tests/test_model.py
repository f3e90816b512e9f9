import numpy as np
import pytest

from src.autodiff import Tape, check_gradients, primitives as P
from src.errors import DataError, ShapeMismatchError
from src.fields import Grid, Image
from src.model import (
    LandmarkSet,
    ModelConfig,
    extract_features,
    init_model,
    load_checkpoint,
    parameter_hash,
    propose,
    propose_points,
    save_checkpoint,
)
from tests.conftest import small_model_config


@pytest.fixture
def model(model_config):
    return init_model(model_config, seed=3)


@pytest.fixture
def image(rng):
    return Image(Grid.regular((32, 32)), rng.normal(size=(32, 32)))


class TestInitModel:
    def test_zero_head_proposes_grid_points(self, model, image):
        landmarks = propose(model, image)
        assert np.array_equal(landmarks.points, model.grid_points())

    def test_same_seed_same_parameters(self, model_config):
        a, b = init_model(model_config, seed=7), init_model(model_config, seed=7)
        assert parameter_hash(a) == parameter_hash(b)
        assert parameter_hash(a) != parameter_hash(init_model(model_config, seed=8))

    def test_default_configuration_has_144_landmarks(self):
        model = init_model(ModelConfig())
        assert model.num_landmarks == 144
        assert model.feature_grid.dims == (12, 12)

    def test_volumetric_grid_landmark_count(self):
        config = ModelConfig(image_dims=(20, 48, 48), image_spacing=(1.0, 1.0, 1.0), image_origin=(0.0, 0.0, 0.0),
                             grid_dims=(10, 24, 24), channels=2, hidden_channels=2, head_hidden=2)
        assert init_model(config).num_landmarks == 5760

    def test_grid_must_divide_image(self):
        with pytest.raises(DataError):
            init_model(small_model_config(grid_dims=(5, 5)))

    def test_grid_nodes_sit_at_cell_centers(self, model):
        assert model.feature_grid.origin == (3.5, 3.5)
        assert model.feature_grid.spacing == (8.0, 8.0)


class TestExtractFeatures:
    def test_shape(self, model, image):
        features = extract_features(model, image)
        assert features.shape == (16, 4)

    def test_zero_image_gives_zero_features(self, model):
        features = extract_features(model, Image(Grid.regular((32, 32)), np.zeros((32, 32))))
        assert np.all(features.value == 0.0)

    def test_deterministic(self, model, image):
        assert np.array_equal(extract_features(model, image).value, extract_features(model, image).value)

    def test_image_dims_mismatch(self, model):
        with pytest.raises(ShapeMismatchError):
            extract_features(model, Image(Grid.regular((16, 16)), np.zeros((16, 16))))

    def test_gradient_wrt_image(self, model, rng):
        def fn(tape, p):
            params = model.leaves(tape, requires_grad=False)
            return P.mean(extract_features(model, p["image"], tape, params))

        report = check_gradients(fn, {"image": rng.normal(size=(32, 32))}, coordinates_per_parameter=40)
        assert report.max_relative_error <= 1e-5


class TestPropose:
    def test_head_bias_shifts_every_landmark(self, model, image):
        params = dict(model.params)
        params["head.out.bias"] = np.array([1.0, 0.0])
        shifted = propose(model.with_params(params), image)
        assert np.allclose(shifted.points - model.grid_points(), [1.0, 0.0], atol=1e-12)

    def test_order_is_row_major_grid_order(self, model, rng):
        a = propose(model, Image(Grid.regular((32, 32)), rng.normal(size=(32, 32))), "a")
        b = propose(model, Image(Grid.regular((32, 32)), rng.normal(size=(32, 32))), "b")
        assert len(a) == len(b) == 16
        assert np.array_equal(a.points[1], [3.5, 11.5])
        assert a.source_id == "a"

    def test_bounded_displacement(self, image):
        model = init_model(small_model_config(bound_displacement=0.25), seed=0)
        params = dict(model.params)
        params["head.out.bias"] = np.array([50.0, -50.0])
        points = propose(model.with_params(params), image).points
        assert np.all(np.abs(points - model.grid_points()) <= 0.25 * 8.0 + 1e-12)

    def test_float32_parameters(self, model, image):
        tape = Tape()
        points = propose_points(model, image, tape, model.leaves(tape, dtype=np.float32))
        assert points.value.dtype == np.float32

    def test_landmark_set_shape_check(self):
        with pytest.raises(ShapeMismatchError):
            LandmarkSet(np.zeros((4, 4)))


class TestCheckpoint:
    def test_round_trip_preserves_hash(self, model, tmp_path):
        params = {name: value + 0.01 for name, value in model.params.items()}
        trained = model.with_params(params)
        loaded = load_checkpoint(save_checkpoint(trained, tmp_path / "ckpt", epoch=3))
        assert parameter_hash(loaded) == parameter_hash(trained)
        assert loaded.config == trained.config

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(DataError):
            load_checkpoint(tmp_path)

    def test_shape_mismatch_is_reported(self, model, tmp_path):
        from src.fields.ltf import save_tensor

        directory = save_checkpoint(model, tmp_path / "ckpt")
        save_tensor(directory / "head.out.bias.ltf", np.zeros(3))
        with pytest.raises(DataError, match="head.out.bias"):
            load_checkpoint(directory)
