import numpy as np
import pytest

from src.errors import DataError, ShapeMismatchError
from src.fields import (
    DenseField,
    Grid,
    Image,
    TransformField,
    compose,
    exp_svf,
    field_mse,
    identity_map,
    jacobian_determinant,
    mse,
    negative_jacobian_fraction,
    sample_field,
    warp_image,
)
from src.fields.ltf import (
    MAGIC,
    decode_tensor,
    encode_tensor,
    load_field,
    load_image,
    save_field,
    save_image,
)


def constant_field(grid: Grid, vector) -> TransformField:
    vectors = np.broadcast_to(np.asarray(vector, dtype=float), grid.dims + (grid.dim,))
    return TransformField(DenseField(grid, vectors))


def bump_velocity(grid: Grid, amplitude: float = 1.0, width: float = 8.0) -> DenseField:
    center = grid.origin + grid.extent / 2
    points = grid.points()
    weight = np.exp(-np.sum((points - center) ** 2, axis=1) / (2 * width**2))
    direction = np.array([1.0, -0.5])
    return DenseField(grid, (amplitude * weight[:, None] * direction).reshape(grid.dims + (2,)))


def multilinear_oracle(values: np.ndarray, point) -> np.ndarray:
    i0 = min(int(np.floor(point[0])), values.shape[0] - 2)
    j0 = min(int(np.floor(point[1])), values.shape[1] - 2)
    tx, ty = point[0] - i0, point[1] - j0
    return ((1 - tx) * (1 - ty) * values[i0, j0] + tx * (1 - ty) * values[i0 + 1, j0]
            + (1 - tx) * ty * values[i0, j0 + 1] + tx * ty * values[i0 + 1, j0 + 1])


class TestGrid:
    def test_extent_and_points(self):
        grid = Grid.regular((4, 5), spacing=(2.0, 0.5), origin=(1.0, -1.0))
        assert np.allclose(grid.extent, [6.0, 2.0])
        assert grid.points().shape == (20, 2)
        assert np.allclose(grid.points()[-1], [7.0, 1.0])

    def test_rejects_short_axis(self):
        with pytest.raises(ValueError):
            Grid.regular((1, 4))

    def test_rejects_non_positive_spacing(self):
        with pytest.raises(ValueError):
            Grid.regular((4, 4), spacing=(1.0, 0.0))

    def test_downsample_centers_cells(self):
        coarse = Grid.regular((96, 96)).downsample((8, 8))
        assert coarse.dims == (12, 12)
        assert coarse.spacing == (8.0, 8.0)
        assert coarse.origin == (3.5, 3.5)

    def test_downsample_requires_divisible_dims(self):
        with pytest.raises(DataError):
            Grid.regular((10, 10)).downsample((3, 3))

    def test_contains_closed_box(self):
        grid = Grid.regular((5, 5))
        inside = grid.contains(np.array([[0.0, 4.0], [4.0001, 2.0], [-0.1, 1.0]]))
        assert inside.tolist() == [True, False, False]


class TestIdentityMap:
    def test_maps_every_node_to_itself(self):
        grid = Grid.regular((8, 8))
        identity = identity_map(grid)
        assert np.all(identity.displacement.vectors == 0.0)
        assert np.array_equal(identity.map_points(), grid.points())

    def test_identity_warp_is_exact(self, rng):
        grid = Grid.regular((9, 7), spacing=(1.5, 0.7))
        image = Image(grid, rng.normal(size=grid.dims))
        warped = warp_image(image, identity_map(grid))
        assert np.array_equal(warped.values, image.values)

    def test_identity_composition(self, rng):
        grid = Grid.regular((8, 8))
        phi = TransformField(DenseField(grid, rng.normal(scale=0.5, size=(8, 8, 2))))
        left = compose(identity_map(grid), phi)
        right = compose(phi, identity_map(grid))
        assert np.max(np.abs(left.displacement.vectors - phi.displacement.vectors)) <= 1e-12
        assert np.max(np.abs(right.displacement.vectors - phi.displacement.vectors)) <= 1e-12


class TestSampleField:
    def test_exact_at_nodes(self, rng):
        grid = Grid.regular((6, 6))
        field = DenseField(grid, rng.normal(size=(6, 6, 2)))
        assert np.array_equal(sample_field(field, np.array([[2.0, 3.0]]))[0], field.vectors[2, 3])

    def test_linear_midpoint(self):
        image = Image(Grid.regular((2, 2)), np.array([[0.0, 0.0], [2.0, 2.0]]))
        assert sample_field(image, np.array([[0.5, 0.0]]))[0] == pytest.approx(1.0)

    def test_matches_direct_formula(self, rng):
        grid = Grid.regular((5, 5))
        values = rng.normal(size=(5, 5, 2))
        field = DenseField(grid, values)
        points = rng.uniform(0.0, 4.0, size=(20, 2))
        sampled = sample_field(field, points)
        expected = np.array([multilinear_oracle(values, p) for p in points])
        assert np.max(np.abs(sampled - expected)) <= 1e-12

    def test_ramp_is_reproduced(self):
        grid = Grid.regular((6, 4), spacing=(2.0, 1.0))
        ramp = Image(grid, (3.0 * grid.points()[:, 0] - 1.0).reshape(grid.dims))
        points = np.array([[0.3, 1.2], [7.7, 0.1], [5.05, 2.9]])
        assert np.allclose(sample_field(ramp, points), 3.0 * points[:, 0] - 1.0, atol=1e-12)

    def test_out_of_domain_clamps(self):
        image = Image(Grid.regular((3, 3)), np.arange(9.0).reshape(3, 3))
        assert sample_field(image, np.array([[-5.0, 0.0]]))[0] == 0.0
        assert sample_field(image, np.array([[10.0, 2.0]]))[0] == 8.0

    def test_nan_point_raises(self):
        image = Image(Grid.regular((3, 3)), np.zeros((3, 3)))
        with pytest.raises(DataError):
            sample_field(image, np.array([[np.nan, 0.0]]))


class TestWarpImage:
    def test_unit_shift_along_axis0(self, rng):
        grid = Grid.regular((8, 6))
        image = Image(grid, rng.normal(size=grid.dims))
        warped = warp_image(image, constant_field(grid, [1.0, 0.0]))
        assert np.allclose(warped.values[:-1], image.values[1:], atol=1e-12)

    def test_matches_per_pixel_loop(self, rng):
        grid = Grid.regular((7, 7))
        image = Image(grid, rng.normal(size=grid.dims))
        transform = TransformField(DenseField(grid, rng.normal(scale=0.6, size=(7, 7, 2))))
        warped = warp_image(image, transform)
        for i in range(7):
            for j in range(7):
                target = np.clip(np.array([i, j]) + transform.displacement.vectors[i, j], 0.0, 6.0)
                assert abs(warped.values[i, j] - multilinear_oracle(image.values, target)) <= 1e-12

    def test_dimensionality_mismatch(self):
        image = Image(Grid.regular((4, 4, 4)), np.zeros((4, 4, 4)))
        with pytest.raises(ShapeMismatchError):
            warp_image(image, identity_map(Grid.regular((4, 4))))


class TestCompose:
    def test_translations_add(self):
        grid = Grid.regular((10, 10))
        result = compose(constant_field(grid, [0.5, -0.4]), constant_field(grid, [0.3, 0.2]))
        assert np.allclose(result.displacement.vectors[2:-2, 2:-2], [0.8, -0.2], atol=1e-12)

    def test_grid_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            compose(identity_map(Grid.regular((4, 4))), identity_map(Grid.regular((5, 4))))

    def test_svf_inverse_consistency(self):
        grid = Grid.regular((32, 32))
        velocity = bump_velocity(grid)
        round_trip = compose(exp_svf(velocity), exp_svf(velocity.scaled(-1.0)))
        interior = round_trip.displacement.vectors[6:-6, 6:-6]
        assert np.max(np.linalg.norm(interior, axis=-1)) <= 0.05

    def test_associative_on_smooth_fields(self):
        grid = Grid.regular((24, 24))
        a = exp_svf(bump_velocity(grid, 0.8, 6.0))
        b = exp_svf(bump_velocity(grid, -0.6, 7.0))
        c = exp_svf(bump_velocity(grid, 0.5, 5.0))
        left = compose(compose(a, b), c)
        right = compose(a, compose(b, c))
        assert field_mse(left, right) < 1e-3


class TestExpSvf:
    def test_zero_velocity_is_identity(self):
        grid = Grid.regular((6, 6))
        phi = exp_svf(DenseField(grid, np.zeros((6, 6, 2))))
        assert np.all(phi.displacement.vectors == 0.0)

    def test_constant_velocity_translates(self):
        grid = Grid.regular((12, 12))
        c = np.array([0.7, -1.1])
        phi = exp_svf(DenseField(grid, np.broadcast_to(c, (12, 12, 2))))
        assert np.max(np.abs(phi.displacement.vectors[3:-3, 3:-3] - c)) <= 1e-6 * np.linalg.norm(c)

    def test_matches_euler_integration(self):
        grid = Grid.regular((32, 32))
        velocity = bump_velocity(grid, amplitude=1.5)
        points = grid.points()
        for _ in range(1024):
            points = points + sample_field(velocity, points) / 1024
        flow = exp_svf(velocity).map_points()
        error = np.linalg.norm(flow - points, axis=1).reshape(grid.dims)
        assert np.max(error[4:-4, 4:-4]) <= 0.02

    def test_steps_must_be_positive(self):
        grid = Grid.regular((4, 4))
        with pytest.raises(DataError):
            exp_svf(DenseField(grid, np.zeros((4, 4, 2))), steps=0)

    def test_identity_has_unit_jacobian(self):
        grid = Grid.regular((6, 6), spacing=(0.5, 2.0))
        assert np.allclose(jacobian_determinant(identity_map(grid)), 1.0)
        assert negative_jacobian_fraction(identity_map(grid)) == 0.0


class TestMse:
    def test_identical_images(self, rng):
        image = Image(Grid.regular((5, 5)), rng.normal(size=(5, 5)))
        assert mse(image, image) == 0.0

    def test_constant_offset(self, rng):
        grid = Grid.regular((5, 5))
        values = rng.normal(size=(5, 5))
        assert mse(Image(grid, values), Image(grid, values + 2.0)) == pytest.approx(4.0)

    def test_grid_mismatch(self):
        with pytest.raises(ShapeMismatchError):
            mse(Image(Grid.regular((4, 4)), np.zeros((4, 4))), Image(Grid.regular((4, 5)), np.zeros((4, 5))))

    def test_non_finite_image_rejected(self):
        with pytest.raises(DataError):
            Image(Grid.regular((2, 2)), np.array([[0.0, np.inf], [0.0, 0.0]]))


class TestLtf:
    def test_header_layout(self):
        blob = encode_tensor(np.zeros((2, 3)), 1, (1.0, 2.0), (0.0, 0.5))
        assert blob[:4] == MAGIC
        assert blob[4] == 1 and blob[5] == 2 and blob[6] == 1 and blob[7] == 0
        assert len(blob) == 8 + 2 * 24 + 6 * 8

    def test_bad_magic_names_offset(self):
        blob = b"XXXX" + encode_tensor(np.zeros((2, 2)))[4:]
        with pytest.raises(DataError, match="byte 0"):
            decode_tensor(blob)

    def test_truncated_payload(self):
        blob = encode_tensor(np.zeros((3, 3)))[:-8]
        with pytest.raises(DataError, match="expected 72"):
            decode_tensor(blob)

    def test_image_file(self, tmp_path, rng):
        grid = Grid.regular((4, 6), spacing=(0.5, 1.5), origin=(2.0, -3.0))
        image = Image(grid, rng.normal(size=grid.dims))
        loaded = load_image(save_image(tmp_path / "image.ltf", image))
        assert loaded.grid.same_as(grid)
        assert np.array_equal(loaded.values, image.values)

    def test_field_dtype_check(self, tmp_path):
        grid = Grid.regular((3, 3))
        path = tmp_path / "phi.ltf"
        save_field(path, identity_map(grid))
        assert load_field(path, "float64").grid.same_as(grid)
        with pytest.raises(DataError, match="byte 4"):
            load_field(path, "float32")

    def test_image_is_not_a_field(self, tmp_path):
        path = save_image(tmp_path / "image.ltf", Image(Grid.regular((3, 3)), np.zeros((3, 3))))
        with pytest.raises(DataError, match="byte 6"):
            load_field(path)
