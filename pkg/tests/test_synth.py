import dataclasses
from unittest.mock import MagicMock

import numpy as np
import pytest

from src.errors import ConfigError, DataError, NumericError
from src.fields import compose, identity_map, mse, warp_image
from src.fields.ltf import save_field
from src.synth import (
    CohortConfig,
    FileRegistration,
    OracleRegistration,
    RegistrationCache,
    field_filename,
    generate_cohort,
    image_id,
    load_cohort,
    load_external_field,
    make_template,
    oracle_registration,
    parse_image_id,
    progression_values,
    read_labels,
    ring_profile,
    sample_subject,
    write_cohort,
)
from src.synth.cohort import thinning_magnitude
from tests.conftest import small_cohort_config


class TestTemplate:
    def test_ring_profile_peaks_at_radius(self, cohort_config):
        radii = np.linspace(0.0, 16.0, 161)
        profile = ring_profile(radii, cohort_config)
        assert radii[np.argmax(profile)] == pytest.approx(cohort_config.ring_radius)
        assert profile.max() == pytest.approx(1.0)

    def test_points_are_cardinals_then_blobs(self, cohort_config):
        template = make_template(cohort_config)
        r0 = cohort_config.ring_radius
        assert np.allclose(template.center, [15.5, 15.5])
        assert np.allclose(template.points[0], template.center + [r0, 0.0])
        assert np.allclose(template.points[1], template.center - [r0, 0.0])
        expected_blobs = template.center + np.array(cohort_config.resolved_blob_offsets()) * r0
        assert np.allclose(template.points[4:], expected_blobs)

    def test_deterministic(self, cohort_config):
        assert make_template(cohort_config).content_hash() == make_template(cohort_config).content_hash()

    def test_structure_outside_image(self):
        with pytest.raises(DataError):
            make_template(small_cohort_config(ring_radius=14.0))

    def test_volumetric_template(self):
        config = small_cohort_config(image_dims=(24, 24, 24), image_spacing=(1.0, 1.0, 1.0), ring_radius=6.0,
                                     ring_thickness=1.0, blob_radius=1.0)
        template = make_template(config)
        assert template.points.shape == (9, 3)


class TestSampleSubject:
    def test_zero_deformation_reproduces_template(self):
        config = small_cohort_config(svf_amplitude=0.0, nuisance_amplitude=0.0)
        template = make_template(config)
        subject = sample_subject(config, 11, progression=0.0, template=template)
        assert np.max(np.abs(subject.image_t0.values - template.image.values)) <= 1e-12
        assert np.allclose(subject.gt_landmarks.points, template.points, atol=1e-12)
        assert subject.label == 0

    def test_label_zero_means_no_thinning(self, cohort_config):
        assert thinning_magnitude(0.3, cohort_config) == 0.0
        assert thinning_magnitude(cohort_config.progression_threshold, cohort_config) == 0.0
        config = small_cohort_config(nuisance_amplitude=0.0)
        subject = sample_subject(config, 5, progression=0.2)
        assert np.all(subject.velocity_t1.vectors == 0.0)

    def test_thinning_magnitude_range(self, cohort_config):
        assert thinning_magnitude(0.5001, cohort_config) == pytest.approx(0.75, abs=1e-3)
        assert thinning_magnitude(1.0, cohort_config) == pytest.approx(1.5)

    def test_progressing_subject_is_labelled(self, cohort_config):
        subject = sample_subject(cohort_config, 5, progression=0.9)
        assert subject.label == 1
        assert np.max(np.abs(subject.image_t1.values - subject.image_t0.values)) > 0.05

    def test_landmarks_are_template_points_through_map(self, cohort):
        subject = cohort.subjects[0]
        expected = subject.map_t0.apply(cohort.template.points)
        assert np.max(np.abs(subject.gt_landmarks.points - expected)) <= 1e-9

    def test_same_seed_same_subject(self, cohort_config):
        a = sample_subject(cohort_config, 42, progression=0.7)
        b = sample_subject(cohort_config, 42, progression=0.7)
        assert np.array_equal(a.image_t1.values, b.image_t1.values)

    def test_folding_maps_exhaust_resamples(self, cohort_config, mocker):
        fraction = mocker.patch("src.synth.cohort.negative_jacobian_fraction", return_value=0.5)
        config = cohort_config.model_copy(update={"max_resamples": 2})
        with pytest.raises(NumericError, match="2 resamples"):
            sample_subject(config, 0, progression=0.1)
        assert fraction.call_count == 3 * 2

    def test_volumetric_subject(self):
        config = small_cohort_config(image_dims=(24, 24, 24), image_spacing=(1.0, 1.0, 1.0), ring_radius=6.0,
                                     ring_thickness=1.0, blob_radius=1.0, svf_bumps=2, svf_amplitude=1.0)
        subject = sample_subject(config, 3, progression=0.8)
        assert subject.image_t0.values.shape == (24, 24, 24)
        assert subject.gt_landmarks.points.shape == (9, 3)


class TestCohort:
    def test_split_and_ids(self, cohort):
        assert len(cohort.train_subjects) == 4 and len(cohort.test_subjects) == 2
        assert cohort.image_ids(cohort.test_subjects) == ["004_t0", "004_t1", "005_t0", "005_t1"]
        assert parse_image_id(image_id("004", 1)) == ("004", 1)

    def test_malformed_image_id(self, cohort):
        with pytest.raises(DataError):
            cohort.image("004")
        with pytest.raises(DataError):
            cohort.image("999_t0")

    def test_labels_are_balanced(self, cohort):
        assert cohort.labels()["label"].sum() == 3

    @pytest.mark.parametrize("seed", range(10))
    def test_default_label_balance(self, seed):
        config = CohortConfig(seed=seed)
        share = np.mean(progression_values(config) > config.progression_threshold)
        assert 0.4 <= share <= 0.6

    def test_payload_hash_is_reproducible(self):
        config = small_cohort_config(num_subjects=3, num_train=2, seed=9)
        assert generate_cohort(config).payload_hash() == generate_cohort(config).payload_hash()

    def test_write_and_load(self, cohort, tmp_path):
        directory = write_cohort(cohort, tmp_path / "cohort")
        names = {p.name for p in directory.iterdir()}
        assert {"labels.csv", "cohort.toml", "subject_000_t0.ltf", "subject_000_map.ltf", "subject_000_gt.csv"} <= names
        loaded = load_cohort(directory)
        assert loaded.payload_hash() == cohort.payload_hash()
        assert [s.label for s in loaded.subjects] == [s.label for s in cohort.subjects]
        assert np.allclose(loaded.subjects[2].gt_landmarks.points, cohort.subjects[2].gt_landmarks.points)

    def test_existing_directory_needs_force(self, cohort, tmp_path):
        (tmp_path / "keep.txt").write_text("x")
        with pytest.raises(ConfigError):
            write_cohort(cohort, tmp_path)

    def test_missing_labels(self, tmp_path):
        with pytest.raises(DataError, match="labels.csv"):
            read_labels(tmp_path)


@pytest.fixture(scope="module")
def gentle():
    return generate_cohort(small_cohort_config(num_subjects=2, num_train=2, svf_amplitude=1.0, svf_width=6.0))


class TestOracleRegistration:
    def test_self_registration_is_identity(self, cohort):
        subject = cohort.subjects[1]
        field = oracle_registration(subject, subject)
        assert np.max(np.abs(field.displacement.vectors)) <= 1e-6

    def test_warped_source_matches_target(self, cohort):
        target, source = cohort.subjects[0], cohort.subjects[1]
        warped = warp_image(source.image_t0, oracle_registration(target, source))
        assert mse(warped, target.image_t0) <= 0.01 * np.var(target.image_t0.values)

    def test_inverse_consistency(self, gentle):
        a, b = gentle.subjects
        round_trip = compose(oracle_registration(b, a), oracle_registration(a, b))
        interior = round_trip.displacement.vectors[6:-6, 6:-6]
        assert np.max(np.linalg.norm(interior, axis=-1)) <= 0.05

    def test_ground_truth_correspondence(self, cohort):
        registration = OracleRegistration(cohort)
        for a, b in [("000_t0", "001_t0"), ("002_t0", "003_t0")]:
            carried = registration.to_anchor(a, b).apply(cohort.subject(a[:3]).landmarks(int(a[-1])).points)
            expected = cohort.subject(b[:3]).landmarks(int(b[-1])).points
            assert np.max(np.linalg.norm(carried - expected, axis=1)) <= 0.1

    def test_different_templates(self, cohort):
        a = cohort.subjects[0]
        b = dataclasses.replace(cohort.subjects[1], template_hash="other")
        with pytest.raises(DataError):
            oracle_registration(a, b)


class TestFileRegistration:
    def test_external_field_round_trip(self, cohort, tmp_path):
        field = OracleRegistration(cohort).register("000_t0", "001_t0")
        save_field(tmp_path / field_filename("000_t0", "001_t0"), field)
        loaded = FileRegistration(tmp_path).register("000_t0", "001_t0")
        assert np.array_equal(loaded.displacement.vectors, field.displacement.vectors)

    def test_identity_file_warps_to_itself(self, cohort, tmp_path):
        path = save_field(tmp_path / "id.ltf", identity_map(cohort.grid))
        image = cohort.subjects[0].image_t0
        assert np.array_equal(warp_image(image, load_external_field(path)).values, image.values)

    def test_truncated_file(self, cohort, tmp_path):
        path = save_field(tmp_path / "id.ltf", identity_map(cohort.grid))
        path.write_bytes(path.read_bytes()[:-16])
        with pytest.raises(DataError, match="expected"):
            load_external_field(path)

    def test_missing_field(self, tmp_path):
        with pytest.raises(DataError, match="001_t0"):
            FileRegistration(tmp_path).register("000_t0", "001_t0")

    def test_missing_directory(self, tmp_path):
        with pytest.raises(DataError):
            FileRegistration(tmp_path / "nowhere")


class TestRegistrationCache:
    def test_memoizes_in_memory(self, cohort):
        provider = MagicMock()
        provider.register.return_value = identity_map(cohort.grid)
        cache = RegistrationCache(provider)
        cache.register("000_t0", "001_t0")
        cache.register("000_t0", "001_t0")
        cache.to_anchor("001_t0", "000_t0")
        assert provider.register.call_count == 2
        assert (cache.hits, cache.misses, len(cache)) == (1, 2, 2)

    def test_disk_cache_survives_instances(self, cohort, tmp_path):
        provider = MagicMock()
        provider.register.return_value = OracleRegistration(cohort).register("000_t0", "001_t1")
        RegistrationCache(provider, tmp_path).register("000_t0", "001_t1")
        again = RegistrationCache(provider, tmp_path).register("000_t0", "001_t1")
        assert provider.register.call_count == 1
        assert np.array_equal(again.displacement.vectors, provider.register.return_value.displacement.vectors)
