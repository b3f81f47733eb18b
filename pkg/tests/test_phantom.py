"""Unit tests for the phantom generator."""
import dataclasses

import numpy as np
import pytest

from phantom.classes import (NUM_CLASSES, REFERENCE_MEAN_FRACTION, TENDON_BAND, ClassId,
                             check_mask, class_fractions, class_table)
from phantom.dataset import DatasetManifest, build_dataset, split_counts
from phantom.geometry import PhantomParams, sample_mask_geometry
from phantom.speckle import render_speckle


class TestClassTable:
    """Test the fixed class taxonomy."""

    def test_eight_classes(self):
        assert NUM_CLASSES == 8
        assert [int(c) for c in ClassId] == list(range(8))
        assert class_table()['ditf'] == 4

    def test_from_name_variants(self):
        assert ClassId.from_name('Bone-Irregularity') is ClassId.BONE_IRREGULARITY
        assert ClassId.from_name('DITF') is ClassId.DITF
        with pytest.raises(KeyError):
            ClassId.from_name('femur')

    def test_fractions_sum_to_one(self):
        mask = np.zeros((16, 16), dtype=np.uint8)
        mask[:4] = ClassId.TENDON
        fractions = class_fractions(mask)
        assert fractions.sum() == pytest.approx(1.0)
        assert fractions[ClassId.TENDON] == pytest.approx(0.25)

    def test_check_mask_rejects_small(self):
        with pytest.raises(ValueError):
            check_mask(np.zeros((8, 8), dtype=np.uint8))


class TestPhantomParams:
    """Test parameter validation."""

    def test_canvas_too_small(self):
        with pytest.raises(ValueError, match="too small"):
            PhantomParams(canvas=(15, 32)).validate()

    def test_background_must_be_dark(self):
        params = PhantomParams()
        params.echogenicity = dict(params.echogenicity)
        params.echogenicity[ClassId.BACKGROUND] = 0.1
        with pytest.raises(ValueError):
            params.validate()

    def test_pathology_rate_range(self):
        with pytest.raises(ValueError):
            PhantomParams(pathology_rate=1.5).validate()

    def test_from_config(self, pipeline_config):
        params = PhantomParams.from_config(pipeline_config.section('phantom'), seed=5)
        assert params.rng_seed == 5
        assert params.canvas == (64, 64)
        assert params.echogenicity[ClassId.TENDON] == pytest.approx(0.65)


class TestMaskGeometry:
    """Test procedural mask layout."""

    @pytest.mark.unit
    def test_deterministic(self):
        params = PhantomParams(rng_seed=7)
        assert np.array_equal(sample_mask_geometry(params, 3), sample_mask_geometry(params, 3))

    def test_muscle_and_tendon_always_present(self, tiny_params):
        for index in range(20):
            mask = sample_mask_geometry(tiny_params, index)
            assert (mask == ClassId.MUSCLE).any()
            assert (mask == ClassId.TENDON).any()

    def test_no_ditf_without_pathology(self):
        params = PhantomParams(rng_seed=1, pathology_rate=0.0)
        for index in range(30):
            assert not (sample_mask_geometry(params, index) == ClassId.DITF).any()

    def test_ditf_inside_tendon_band(self):
        params = PhantomParams(rng_seed=2, pathology_rate=1.0)
        for index in range(30):
            mask = sample_mask_geometry(params, index)
            band = np.isin(mask, [int(c) for c in TENDON_BAND])
            rows = np.flatnonzero(band.any(axis=1))
            ditf_rows = np.flatnonzero((mask == ClassId.DITF).any(axis=1))
            assert ditf_rows.size > 0
            assert rows.min() <= ditf_rows.min() and ditf_rows.max() <= rows.max()

    @pytest.mark.slow
    def test_reference_fraction_calibration(self):
        """Class fractions within 50% of the reference means over 1000 masks."""
        params = PhantomParams(rng_seed=0, pathology_rate=0.5)
        masks = [sample_mask_geometry(params, i) for i in range(1000)]
        mean = np.mean([class_fractions(m) for m in masks], axis=0)
        for cls in (ClassId.BACKGROUND, ClassId.MUSCLE, ClassId.TENDON, ClassId.DITF):
            target = REFERENCE_MEAN_FRACTION[cls]
            assert abs(mean[cls] - target) <= 0.5 * target
        with_ditf = sum(bool((m == ClassId.DITF).any()) for m in masks)
        assert 450 <= with_ditf <= 550


class TestSpeckle:
    """Test image rendering."""

    def test_background_is_black(self, tiny_params):
        mask = np.zeros((32, 32), dtype=np.uint8)
        assert np.all(render_speckle(mask, tiny_params) == 0.0)

    @pytest.mark.unit
    def test_deterministic_and_bounded(self, tiny_params):
        mask = sample_mask_geometry(tiny_params, 0)
        a = render_speckle(mask, tiny_params, 4)
        b = render_speckle(mask, tiny_params, 4)
        assert np.array_equal(a, b)
        assert a.min() >= 0.0 and a.max() <= 1.0

    def test_uniform_mean(self):
        """Pixel mean of a uniform mask tracks its echogenicity."""
        params = PhantomParams(canvas=(256, 256))
        params.echogenicity = dict(params.echogenicity)
        params.echogenicity[ClassId.MUSCLE] = 0.5
        mask = np.full((256, 256), ClassId.MUSCLE, dtype=np.uint8)
        assert render_speckle(mask, params).mean() == pytest.approx(0.5, abs=0.02)

    def test_class_ordering(self):
        """Per-class mean intensities follow the echogenicity ranking."""
        params = PhantomParams(rng_seed=3, canvas=(128, 128))
        means = {}
        for cls in (ClassId.MUSCLE, ClassId.TENDON, ClassId.DITF):
            mask = np.full((128, 128), cls, dtype=np.uint8)
            means[cls] = render_speckle(mask, params).mean()
        assert means[ClassId.DITF] < means[ClassId.MUSCLE] < means[ClassId.TENDON]

    def test_shape_mismatch(self, tiny_params):
        with pytest.raises(ValueError, match="canvas"):
            render_speckle(np.zeros((16, 16), dtype=np.uint8), tiny_params)


class TestDataset:
    """Test dataset writing and manifests."""

    def test_default_split_counts(self):
        assert split_counts(388, (0.8, 0.2)) == (310, 78)
        assert split_counts(2, (0.5, 0.5)) == (1, 1)

    def test_invalid_split(self):
        with pytest.raises(ValueError):
            split_counts(1, (0.5, 0.5))
        with pytest.raises(ValueError):
            split_counts(10, (0.7, 0.2))

    def test_build_writes_files(self, tiny_dataset):
        assert len(tiny_dataset) == 10
        assert len(tiny_dataset.split('train')) == 8
        assert len(tiny_dataset.split('test')) == 2
        for record in tiny_dataset:
            assert (tiny_dataset.root / record.mask).exists()
            assert (tiny_dataset.root / record.image).exists()

    def test_split_disjoint_and_exhaustive(self, tiny_dataset):
        train = {r.id for r in tiny_dataset.split('train')}
        test = {r.id for r in tiny_dataset.split('test')}
        assert not train & test
        assert train | test == set(tiny_dataset.ids())

    @pytest.mark.unit
    def test_manifest_round_trip(self, tiny_dataset):
        reread = DatasetManifest.read(tiny_dataset.root / 'manifest.jsonl')
        assert [r.to_dict() for r in reread] == [r.to_dict() for r in tiny_dataset]
        assert reread.config_hash == 'abc123'

    def test_stored_files_match_generator(self, tiny_dataset, tiny_params):
        record = tiny_dataset.by_id('p00003')
        assert np.array_equal(tiny_dataset.load_mask(record),
                              sample_mask_geometry(tiny_params, 3))
        expected = render_speckle(sample_mask_geometry(tiny_params, 3), tiny_params, 3)
        assert np.allclose(tiny_dataset.load_image(record), expected, atol=1.0 / 65535)

    def test_class_table_checked_on_read(self, tiny_dataset, tmp_path):
        path = tiny_dataset.root / 'manifest.jsonl'
        lines = path.read_text().splitlines()
        lines[0] = lines[0].replace('"ditf": 4', '"ditf": 9')
        bad = tmp_path / 'bad.jsonl'
        bad.write_text("\n".join(lines) + "\n")
        with pytest.raises(ValueError, match="class table"):
            DatasetManifest.read(bad)

    def test_rebuild_is_identical(self, tmp_path, tiny_params):
        a = build_dataset(tiny_params, 4, (0.5, 0.5), tmp_path / 'a')
        b = build_dataset(dataclasses.replace(tiny_params), 4, (0.5, 0.5), tmp_path / 'b')
        for record in a:
            assert (a.root / record.image).read_bytes() == (b.root / record.image).read_bytes()
