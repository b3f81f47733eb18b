"""Unit tests for the downstream segmentation experiment."""
import logging

import numpy as np
import pytest
import torch

from phantom.classes import ClassId
from phantom.dataset import DatasetManifest, ManifestRecord
from segval.experiment import (METRICS, ArmSummary, ComparisonReport, ExperimentSpec, SegArm,
                               _split_validation, build_arms, check_leakage, compare_arms,
                               evaluate_predictions, evaluate_segmenter, real_train_records,
                               score_arms, train_segmenter)
from segval.model import SegModel


def _synthetic(real: DatasetManifest) -> DatasetManifest:
    """Synthetic-looking manifest reusing the real training files under new ids."""
    records = [ManifestRecord(id=f"g{i:05d}", mask=r.mask, image=r.image, split='train',
                              seed=0, index=i, context_id=r.id)
               for i, r in enumerate(real.split('train')[:4])]
    return DatasetManifest(real.root, records, kind='synthetic')


@pytest.fixture
def spec(tiny_dataset):
    """Fixture providing a one-epoch experiment over the tiny dataset."""
    return ExperimentSpec(real_manifest=tiny_dataset, synthetic_manifest=_synthetic(tiny_dataset),
                          seeds=(0, 1, 2), epochs=1, batch_size=4, base_channels=4, levels=2,
                          real_train_limit=6)


class TestEvaluatePredictions:
    """Test mean per-class DSC."""

    def _masks(self):
        gt = np.zeros((2, 8, 8), dtype=np.uint8)
        gt[:, :4] = ClassId.MUSCLE
        gt[0, 5:7, 2:5] = ClassId.DITF
        return gt

    @pytest.mark.unit
    def test_perfect_prediction(self):
        gt = self._masks()
        assert evaluate_predictions(gt, gt, range(1, 8)) == {'mean_dsc_all': 1.0,
                                                            'mean_dsc_ditf': 1.0}

    def test_missed_ditf(self):
        gt = self._masks()
        pred = gt.copy()
        pred[pred == ClassId.DITF] = 0
        scores = evaluate_predictions(pred, gt, range(1, 8))
        # Muscle scores 1.0 in both images, DITF scores 0.0 in the first.
        assert scores['mean_dsc_all'] == pytest.approx(2.0 / 3.0)
        assert scores['mean_dsc_ditf'] == 0.0

    def test_absent_classes_not_scored(self):
        gt = np.zeros((1, 8, 8), dtype=np.uint8)
        assert evaluate_predictions(gt, gt, range(1, 8)) == {'mean_dsc_all': None,
                                                            'mean_dsc_ditf': None}

    def test_invalid(self):
        with pytest.raises(ValueError, match="Empty"):
            evaluate_predictions(np.zeros((0, 8, 8)), np.zeros((0, 8, 8)), [1])
        with pytest.raises(ValueError):
            evaluate_predictions(np.zeros((1, 8, 8)), np.zeros((2, 8, 8)), [1])

    def test_callable_segmenter(self, tiny_dataset):
        scores = evaluate_segmenter(lambda images: np.zeros(images.shape, dtype=np.uint8),
                                    tiny_dataset, range(1, 8))
        assert scores['mean_dsc_all'] == 0.0


class TestArms:
    """Test experiment arms and leakage checks."""

    def test_real_subset(self, spec):
        records = real_train_records(spec)
        assert len(records) == 6
        assert all(r.split == 'train' for r in records)
        assert [r.id for r in records] == sorted(r.id for r in records)
        assert [r.id for r in records] == [r.id for r in real_train_records(spec)]

    def test_synthetic_arm_extends_control(self, spec):
        control, synthetic = build_arms(spec)
        assert control.name == 'control' and synthetic.name == 'synthetic'
        assert synthetic.ids[:6] == control.ids
        assert len(synthetic.ids) == 10
        assert synthetic.images.shape == (10, 32, 32)
        assert np.array_equal(synthetic.masks[:6], control.masks)

    def test_control_only(self, tiny_dataset):
        arms = build_arms(ExperimentSpec(real_manifest=tiny_dataset))
        assert [a.name for a in arms] == ['control']
        assert len(arms[0].ids) == 8

    def test_leakage(self, spec):
        arms = build_arms(spec)
        check_leakage(arms, [r.id for r in spec.real_manifest.split('test')])
        with pytest.raises(ValueError, match="leak"):
            check_leakage(arms, [arms[0].ids[0]])


class TestTraining:
    """Test segmenter training."""

    def test_predict_shape(self):
        model = SegModel.from_config({'base_channels': 4, 'levels': 2}, seed=0)
        preds = model.predict(np.zeros((3, 16, 16)), batch_size=2)
        assert preds.shape == (3, 16, 16) and preds.dtype == np.uint8

    def test_one_epoch(self, spec, tmp_path):
        arm = build_arms(spec)[0]
        model, history = train_segmenter(arm, spec, seed=0, log_path=tmp_path / 'seg.csv')
        assert len(history['epochs']) == 1
        # Five training images in batches of four.
        assert len(history['step_losses']) == 2
        assert all(np.isfinite(history['step_losses']))
        assert not model.training
        assert (tmp_path / 'seg.csv').read_text().startswith('# arm: control')

    @pytest.mark.unit
    def test_deterministic(self, spec):
        arm = build_arms(spec)[0]
        a, _ = train_segmenter(arm, spec, seed=1)
        b, _ = train_segmenter(arm, spec, seed=1)
        for p, q in zip(a.state_dict().values(), b.state_dict().values()):
            assert torch.equal(p, q)

    def test_zero_epochs_returns_init(self, spec):
        spec.epochs = 0
        model, history = train_segmenter(build_arms(spec)[0], spec, seed=2)
        init = SegModel.from_config({'base_channels': 4, 'levels': 2}, seed=2)
        assert history['step_losses'] == []
        for p, q in zip(model.state_dict().values(), init.state_dict().values()):
            assert torch.equal(p, q)


class TestComparison:
    """Test the multi-seed arm comparison."""

    def test_arm_stats(self):
        summary = ArmSummary('control', 5, [{'mean_dsc_all': 0.5}, {'mean_dsc_all': 0.7},
                                            {'mean_dsc_all': None}])
        stats = summary.stats('mean_dsc_all')
        assert stats['mean'] == pytest.approx(0.6)
        assert stats['sd'] == pytest.approx(np.sqrt(0.02))
        assert summary.stats('mean_dsc_ditf') == {'mean': None, 'sd': None}

    def test_needs_three_seeds(self, spec):
        spec.seeds = (0, 1)
        with pytest.raises(ValueError, match="3 seeds"):
            compare_arms(spec)

    def test_report(self, spec, tmp_path):
        report = compare_arms(spec, log_dir=tmp_path / 'logs')
        assert set(report.arms) == {'control', 'synthetic'}
        assert report.seeds == [0, 1, 2]
        assert report.test_size == 2
        assert set(report.improved) == set(METRICS)
        assert report.arms['synthetic']['n_train'] == 10
        assert len(report.arms['control']['per_seed']) == 3
        assert report.reference_dsc['synthetic']['mean_dsc_all'] == 0.58
        assert len(list((tmp_path / 'logs').glob('seg_*_seed*.csv'))) == 6

        report.metadata = {'config_hash': 'h'}
        report.save(tmp_path)
        reloaded = ComparisonReport.load(tmp_path / 'comparison.json')
        assert reloaded.to_dict() == report.to_dict()
        assert len(report.rows()) == 2

    def test_identical_arms_have_zero_delta(self, spec, tmp_path):
        control = build_arms(spec)[0]
        twin = SegArm('synthetic', control.images.copy(), control.masks.copy(), list(control.ids))
        report = score_arms([control, twin], spec, spec.real_manifest.split('test'))
        assert report.delta['mean_dsc_all'] == pytest.approx(0.0, abs=1e-12)
        for metric in METRICS:
            if report.delta[metric] is not None:
                assert report.delta[metric] == pytest.approx(0.0, abs=1e-12)
                assert report.improved[metric] is False
        assert report.arms['control']['per_seed'] == report.arms['synthetic']['per_seed']

        report.save(tmp_path)
        reloaded = ComparisonReport.load(tmp_path / 'comparison.json')
        assert reloaded == report
        csv_text = (tmp_path / 'comparison.csv').read_text()
        assert 'mean_dsc_all_mean' in csv_text


class TestValidationSplit:
    """Test the hold-out used for checkpoint selection."""

    def test_default_fraction(self):
        train_idx, val_idx = _split_validation(10, 0.2, seed=0)
        assert len(val_idx) == 2 and len(train_idx) == 8
        assert sorted(np.concatenate([train_idx, val_idx]).tolist()) == list(range(10))

    def test_keeps_one_training_image(self):
        train_idx, val_idx = _split_validation(3, 0.9, seed=0)
        assert len(train_idx) == 1 and len(val_idx) == 2

    @pytest.mark.parametrize("n, val_frac", [(1, 0.2), (4, 0.0), (2, 0.1)])
    def test_no_hold_out_warns(self, n, val_frac, caplog):
        with caplog.at_level(logging.WARNING, logger='segval.experiment'):
            train_idx, val_idx = _split_validation(n, val_frac, seed=0)
        assert np.array_equal(train_idx, val_idx)
        assert "No validation hold-out" in caplog.text
