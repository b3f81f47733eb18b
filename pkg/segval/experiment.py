"""
Segmentation Experiment

Trains the segmenter on a small real arm and on the same real arm plus
synthetic images, over several seeds, and compares mean DSC on the shared
real test split.
"""

import copy
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
import torch.nn.functional as F
from torch.utils.data import DataLoader, TensorDataset

from data.exporter import DataExporter
from data.logger import TrainingLogger
from diffusion.trainer import TrainingDivergedError
from metrics.segmentation import EMPTY_UNION, confusion, seg_scores
from phantom.classes import ClassId
from phantom.dataset import DatasetManifest, ManifestRecord
from utils.seeding import numpy_rng, torch_generator
from .model import SegModel

logger = logging.getLogger(__name__)

# Mean DSC reported for the clinical data set (all classes, DITF).
REFERENCE_DSC = {
    'control': {'mean_dsc_all': 0.46, 'mean_dsc_ditf': 0.39},
    'synthetic': {'mean_dsc_all': 0.58, 'mean_dsc_ditf': 0.48},
}
METRICS = ('mean_dsc_all', 'mean_dsc_ditf')


@dataclass
class SegArm:
    """Training data of one experiment arm."""

    name: str
    images: np.ndarray  # (n, H, W) float in [0, 1]
    masks: np.ndarray  # (n, H, W) uint8
    ids: List[str]


@dataclass
class ExperimentSpec:
    real_manifest: DatasetManifest
    synthetic_manifest: Optional[DatasetManifest] = None
    seeds: Sequence[int] = (0, 1, 2)
    epochs: int = 30
    classes: Sequence[int] = tuple(range(1, 8))
    batch_size: int = 8
    lr: float = 1e-3
    base_channels: int = 16
    levels: int = 4
    val_frac: float = 0.2
    real_train_limit: Optional[int] = 40
    subset_seed: int = 0

    @classmethod
    def from_config(cls, section: Dict, real_manifest: DatasetManifest,
                    synthetic_manifest: Optional[DatasetManifest], subset_seed: int) -> "ExperimentSpec":
        return cls(
            real_manifest=real_manifest,
            synthetic_manifest=synthetic_manifest,
            seeds=[int(s) for s in section['seeds']],
            epochs=int(section['epochs']),
            classes=[int(c) for c in section['classes']],
            batch_size=int(section['batch_size']),
            lr=float(section['lr']),
            base_channels=int(section['base_channels']),
            levels=int(section['levels']),
            val_frac=float(section['val_frac']),
            real_train_limit=section.get('real_train_limit'),
            subset_seed=subset_seed,
        )


def _load(manifest: DatasetManifest, records: Sequence[ManifestRecord]):
    images = np.stack([manifest.load_image(r) for r in records])
    masks = np.stack([manifest.load_mask(r) for r in records])
    return images, masks


def real_train_records(spec: ExperimentSpec) -> List[ManifestRecord]:
    """Seeded subset of the real training split (the control arm)."""
    records = spec.real_manifest.split('train')
    limit = spec.real_train_limit
    if limit is None or limit >= len(records):
        return records
    order = numpy_rng(spec.subset_seed, 7).permutation(len(records))[:int(limit)]
    return [records[i] for i in sorted(order)]


def build_arms(spec: ExperimentSpec) -> List[SegArm]:
    """Control arm, plus the synthetic-augmented arm when synthetic data exists."""
    real = real_train_records(spec)
    images, masks = _load(spec.real_manifest, real)
    arms = [SegArm('control', images, masks, [r.id for r in real])]
    if spec.synthetic_manifest is not None and len(spec.synthetic_manifest):
        s_images, s_masks = _load(spec.synthetic_manifest, spec.synthetic_manifest.records)
        arms.append(SegArm('synthetic',
                           np.concatenate([images, s_images]),
                           np.concatenate([masks, s_masks]),
                           [r.id for r in real] + [r.id for r in spec.synthetic_manifest.records]))
    return arms


def evaluate_predictions(preds: np.ndarray, gts: np.ndarray,
                         classes: Sequence[int]) -> Dict[str, Optional[float]]:
    """
    Mean per-image per-class DSC.

    Classes absent from both prediction and ground truth are skipped. DITF
    is averaged separately over the images where it occurs in either.

    Returns:
        Dict with mean_dsc_all and mean_dsc_ditf (None when never scored)
    """
    preds = np.asarray(preds)
    gts = np.asarray(gts)
    if preds.shape != gts.shape:
        raise ValueError(f"Prediction stack {preds.shape} differs from ground truth {gts.shape}")
    if preds.shape[0] == 0:
        raise ValueError("Empty test set")

    all_scores: List[float] = []
    ditf_scores: List[float] = []
    for pred, gt in zip(preds, gts):
        for cls in classes:
            scores = seg_scores(confusion(pred, gt, cls))
            if EMPTY_UNION in scores.flags:
                continue
            all_scores.append(scores.dsc)
            if cls == ClassId.DITF:
                ditf_scores.append(scores.dsc)

    return {
        'mean_dsc_all': float(np.mean(all_scores)) if all_scores else None,
        'mean_dsc_ditf': float(np.mean(ditf_scores)) if ditf_scores else None,
    }


Predictor = Union[SegModel, Callable[[np.ndarray], np.ndarray]]


def evaluate_segmenter(model: Predictor, test_manifest: DatasetManifest,
                       classes: Sequence[int], records: Optional[Sequence[ManifestRecord]] = None
                       ) -> Dict[str, Optional[float]]:
    """
    Score a segmenter on the test split of a manifest.

    Args:
        model: SegModel, or a callable mapping (B, H, W) images to (B, H, W) masks
        test_manifest: Manifest holding the test records
        classes: Class values to score
        records: Explicit records (default: the 'test' split)
    """
    records = list(test_manifest.split('test') if records is None else records)
    if not records:
        raise ValueError("Empty test set")
    images, gts = _load(test_manifest, records)
    preds = model.predict(images) if isinstance(model, SegModel) else model(images)
    return evaluate_predictions(preds, gts, classes)


def _split_validation(n: int, val_frac: float, seed: int):
    """Seeded (train, validation) index split; both are the whole arm when no image can be held out."""
    order = numpy_rng(seed, 11).permutation(n)
    n_val = int(np.floor(n * val_frac + 0.5))
    if n < 2 or n_val == 0:
        logger.warning("No validation hold-out (n=%d, val_frac=%g); checkpoint selection uses "
                       "the training images", n, val_frac,
                       extra={'n_train': n, 'val_frac': val_frac})
        return order, order
    n_val = min(n_val, n - 1)
    return order[n_val:], order[:n_val]


def train_segmenter(arm: SegArm, spec: ExperimentSpec, seed: int,
                    log_path: Optional[Path] = None) -> Tuple[SegModel, Dict]:
    """
    Train a segmenter on one arm with pixel-wise cross-entropy.

    The arm is split 80/20 (val_frac) into training and validation; the
    checkpoint with the best validation mean DSC is returned. Zero epochs
    returns the initialization.

    Returns:
        (model, history dict with step_losses and per-epoch rows)
    """
    model = SegModel.from_config({'base_channels': spec.base_channels, 'levels': spec.levels}, seed)
    train_idx, val_idx = _split_validation(len(arm.ids), spec.val_frac, seed)

    x = torch.from_numpy(arm.images[train_idx].astype(np.float32)).unsqueeze(1)
    y = torch.from_numpy(arm.masks[train_idx].astype(np.int64))
    loader = DataLoader(TensorDataset(x, y), batch_size=spec.batch_size, shuffle=True,
                        generator=torch_generator(seed))
    optimizer = torch.optim.AdamW(model.parameters(), lr=spec.lr)

    history = {'step_losses': [], 'epochs': []}
    best_state = copy.deepcopy(model.state_dict())
    best_dsc = -np.inf

    csv_log = TrainingLogger()
    if log_path is not None:
        csv_log.start_logging(log_path, ['epoch', 'loss', 'val_dsc'],
                              {'arm': arm.name, 'seed': seed})
    step = 0
    try:
        for epoch in range(1, spec.epochs + 1):
            model.train()
            epoch_losses = []
            for xb, yb in loader:
                optimizer.zero_grad()
                loss = F.cross_entropy(model(xb), yb)
                value = float(loss.detach())
                step += 1
                if not np.isfinite(value):
                    raise TrainingDivergedError(
                        f"Non-finite segmentation loss {value} at step {step} ({arm.name}, seed {seed})")
                loss.backward()
                optimizer.step()
                epoch_losses.append(value)
                history['step_losses'].append(value)

            val = model.predict(arm.images[val_idx])
            val_dsc = evaluate_predictions(val, arm.masks[val_idx], spec.classes)['mean_dsc_all']
            val_dsc = -np.inf if val_dsc is None else val_dsc
            row = {'epoch': epoch, 'loss': float(np.mean(epoch_losses)), 'val_dsc': val_dsc}
            history['epochs'].append(row)
            csv_log.log(row)
            if val_dsc > best_dsc:
                best_dsc = val_dsc
                best_state = copy.deepcopy(model.state_dict())
    finally:
        csv_log.stop_logging()

    model.load_state_dict(best_state)
    model.eval()
    return model, history


@dataclass
class ArmSummary:
    name: str
    n_train: int
    per_seed: List[Dict] = field(default_factory=list)

    def stats(self, metric: str) -> Dict[str, Optional[float]]:
        values = [r[metric] for r in self.per_seed if r.get(metric) is not None]
        if not values:
            return {'mean': None, 'sd': None}
        sd = float(np.std(values, ddof=1)) if len(values) > 1 else 0.0
        return {'mean': float(np.mean(values)), 'sd': sd}


@dataclass
class ComparisonReport:
    arms: Dict[str, Dict]
    improved: Dict[str, Optional[bool]]
    delta: Dict[str, Optional[float]]
    seeds: List[int]
    test_size: int
    reference_dsc: Dict = field(default_factory=lambda: copy.deepcopy(REFERENCE_DSC))
    external_baselines: Dict = field(default_factory=dict)
    metadata: Dict = field(default_factory=dict)

    def to_dict(self) -> Dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict) -> "ComparisonReport":
        return cls(**data)

    def rows(self) -> List[Dict]:
        rows = []
        for name, arm in self.arms.items():
            row = {'arm': name, 'n_train': arm['n_train']}
            for metric in METRICS:
                row[f"{metric}_mean"] = arm['stats'][metric]['mean']
                row[f"{metric}_sd"] = arm['stats'][metric]['sd']
            rows.append(row)
        return rows

    def save(self, out_dir: Path):
        """comparison.json and comparison.csv (one row per arm)."""
        out_dir = Path(out_dir)
        DataExporter.export_json(self.to_dict(), out_dir / 'comparison.json')
        DataExporter.export_csv(self.rows(), out_dir / 'comparison.csv', metadata=self.metadata)

    @classmethod
    def load(cls, path: Path) -> "ComparisonReport":
        with open(path, 'r') as f:
            return cls.from_dict(json.load(f))


def check_leakage(arms: Sequence[SegArm], test_ids: Sequence[str]):
    """Raise if any test id appears in a training arm."""
    test = set(test_ids)
    for arm in arms:
        overlap = test & set(arm.ids)
        if overlap:
            raise ValueError(f"Test ids leak into arm '{arm.name}': {sorted(overlap)[:5]}")


def compare_arms(spec: ExperimentSpec, log_dir: Optional[Path] = None,
                 progress_callback: Optional[Callable[[float, str], None]] = None) -> ComparisonReport:
    """
    Train and evaluate every arm for every seed.

    Raises:
        ValueError: fewer than 3 seeds, empty test split or test leakage
    """
    if len(spec.seeds) < 3:
        raise ValueError(f"compare_arms needs >= 3 seeds, got {len(spec.seeds)}")
    test_records = spec.real_manifest.split('test')
    if not test_records:
        raise ValueError("Empty test set")

    arms = build_arms(spec)
    check_leakage(arms, [r.id for r in test_records])
    return score_arms(arms, spec, test_records, log_dir, progress_callback)


def score_arms(arms: Sequence[SegArm], spec: ExperimentSpec,
               test_records: Sequence[ManifestRecord], log_dir: Optional[Path] = None,
               progress_callback: Optional[Callable[[float, str], None]] = None) -> ComparisonReport:
    """
    Train each arm once per seed and score it on the real test records.

    Delta is synthetic minus control mean DSC; None without a synthetic arm.
    """
    summaries = []
    jobs = len(arms) * len(spec.seeds)
    done = 0
    for arm in arms:
        summary = ArmSummary(arm.name, len(arm.ids))
        for seed in spec.seeds:
            log_path = None if log_dir is None else Path(log_dir) / f"seg_{arm.name}_seed{seed}.csv"
            model, history = train_segmenter(arm, spec, seed, log_path)
            scores = evaluate_segmenter(model, spec.real_manifest, spec.classes, test_records)
            summary.per_seed.append({'seed': seed, **scores,
                                     'final_loss': history['step_losses'][-1]
                                     if history['step_losses'] else None})
            done += 1
            logger.info("arm %s seed %d: dsc %s / ditf %s", arm.name, seed,
                        scores['mean_dsc_all'], scores['mean_dsc_ditf'],
                        extra={'arm': arm.name, 'seed': seed, **scores})
            if progress_callback:
                progress_callback(100.0 * done / jobs, f"{arm.name} seed {seed}")
        summaries.append(summary)

    arm_dicts = {
        s.name: {'n_train': s.n_train, 'per_seed': s.per_seed,
                 'stats': {m: s.stats(m) for m in METRICS}}
        for s in summaries
    }

    delta: Dict[str, Optional[float]] = {m: None for m in METRICS}
    improved: Dict[str, Optional[bool]] = {m: None for m in METRICS}
    if 'synthetic' in arm_dicts:
        for m in METRICS:
            a = arm_dicts['control']['stats'][m]['mean']
            b = arm_dicts['synthetic']['stats'][m]['mean']
            if a is not None and b is not None:
                delta[m] = b - a
                improved[m] = b > a

    return ComparisonReport(arms=arm_dicts, improved=improved, delta=delta,
                            seeds=list(spec.seeds), test_size=len(test_records))
