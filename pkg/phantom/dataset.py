"""
Phantom Dataset

Writes paired mask/image files and a JSON-lines manifest. The first line of
every manifest is a header record with the class table and config hash; each
following line describes one sample.
"""

import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np

from data.exporter import DataExporter
from data.images import load_image, load_mask, save_image, save_mask
from utils.seeding import numpy_rng
from .classes import class_table
from .geometry import PhantomParams, sample_mask_geometry
from .speckle import render_speckle, sample_speckle_scale

logger = logging.getLogger(__name__)

MANIFEST_VERSION = 1


@dataclass
class ManifestRecord:
    """One sample: relative file paths plus provenance."""

    id: str
    mask: str
    image: Optional[str]
    split: str
    seed: int
    index: int
    context_id: Optional[str] = None
    extra: Dict = field(default_factory=dict)

    def to_dict(self) -> Dict:
        record = asdict(self)
        if record['context_id'] is None:
            del record['context_id']
        if not record['extra']:
            del record['extra']
        return record

    @classmethod
    def from_dict(cls, data: Dict) -> "ManifestRecord":
        return cls(
            id=str(data['id']),
            mask=data['mask'],
            image=data.get('image'),
            split=data['split'],
            seed=int(data.get('seed', 0)),
            index=int(data.get('index', 0)),
            context_id=data.get('context_id'),
            extra=dict(data.get('extra', {})),
        )


class DatasetManifest:
    """Ordered list of manifest records rooted at a directory."""

    def __init__(self, root: Path, records: Iterable[ManifestRecord] = (),
                 config_hash: str = '', kind: str = 'phantom'):
        self.root = Path(root)
        self.records: List[ManifestRecord] = list(records)
        self.config_hash = config_hash
        self.kind = kind

        ids = [r.id for r in self.records]
        if len(set(ids)) != len(ids):
            raise ValueError("Manifest sample ids must be unique")

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def ids(self) -> List[str]:
        return [r.id for r in self.records]

    def by_id(self, sample_id: str) -> ManifestRecord:
        for record in self.records:
            if record.id == sample_id:
                return record
        raise KeyError(sample_id)

    def split(self, name: str) -> List[ManifestRecord]:
        """Records belonging to one split, in manifest order."""
        return [r for r in self.records if r.split == name]

    def split_names(self) -> List[str]:
        seen = []
        for record in self.records:
            if record.split not in seen:
                seen.append(record.split)
        return seen

    def load_mask(self, record: ManifestRecord) -> np.ndarray:
        return load_mask(self.root / record.mask)

    def load_image(self, record: ManifestRecord) -> np.ndarray:
        if record.image is None:
            raise ValueError(f"Record {record.id} has no image")
        return load_image(self.root / record.image)

    def header(self) -> Dict:
        return {
            'kind': 'header',
            'manifest_kind': self.kind,
            'version': MANIFEST_VERSION,
            'classes': class_table(),
            'config_hash': self.config_hash,
        }

    def write(self, path: Path):
        """Write header + records as JSON lines."""
        DataExporter.export_jsonl([self.header()] + [r.to_dict() for r in self.records], path)

    @classmethod
    def read(cls, path: Path, root: Optional[Path] = None) -> "DatasetManifest":
        """
        Read a manifest; relative paths resolve against `root` (default: its directory).
        """
        path = Path(path)
        records = []
        header: Dict = {}
        for data in DataExporter.read_jsonl(path):
            if data.get('kind') == 'header':
                header = data
                continue
            records.append(ManifestRecord.from_dict(data))

        if header and header.get('classes') != class_table():
            raise ValueError(f"{path}: class table differs from this version's ClassId table")

        return cls(root if root is not None else path.parent, records,
                   config_hash=header.get('config_hash', ''),
                   kind=header.get('manifest_kind', 'phantom'))


def split_counts(n: int, split: Tuple[float, float]) -> Tuple[int, int]:
    """
    Number of train/test samples for a split.

    Both parts get at least one sample when both fractions are positive.
    """
    train_frac, test_frac = split
    if n < 2:
        raise ValueError(f"Dataset needs n >= 2, got {n}")
    if train_frac < 0 or test_frac < 0 or abs(train_frac + test_frac - 1.0) > 1e-9:
        raise ValueError(f"Split fractions must be non-negative and sum to 1, got {split}")
    n_train = int(np.floor(n * train_frac + 0.5))
    if train_frac > 0 and test_frac > 0:
        n_train = min(max(n_train, 1), n - 1)
    return n_train, n - n_train


def build_dataset(params: PhantomParams, n: int, split: Tuple[float, float],
                  out_dir: Path, config_hash: str = '') -> DatasetManifest:
    """
    Generate n phantoms, write their files and a manifest.

    Args:
        params: Phantom parameters
        n: Number of samples (>= 2)
        split: (train_frac, test_frac), summing to 1
        out_dir: Output directory (masks/, images/, manifest.jsonl)
        config_hash: Pipeline config hash recorded in the header

    Returns:
        The written DatasetManifest
    """
    params.validate()
    n_train, n_test = split_counts(n, split)

    out_dir = Path(out_dir)
    order = numpy_rng(params.rng_seed, 0, 99).permutation(n)
    test_indices = set(int(i) for i in order[:n_test])

    records = []
    for index in range(n):
        sample_id = f"p{index:05d}"
        mask = sample_mask_geometry(params, index)
        image = render_speckle(mask, params, index)

        mask_rel = f"masks/{sample_id}.png"
        image_rel = f"images/{sample_id}.png"
        save_mask(out_dir / mask_rel, mask)
        save_image(out_dir / image_rel, image)

        records.append(ManifestRecord(
            id=sample_id,
            mask=mask_rel,
            image=image_rel,
            split='test' if index in test_indices else 'train',
            seed=params.rng_seed,
            index=index,
            extra={'speckle_scale': sample_speckle_scale(params, index)},
        ))

    manifest = DatasetManifest(out_dir, records, config_hash=config_hash)
    manifest.write(out_dir / 'manifest.jsonl')
    logger.info("Wrote %d phantoms (%d train / %d test) to %s",
                n, n_train, n_test, out_dir,
                extra={'n_train': n_train, 'n_test': n_test})
    return manifest
