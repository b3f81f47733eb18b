"""
Context Selection

Index of style descriptors keyed by sample id, nearest-neighbour context
lookup by descriptor MSE, and same-split pairing of a dataset manifest.
"""

import json
import logging
import struct
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from phantom.dataset import DatasetManifest, ManifestRecord
from .conv_stack import ConvStack
from .descriptor import DEFAULT_LAYERS, extract_descriptors

logger = logging.getLogger(__name__)

DESCRIPTOR_MAGIC = b"CSGD"
DESCRIPTOR_VERSION = 1
_HEADER = struct.Struct("<4sIII")


class ContextIndex:
    """Descriptors of a set of samples, in insertion order."""

    def __init__(self, entries: Iterable[Tuple[str, np.ndarray]] = ()):
        self.ids: List[str] = []
        self._rows: List[np.ndarray] = []
        self._pos: Dict[str, int] = {}
        for sample_id, descriptor in entries:
            self.add(sample_id, descriptor)

    def add(self, sample_id: str, descriptor: np.ndarray):
        if sample_id in self._pos:
            raise ValueError(f"Duplicate sample id in index: {sample_id}")
        descriptor = np.asarray(descriptor, dtype=np.float64).ravel()
        if self._rows and descriptor.shape != self._rows[0].shape:
            raise ValueError(
                f"Descriptor length {descriptor.size} differs from index length {self._rows[0].size}")
        if not np.all(np.isfinite(descriptor)):
            raise ValueError(f"Descriptor of {sample_id} is not finite")
        self._pos[sample_id] = len(self.ids)
        self.ids.append(sample_id)
        self._rows.append(descriptor)

    def __len__(self) -> int:
        return len(self.ids)

    def __contains__(self, sample_id: str) -> bool:
        return sample_id in self._pos

    def descriptor(self, sample_id: str) -> np.ndarray:
        return self._rows[self._pos[sample_id]]

    def matrix(self) -> np.ndarray:
        if not self._rows:
            return np.zeros((0, 0))
        return np.stack(self._rows)

    def subset(self, ids: Sequence[str]) -> "ContextIndex":
        return ContextIndex((i, self.descriptor(i)) for i in ids)

    def save(self, path: Path):
        """
        Write descriptors as a binary file plus an ids sidecar (<path>.ids.json).

        Layout: magic, version, descriptor length, count (little-endian u32),
        then count contiguous float32 records.
        """
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        mat = self.matrix().astype('<f4')
        length = mat.shape[1] if mat.size else 0
        with open(path, 'wb') as f:
            f.write(_HEADER.pack(DESCRIPTOR_MAGIC, DESCRIPTOR_VERSION, length, len(self)))
            f.write(mat.tobytes())
        with open(ids_path(path), 'w') as f:
            json.dump(self.ids, f)

    @classmethod
    def load(cls, path: Path) -> "ContextIndex":
        path = Path(path)
        with open(path, 'rb') as f:
            raw = f.read()
        if len(raw) < _HEADER.size:
            raise ValueError(f"{path}: truncated descriptor file")
        magic, version, length, count = _HEADER.unpack_from(raw)
        if magic != DESCRIPTOR_MAGIC:
            raise ValueError(f"{path}: not a descriptor file")
        if version != DESCRIPTOR_VERSION:
            raise ValueError(f"{path}: unsupported descriptor version {version}")
        body = np.frombuffer(raw, dtype='<f4', offset=_HEADER.size)
        if body.size != length * count:
            raise ValueError(f"{path}: expected {count}x{length} floats, found {body.size}")
        with open(ids_path(path), 'r') as f:
            ids = json.load(f)
        if len(ids) != count:
            raise ValueError(f"{path}: id sidecar lists {len(ids)} ids for {count} records")
        mat = body.reshape(count, length).astype(np.float64)
        return cls(zip(ids, mat))


def ids_path(path: Path) -> Path:
    return Path(str(path) + '.ids.json')


def select_context(query_id: str, index: ContextIndex) -> str:
    """
    Most similar other sample by descriptor MSE.

    Args:
        query_id: Sample to find a context for
        index: Descriptor index containing the query

    Returns:
        Id of the argmin-MSE entry other than the query; ties go to the lowest id

    Raises:
        ValueError: index smaller than 2 or query absent
    """
    if len(index) < 2:
        raise ValueError(f"Context index needs >= 2 entries, has {len(index)}")
    if query_id not in index:
        raise ValueError(f"Query id {query_id!r} not in context index")

    mat = index.matrix()
    q = index.descriptor(query_id)
    mse = np.mean((mat - q) ** 2, axis=1)

    best: Optional[Tuple[float, str]] = None
    for sample_id, err in zip(index.ids, mse):
        if sample_id == query_id:
            continue
        key = (float(err), sample_id)
        if best is None or key < best:
            best = key
    return best[1]


def build_index(manifest: DatasetManifest, stack: ConvStack,
                layer_ids: Sequence[int] = DEFAULT_LAYERS,
                records: Optional[List[ManifestRecord]] = None) -> ContextIndex:
    """Descriptor index over manifest images (all records by default)."""
    records = list(manifest.records if records is None else records)
    images = [manifest.load_image(r) for r in records]
    desc = extract_descriptors(images, stack, layer_ids)
    return ContextIndex(zip((r.id for r in records), desc))


def build_pairs(manifest: DatasetManifest, stack: ConvStack,
                layer_ids: Sequence[int] = DEFAULT_LAYERS,
                index: Optional[ContextIndex] = None) -> Tuple[DatasetManifest, ContextIndex]:
    """
    Attach a context_id to every record, searching only its own split.

    Args:
        manifest: Dataset manifest with readable images
        stack: Frozen conv stack
        layer_ids: Descriptor layers
        index: Precomputed descriptor index (computed when omitted)

    Returns:
        (paired manifest, descriptor index over all records)

    Raises:
        ValueError: a split holds a single record
    """
    if index is None:
        index = build_index(manifest, stack, layer_ids)

    context_of: Dict[str, str] = {}
    for split in manifest.split_names():
        members = [r.id for r in manifest.split(split)]
        if len(members) < 2:
            raise ValueError(f"Split '{split}' has {len(members)} record(s); pairing needs >= 2")
        split_index = index.subset(members)
        for sample_id in members:
            context_of[sample_id] = select_context(sample_id, split_index)
        logger.info("Paired %d records in split '%s'", len(members), split)

    paired = []
    for record in manifest.records:
        paired.append(ManifestRecord(
            id=record.id, mask=record.mask, image=record.image, split=record.split,
            seed=record.seed, index=record.index,
            context_id=context_of[record.id], extra=dict(record.extra)))

    return DatasetManifest(manifest.root, paired, config_hash=manifest.config_hash,
                           kind='paired'), index
