"""
Model Checkpoints

Binary layout: magic b"CSGM", version (u32), header length (u32), a JSON
header (model config, tensor names and shapes, schedule, config hash,
extras), then the tensors as contiguous little-endian float32 in header
order.
"""

import json
import struct
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np
import torch

from data.session import ConfigHashMismatchError
from .model import DenoiserModel
from .schedule import NoiseSchedule

CHECKPOINT_MAGIC = b"CSGM"
CHECKPOINT_VERSION = 1
_PREFIX = struct.Struct("<4sII")


class CheckpointError(ValueError):
    """Malformed or incompatible checkpoint file."""


def save_checkpoint(path: Path, model: DenoiserModel, sched: NoiseSchedule,
                    config_hash: str = '', extra: Optional[Dict] = None):
    """
    Write a model checkpoint.

    Args:
        path: Output file
        model: Denoiser to store
        sched: Its noise schedule
        config_hash: Pipeline config hash
        extra: Additional JSON-serializable header fields (e.g., guidance)
    """
    state = model.state_dict()
    tensors = [{'name': name, 'shape': list(t.shape)} for name, t in state.items()]
    header = {
        'model': model.config,
        'tensors': tensors,
        'schedule': sched.to_dict(),
        'config_hash': config_hash,
        'extra': extra or {},
    }
    header_bytes = json.dumps(header, sort_keys=True).encode('utf-8')

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'wb') as f:
        f.write(_PREFIX.pack(CHECKPOINT_MAGIC, CHECKPOINT_VERSION, len(header_bytes)))
        f.write(header_bytes)
        for t in state.values():
            f.write(t.detach().cpu().numpy().astype('<f4').tobytes())


def read_header(path: Path) -> Dict:
    """Checkpoint header without the weights."""
    header, _ = _read(path)
    return header


def _read(path: Path) -> Tuple[Dict, bytes]:
    path = Path(path)
    with open(path, 'rb') as f:
        raw = f.read()
    if len(raw) < _PREFIX.size:
        raise CheckpointError(f"{path}: truncated checkpoint")
    magic, version, header_len = _PREFIX.unpack_from(raw)
    if magic != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a model checkpoint")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    start = _PREFIX.size
    try:
        header = json.loads(raw[start:start + header_len].decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{path}: corrupt header: {e}") from e
    return header, raw[start + header_len:]


def load_checkpoint(path: Path, expected_hash: Optional[str] = None
                    ) -> Tuple[DenoiserModel, NoiseSchedule, Dict]:
    """
    Load a checkpoint.

    Args:
        path: Checkpoint file
        expected_hash: When given, the stored config hash must match

    Returns:
        (model in eval mode, schedule, header)
    """
    header, body = _read(path)
    if expected_hash is not None and header.get('config_hash') != expected_hash:
        raise ConfigHashMismatchError(
            f"{path} was written under config {header.get('config_hash')}, "
            f"current config is {expected_hash}")

    weights = np.frombuffer(body, dtype='<f4')
    model = DenoiserModel(**header['model'])
    state = model.state_dict()

    offset = 0
    loaded = {}
    for entry in header['tensors']:
        name, shape = entry['name'], tuple(entry['shape'])
        if name not in state or tuple(state[name].shape) != shape:
            raise CheckpointError(f"{path}: tensor {name} {shape} does not fit the model")
        count = int(np.prod(shape)) if shape else 1
        if offset + count > weights.size:
            raise CheckpointError(f"{path}: weights truncated at {name}")
        loaded[name] = torch.from_numpy(weights[offset:offset + count].reshape(shape).copy())
        offset += count
    if offset != weights.size:
        raise CheckpointError(f"{path}: {weights.size - offset} trailing weights")
    if set(loaded) != set(state):
        raise CheckpointError(f"{path}: missing tensors {sorted(set(state) - set(loaded))}")

    model.load_state_dict(loaded)
    model.eval()
    return model, NoiseSchedule.from_dict(header['schedule']), header
