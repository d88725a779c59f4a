"""
Checkpoint Module
Self-describing model container: one text line, a JSON header, then float32 blobs
"""

import json
import logging
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional

import numpy as np

from config import ModelConfig
from errors import CheckpointError, ContractError
from preprocess import NormStats
from seq_model import SepsisModel, build_model

logger = logging.getLogger(__name__)

MAGIC = 'HEA-CHECKPOINT'
FORMAT_VERSION = 1
BLOB_DTYPE = np.dtype('<f4')


@dataclass
class Checkpoint:
    """
    Everything needed to rebuild a trained model for inference.

    tensors hold float32 copies of the parameters in creation order; the
    threshold chosen on validation lives in config.threshold.
    """
    config: ModelConfig
    norm_stats: NormStats
    tensors: 'OrderedDict[str, np.ndarray]'
    metadata: Dict = field(default_factory=dict)
    version: int = FORMAT_VERSION

    @classmethod
    def from_model(cls, model: SepsisModel, norm_stats: NormStats,
                   metadata: Optional[Dict] = None) -> 'Checkpoint':
        tensors = OrderedDict((name, value.astype(BLOB_DTYPE))
                              for name, value in model.params.state_dict().items())
        return cls(model.config, norm_stats, tensors, dict(metadata or {}))

    def build_model(self) -> SepsisModel:
        """Fresh model of the stored kind with the stored parameter values"""
        model = build_model(self.config)
        try:
            model.params.load_state_dict(self.tensors)
        except ContractError as e:
            raise CheckpointError(f"checkpoint does not fit a {self.config.model_kind} model: {e}") from e
        return model

    def to_bytes(self) -> bytes:
        directory = []
        offset = 0
        for name, value in self.tensors.items():
            directory.append({'name': name, 'shape': list(value.shape),
                              'offset': offset, 'count': int(value.size)})
            offset += int(value.size) * BLOB_DTYPE.itemsize
        header = {
            'format_version': self.version,
            'config': self.config.to_dict(),
            'norm_stats': self.norm_stats.to_dict(),
            'tensors': directory,
            'metadata': self.metadata,
            'blob_dtype': BLOB_DTYPE.str,
        }
        header_bytes = json.dumps(header, sort_keys=True, indent=1).encode('utf-8')
        first_line = f"{MAGIC} v{self.version} {len(header_bytes)}\n".encode('ascii')
        blobs = b''.join(np.ascontiguousarray(v, dtype=BLOB_DTYPE).tobytes()
                         for v in self.tensors.values())
        return first_line + header_bytes + blobs

    @classmethod
    def from_bytes(cls, data: bytes, source: str = '<bytes>') -> 'Checkpoint':
        newline = data.find(b'\n')
        if newline < 0:
            raise CheckpointError(f"{source}: missing checkpoint header line")
        parts = data[:newline].decode('ascii', errors='replace').split(' ')
        if len(parts) != 3 or parts[0] != MAGIC:
            raise CheckpointError(f"{source}: not a checkpoint file")
        if parts[1] != f"v{FORMAT_VERSION}":
            raise CheckpointError(f"{source}: unsupported checkpoint version {parts[1]} "
                                  f"(expected v{FORMAT_VERSION})")
        try:
            header_len = int(parts[2])
        except ValueError:
            raise CheckpointError(f"{source}: bad header length '{parts[2]}'")

        start = newline + 1
        try:
            header = json.loads(data[start:start + header_len].decode('utf-8'))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise CheckpointError(f"{source}: unreadable header ({e})")
        if header.get('format_version') != FORMAT_VERSION:
            raise CheckpointError(f"{source}: header version {header.get('format_version')} "
                                  f"does not match v{FORMAT_VERSION}")
        if header.get('blob_dtype') != BLOB_DTYPE.str:
            raise CheckpointError(f"{source}: unsupported blob dtype {header.get('blob_dtype')}")

        blob = data[start + header_len:]
        tensors = OrderedDict()
        expected_offset = 0
        for entry in header['tensors']:
            shape = tuple(entry['shape'])
            count = int(np.prod(shape, dtype=np.int64))
            if count != entry['count']:
                raise CheckpointError(f"{source}: tensor '{entry['name']}' stores {entry['count']} "
                                      f"values but its shape {shape} needs {count}")
            if entry['offset'] != expected_offset:
                raise CheckpointError(f"{source}: tensor '{entry['name']}' has offset {entry['offset']}, "
                                      f"expected {expected_offset}")
            end = expected_offset + count * BLOB_DTYPE.itemsize
            if end > len(blob):
                raise CheckpointError(f"{source}: truncated data for tensor '{entry['name']}'")
            tensors[entry['name']] = np.frombuffer(blob[expected_offset:end], dtype=BLOB_DTYPE).reshape(shape).copy()
            expected_offset = end
        if expected_offset != len(blob):
            raise CheckpointError(f"{source}: {len(blob) - expected_offset} trailing bytes after tensor data")

        try:
            config = ModelConfig.from_dict(header['config'])
            norm_stats = NormStats.from_dict(header['norm_stats'])
        except (ContractError, KeyError, TypeError) as e:
            raise CheckpointError(f"{source}: invalid config or normalization stats ({e})")
        return cls(config, norm_stats, tensors, header.get('metadata', {}), header['format_version'])

    def save(self, path: str):
        output_file = Path(path)
        output_file.parent.mkdir(parents=True, exist_ok=True)
        output_file.write_bytes(self.to_bytes())
        logger.info(f"✓ Checkpoint saved to: {output_file}")

    @classmethod
    def load(cls, path: str) -> 'Checkpoint':
        input_file = Path(path)
        if not input_file.is_file():
            raise CheckpointError(f"checkpoint not found: {input_file}")
        checkpoint = cls.from_bytes(input_file.read_bytes(), str(input_file))
        logger.info(f"✓ Loaded {checkpoint.config.model_kind} checkpoint from {input_file}")
        return checkpoint


def save_checkpoint(path: str, model: SepsisModel, norm_stats: NormStats,
                    metadata: Optional[Dict] = None) -> Checkpoint:
    checkpoint = Checkpoint.from_model(model, norm_stats, metadata)
    checkpoint.save(path)
    return checkpoint


def load_checkpoint(path: str) -> Checkpoint:
    return Checkpoint.load(path)
