"""Tests for the checkpoint container."""

import json

import numpy as np
import pytest

from checkpoint import MAGIC, Checkpoint, load_checkpoint, save_checkpoint
from cohort_simulator import random_window_batch
from errors import CheckpointError
from preprocess import fit_normalizer
from seq_model import build_model


@pytest.fixture
def checkpoint(tiny_config, small_cohort):
    model = build_model(tiny_config.update({'threshold': 0.42}))
    return Checkpoint.from_model(model, fit_normalizer(small_cohort), {'epochs_run': 2})


def split_header(data):
    newline = data.find(b'\n')
    header_len = int(data[:newline].split(b' ')[2])
    return data[:newline + 1], data[newline + 1:newline + 1 + header_len], data[newline + 1 + header_len:]


class TestRoundTrip:

    def test_bytes_identical(self, checkpoint):
        data = checkpoint.to_bytes()
        assert Checkpoint.from_bytes(data).to_bytes() == data

    def test_file_round_trip(self, tmp_path, checkpoint):
        path = tmp_path / 'model.ckpt'
        checkpoint.save(str(path))
        again = load_checkpoint(str(path))
        again.save(str(tmp_path / 'again.ckpt'))
        assert (tmp_path / 'again.ckpt').read_bytes() == path.read_bytes()
        assert again.config == checkpoint.config
        assert again.config.threshold == 0.42
        assert again.metadata == {'epochs_run': 2}
        np.testing.assert_array_equal(again.norm_stats.mean, checkpoint.norm_stats.mean)

    def test_layout(self, checkpoint):
        first, header, blobs = split_header(checkpoint.to_bytes())
        assert first.startswith(f"{MAGIC} v1 ".encode())
        parsed = json.loads(header)
        assert parsed['blob_dtype'] == '<f4'
        assert [t['name'] for t in parsed['tensors']] == list(checkpoint.tensors)
        assert len(blobs) == 4 * sum(t['count'] for t in parsed['tensors'])

    def test_rebuilt_model_predicts_like_quantized_original(self, rng, tiny_config, checkpoint):
        rebuilt = checkpoint.build_model()
        reference = build_model(checkpoint.config)
        reference.params.load_state_dict(checkpoint.tensors)
        batch = random_window_batch(rng, 5, tiny_config.window_length)
        np.testing.assert_array_equal(rebuilt.predict_proba(batch), reference.predict_proba(batch))

    def test_save_checkpoint_helper(self, tmp_path, tiny_config, small_cohort):
        model = build_model(tiny_config)
        saved = save_checkpoint(str(tmp_path / 'sub' / 'm.ckpt'), model, fit_normalizer(small_cohort))
        assert list(saved.tensors) == model.params.names()
        assert all(v.dtype == np.float32 for v in saved.tensors.values())


class TestErrors:

    def test_missing_file(self, tmp_path):
        with pytest.raises(CheckpointError):
            load_checkpoint(str(tmp_path / 'nothing.ckpt'))

    def test_not_a_checkpoint(self):
        with pytest.raises(CheckpointError):
            Checkpoint.from_bytes(b'hello world\n{}')

    def test_wrong_version(self, checkpoint):
        data = checkpoint.to_bytes().replace(f"{MAGIC} v1".encode(), f"{MAGIC} v2".encode(), 1)
        with pytest.raises(CheckpointError, match='version'):
            Checkpoint.from_bytes(data)

    def test_truncated(self, checkpoint):
        data = checkpoint.to_bytes()
        with pytest.raises(CheckpointError, match='truncated'):
            Checkpoint.from_bytes(data[:-3])

    def test_trailing_bytes(self, checkpoint):
        with pytest.raises(CheckpointError, match='trailing'):
            Checkpoint.from_bytes(checkpoint.to_bytes() + b'\x00\x00\x00\x00')

    def test_corrupt_header(self, checkpoint):
        first, header, blobs = split_header(checkpoint.to_bytes())
        broken = header[:-5] + b'!!!!!'
        with pytest.raises(CheckpointError):
            Checkpoint.from_bytes(first + broken + blobs)

    def test_count_mismatch(self, checkpoint):
        first, header, blobs = split_header(checkpoint.to_bytes())
        parsed = json.loads(header)
        parsed['tensors'][0]['count'] += 1
        new_header = json.dumps(parsed, sort_keys=True, indent=1).encode()
        first = f"{MAGIC} v1 {len(new_header)}\n".encode()
        with pytest.raises(CheckpointError):
            Checkpoint.from_bytes(first + new_header + blobs)

    def test_kind_mismatch(self, checkpoint):
        checkpoint.config = checkpoint.config.update({'model_kind': 'mlp'})
        with pytest.raises(CheckpointError):
            checkpoint.build_model()
