"""Tests for model configuration loading and validation."""

import json

import pytest

from config import ModelConfig
from errors import ContractError


class TestModelConfig:

    def test_defaults(self):
        config = ModelConfig()
        assert (config.window_length, config.embed_dim, config.num_heads) == (24, 16, 16)
        assert config.threshold is None

    def test_update_returns_copy(self):
        config = ModelConfig()
        updated = config.update({'num_heads': 8, 'epochs': None})
        assert updated.num_heads == 8 and updated.epochs == config.epochs
        assert config.num_heads == 16

    def test_unknown_key(self):
        with pytest.raises(ContractError):
            ModelConfig().update({'heads': 8})

    @pytest.mark.parametrize('overrides', [{'num_heads': 0}, {'model_kind': 'gru'},
                                           {'precision': 'float16'}, {'dropout': 1.0},
                                           {'threshold': 1.5}, {'beta1': 1.0}])
    def test_invalid_values(self, overrides):
        with pytest.raises(ContractError):
            ModelConfig().update(overrides)

    def test_json_round_trip(self, tmp_path):
        config = ModelConfig(num_heads=4, mlp_hidden=[32], threshold=0.3)
        config.save(str(tmp_path / 'c.json'))
        assert ModelConfig.from_json(str(tmp_path / 'c.json')) == config

    def test_json_description_ignored(self, tmp_path):
        path = tmp_path / 'c.json'
        path.write_text(json.dumps({'num_heads': 1, 'description': 'single head'}))
        assert ModelConfig.from_json(str(path)).num_heads == 1
