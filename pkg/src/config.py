"""
Model Configuration
Hyperparameters for the HEA-LSTM model and its baselines
"""

import json
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Dict, List, Optional

from errors import ContractError

logger = logging.getLogger(__name__)

MODEL_KINDS = ('hea_lstm', 'mlp', 'dense_lstm')
PRECISIONS = ('float64', 'float32')


@dataclass
class ModelConfig:
    """
    Every knob of a training run. Serialized verbatim into checkpoints and reports.
    """
    # Window and embedding sizes
    window_length: int = 24
    embed_dim: int = 16
    num_heads: int = 16
    hidden_size: int = 64
    model_kind: str = 'hea_lstm'
    dense_embed_dim: int = 16
    mlp_hidden: List[int] = field(default_factory=lambda: [256, 64])

    # Optimization (Adam)
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    grad_clip: Optional[float] = None
    batch_size: int = 256
    epochs: int = 10
    dropout: float = 0.0
    weight_decay: float = 0.0
    seed: int = 0
    precision: str = 'float64'

    # Class imbalance: None = weight positives so they make up target_pos_fraction
    pos_weight: Optional[float] = None
    target_pos_fraction: float = 0.25

    # Numerics
    prob_eps: float = 1e-7
    std_floor: float = 1e-6

    # Filled in after validation
    threshold: Optional[float] = None

    def __post_init__(self):
        self.validate()

    def validate(self):
        """Raise ContractError if any field is out of range"""
        positive = ['window_length', 'embed_dim', 'num_heads', 'hidden_size',
                    'dense_embed_dim', 'learning_rate', 'batch_size', 'epochs',
                    'adam_eps', 'prob_eps', 'std_floor', 'target_pos_fraction']
        for name in positive:
            if not getattr(self, name) > 0:
                raise ContractError(f"config field '{name}' must be positive, got {getattr(self, name)}")
        if self.model_kind not in MODEL_KINDS:
            raise ContractError(f"model_kind must be one of {MODEL_KINDS}, got '{self.model_kind}'")
        if self.precision not in PRECISIONS:
            raise ContractError(f"precision must be one of {PRECISIONS}, got '{self.precision}'")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ContractError("beta1 and beta2 must lie in [0, 1)")
        if self.target_pos_fraction >= 1.0:
            raise ContractError("target_pos_fraction must be below 1")
        if self.pos_weight is not None and self.pos_weight <= 0:
            raise ContractError("pos_weight must be positive when set")
        if any(h <= 0 for h in self.mlp_hidden):
            raise ContractError("mlp_hidden sizes must be positive")
        if self.threshold is not None and not (0.0 <= self.threshold <= 1.0):
            raise ContractError("threshold must lie in [0, 1]")
        if not 0.0 <= self.dropout < 1.0:
            raise ContractError("dropout must lie in [0, 1)")
        if self.weight_decay < 0.0:
            raise ContractError("weight_decay must be non-negative")

    def update(self, overrides: Dict) -> 'ModelConfig':
        """
        Return a copy with overrides applied

        Args:
            overrides: Field name -> value; None values are ignored

        Returns:
            New validated ModelConfig
        """
        known = {f.name for f in fields(self)}
        unknown = set(overrides) - known
        if unknown:
            raise ContractError(f"unknown config keys: {sorted(unknown)}")
        values = self.to_dict()
        values.update({k: v for k, v in overrides.items() if v is not None})
        return ModelConfig(**values)

    def to_dict(self) -> Dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, values: Dict) -> 'ModelConfig':
        return cls().update(values)

    @classmethod
    def from_json(cls, config_path: str) -> 'ModelConfig':
        """
        Load configuration from a flat JSON key-value file

        Args:
            config_path: Path to model_config.json

        Returns:
            ModelConfig with file values over the dataclass defaults
        """
        with open(config_path, 'r') as f:
            values = json.load(f)
        values.pop('description', None)
        config = cls.from_dict(values)
        logger.info(f"✓ Loaded config from {config_path}")
        return config

    def save(self, output_path: str):
        output_file = Path(output_path)
        output_file.parent.mkdir(parents=True, exist_ok=True)
        with open(output_file, 'w') as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
