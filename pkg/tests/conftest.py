"""
Shared fixtures: src/ on sys.path, seeded generators and small cohorts
"""

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / 'src'))

from cohort_simulator import CohortSimulator  # noqa: E402
from config import ModelConfig  # noqa: E402
from psv_ingest import CHALLENGE_COLUMNS  # noqa: E402


def psv_text(rows, columns=CHALLENGE_COLUMNS):
    """Challenge text from a list of {column: token} dicts; unspecified columns are NaN"""
    lines = ['|'.join(columns)]
    for row in rows:
        lines.append('|'.join(str(row.get(c, 'NaN')) for c in columns))
    return '\n'.join(lines) + '\n'


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_cohort():
    simulator = CohortSimulator(seed=7, septic_fraction=0.4, min_hours=8, max_hours=30)
    return simulator.simulate_cohort(20)


@pytest.fixture
def tiny_config():
    return ModelConfig(window_length=6, embed_dim=4, num_heads=2, hidden_size=4,
                       dense_embed_dim=4, mlp_hidden=[8], batch_size=64, epochs=2,
                       learning_rate=5e-3, seed=3)


@pytest.fixture
def cohort_dirs(tmp_path):
    """Synthetic train and validation directories"""
    train = CohortSimulator(seed=11, min_hours=10, max_hours=24).simulate_cohort(16, prefix='t')
    val = CohortSimulator(seed=12, min_hours=10, max_hours=24).simulate_cohort(8, prefix='v')
    CohortSimulator().write_cohort(train, str(tmp_path / 'train'))
    CohortSimulator().write_cohort(val, str(tmp_path / 'val'))
    return tmp_path / 'train', tmp_path / 'val'
