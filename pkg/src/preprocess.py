"""
Preprocessing Module
Turns patient records into fixed-length hourly windows for the sequence models
"""

import logging
import warnings
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from errors import ContractError, MissingVariableWarning
from psv_ingest import NUM_CATEGORICAL, NUM_NUMERIC, NUMERIC_COLUMNS, PatientRecord

logger = logging.getLogger(__name__)

NAN_CATEGORY = 6
NUM_CATEGORIES = 7
DEFAULT_STD_FLOOR = 1e-6


def relabel_categorical(var_index: int, raw: Optional[float]) -> int:
    """
    Map a binary categorical variable to one of 7 shared categories

    Args:
        var_index: 0 = Gender, 1 = Unit1, 2 = Unit2
        raw: 0, 1 or None/NaN for missing

    Returns:
        2 * var_index + raw, or 6 when the value is missing
    """
    if var_index not in (0, 1, 2):
        raise ContractError(f"categorical var_index must be 0, 1 or 2, got {var_index}")
    if raw is None or (isinstance(raw, float) and np.isnan(raw)):
        return NAN_CATEGORY
    if raw not in (0, 1):
        raise ContractError(f"categorical value must be 0 or 1, got {raw}")
    return 2 * var_index + int(raw)


def relabel_categorical_block(categorical: np.ndarray) -> np.ndarray:
    """Vectorized relabel_categorical over an n x 3 block (NaN -> 6)"""
    present = ~np.isnan(categorical)
    if np.any(present & (categorical != 0) & (categorical != 1)):
        raise ContractError("categorical values must be 0 or 1")
    offsets = 2 * np.arange(NUM_CATEGORICAL)
    idx = np.where(present, offsets + np.nan_to_num(categorical), NAN_CATEGORY)
    return idx.astype(np.int64)


@dataclass
class NormStats:
    """Per-variable z-score statistics over observed training values"""
    mean: np.ndarray
    std: np.ndarray

    def to_dict(self) -> Dict:
        return {'mean': [float(v) for v in self.mean], 'std': [float(v) for v in self.std]}

    @classmethod
    def from_dict(cls, values: Dict) -> 'NormStats':
        mean = np.asarray(values['mean'], dtype=np.float64)
        std = np.asarray(values['std'], dtype=np.float64)
        if mean.shape != (NUM_NUMERIC,) or std.shape != (NUM_NUMERIC,):
            raise ContractError(f"normalization stats must hold {NUM_NUMERIC} values each")
        return cls(mean, std)


def fit_normalizer(train_records: Sequence[PatientRecord],
                   std_floor: float = DEFAULT_STD_FLOOR) -> NormStats:
    """
    Fit z-score statistics on training records only

    Args:
        train_records: Records of the training split
        std_floor: Lower bound for every standard deviation

    Returns:
        NormStats with population (divide-by-n) standard deviations
    """
    # Two passes of partial sums so per-record work can be reduced in any order
    count = np.zeros(NUM_NUMERIC)
    total = np.zeros(NUM_NUMERIC)
    for record in train_records:
        count += record.numeric_mask.sum(axis=0)
        total += np.nansum(record.numeric, axis=0)
    observed = count > 0
    mean = np.divide(total, count, out=np.zeros(NUM_NUMERIC), where=observed)

    squares = np.zeros(NUM_NUMERIC)
    for record in train_records:
        squares += np.nansum((record.numeric - mean) ** 2, axis=0)
    var = np.divide(squares, count, out=np.ones(NUM_NUMERIC), where=observed)
    std = np.maximum(np.sqrt(var), std_floor)

    for j in np.flatnonzero(~observed):
        message = f"variable '{NUMERIC_COLUMNS[j]}' has no observed training values; using mean 0, std 1"
        logger.warning(f"⚠ {message}")
        warnings.warn(message, MissingVariableWarning)
    std[~observed] = 1.0
    return NormStats(mean, std)


def apply_normalizer(record: PatientRecord, stats: NormStats) -> PatientRecord:
    """Z-score every observed numeric value; missing values stay NaN"""
    return record.with_numeric((record.numeric - stats.mean) / stats.std)


@dataclass
class WindowSample:
    """One L-hour window ending at hour t_end"""
    values: np.ndarray      # L x 37, 0 where unobserved
    cat_idx: np.ndarray     # L x 3, in [0, 6]
    obs_mask: np.ndarray    # L x 37
    pad_mask: np.ndarray    # L, True for rows before admission
    label: int
    patient_id: str
    t_end: int


@dataclass
class WindowBatch:
    """A stack of windows; arrays carry a leading batch axis"""
    values: np.ndarray      # B x L x 37
    cat_idx: np.ndarray     # B x L x 3
    obs_mask: np.ndarray    # B x L x 37
    pad_mask: np.ndarray    # B x L
    labels: np.ndarray      # B
    patient_ids: List[str]
    t_end: np.ndarray       # B

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def window_length(self) -> int:
        return self.values.shape[1]

    def subset(self, index: np.ndarray) -> 'WindowBatch':
        return WindowBatch(self.values[index], self.cat_idx[index], self.obs_mask[index],
                           self.pad_mask[index], self.labels[index],
                           [self.patient_ids[i] for i in index], self.t_end[index])

    def window(self, i: int) -> WindowSample:
        return WindowSample(self.values[i], self.cat_idx[i], self.obs_mask[i], self.pad_mask[i],
                            int(self.labels[i]), self.patient_ids[i], int(self.t_end[i]))


def record_windows(record: PatientRecord, window_length: int) -> WindowBatch:
    """
    All windows of one record as a batch, one per hour

    Args:
        record: A (normalized) patient record
        window_length: L, hours per window

    Returns:
        WindowBatch with n_hours windows; window t covers hours t-L+1 .. t
    """
    if window_length < 1:
        raise ContractError(f"window length must be at least 1, got {window_length}")
    n, L = record.n_hours, window_length
    if n == 0:
        return WindowBatch(np.zeros((0, L, NUM_NUMERIC)), np.zeros((0, L, NUM_CATEGORICAL), dtype=np.int64),
                           np.zeros((0, L, NUM_NUMERIC), dtype=bool), np.zeros((0, L), dtype=bool),
                           np.zeros(0, dtype=np.int64), [], np.zeros(0, dtype=np.int64))
    obs = record.numeric_mask
    # Padding rows are fully missing numerics with the empty category
    values = np.concatenate([np.zeros((L - 1, NUM_NUMERIC)), np.where(obs, record.numeric, 0.0)])
    obs = np.concatenate([np.zeros((L - 1, NUM_NUMERIC), dtype=bool), obs])
    cat_idx = np.concatenate([np.full((L - 1, NUM_CATEGORICAL), NAN_CATEGORY, dtype=np.int64),
                              relabel_categorical_block(record.categorical)])
    pad = np.concatenate([np.ones(L - 1, dtype=bool), np.zeros(n, dtype=bool)])

    def slide(a: np.ndarray) -> np.ndarray:
        # sliding_window_view puts the window axis last
        view = sliding_window_view(a, L, axis=0)
        return np.ascontiguousarray(np.moveaxis(view, -1, 1) if a.ndim > 1 else view)

    return WindowBatch(slide(values), slide(cat_idx), slide(obs), slide(pad),
                       record.labels.astype(np.int64).copy(),
                       [record.patient_id] * n, np.arange(n, dtype=np.int64))


def make_windows(record: PatientRecord, window_length: int) -> List[WindowSample]:
    """One WindowSample per hour of the record, labelled with that hour's label"""
    batch = record_windows(record, window_length)
    return [batch.window(i) for i in range(len(batch))]


def windows_to_arrays(windows: Sequence[WindowSample]) -> WindowBatch:
    """Stack individual windows into a batch"""
    if not windows:
        raise ContractError("cannot stack an empty list of windows")
    return WindowBatch(np.stack([w.values for w in windows]),
                       np.stack([w.cat_idx for w in windows]),
                       np.stack([w.obs_mask for w in windows]),
                       np.stack([w.pad_mask for w in windows]),
                       np.array([w.label for w in windows], dtype=np.int64),
                       [w.patient_id for w in windows],
                       np.array([w.t_end for w in windows], dtype=np.int64))


def concat_batches(batches: Sequence[WindowBatch]) -> WindowBatch:
    batches = [b for b in batches if len(b)]
    if not batches:
        raise ContractError("no windows to concatenate")
    return WindowBatch(np.concatenate([b.values for b in batches]),
                       np.concatenate([b.cat_idx for b in batches]),
                       np.concatenate([b.obs_mask for b in batches]),
                       np.concatenate([b.pad_mask for b in batches]),
                       np.concatenate([b.labels for b in batches]),
                       [pid for b in batches for pid in b.patient_ids],
                       np.concatenate([b.t_end for b in batches]))


def raw_window_features(batch: WindowBatch, nan_category_value: float = 0.5) -> np.ndarray:
    """
    Raw B x L x 40 encoding used by the baselines

    Args:
        batch: Windows to encode
        nan_category_value: Stand-in for a missing categorical value

    Returns:
        Normalized numerics (0 where missing) followed by the 3 raw 0/1 categoricals
    """
    cat = batch.cat_idx
    raw = np.where(cat == NAN_CATEGORY, nan_category_value, (cat % 2).astype(np.float64))
    return np.concatenate([np.where(batch.obs_mask, batch.values, 0.0), raw], axis=-1)


class WindowGenerator:
    """
    Fit normalization on training records and cut normalized windows
    """

    def __init__(self, window_length: int = 24, std_floor: float = DEFAULT_STD_FLOOR):
        """
        Args:
            window_length: L, hours per window (default: 24, one day)
            std_floor: Lower bound for the fitted standard deviations
        """
        if window_length < 1:
            raise ContractError(f"window length must be at least 1, got {window_length}")
        self.window_length = window_length
        self.std_floor = std_floor
        self.stats: Optional[NormStats] = None

    def fit(self, train_records: Sequence[PatientRecord]) -> NormStats:
        self.stats = fit_normalizer(train_records, self.std_floor)
        logger.info(f"✓ Fitted normalizer on {len(train_records)} training patients")
        return self.stats

    def transform(self, records: Sequence[PatientRecord]) -> WindowBatch:
        """Normalize and window every record; windows keep record order"""
        if self.stats is None:
            raise ContractError("normalizer not fitted. Call fit() first.")
        return concat_batches([record_windows(apply_normalizer(r, self.stats), self.window_length)
                               for r in records])

    def get_window_summary(self, batch: WindowBatch) -> Dict:
        """Counts describing a window batch"""
        return {
            'total_windows': len(batch),
            'window_length': self.window_length,
            'positive_windows': int(batch.labels.sum()),
            'positive_fraction': float(batch.labels.mean()) if len(batch) else 0.0,
            'patients': len(set(batch.patient_ids)),
            'padded_rows_fraction': float(batch.pad_mask.mean()) if len(batch) else 0.0,
        }
