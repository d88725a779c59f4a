"""
Cohort Simulator Module
Stochastic ICU cohort with a planted pre-onset signal, written as challenge .psv files
"""

import logging
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np

from errors import ContractError
from preprocess import NAN_CATEGORY, WindowBatch
from psv_ingest import (CHALLENGE_COLUMNS, NUM_CATEGORICAL, NUM_NUMERIC, NUMERIC_COLUMNS,
                        PatientRecord, write_patient_file)

logger = logging.getLogger(__name__)

# name -> (mean, between-patient sd, hourly observation rate)
VARIABLE_PROFILES: Dict[str, Tuple[float, float, float]] = {
    'HR': (84.0, 5.0, 1.0),
    'O2Sat': (97.0, 2.0, 0.85),
    'Temp': (37.0, 0.5, 0.35),
    'SBP': (123.0, 15.0, 0.85),
    'MAP': (82.0, 12.0, 0.88),
    'DBP': (63.0, 10.0, 0.5),
    'Resp': (18.7, 3.0, 0.85),
    'EtCO2': (33.0, 6.0, 0.04),
    'BaseExcess': (-0.7, 3.0, 0.05),
    'HCO3': (24.0, 3.0, 0.04),
    'FiO2': (0.55, 0.1, 0.08),
    'pH': (7.38, 0.05, 0.07),
    'PaCO2': (41.0, 8.0, 0.06),
    'SaO2': (92.0, 6.0, 0.03),
    'AST': (100.0, 80.0, 0.02),
    'BUN': (23.0, 15.0, 0.07),
    'Alkalinephos': (100.0, 50.0, 0.02),
    'Calcium': (7.6, 1.5, 0.06),
    'Chloride': (105.0, 5.0, 0.05),
    'Creatinine': (1.5, 1.0, 0.06),
    'Bilirubin_direct': (1.8, 2.0, 0.002),
    'Glucose': (136.0, 40.0, 0.17),
    'Lactate': (2.6, 1.5, 0.03),
    'Magnesium': (2.0, 0.3, 0.06),
    'Phosphate': (3.5, 1.0, 0.04),
    'Potassium': (4.1, 0.5, 0.09),
    'Bilirubin_total': (2.1, 2.0, 0.015),
    'TroponinI': (0.5, 1.0, 0.01),
    'Hct': (31.0, 5.0, 0.09),
    'Hgb': (10.4, 2.0, 0.07),
    'PTT': (41.0, 15.0, 0.03),
    'WBC': (11.0, 5.0, 0.06),
    'Fibrinogen': (287.0, 100.0, 0.007),
    'Platelets': (196.0, 80.0, 0.06),
}


class CohortSimulator:
    """
    Generates patients hour by hour.

    Septic patients carry SepsisLabel = 1 from the first labelled hour on
    (lead_hours before the synthetic onset) and the ramp variable rises by
    ramp_slope per hour over the same span; nothing else separates them.
    """

    def __init__(self, seed: int = 0, septic_fraction: float = 0.3,
                 min_hours: int = 12, max_hours: int = 60,
                 ramp_variable: str = 'HR', ramp_slope: float = 5.0,
                 noise_scale: float = 0.4, lead_hours: int = 6, max_labelled_hours: int = 15):
        """
        Args:
            seed: Seed of the single generator all draws come from
            septic_fraction: Share of septic patients in a cohort
            min_hours, max_hours: Range of stay lengths
            ramp_variable: Numeric variable that carries the planted signal
            ramp_slope: Increase of the ramp variable per labelled hour
            noise_scale: Hourly noise as a fraction of the between-patient sd
            lead_hours: Labelled hours before the synthetic onset
            max_labelled_hours: Upper bound on labelled hours per septic stay
        """
        if ramp_variable not in NUMERIC_COLUMNS:
            raise ContractError(f"ramp variable must be numeric, got '{ramp_variable}'")
        if not 0.0 <= septic_fraction <= 1.0:
            raise ContractError("septic_fraction must lie in [0, 1]")
        if not 1 <= min_hours <= max_hours:
            raise ContractError("need 1 <= min_hours <= max_hours")
        self.rng = np.random.default_rng(seed)
        self.septic_fraction = septic_fraction
        self.min_hours = min_hours
        self.max_hours = max_hours
        self.ramp_index = NUMERIC_COLUMNS.index(ramp_variable)
        self.ramp_slope = ramp_slope
        self.noise_scale = noise_scale
        self.lead_hours = lead_hours
        self.max_labelled_hours = max_labelled_hours
        self.patients_generated = 0

    def _first_labelled_hour(self, n_hours: int) -> int:
        earliest = max(min(self.lead_hours, n_hours - 1), n_hours - self.max_labelled_hours)
        return int(self.rng.integers(earliest, n_hours))

    def simulate_patient(self, patient_id: str, septic: bool) -> PatientRecord:
        n = int(self.rng.integers(self.min_hours, self.max_hours + 1))
        labels = np.zeros(n, dtype=np.int64)
        ramp = np.zeros(n)
        if septic:
            t_label = self._first_labelled_hour(n)
            labels[t_label:] = 1
            ramp[t_label:] = self.ramp_slope * np.arange(1, n - t_label + 1)

        numeric = np.full((n, NUM_NUMERIC), np.nan)
        for j, name in enumerate(NUMERIC_COLUMNS):
            if name in VARIABLE_PROFILES:
                mean, sd, rate = VARIABLE_PROFILES[name]
                baseline = self.rng.normal(mean, sd)
                series = baseline + self.rng.normal(0.0, self.noise_scale * sd, size=n)
                observed = self.rng.random(n) < rate
                numeric[observed, j] = series[observed]
        numeric[:, self.ramp_index] += ramp

        # Demographics and stay bookkeeping are recorded every hour
        numeric[:, NUMERIC_COLUMNS.index('Age')] = round(float(self.rng.uniform(18, 90)), 1)
        numeric[:, NUMERIC_COLUMNS.index('HospAdmTime')] = -round(float(self.rng.exponential(12.0)), 2)
        numeric[:, NUMERIC_COLUMNS.index('ICULOS')] = np.arange(1, n + 1)

        categorical = np.full((n, NUM_CATEGORICAL), np.nan)
        categorical[:, 0] = float(self.rng.integers(0, 2))
        if self.rng.random() < 0.6:
            unit1 = float(self.rng.integers(0, 2))
            categorical[:, 1] = unit1
            categorical[:, 2] = 1.0 - unit1

        self.patients_generated += 1
        return PatientRecord(patient_id, np.round(numeric, 2), categorical, labels)

    def simulate_cohort(self, n_patients: int, prefix: str = 'p') -> List[PatientRecord]:
        """n_patients records; the septic count is round(n_patients * septic_fraction)"""
        n_septic = int(round(n_patients * self.septic_fraction))
        septic = self.rng.permutation(np.r_[np.ones(n_septic, dtype=bool),
                                            np.zeros(n_patients - n_septic, dtype=bool)])
        return [self.simulate_patient(f"{prefix}{i:06d}", bool(s)) for i, s in enumerate(septic)]

    def write_cohort(self, records: List[PatientRecord], output_dir: str,
                     columns: Optional[List[str]] = None) -> List[Path]:
        output_path = Path(output_dir)
        output_path.mkdir(parents=True, exist_ok=True)
        paths = []
        for record in records:
            path = output_path / f"{record.patient_id}.psv"
            path.write_text(write_patient_file(record, columns or CHALLENGE_COLUMNS), encoding='utf-8')
            paths.append(path)
        logger.info(f"✓ Wrote {len(paths)} synthetic patients to: {output_path}")
        return paths


def generate_cohort(output_dir: str, n_patients: int = 200, seed: int = 0, **kwargs) -> List[PatientRecord]:
    simulator = CohortSimulator(seed=seed, **kwargs)
    records = simulator.simulate_cohort(n_patients)
    simulator.write_cohort(records, output_dir)
    return records


def random_window_batch(rng: np.random.Generator, n_windows: int, window_length: int,
                        observe_prob: float = 0.5, pad_hours: int = 0) -> WindowBatch:
    """
    Random normalized windows for gradient checks and invariance tests

    Args:
        rng: Generator for every draw
        n_windows: B
        window_length: L
        observe_prob: Chance that a numeric slot is observed
        pad_hours: Leading padding rows per window

    Returns:
        WindowBatch obeying the window invariants (zeros where unobserved)
    """
    shape = (n_windows, window_length, NUM_NUMERIC)
    obs = rng.random(shape) < observe_prob
    cat_idx = rng.integers(0, NAN_CATEGORY + 1, size=(n_windows, window_length, NUM_CATEGORICAL))
    pad = np.zeros((n_windows, window_length), dtype=bool)
    pad[:, :pad_hours] = True
    obs[pad] = False
    cat_idx[pad] = NAN_CATEGORY
    values = np.where(obs, rng.normal(size=shape), 0.0)
    labels = rng.integers(0, 2, size=n_windows)
    return WindowBatch(values, cat_idx.astype(np.int64), obs, pad, labels.astype(np.int64),
                       [f"w{i}" for i in range(n_windows)],
                       np.full(n_windows, window_length - 1, dtype=np.int64))
