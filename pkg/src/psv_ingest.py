"""
PSV Ingest Module
Reads challenge-format pipe-separated patient files and writes prediction files
"""

import io
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from tqdm import tqdm

from errors import ContractError, ParseError, SchemaError

logger = logging.getLogger(__name__)

VITALS = ['HR', 'O2Sat', 'Temp', 'SBP', 'MAP', 'DBP', 'Resp', 'EtCO2']
LABS = ['BaseExcess', 'HCO3', 'FiO2', 'pH', 'PaCO2', 'SaO2', 'AST', 'BUN',
        'Alkalinephos', 'Calcium', 'Chloride', 'Creatinine', 'Bilirubin_direct',
        'Glucose', 'Lactate', 'Magnesium', 'Phosphate', 'Potassium',
        'Bilirubin_total', 'TroponinI', 'Hct', 'Hgb', 'PTT', 'WBC',
        'Fibrinogen', 'Platelets']
NUMERIC_COLUMNS = VITALS + LABS + ['Age', 'HospAdmTime', 'ICULOS']
CATEGORICAL_COLUMNS = ['Gender', 'Unit1', 'Unit2']
# Categoricals last, the order every downstream array uses
CANONICAL_COLUMNS = NUMERIC_COLUMNS + CATEGORICAL_COLUMNS
LABEL_COLUMN = 'SepsisLabel'
# Column order of the files the challenge distributes
CHALLENGE_COLUMNS = (VITALS + LABS + ['Age', 'Gender', 'Unit1', 'Unit2',
                                      'HospAdmTime', 'ICULOS', LABEL_COLUMN])

NUM_NUMERIC = len(NUMERIC_COLUMNS)
NUM_CATEGORICAL = len(CATEGORICAL_COLUMNS)
NUM_VARIABLES = NUM_NUMERIC + NUM_CATEGORICAL

MISSING_TOKEN = 'NaN'
PREDICTION_HEADER = 'PredictedProbability|PredictedLabel'


class HourRow(NamedTuple):
    """One hour of one patient; None marks a missing value"""
    numeric: Tuple[Optional[float], ...]
    categorical_raw: Tuple[Optional[int], ...]
    label: int


@dataclass
class PatientRecord:
    """
    All hourly rows of one patient, stored column-wise.

    numeric is n_hours x 37 and categorical is n_hours x 3, both with NaN for
    missing values; labels holds the SepsisLabel of every hour.
    """
    patient_id: str
    numeric: np.ndarray
    categorical: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        n = len(self.labels)
        if self.numeric.shape != (n, NUM_NUMERIC):
            raise ContractError(f"numeric block must be {n}x{NUM_NUMERIC}, got {self.numeric.shape}")
        if self.categorical.shape != (n, NUM_CATEGORICAL):
            raise ContractError(f"categorical block must be {n}x{NUM_CATEGORICAL}, got {self.categorical.shape}")

    @property
    def n_hours(self) -> int:
        return len(self.labels)

    @property
    def is_septic(self) -> bool:
        return bool(np.any(self.labels == 1))

    @property
    def numeric_mask(self) -> np.ndarray:
        """True where a numeric value was observed"""
        return ~np.isnan(self.numeric)

    def row(self, t: int) -> HourRow:
        numeric = tuple(None if np.isnan(v) else float(v) for v in self.numeric[t])
        categorical = tuple(None if np.isnan(v) else int(v) for v in self.categorical[t])
        return HourRow(numeric, categorical, int(self.labels[t]))

    @property
    def rows(self) -> List[HourRow]:
        return [self.row(t) for t in range(self.n_hours)]

    def with_numeric(self, numeric: np.ndarray) -> 'PatientRecord':
        """Copy of this record with a replaced numeric block"""
        return PatientRecord(self.patient_id, numeric, self.categorical.copy(), self.labels.copy())


@dataclass
class DatasetSummary:
    """Cohort-level counts; merge() is associative and commutative"""
    n_patients: int = 0
    n_septic: int = 0
    n_rows: int = 0
    n_positive_rows: int = 0
    observed_counts: np.ndarray = field(default_factory=lambda: np.zeros(NUM_VARIABLES, dtype=np.int64))

    @property
    def positive_row_fraction(self) -> float:
        return self.n_positive_rows / self.n_rows if self.n_rows else 0.0

    @property
    def mean_stay_hours(self) -> float:
        return self.n_rows / self.n_patients if self.n_patients else 0.0

    @property
    def observation_rates(self) -> Dict[str, float]:
        if not self.n_rows:
            return {name: 0.0 for name in CANONICAL_COLUMNS}
        return {name: float(c) / self.n_rows for name, c in zip(CANONICAL_COLUMNS, self.observed_counts)}

    @classmethod
    def of_record(cls, record: PatientRecord) -> 'DatasetSummary':
        observed = np.concatenate([(~np.isnan(record.numeric)).sum(axis=0),
                                   (~np.isnan(record.categorical)).sum(axis=0)])
        return cls(n_patients=1,
                   n_septic=int(record.is_septic),
                   n_rows=record.n_hours,
                   n_positive_rows=int(record.labels.sum()),
                   observed_counts=observed.astype(np.int64))

    def merge(self, other: 'DatasetSummary') -> 'DatasetSummary':
        return DatasetSummary(self.n_patients + other.n_patients,
                              self.n_septic + other.n_septic,
                              self.n_rows + other.n_rows,
                              self.n_positive_rows + other.n_positive_rows,
                              self.observed_counts + other.observed_counts)

    def to_dict(self) -> Dict:
        return {
            'n_patients': self.n_patients,
            'n_septic': self.n_septic,
            'n_rows': self.n_rows,
            'positive_row_fraction': self.positive_row_fraction,
            'mean_stay_hours': self.mean_stay_hours,
            'observation_rates': self.observation_rates,
        }

    def save(self, output_path: str):
        output_file = Path(output_path)
        output_file.parent.mkdir(parents=True, exist_ok=True)
        with open(output_file, 'w') as f:
            json.dump(self.to_dict(), f, indent=2)
        logger.info(f"✓ Dataset summary saved to: {output_file}")


def _check_header(header: List[str], filename: Optional[str]):
    seen = set()
    for name in header:
        if name in seen:
            raise SchemaError(f"duplicate column '{name}'", line=1, filename=filename)
        seen.add(name)
    if LABEL_COLUMN not in seen:
        raise SchemaError(f"missing label column '{LABEL_COLUMN}'", line=1, filename=filename)
    missing = [name for name in CANONICAL_COLUMNS if name not in seen]
    if missing:
        raise SchemaError(f"missing variable columns {missing}", line=1, filename=filename)
    unknown = sorted(seen - set(CANONICAL_COLUMNS) - {LABEL_COLUMN})
    if unknown:
        raise SchemaError(f"unknown columns {unknown}", line=1, filename=filename)


def _to_floats(df: pd.DataFrame, columns: List[str], line_numbers: List[int],
               filename: Optional[str]) -> np.ndarray:
    """Convert string columns to floats, NaN token -> np.nan, anything else must be finite"""
    raw = df[columns]
    missing = raw == MISSING_TOKEN
    values = raw.apply(pd.to_numeric, errors='coerce')
    bad = values.isna() & ~missing
    if bad.to_numpy().any():
        row, col = np.argwhere(bad.to_numpy())[0]
        token = raw.iat[row, col]
        raise ParseError(f"non-numeric token '{token}' in column '{columns[col]}'",
                         line=line_numbers[row], filename=filename)
    array = values.to_numpy(dtype=np.float64)
    infinite = np.isinf(array)
    if infinite.any():
        row, col = np.argwhere(infinite)[0]
        raise ParseError(f"non-finite value in column '{columns[col]}'",
                         line=line_numbers[row], filename=filename)
    return array


def parse_patient_file(text: str, patient_id: str = 'patient',
                       filename: Optional[str] = None) -> PatientRecord:
    """
    Parse one challenge .psv file

    Args:
        text: Full file contents, header first
        patient_id: Identifier stored on the record
        filename: Used in error messages

    Returns:
        PatientRecord with canonical column order (categoricals last)
    """
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise SchemaError("empty file, header expected", line=1, filename=filename)
    header = lines[0].strip().split('|')
    _check_header(header, filename)

    # pandas pads short rows silently, so field counts are checked up front
    line_numbers = []
    for number, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        n_fields = line.count('|') + 1
        if n_fields != len(header):
            raise ParseError(f"expected {len(header)} fields, found {n_fields}",
                             line=number, filename=filename)
        line_numbers.append(number)

    cleaned = '\n'.join([lines[0]] + [lines[n - 1] for n in line_numbers])
    df = pd.read_csv(io.StringIO(cleaned), sep='|', dtype=str, na_filter=False)
    df.columns = [c.strip() for c in df.columns]
    df = df.apply(lambda col: col.str.strip())

    numeric = _to_floats(df, NUMERIC_COLUMNS, line_numbers, filename)
    categorical = _to_floats(df, CATEGORICAL_COLUMNS, line_numbers, filename)
    present = ~np.isnan(categorical)
    if np.any(present & (categorical != 0) & (categorical != 1)):
        row, col = np.argwhere(present & (categorical != 0) & (categorical != 1))[0]
        raise ParseError(f"categorical '{CATEGORICAL_COLUMNS[col]}' must be 0 or 1",
                         line=line_numbers[row], filename=filename)

    labels = _to_floats(df, [LABEL_COLUMN], line_numbers, filename)[:, 0]
    invalid = np.isnan(labels) | ((labels != 0) & (labels != 1))
    if invalid.any():
        row = int(np.argmax(invalid))
        raise ParseError(f"{LABEL_COLUMN} must be 0 or 1", line=line_numbers[row], filename=filename)

    return PatientRecord(patient_id, numeric, categorical, labels.astype(np.int64))


def read_patient_file(path: Union[str, Path]) -> PatientRecord:
    """Read a .psv file; the patient id is the file stem"""
    path = Path(path)
    return parse_patient_file(path.read_text(encoding='utf-8'), patient_id=path.stem,
                              filename=path.name)


def list_patient_files(directory: Union[str, Path]) -> List[Path]:
    return sorted(Path(directory).glob('*.psv'))


def read_directory(directory: Union[str, Path], progress: bool = False) -> List[PatientRecord]:
    """
    Read every .psv file in a directory

    Args:
        directory: Folder with one file per patient
        progress: Show a tqdm progress bar

    Returns:
        Records sorted by file name
    """
    files = list_patient_files(directory)
    iterator = tqdm(files, desc="Reading patients") if progress else files
    records = [read_patient_file(path) for path in iterator]
    logger.info(f"✓ Read {len(records)} patient files from {directory}")
    return records


def scan_dataset(files: Union[Mapping[str, str], Sequence[str]]) -> DatasetSummary:
    """
    Aggregate counts over a listing of file texts

    Args:
        files: filename -> text, or a plain list of texts

    Returns:
        DatasetSummary; a patient counts as septic if any hour is labelled 1
    """
    if not isinstance(files, Mapping):
        files = {f"file_{i}": text for i, text in enumerate(files)}
    summary = DatasetSummary()
    for name in sorted(files):
        record = parse_patient_file(files[name], patient_id=Path(name).stem, filename=name)
        summary = summary.merge(DatasetSummary.of_record(record))
    return summary


def summarize_records(records: Iterable[PatientRecord]) -> DatasetSummary:
    summary = DatasetSummary()
    for record in records:
        summary = summary.merge(DatasetSummary.of_record(record))
    return summary


def record_to_frame(record: PatientRecord, columns: Sequence[str] = CHALLENGE_COLUMNS) -> pd.DataFrame:
    """Record as a DataFrame (NaN for missing), columns in the requested order"""
    df = pd.DataFrame(np.concatenate([record.numeric, record.categorical], axis=1),
                      columns=CANONICAL_COLUMNS)
    df[LABEL_COLUMN] = record.labels.astype(np.int64)
    return df[list(columns)]


def write_patient_file(record: PatientRecord, columns: Sequence[str] = CHALLENGE_COLUMNS) -> str:
    """Serialize a record back to challenge .psv text"""
    columns = list(columns)
    if sorted(columns) != sorted(CANONICAL_COLUMNS + [LABEL_COLUMN]):
        raise ContractError("columns must be a permutation of the 40 variables plus the label")
    df = record_to_frame(record, columns)
    return df.to_csv(sep='|', index=False, na_rep=MISSING_TOKEN, lineterminator='\n')


def write_prediction_file(probs: Sequence[float], labels: Sequence[int]) -> str:
    """
    Format per-hour predictions in the challenge output convention

    Args:
        probs: Predicted probability per hour, in [0, 1]
        labels: Binary prediction per hour

    Returns:
        Newline-terminated text, header first
    """
    if len(probs) != len(labels):
        raise ContractError(f"length mismatch: {len(probs)} probabilities, {len(labels)} labels")
    lines = [PREDICTION_HEADER]
    for p, label in zip(probs, labels):
        p = float(p)
        if not (0.0 <= p <= 1.0) or math.isnan(p):
            raise ContractError(f"probability {p} outside [0, 1]")
        if int(label) not in (0, 1):
            raise ContractError(f"predicted label {label} is not 0 or 1")
        lines.append(f"{p:.6f}|{int(label)}")
    return '\n'.join(lines) + '\n'


def read_prediction_file(text: str, filename: Optional[str] = None) -> Tuple[np.ndarray, np.ndarray]:
    """Parse a prediction file back into (probabilities, binary labels)"""
    lines = text.splitlines()
    if not lines or lines[0].strip() != PREDICTION_HEADER:
        raise SchemaError(f"prediction header must be '{PREDICTION_HEADER}'", line=1, filename=filename)
    probs, labels = [], []
    for number, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.strip().split('|')
        if len(parts) != 2:
            raise ParseError(f"expected 2 fields, found {len(parts)}", line=number, filename=filename)
        try:
            probs.append(float(parts[0]))
            labels.append(int(parts[1]))
        except ValueError:
            raise ParseError(f"malformed prediction '{line.strip()}'", line=number, filename=filename)
    return np.asarray(probs, dtype=np.float64), np.asarray(labels, dtype=np.int64)
