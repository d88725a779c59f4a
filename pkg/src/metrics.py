"""
Metrics Module
AUROC, AUPRC, the challenge utility score, threshold selection and fold ensembling
"""

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from errors import ContractError, MetricError

logger = logging.getLogger(__name__)

ENSEMBLE_MODES = ('average', 'major_vote', 'any_vote')


@dataclass(frozen=True)
class UtilityConstants:
    dt_early: float = -12
    dt_optimal: float = -6
    dt_late: float = 3
    max_u_tp: float = 1
    min_u_fn: float = -2
    u_fp: float = -0.05
    u_tn: float = 0

    def __post_init__(self):
        if not self.dt_early < self.dt_optimal < self.dt_late:
            raise ContractError("utility times must satisfy dt_early < dt_optimal < dt_late")

    @property
    def slopes(self) -> Tuple[float, float, float, float, float, float]:
        """(m1, b1, m2, b2, m3, b3) of the piecewise-linear reward"""
        m1 = self.max_u_tp / (self.dt_optimal - self.dt_early)
        b1 = -m1 * self.dt_early
        m2 = -self.max_u_tp / (self.dt_late - self.dt_optimal)
        b2 = -m2 * self.dt_late
        m3 = self.min_u_fn / (self.dt_late - self.dt_optimal)
        b3 = -m3 * self.dt_optimal
        return m1, b1, m2, b2, m3, b3


CHALLENGE_UTILITY = UtilityConstants()


@dataclass
class PatientPrediction:
    patient_id: str
    probs: np.ndarray
    predictions: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if not len(self.probs) == len(self.predictions) == len(self.labels):
            raise ContractError(f"patient {self.patient_id}: probs, predictions and labels differ in length")

    @classmethod
    def from_probs(cls, patient_id: str, probs: np.ndarray, labels: np.ndarray,
                   threshold: float) -> 'PatientPrediction':
        probs = np.asarray(probs, dtype=np.float64)
        return cls(patient_id, probs, (probs >= threshold).astype(np.int64), np.asarray(labels))


# ----------------------------------------------------------------------
# Ranking metrics
# ----------------------------------------------------------------------

def _check_scores(scores, labels) -> Tuple[np.ndarray, np.ndarray]:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ContractError(f"scores {scores.shape} and labels {labels.shape} must be equal-length vectors")
    if not np.all(np.isin(labels, (0, 1))):
        raise ContractError("labels must be 0 or 1")
    return scores, labels.astype(np.int64)


def auroc(scores, labels) -> float:
    """
    Area under the ROC curve as P(score_pos > score_neg) + P(tie) / 2

    Computed from average ranks (Mann-Whitney U).
    """
    scores, labels = _check_scores(scores, labels)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("AUROC needs both positive and negative labels")
    ranks = pd.Series(scores).rank(method='average').to_numpy()
    u = ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def _threshold_counts(scores: np.ndarray, labels: np.ndarray):
    """True/false positive counts at each distinct score, highest score first"""
    order = np.argsort(-scores, kind='mergesort')
    s, y = scores[order], labels[order]
    last_of_group = np.r_[np.flatnonzero(np.diff(s)), len(s) - 1]
    tp = np.cumsum(y)[last_of_group]
    fp = (last_of_group + 1) - tp
    return s[last_of_group], tp, fp


def auprc(scores, labels) -> float:
    """
    Average precision: sum over thresholds of (recall step) x precision
    """
    scores, labels = _check_scores(scores, labels)
    n_pos = int(labels.sum())
    if n_pos == 0:
        raise MetricError("AUPRC needs at least one positive label")
    _, tp, fp = _threshold_counts(scores, labels)
    precision = tp / (tp + fp)
    recall = tp / n_pos
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))


def roc_curve(scores, labels) -> Tuple[np.ndarray, np.ndarray]:
    """(false positive rate, true positive rate) points, starting at (0, 0)"""
    scores, labels = _check_scores(scores, labels)
    _, tp, fp = _threshold_counts(scores, labels)
    n_pos, n_neg = max(labels.sum(), 1), max(len(labels) - labels.sum(), 1)
    return np.r_[0.0, fp / n_neg], np.r_[0.0, tp / n_pos]


def pr_curve(scores, labels) -> Tuple[np.ndarray, np.ndarray]:
    """(recall, precision) points, highest threshold first"""
    scores, labels = _check_scores(scores, labels)
    _, tp, fp = _threshold_counts(scores, labels)
    return tp / max(labels.sum(), 1), tp / (tp + fp)


# ----------------------------------------------------------------------
# Utility score
# ----------------------------------------------------------------------

def _onset(labels: np.ndarray, C: UtilityConstants) -> Optional[float]:
    """t_sepsis = first labelled hour - dt_optimal, or None for non-septic"""
    if np.any(labels):
        return float(np.argmax(labels)) - C.dt_optimal
    return None


def hourly_utilities(labels, C: UtilityConstants = CHALLENGE_UTILITY) -> Tuple[np.ndarray, np.ndarray]:
    """
    Per-hour reward for predicting 1 and for predicting 0

    Args:
        labels: 0/1 SepsisLabel per hour
        C: Utility constants

    Returns:
        (u_if_positive, u_if_negative), each one value per hour
    """
    labels = np.asarray(labels)
    n = len(labels)
    t_sepsis = _onset(labels, C)
    if t_sepsis is None:
        return np.full(n, float(C.u_fp)), np.full(n, float(C.u_tn))
    m1, b1, m2, b2, m3, b3 = C.slopes
    dt = np.arange(n) - t_sepsis
    scored = dt <= C.dt_late
    early = dt <= C.dt_optimal
    u_pos = np.where(early, np.maximum(m1 * dt + b1, C.u_fp), m2 * dt + b2)
    u_neg = np.where(early, 0.0, m3 * dt + b3)
    return np.where(scored, u_pos, 0.0), np.where(scored, u_neg, 0.0)


def patient_utility(labels, predictions, C: UtilityConstants = CHALLENGE_UTILITY) -> float:
    """
    Total utility of one patient's hourly binary predictions

    Args:
        labels: 0/1 SepsisLabel per hour
        predictions: 0/1 prediction per hour
        C: Utility constants

    Returns:
        Sum of per-hour rewards; hours after t_sepsis + dt_late contribute 0
    """
    labels, predictions = np.asarray(labels), np.asarray(predictions)
    if len(labels) != len(predictions):
        raise ContractError(f"length mismatch: {len(labels)} labels, {len(predictions)} predictions")
    u_pos, u_neg = hourly_utilities(labels, C)
    return float(np.sum(np.where(predictions == 1, u_pos, u_neg)))


def optimal_predictions(labels, C: UtilityConstants = CHALLENGE_UTILITY) -> np.ndarray:
    """1 on [t_sepsis + dt_early, t_sepsis + dt_late] for septic patients, else all 0"""
    labels = np.asarray(labels)
    best = np.zeros(len(labels), dtype=np.int64)
    t_sepsis = _onset(labels, C)
    if t_sepsis is not None:
        t = np.arange(len(labels))
        best[(t >= t_sepsis + C.dt_early) & (t <= t_sepsis + C.dt_late)] = 1
    return best


def _reference_utilities(cohort_labels: Sequence[np.ndarray], C: UtilityConstants) -> Tuple[float, float]:
    u_optimal = sum(patient_utility(y, optimal_predictions(y, C), C) for y in cohort_labels)
    u_inaction = sum(patient_utility(y, np.zeros(len(y), dtype=np.int64), C) for y in cohort_labels)
    if u_optimal == u_inaction:
        raise MetricError("normalized utility undefined: optimal and inaction utilities coincide")
    return u_optimal, u_inaction


def utility_normalized(cohort: Sequence[PatientPrediction], C: UtilityConstants = CHALLENGE_UTILITY) -> float:
    """
    (U_observed - U_inaction) / (U_optimal - U_inaction) over a cohort
    """
    if not cohort:
        raise ContractError("cohort must not be empty")
    u_observed = sum(patient_utility(p.labels, p.predictions, C) for p in cohort)
    u_optimal, u_inaction = _reference_utilities([p.labels for p in cohort], C)
    return float((u_observed - u_inaction) / (u_optimal - u_inaction))


def select_threshold(val_cohort: Sequence[PatientPrediction],
                     probs: Optional[Sequence[np.ndarray]] = None,
                     C: UtilityConstants = CHALLENGE_UTILITY) -> Tuple[float, float]:
    """
    Pick the probability cut-off that maximizes normalized utility

    Normalization is affine in the summed utility, so the sweep maximizes the
    raw sum and stays defined for cohorts without a septic patient.

    Args:
        val_cohort: Validation patients (labels used; probs unless overridden)
        probs: Optional per-patient probabilities replacing cohort probs
        C: Utility constants

    Returns:
        (threshold, normalized utility at that threshold); ties go to the lowest
        threshold, and the utility is NaN when normalization is undefined
    """
    if not val_cohort:
        raise ContractError("validation cohort must not be empty")
    probs = [np.asarray(p.probs) for p in val_cohort] if probs is None else [np.asarray(p) for p in probs]
    tables = [hourly_utilities(p.labels, C) for p in val_cohort]
    u_pos = np.concatenate([t[0] for t in tables])
    u_neg = np.concatenate([t[1] for t in tables])
    all_probs = np.concatenate(probs).astype(np.float64)
    if all_probs.shape != u_pos.shape:
        raise ContractError("probabilities do not match the cohort's hours")

    # Utility at threshold s = sum(u_neg) + gains of every hour with prob >= s
    order = np.argsort(-all_probs, kind='mergesort')
    sorted_probs = all_probs[order]
    gain = np.cumsum((u_pos - u_neg)[order])
    last_of_group = np.r_[np.flatnonzero(np.diff(sorted_probs)), len(sorted_probs) - 1]
    candidates = sorted_probs[last_of_group]
    totals = u_neg.sum() + gain[last_of_group]

    # candidates descend, so the last near-maximal entry is the lowest threshold
    k = np.flatnonzero(totals >= totals.max() - 1e-9)[-1]
    try:
        u_optimal, u_inaction = _reference_utilities([p.labels for p in val_cohort], C)
    except MetricError as e:
        logger.warning(f"⚠ {e}; threshold chosen on raw utility")
        return float(candidates[k]), float('nan')
    return float(candidates[k]), float((totals[k] - u_inaction) / (u_optimal - u_inaction))


def utility_or_nan(cohort: Sequence[PatientPrediction], C: UtilityConstants = CHALLENGE_UTILITY) -> float:
    """utility_normalized, or NaN with a warning when the cohort has no septic patient"""
    try:
        return utility_normalized(cohort, C)
    except MetricError as e:
        logger.warning(f"⚠ {e}")
        return float('nan')


def ensemble(fold_probs: Sequence[np.ndarray], mode: str, threshold: float) -> np.ndarray:
    """
    Combine K fold models' hourly probabilities into binary predictions

    Args:
        fold_probs: K equal-length probability arrays
        mode: 'average', 'major_vote' or 'any_vote'
        threshold: Cut-off applied to the mean (average) or to each fold (votes)

    Returns:
        0/1 array
    """
    if mode not in ENSEMBLE_MODES:
        raise ContractError(f"unknown ensemble mode '{mode}', expected one of {ENSEMBLE_MODES}")
    if len(fold_probs) < 1:
        raise ContractError("at least one fold is required")
    probs = np.vstack([np.asarray(p, dtype=np.float64) for p in fold_probs])
    if mode == 'average':
        return (probs.mean(axis=0) >= threshold).astype(np.int64)
    votes = (probs >= threshold).sum(axis=0)
    if mode == 'major_vote':
        return (votes > probs.shape[0] / 2.0).astype(np.int64)
    return (votes > 0).astype(np.int64)


# ----------------------------------------------------------------------
# Reports
# ----------------------------------------------------------------------

@dataclass
class ScoreReport:
    auroc: float
    auprc: float
    utility_normalized: float
    threshold: Optional[float] = None
    n_patients: int = 0
    n_hours: int = 0
    per_fold: List[Dict] = field(default_factory=list)
    ensemble_mode: Optional[str] = None
    ensemble_utilities: Dict[str, float] = field(default_factory=dict)
    config: Dict = field(default_factory=dict)
    extra: Dict = field(default_factory=dict)

    def to_dict(self) -> Dict:
        return asdict(self)

    def to_text(self) -> str:
        lines = [
            "SCORE REPORT",
            f"  Patients: {self.n_patients}",
            f"  Hours: {self.n_hours}",
            f"  AUROC: {self.auroc:.4f}",
            f"  AUPRC: {self.auprc:.4f}",
            f"  Utility (normalized): {self.utility_normalized:.4f}",
        ]
        if self.threshold is not None:
            lines.append(f"  Threshold: {self.threshold:.6f}")
        if self.ensemble_utilities:
            lines.append(f"  Ensemble mode reported: {self.ensemble_mode}")
            for mode, value in self.ensemble_utilities.items():
                lines.append(f"    {mode}: {value:.4f}")
        if self.per_fold:
            lines.append("  Per fold:")
            lines.append(pd.DataFrame(self.per_fold).to_string(index=False))
        if self.config:
            lines.append("  Config:")
            lines.extend(f"    {k} = {v}" for k, v in sorted(self.config.items()))
        return '\n'.join(lines) + '\n'

    def save(self, output_dir: str, name: str = 'score_report'):
        """Write <name>.txt and <name>.json into output_dir"""
        output_path = Path(output_dir)
        output_path.mkdir(parents=True, exist_ok=True)
        (output_path / f'{name}.txt').write_text(self.to_text())
        with open(output_path / f'{name}.json', 'w') as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)
        logger.info(f"✓ Score report saved to: {output_path / name}.{{txt,json}}")


def score_cohort(cohort: Sequence[PatientPrediction], C: UtilityConstants = CHALLENGE_UTILITY,
                 threshold: Optional[float] = None, strict: bool = True) -> ScoreReport:
    """
    Pooled-hour AUROC/AUPRC and cohort utility of a set of patient predictions

    With strict=False a metric that is undefined for the cohort (a single
    label class, no septic patient) is reported as NaN instead of raising.
    """
    if not cohort:
        raise ContractError("cohort must not be empty")
    probs = np.concatenate([p.probs for p in cohort])
    labels = np.concatenate([p.labels for p in cohort])

    def measure(metric, *args) -> float:
        try:
            return metric(*args)
        except MetricError as e:
            if strict:
                raise
            logger.warning(f"⚠ {e}; reported as NaN")
            return float('nan')

    return ScoreReport(auroc=measure(auroc, probs, labels),
                       auprc=measure(auprc, probs, labels),
                       utility_normalized=measure(utility_normalized, cohort, C),
                       threshold=threshold,
                       n_patients=len(cohort),
                       n_hours=len(labels))
