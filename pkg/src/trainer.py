"""
Trainer Module
Training loop plus the train, cv, predict, evaluate, split, compare and gradcheck pipelines
"""

import logging
import shutil
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from sklearn.model_selection import StratifiedKFold, train_test_split
from tqdm import tqdm

import numcore as nc
from checkpoint import Checkpoint
from cohort_simulator import random_window_batch
from config import ModelConfig
from errors import CheckpointError, ContractError, TrainingError
from metrics import (ENSEMBLE_MODES, PatientPrediction, ScoreReport, auprc, auroc, ensemble,
                     score_cohort, select_threshold, utility_or_nan)
from preprocess import NormStats, WindowBatch, WindowGenerator, apply_normalizer, record_windows
from psv_ingest import (PatientRecord, list_patient_files, read_directory, read_prediction_file,
                        summarize_records, write_prediction_file)
from seq_model import SepsisModel, WeightedSampler, build_model, end_to_end_grad_check
from visualizer import SepsisVisualizer

logger = logging.getLogger(__name__)

PRIMITIVE_TOLERANCE = 1e-6
END_TO_END_TOLERANCE = 1e-4
SPLIT_NAMES = {'7:3': ('train', 'test'), '9:1': ('train', 'held')}


@dataclass
class TrainingHistory:
    train_loss: List[float] = field(default_factory=list)
    val_loss: List[float] = field(default_factory=list)
    steps: int = 0
    skipped_steps: int = 0

    def to_dict(self) -> Dict:
        return {'train_loss': list(self.train_loss), 'val_loss': list(self.val_loss),
                'steps': self.steps, 'skipped_steps': self.skipped_steps}


@dataclass
class TrainResult:
    model: SepsisModel
    checkpoint: Checkpoint
    report: ScoreReport
    history: TrainingHistory
    norm_stats: NormStats
    val_cohort: List[PatientPrediction]


class SepsisTrainer:
    """
    Minibatch Adam training on weighted-sampled windows
    """

    def __init__(self, config: ModelConfig, show_progress: bool = False):
        """
        Args:
            config: Resolved model configuration
            show_progress: Draw tqdm bars over each epoch's minibatches
        """
        self.config = config
        self.show_progress = show_progress

    def _diagnose(self, model: SepsisModel, epoch: int, step: int, loss: float) -> str:
        bad = [name for name, p in model.params.items() if not np.all(np.isfinite(p.data))]
        norms = {name: float(np.linalg.norm(p.data)) for name, p in model.params.items()}
        largest = max(norms, key=norms.get)
        return (f"non-finite loss {loss} at epoch {epoch}, step {step}; "
                f"non-finite parameters: {bad or 'none'}; "
                f"largest parameter norm: {largest} = {norms[largest]:.3g}; "
                f"learning rate {self.config.learning_rate}")

    def evaluate_loss(self, model: SepsisModel, batch: WindowBatch) -> float:
        """Unweighted mean BCE over a batch, evaluated in chunks"""
        size = self.config.batch_size
        total = 0.0
        for start in range(0, len(batch), size):
            chunk = batch.subset(np.arange(start, min(start + size, len(batch))))
            total += model.loss(chunk, training=False).item() * len(chunk)
        return total / len(batch)

    def fit(self, train_records: Sequence[PatientRecord],
            val_records: Optional[Sequence[PatientRecord]] = None
            ) -> Tuple[SepsisModel, NormStats, TrainingHistory]:
        """
        Fit normalization on the training records and train a fresh model

        Args:
            train_records: Training patients
            val_records: Optional patients for a per-epoch validation loss

        Returns:
            (model, normalization stats, loss history)
        """
        config = self.config
        if not train_records:
            raise TrainingError("empty training set")
        generator = WindowGenerator(config.window_length, config.std_floor)
        stats = generator.fit(train_records)
        train_batch = generator.transform(train_records)
        val_batch = generator.transform(val_records) if val_records else None
        summary = generator.get_window_summary(train_batch)
        logger.info(f"✓ {summary['total_windows']:,} training windows, "
                    f"{summary['positive_fraction']:.2%} positive")

        model = build_model(config)
        state = nc.AdamState(lr=config.learning_rate, beta1=config.beta1, beta2=config.beta2,
                             eps=config.adam_eps, weight_decay=config.weight_decay,
                             grad_clip=config.grad_clip)
        sampler = WeightedSampler(train_batch.labels, config.pos_weight, config.target_pos_fraction)
        rng = np.random.default_rng(config.seed + 2)
        history = TrainingHistory()

        for epoch in range(1, config.epochs + 1):
            order = sampler.sample(len(train_batch), rng)
            starts = range(0, len(order), config.batch_size)
            losses = []
            for step, start in enumerate(tqdm(starts, desc=f"Epoch {epoch}/{config.epochs}",
                                              disable=not self.show_progress, leave=False)):
                batch = train_batch.subset(order[start:start + config.batch_size])
                with nc.Tape() as tape:
                    loss = model.loss(batch, training=True)
                value = loss.item()
                if not np.isfinite(value):
                    raise TrainingError(self._diagnose(model, epoch, step, value))
                tape.backward(loss)
                nc.adam_step(state, model.params)
                losses.append(value)
            history.train_loss.append(float(np.mean(losses)))
            message = f"  Epoch {epoch}/{config.epochs}: train loss {history.train_loss[-1]:.4f}"
            if val_batch is not None and len(val_batch):
                history.val_loss.append(self.evaluate_loss(model, val_batch))
                message += f", val loss {history.val_loss[-1]:.4f}"
            logger.info(message)

        history.steps = state.step_count
        history.skipped_steps = state.skipped_steps
        return model, stats, history


def predict_records(model: SepsisModel, stats: NormStats,
                    records: Sequence[PatientRecord]) -> List[np.ndarray]:
    """Hourly probabilities for each record, one window per hour"""
    L = model.config.window_length
    return [model.predict_proba(record_windows(apply_normalizer(r, stats), L)) for r in records]


def train_model(config: ModelConfig, train_records: Sequence[PatientRecord],
                val_records: Sequence[PatientRecord], show_progress: bool = False) -> TrainResult:
    """
    Train, pick the threshold on validation and package a checkpoint

    The in-memory model is reloaded from the float32 checkpoint tensors before
    validation, so it predicts exactly what a loaded checkpoint predicts.
    """
    if not val_records:
        raise TrainingError("empty validation set, needed to select the threshold")
    model, stats, history = SepsisTrainer(config, show_progress).fit(train_records, val_records)

    checkpoint = Checkpoint.from_model(model, stats)
    model.params.load_state_dict(checkpoint.tensors)

    val_probs = predict_records(model, stats, val_records)
    draft = [PatientPrediction.from_probs(r.patient_id, p, r.labels, 0.5)
             for r, p in zip(val_records, val_probs)]
    threshold, val_utility = select_threshold(draft)
    config = config.update({'threshold': threshold})
    model.config = config
    checkpoint.config = config
    logger.info(f"✓ Selected threshold {threshold:.6f} (validation utility {val_utility:.4f})")

    val_cohort = [PatientPrediction.from_probs(r.patient_id, p, r.labels, threshold)
                  for r, p in zip(val_records, val_probs)]
    report = score_cohort(val_cohort, threshold=threshold, strict=False)
    report.config = config.to_dict()
    report.extra = {
        'history': history.to_dict(),
        'train_summary': summarize_records(train_records).to_dict(),
        'val_summary': summarize_records(val_records).to_dict(),
    }
    checkpoint.metadata = {
        'epochs_run': len(history.train_loss),
        'final_train_loss': history.train_loss[-1] if history.train_loss else None,
        'final_val_loss': history.val_loss[-1] if history.val_loss else None,
        'optimizer_steps': history.steps,
        'skipped_steps': history.skipped_steps,
        'n_train_patients': len(train_records),
        'n_val_patients': len(val_records),
        'val_utility': val_utility,
    }
    return TrainResult(model, checkpoint, report, history, stats, val_cohort)


def _require_records(directory: str, what: str, show_progress: bool = False) -> List[PatientRecord]:
    if not Path(directory).is_dir():
        raise TrainingError(f"{what} directory not found: {directory}")
    records = read_directory(directory, progress=show_progress)
    if not records:
        raise TrainingError(f"no .psv patient files in {what} directory {directory}")
    return records


def write_training_plots(result: TrainResult, val_records: Sequence[PatientRecord],
                         output_dir: Path, visualizer: Optional[SepsisVisualizer] = None):
    """Loss curve, ROC/PR curves and, for HEA models, one attention heat map"""
    visualizer = visualizer or SepsisVisualizer()
    visualizer.plot_training_curves(result.history.to_dict(), str(output_dir / 'training_curves.png'))
    scores = np.concatenate([p.probs for p in result.val_cohort])
    labels = np.concatenate([p.labels for p in result.val_cohort])
    visualizer.plot_roc_pr(scores, labels, str(output_dir / 'roc_pr_curves.png'))

    if result.model.kind == 'hea_lstm' and val_records:
        # Last hour of the first septic validation patient, else of the first patient
        record = next((r for r in val_records if r.is_septic), val_records[0])
        batch = record_windows(apply_normalizer(record, result.norm_stats), result.model.config.window_length)
        window = batch.subset(np.array([len(batch) - 1]))
        weights = result.model.hea.attention_weights(window)[0]
        observed = np.concatenate([window.obs_mask[0], np.ones((window.window_length, 3), dtype=bool)], axis=1)
        visualizer.plot_attention_heatmap(weights, str(output_dir / 'attention_heatmap.png'),
                                          observed=observed)


def cmd_train(config: ModelConfig, train_dir: str, val_dir: str, output_dir: str,
              show_progress: bool = True, plots: bool = True) -> TrainResult:
    """
    Train on one directory, select the threshold on another, write checkpoint and report

    Returns:
        TrainResult; files written: model.ckpt, train_report.{txt,json},
        resolved_config.json and the plots
    """
    train_records = _require_records(train_dir, 'training', show_progress)
    val_records = _require_records(val_dir, 'validation', show_progress)
    result = train_model(config, train_records, val_records, show_progress)

    output_path = Path(output_dir)
    output_path.mkdir(parents=True, exist_ok=True)
    result.checkpoint.save(str(output_path / 'model.ckpt'))
    result.checkpoint.config.save(str(output_path / 'resolved_config.json'))
    result.report.save(str(output_path), 'train_report')
    if plots:
        write_training_plots(result, val_records, output_path)
    return result


def split_records(records: Sequence[PatientRecord], train_fraction: float,
                  seed: int = 0) -> Tuple[List[PatientRecord], List[PatientRecord]]:
    """
    Patient-level split stratified by septic status

    Assignment depends only on (seed, sorted patient ids).
    """
    by_id = {r.patient_id: r for r in records}
    ids = sorted(by_id)
    septic = [by_id[i].is_septic for i in ids]
    try:
        first, second = train_test_split(ids, train_size=train_fraction, stratify=septic,
                                         random_state=seed)
    except ValueError as e:
        raise ContractError(f"cannot build a stratified {train_fraction:.0%} split: {e}")
    return [by_id[i] for i in sorted(first)], [by_id[i] for i in sorted(second)]


def make_folds(records: Sequence[PatientRecord], k: int = 5,
               seed: int = 0) -> List[Tuple[List[str], List[str]]]:
    """
    Stratified patient-level folds

    Returns:
        k (train_ids, val_ids) pairs; every patient is in exactly one val_ids
    """
    ids = sorted(r.patient_id for r in records)
    septic = {r.patient_id: r.is_septic for r in records}
    y = np.array([septic[i] for i in ids], dtype=np.int64)
    n_septic = int(y.sum())
    if k < 2:
        raise ContractError(f"cross validation needs k >= 2, got {k}")
    if n_septic < k or len(y) - n_septic < k:
        raise TrainingError(f"{k}-fold cross validation needs at least {k} septic and {k} non-septic "
                            f"patients, found {n_septic} and {len(y) - n_septic}")
    folds = StratifiedKFold(n_splits=k, shuffle=True, random_state=seed)
    return [([ids[i] for i in train_idx], [ids[i] for i in val_idx])
            for train_idx, val_idx in folds.split(np.zeros(len(ids)), y)]


@dataclass
class CvResult:
    report: ScoreReport
    checkpoint_paths: List[Path]
    folds: List[Tuple[List[str], List[str]]]
    test_ids: List[str]


def cmd_cv(config: ModelConfig, data_dir: str, output_dir: str, k: int = 5,
           test_dir: Optional[str] = None, show_progress: bool = True, plots: bool = False) -> CvResult:
    """
    k-fold cross validation with fold-model ensembling

    Each fold model is trained on k-1 folds and picks its threshold on the
    remaining fold. The fold models are then ensembled on the test patients
    (test_dir, or a stratified 10% held out of data_dir) in every vote mode,
    using the mean of the fold thresholds.
    """
    records = _require_records(data_dir, 'cross-validation', show_progress)
    if test_dir is not None:
        pool, test_records = records, _require_records(test_dir, 'test', show_progress)
    else:
        pool, test_records = split_records(records, 0.9, config.seed)
        logger.info(f"✓ Held out {len(test_records)} patients for ensembling")
    folds = make_folds(pool, k, config.seed)
    by_id = {r.patient_id: r for r in pool}

    output_path = Path(output_dir)
    output_path.mkdir(parents=True, exist_ok=True)
    fold_rows, fold_probs, thresholds, paths = [], [], [], []
    for f, (train_ids, val_ids) in enumerate(folds, start=1):
        logger.info(f"Fold {f}/{k}: {len(train_ids)} training, {len(val_ids)} validation patients")
        result = train_model(config, [by_id[i] for i in train_ids], [by_id[i] for i in val_ids],
                             show_progress)
        path = output_path / f'fold_{f}.ckpt'
        result.checkpoint.save(str(path))
        paths.append(path)
        if plots:
            fold_dir = output_path / f'fold_{f}'
            fold_dir.mkdir(exist_ok=True)
            write_training_plots(result, [by_id[i] for i in val_ids], fold_dir)

        probs = predict_records(result.model, result.norm_stats, test_records)
        fold_probs.append(probs)
        thresholds.append(result.report.threshold)
        test_cohort = [PatientPrediction.from_probs(r.patient_id, p, r.labels, result.report.threshold)
                       for r, p in zip(test_records, probs)]
        fold_rows.append({'fold': f, 'n_train': len(train_ids), 'n_val': len(val_ids),
                          'val_auroc': result.report.auroc, 'val_auprc': result.report.auprc,
                          'val_utility': result.report.utility_normalized,
                          'threshold': result.report.threshold,
                          'test_utility': utility_or_nan(test_cohort)})

    threshold = float(np.mean(thresholds))
    utilities = {}
    for mode in ENSEMBLE_MODES:
        cohort = [PatientPrediction(r.patient_id,
                                    np.mean([fp[j] for fp in fold_probs], axis=0),
                                    ensemble([fp[j] for fp in fold_probs], mode, threshold),
                                    r.labels)
                  for j, r in enumerate(test_records)]
        utilities[mode] = utility_or_nan(cohort)
        logger.info(f"  Ensemble {mode}: utility {utilities[mode]:.4f}")

    mean_probs = np.concatenate([np.mean([fp[j] for fp in fold_probs], axis=0)
                                 for j in range(len(test_records))])
    labels = np.concatenate([r.labels for r in test_records])
    report = ScoreReport(auroc=auroc(mean_probs, labels), auprc=auprc(mean_probs, labels),
                         utility_normalized=utilities['average'], threshold=threshold,
                         n_patients=len(test_records), n_hours=len(labels), per_fold=fold_rows,
                         ensemble_mode='average', ensemble_utilities=utilities,
                         config=config.to_dict(),
                         extra={'k': k, 'test_source': test_dir or 'held out 10% of data_dir'})
    report.save(str(output_path), 'cv_report')
    return CvResult(report, paths, folds, [r.patient_id for r in test_records])


def cmd_predict(checkpoint_path: str, input_dir: str, output_dir: str) -> List[Path]:
    """
    Write one prediction file per input patient using the stored stats and threshold

    Returns:
        Paths of the written files, named <patient_id>.psv
    """
    checkpoint = Checkpoint.load(checkpoint_path)
    threshold = checkpoint.config.threshold
    if threshold is None:
        raise CheckpointError(f"{checkpoint_path}: checkpoint carries no decision threshold")
    model = checkpoint.build_model()
    records = read_directory(input_dir)

    output_path = Path(output_dir)
    output_path.mkdir(parents=True, exist_ok=True)
    paths = []
    for record, probs in zip(records, predict_records(model, checkpoint.norm_stats, records)):
        path = output_path / f"{record.patient_id}.psv"
        path.write_text(write_prediction_file(probs, (probs >= threshold).astype(np.int64)))
        paths.append(path)
    logger.info(f"✓ Wrote {len(paths)} prediction files to: {output_path}")
    return paths


def cmd_evaluate(label_dir: str, prediction_dir: str, output_dir: Optional[str] = None) -> ScoreReport:
    """
    Score prediction files against labelled patient files

    Returns:
        ScoreReport with pooled-hour AUROC/AUPRC and cohort utility
    """
    records = {r.patient_id: r for r in read_directory(label_dir)}
    predictions = {p.stem: p for p in list_patient_files(prediction_dir)}
    if not records:
        raise ContractError(f"no labelled patient files in {label_dir}")
    no_predictions = sorted(set(records) - set(predictions))
    no_labels = sorted(set(predictions) - set(records))
    if no_predictions or no_labels:
        raise ContractError(f"unmatched patient ids: no predictions for {no_predictions}, "
                            f"no labels for {no_labels}")

    cohort = []
    for pid in sorted(records):
        probs, predicted = read_prediction_file(predictions[pid].read_text(), predictions[pid].name)
        labels = records[pid].labels
        if len(probs) != len(labels):
            raise ContractError(f"patient {pid}: {len(probs)} predictions for {len(labels)} hours")
        cohort.append(PatientPrediction(pid, probs, predicted, labels))
    report = score_cohort(cohort)
    if output_dir is not None:
        report.save(output_dir, 'evaluation_report')
    return report


def cmd_split(data_dir: str, output_dir: str, ratio: str = '7:3', seed: int = 0,
              copy_files: bool = True) -> Dict[str, List[str]]:
    """
    Stratified 7:3 (train/test) or 9:1 (train/held) patient split

    Writes <name>_ids.txt per part and, with copy_files, the .psv files into
    <output_dir>/<name>/ so they can be passed to train directly.
    """
    if ratio not in SPLIT_NAMES:
        raise ContractError(f"ratio must be one of {sorted(SPLIT_NAMES)}, got '{ratio}'")
    first_name, second_name = SPLIT_NAMES[ratio]
    parts = [int(x) for x in ratio.split(':')]
    files = {p.stem: p for p in list_patient_files(data_dir)}
    records = read_directory(data_dir)
    if not records:
        raise ContractError(f"no .psv patient files in {data_dir}")
    first, second = split_records(records, parts[0] / sum(parts), seed)

    output_path = Path(output_dir)
    output_path.mkdir(parents=True, exist_ok=True)
    result = {}
    for name, part in ((first_name, first), (second_name, second)):
        ids = [r.patient_id for r in part]
        (output_path / f'{name}_ids.txt').write_text(''.join(f"{i}\n" for i in ids))
        if copy_files:
            (output_path / name).mkdir(exist_ok=True)
            for i in ids:
                shutil.copy2(files[i], output_path / name / files[i].name)
        result[name] = ids
        logger.info(f"✓ {name}: {len(ids)} patients, {sum(r.is_septic for r in part)} septic")
    return result


def compare_variants(heads: Sequence[int] = (1, 8, 16)) -> List[Tuple[str, Dict]]:
    variants = [('MLP', {'model_kind': 'mlp'}),
                ('LSTM', {'model_kind': 'dense_lstm'})]
    variants += [(f'{M}-heads-HEA-LSTM', {'model_kind': 'hea_lstm', 'num_heads': M}) for M in heads]
    return variants


def cmd_compare(config: ModelConfig, train_dir: str, val_dir: str, output_dir: str,
                heads: Sequence[int] = (1, 8, 16), show_progress: bool = True,
                plots: bool = True) -> pd.DataFrame:
    """
    Train every model kind on the same split and tabulate validation metrics

    Returns:
        DataFrame with one row per model: auroc, auprc, utility_normalized,
        threshold and parameter count
    """
    train_records = _require_records(train_dir, 'training', show_progress)
    val_records = _require_records(val_dir, 'validation', show_progress)
    output_path = Path(output_dir)
    output_path.mkdir(parents=True, exist_ok=True)

    rows = []
    for name, overrides in compare_variants(heads):
        logger.info(f"Training {name}")
        result = train_model(config.update(overrides), train_records, val_records, show_progress)
        rows.append({'model': name,
                     'auroc': result.report.auroc,
                     'auprc': result.report.auprc,
                     'utility_normalized': result.report.utility_normalized,
                     'threshold': result.report.threshold,
                     'parameters': result.model.params.num_values()})
    table = pd.DataFrame(rows)
    table.to_csv(output_path / 'comparison.csv', index=False)
    (output_path / 'comparison.txt').write_text(table.to_string(index=False, float_format='%.4f') + '\n')
    logger.info(f"✓ Comparison table saved to: {output_path / 'comparison.csv'}")
    if plots:
        SepsisVisualizer().plot_model_comparison(table, str(output_path / 'model_comparison.png'))
    return table


@dataclass
class GradCheckSummary:
    primitives: Dict[str, float]
    end_to_end: Dict[str, float]
    checked_windows: int

    @property
    def passed(self) -> bool:
        return (all(e < PRIMITIVE_TOLERANCE for e in self.primitives.values())
                and all(e < END_TO_END_TOLERANCE for e in self.end_to_end.values()))

    def to_frame(self) -> pd.DataFrame:
        rows = [{'check': name, 'max_relative_error': e, 'tolerance': PRIMITIVE_TOLERANCE}
                for name, e in self.primitives.items()]
        rows += [{'check': name, 'max_relative_error': e, 'tolerance': END_TO_END_TOLERANCE}
                 for name, e in self.end_to_end.items()]
        df = pd.DataFrame(rows)
        df['passed'] = df['max_relative_error'] < df['tolerance']
        return df


def cmd_gradcheck(seed: int = 0, n_windows: int = 5, heads: Sequence[int] = (1, 8),
                  window_length: int = 24, embed_dim: int = 16, hidden_size: int = 8,
                  max_entries: Optional[int] = 20, primitive_trials: int = 100,
                  model_kinds: Sequence[str] = ('hea_lstm',)) -> GradCheckSummary:
    """
    Primitive and end-to-end gradient checks in double precision

    Args:
        seed: Seed of inputs, models and entry sampling
        n_windows: Random windows checked per model, one at a time
        heads: Head counts of the HEA models checked
        window_length, embed_dim, hidden_size: Model sizes
        max_entries: Entries sampled per parameter tensor (None checks all)
        primitive_trials: Random draws per primitive op
        model_kinds: Model kinds checked end to end; the baselines use heads[0]

    Returns:
        GradCheckSummary with the worst relative error per check
    """
    rng = np.random.default_rng(seed)
    primitives = nc.primitive_grad_checks(rng, primitive_trials)
    batch = random_window_batch(rng, n_windows, window_length, pad_hours=min(3, window_length - 1))

    end_to_end = {}
    for kind in model_kinds:
        for M in (heads if kind == 'hea_lstm' else heads[:1]):
            config = ModelConfig(window_length=window_length, embed_dim=embed_dim, num_heads=M,
                                 hidden_size=hidden_size, model_kind=kind, mlp_hidden=[16, 8],
                                 dense_embed_dim=embed_dim, precision='float64', seed=seed)
            model = build_model(config)
            worst = 0.0
            for i in range(n_windows):
                report = end_to_end_grad_check(model, batch.subset(np.array([i])),
                                               max_entries=max_entries, rng=rng)
                worst = max(worst, report.max_relative_error if report.finite else float('inf'))
            name = f'{kind}_M{M}' if kind == 'hea_lstm' else kind
            end_to_end[name] = worst
            logger.info(f"  {name}: max relative error {worst:.2e}")
    return GradCheckSummary(primitives, end_to_end, n_windows)
