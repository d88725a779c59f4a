"""Tests for training, the pipelines built on it and the command-line entry point."""

import inspect

import numpy as np
import pytest

from checkpoint import load_checkpoint
from cohort_simulator import CohortSimulator
from config import ModelConfig
from errors import CheckpointError, ContractError, TrainingError
from main import build_parser, main
from metrics import ENSEMBLE_MODES, optimal_predictions
from numcore import Tensor
from psv_ingest import read_directory, read_prediction_file, write_prediction_file
from seq_model import SepsisModel
from trainer import (SepsisTrainer, cmd_compare, cmd_cv, cmd_evaluate, cmd_gradcheck, cmd_predict,
                     cmd_split, cmd_train, compare_variants, make_folds, predict_records, split_records,
                     train_model)


class TestSepsisTrainer:

    def test_fit_history(self, tiny_config, small_cohort):
        model, stats, history = SepsisTrainer(tiny_config).fit(small_cohort[:14], small_cohort[14:])
        assert len(history.train_loss) == tiny_config.epochs
        assert len(history.val_loss) == tiny_config.epochs
        assert history.steps > 0
        assert np.all(np.isfinite(history.train_loss))

    def test_empty_training_set(self, tiny_config):
        with pytest.raises(TrainingError):
            SepsisTrainer(tiny_config).fit([])

    def test_non_finite_loss_reports_diagnostics(self, monkeypatch, tiny_config, small_cohort):
        monkeypatch.setattr(SepsisModel, 'loss', lambda self, batch, training=True: Tensor(np.nan))
        with pytest.raises(TrainingError, match='non-finite loss'):
            SepsisTrainer(tiny_config).fit(small_cohort)


class TestTrainModel:

    def test_threshold_selected(self, tiny_config, cohort_dirs):
        train, val = (read_directory(d) for d in cohort_dirs)
        result = train_model(tiny_config, train, val)
        assert result.report.threshold is not None
        assert result.checkpoint.config.threshold == result.report.threshold
        assert result.checkpoint.metadata['n_train_patients'] == 16
        assert result.checkpoint.metadata['epochs_run'] == tiny_config.epochs

    def test_validation_without_septic_patients(self, tmp_path, tiny_config, cohort_dirs):
        train_dir, _ = cohort_dirs
        simulator = CohortSimulator(seed=21, septic_fraction=0.0, min_hours=8, max_hours=16)
        simulator.write_cohort(simulator.simulate_cohort(5, prefix='n'), str(tmp_path / 'quiet'))
        result = cmd_train(tiny_config, str(train_dir), str(tmp_path / 'quiet'), str(tmp_path / 'out'),
                           False, plots=True)
        probs = np.concatenate([p.probs for p in result.val_cohort])
        assert result.report.threshold == probs.max()
        assert np.isnan(result.report.utility_normalized)
        assert np.isnan(result.checkpoint.metadata['val_utility'])
        assert load_checkpoint(str(tmp_path / 'out' / 'model.ckpt')).config.threshold == probs.max()

    def test_empty_validation(self, tiny_config, small_cohort):
        with pytest.raises(TrainingError):
            train_model(tiny_config, small_cohort, [])

    def test_checkpoint_bytes_deterministic(self, tmp_path, tiny_config, cohort_dirs):
        train_dir, val_dir = cohort_dirs
        cmd_train(tiny_config, str(train_dir), str(val_dir), str(tmp_path / 'a'), False, plots=False)
        cmd_train(tiny_config, str(train_dir), str(val_dir), str(tmp_path / 'b'), False, plots=False)
        assert (tmp_path / 'a' / 'model.ckpt').read_bytes() == (tmp_path / 'b' / 'model.ckpt').read_bytes()

    def test_writes_outputs(self, tmp_path, tiny_config, cohort_dirs):
        train_dir, val_dir = cohort_dirs
        out = tmp_path / 'run'
        cmd_train(tiny_config, str(train_dir), str(val_dir), str(out), False, plots=True)
        for name in ('model.ckpt', 'resolved_config.json', 'train_report.txt', 'train_report.json',
                     'training_curves.png', 'attention_heatmap.png'):
            assert (out / name).exists(), name

    def test_empty_directory_writes_nothing(self, tmp_path, tiny_config, cohort_dirs):
        _, val_dir = cohort_dirs
        empty = tmp_path / 'empty'
        empty.mkdir()
        with pytest.raises(TrainingError):
            cmd_train(tiny_config, str(empty), str(val_dir), str(tmp_path / 'out'), False, plots=False)
        assert not (tmp_path / 'out' / 'model.ckpt').exists()

    def test_missing_directory(self, tmp_path, tiny_config, cohort_dirs):
        train_dir, _ = cohort_dirs
        with pytest.raises(TrainingError):
            cmd_train(tiny_config, str(train_dir), str(tmp_path / 'nope'), str(tmp_path / 'out'),
                      False, plots=False)


class TestPredictAndEvaluate:

    @pytest.fixture
    def trained(self, tmp_path, tiny_config, cohort_dirs):
        train_dir, val_dir = cohort_dirs
        result = cmd_train(tiny_config, str(train_dir), str(val_dir), str(tmp_path / 'run'), False,
                           plots=False)
        return result, tmp_path / 'run' / 'model.ckpt', val_dir

    def test_loaded_checkpoint_predicts_bitwise(self, trained):
        result, path, val_dir = trained
        records = read_directory(val_dir)
        checkpoint = load_checkpoint(str(path))
        loaded = predict_records(checkpoint.build_model(), checkpoint.norm_stats, records)
        in_memory = predict_records(result.model, result.norm_stats, records)
        for a, b in zip(loaded, in_memory):
            np.testing.assert_array_equal(a, b)

    def test_prediction_files(self, tmp_path, trained):
        result, path, val_dir = trained
        records = read_directory(val_dir)
        paths = cmd_predict(str(path), str(val_dir), str(tmp_path / 'pred'))
        assert len(paths) == len(records)
        in_memory = predict_records(result.model, result.norm_stats, records)
        threshold = result.report.threshold
        for record, file, probs in zip(records, paths, in_memory):
            text = file.read_text()
            assert len(text.splitlines()) == record.n_hours + 1
            written_probs, written_labels = read_prediction_file(text)
            np.testing.assert_allclose(written_probs, probs, atol=5e-7 + 1e-12)
            np.testing.assert_array_equal(written_labels, (probs >= threshold).astype(int))

    def test_predict_then_evaluate(self, tmp_path, trained):
        _, path, val_dir = trained
        cmd_predict(str(path), str(val_dir), str(tmp_path / 'pred'))
        report = cmd_evaluate(str(val_dir), str(tmp_path / 'pred'), str(tmp_path / 'eval'))
        assert 0.0 <= report.auroc <= 1.0
        assert (tmp_path / 'eval' / 'evaluation_report.txt').exists()

    def test_predict_needs_threshold(self, tmp_path, trained):
        _, path, val_dir = trained
        checkpoint = load_checkpoint(str(path))
        checkpoint.config = ModelConfig.from_dict({k: v for k, v in checkpoint.config.to_dict().items()
                                                   if k != 'threshold'})
        checkpoint.save(str(tmp_path / 'nothreshold.ckpt'))
        with pytest.raises(CheckpointError):
            cmd_predict(str(tmp_path / 'nothreshold.ckpt'), str(val_dir), str(tmp_path / 'pred'))


class TestEvaluate:

    @staticmethod
    def write_predictions(directory, records, predict):
        directory.mkdir()
        for record in records:
            labels = predict(record)
            (directory / f"{record.patient_id}.psv").write_text(
                write_prediction_file(labels.astype(float), labels))

    def test_optimal_scores_one(self, tmp_path, cohort_dirs):
        _, val_dir = cohort_dirs
        records = read_directory(val_dir)
        self.write_predictions(tmp_path / 'pred', records, lambda r: optimal_predictions(r.labels))
        report = cmd_evaluate(str(val_dir), str(tmp_path / 'pred'))
        assert report.utility_normalized == pytest.approx(1.0, abs=1e-9)

    def test_all_zero_scores_zero(self, tmp_path, cohort_dirs):
        _, val_dir = cohort_dirs
        records = read_directory(val_dir)
        self.write_predictions(tmp_path / 'pred', records, lambda r: np.zeros(r.n_hours, dtype=int))
        report = cmd_evaluate(str(val_dir), str(tmp_path / 'pred'))
        assert report.utility_normalized == pytest.approx(0.0, abs=1e-9)

    def test_unmatched_ids(self, tmp_path, cohort_dirs):
        _, val_dir = cohort_dirs
        records = read_directory(val_dir)
        self.write_predictions(tmp_path / 'pred', records, lambda r: np.zeros(r.n_hours, dtype=int))
        (tmp_path / 'pred' / f"{records[0].patient_id}.psv").unlink()
        with pytest.raises(ContractError, match=records[0].patient_id):
            cmd_evaluate(str(val_dir), str(tmp_path / 'pred'))

    def test_length_mismatch(self, tmp_path, cohort_dirs):
        _, val_dir = cohort_dirs
        records = read_directory(val_dir)
        self.write_predictions(tmp_path / 'pred', records, lambda r: np.zeros(r.n_hours - 1, dtype=int))
        with pytest.raises(ContractError):
            cmd_evaluate(str(val_dir), str(tmp_path / 'pred'))


class TestSplitsAndFolds:

    def test_folds_partition_patients(self, small_cohort):
        folds = make_folds(small_cohort, k=5, seed=0)
        ids = sorted(r.patient_id for r in small_cohort)
        val_ids = [i for _, val in folds for i in val]
        assert sorted(val_ids) == ids
        for train, val in folds:
            assert not set(train) & set(val)
            assert sorted(train + val) == ids

    def test_folds_stratified(self, small_cohort):
        septic = {r.patient_id for r in small_cohort if r.is_septic}
        per_fold = [len(set(val) & septic) for _, val in make_folds(small_cohort, k=4, seed=1)]
        assert max(per_fold) - min(per_fold) <= 1
        assert sum(per_fold) == len(septic)

    def test_folds_deterministic_and_order_free(self, small_cohort):
        a = make_folds(small_cohort, k=3, seed=2)
        b = make_folds(list(reversed(small_cohort)), k=3, seed=2)
        assert a == b

    def test_fold_count_limits(self, small_cohort):
        with pytest.raises(ContractError):
            make_folds(small_cohort, k=1)
        with pytest.raises(TrainingError):
            make_folds(small_cohort, k=10)

    def test_split_records(self, small_cohort):
        first, second = split_records(small_cohort, 0.7, seed=3)
        assert len(first) == 14 and len(second) == 6
        assert {r.patient_id for r in first}.isdisjoint(r.patient_id for r in second)
        again = split_records(small_cohort, 0.7, seed=3)[1]
        assert [r.patient_id for r in again] == [r.patient_id for r in second]

    def test_cmd_split(self, tmp_path, small_cohort):
        CohortSimulator().write_cohort(small_cohort, str(tmp_path / 'all'))
        parts = cmd_split(str(tmp_path / 'all'), str(tmp_path / 'split'), ratio='7:3', seed=0)
        assert sorted(parts) == ['test', 'train']
        assert len(parts['train']) == 14 and len(parts['test']) == 6
        assert len(list((tmp_path / 'split' / 'train').glob('*.psv'))) == 14
        assert (tmp_path / 'split' / 'test_ids.txt').read_text().split() == parts['test']
        septic = {r.patient_id for r in small_cohort if r.is_septic}
        assert abs(len(septic & set(parts['test'])) - 0.3 * len(septic)) <= 1

    def test_cmd_split_held_ids_only(self, tmp_path, small_cohort):
        CohortSimulator().write_cohort(small_cohort, str(tmp_path / 'all'))
        parts = cmd_split(str(tmp_path / 'all'), str(tmp_path / 'split'), ratio='9:1', copy_files=False)
        assert len(parts['held']) == 2
        assert not (tmp_path / 'split' / 'train').exists()

    def test_bad_ratio(self, tmp_path, small_cohort):
        CohortSimulator().write_cohort(small_cohort, str(tmp_path / 'all'))
        with pytest.raises(ContractError):
            cmd_split(str(tmp_path / 'all'), str(tmp_path / 'split'), ratio='8:2')


class TestCrossValidation:

    def test_cv_with_test_dir(self, tmp_path, tiny_config, cohort_dirs):
        train_dir, val_dir = cohort_dirs
        result = cmd_cv(tiny_config, str(train_dir), str(tmp_path / 'cv'), k=2, test_dir=str(val_dir),
                        show_progress=False)
        assert len(result.report.per_fold) == 2
        assert all(p.exists() for p in result.checkpoint_paths)
        assert set(result.report.ensemble_utilities) == set(ENSEMBLE_MODES)
        thresholds = [row['threshold'] for row in result.report.per_fold]
        assert result.report.threshold == pytest.approx(np.mean(thresholds))
        assert (tmp_path / 'cv' / 'cv_report.txt').exists()
        assert len(result.test_ids) == 8


class TestGradCheckPipeline:

    def test_all_kinds_pass(self):
        summary = cmd_gradcheck(seed=0, n_windows=2, heads=(1, 2), window_length=5, embed_dim=4,
                                hidden_size=3, max_entries=6, primitive_trials=1,
                                model_kinds=('hea_lstm', 'dense_lstm', 'mlp'))
        assert set(summary.end_to_end) == {'hea_lstm_M1', 'hea_lstm_M2', 'dense_lstm', 'mlp'}
        assert summary.passed, summary.to_frame()
        assert summary.to_frame()['passed'].all()


class TestMain:

    def test_synth(self, tmp_path):
        assert main(['synth', '--output', str(tmp_path / 's'), '--patients', '6', '--seed', '1']) == 0
        assert len(list((tmp_path / 's').glob('*.psv'))) == 6

    def test_train_and_predict(self, tmp_path, cohort_dirs):
        train_dir, val_dir = cohort_dirs
        flags = ['--window-length', '6', '--embed-dim', '4', '--num-heads', '2', '--hidden-size', '4',
                 '--epochs', '1', '--batch-size', '64']
        assert main(['train', '--train-dir', str(train_dir), '--val-dir', str(val_dir),
                     '--output', str(tmp_path / 'run'), '--no-plots', '--no-progress'] + flags) == 0
        checkpoint = load_checkpoint(str(tmp_path / 'run' / 'model.ckpt'))
        assert checkpoint.config.num_heads == 2 and checkpoint.config.epochs == 1
        assert main(['predict', '--checkpoint', str(tmp_path / 'run' / 'model.ckpt'),
                     '--input-dir', str(val_dir), '--output', str(tmp_path / 'pred')]) == 0
        assert main(['evaluate', '--label-dir', str(val_dir),
                     '--prediction-dir', str(tmp_path / 'pred')]) == 0

    def test_config_file_then_flags(self, tmp_path, cohort_dirs):
        train_dir, val_dir = cohort_dirs
        config_path = tmp_path / 'c.json'
        ModelConfig(window_length=4, embed_dim=3, num_heads=1, hidden_size=2, epochs=3).save(str(config_path))
        assert main(['train', '--train-dir', str(train_dir), '--val-dir', str(val_dir),
                     '--output', str(tmp_path / 'run'), '--no-plots', '--no-progress',
                     '--config', str(config_path), '--epochs', '1']) == 0
        config = load_checkpoint(str(tmp_path / 'run' / 'model.ckpt')).config
        assert (config.window_length, config.embed_dim, config.epochs) == (4, 3, 1)

    def test_error_exit_code(self, tmp_path, capsys):
        status = main(['train', '--train-dir', str(tmp_path / 'missing'), '--val-dir', str(tmp_path),
                       '--output', str(tmp_path / 'out'), '--no-progress'])
        assert status == 1
        assert '✗ Error' in capsys.readouterr().out

    def test_invalid_config_value(self, tmp_path, cohort_dirs):
        train_dir, val_dir = cohort_dirs
        assert main(['train', '--train-dir', str(train_dir), '--val-dir', str(val_dir),
                     '--output', str(tmp_path / 'out'), '--model-kind', 'transformer']) == 1

    def test_gradcheck(self):
        assert main(['gradcheck', '--windows', '1', '--heads', '1', '--window-length', '4',
                     '--embed-dim', '3', '--hidden-size', '2', '--max-entries', '4', '--trials', '1']) == 0

    def test_gradcheck_defaults_to_hundred_trials(self):
        args = build_parser().parse_args(['gradcheck'])
        assert args.trials == 100
        assert inspect.signature(cmd_gradcheck).parameters['primitive_trials'].default == 100


def test_compare_variants_names():
    names = [name for name, _ in compare_variants((1, 8, 16))]
    assert names == ['MLP', 'LSTM', '1-heads-HEA-LSTM', '8-heads-HEA-LSTM', '16-heads-HEA-LSTM']


@pytest.mark.slow
def test_planted_signal_end_to_end(tmp_path):
    """200 synthetic patients: 16-head HEA-LSTM separates the planted ramp and beats the MLP"""
    records = CohortSimulator(seed=0).simulate_cohort(200)
    CohortSimulator().write_cohort(records, str(tmp_path / 'all'))
    cmd_split(str(tmp_path / 'all'), str(tmp_path / 'split'), ratio='7:3', seed=0)
    config = ModelConfig(window_length=12, embed_dim=8, num_heads=16, hidden_size=16,
                         mlp_hidden=[64], batch_size=128, epochs=8, learning_rate=5e-3, seed=0)
    table = cmd_compare(config, str(tmp_path / 'split' / 'train'), str(tmp_path / 'split' / 'test'),
                        str(tmp_path / 'compare'), heads=(16,), show_progress=False, plots=False)
    scores = table.set_index('model')
    hea = scores.loc['16-heads-HEA-LSTM']
    assert hea['auroc'] >= 0.95
    assert hea['utility_normalized'] >= 0.5
    assert hea['utility_normalized'] > scores.loc['MLP', 'utility_normalized']
