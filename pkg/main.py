"""
Early Sepsis Prediction Pipeline - Main Entry Point
HEA-LSTM training, cross validation, prediction and evaluation on challenge .psv files
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

# Add src to path
sys.path.insert(0, str(Path(__file__).parent / 'src'))

from cohort_simulator import generate_cohort
from config import MODEL_KINDS, PRECISIONS, ModelConfig
from errors import SepsisPipelineError
from psv_ingest import summarize_records
from trainer import (cmd_compare, cmd_cv, cmd_evaluate, cmd_gradcheck, cmd_predict, cmd_split,
                     cmd_train)

DEFAULT_CONFIG = Path(__file__).parent / 'config' / 'model_config.json'

# (flag, config field, type, help); every ModelConfig field has a flag
CONFIG_FLAGS = [
    ('--window-length', 'window_length', int, 'Hours per window, L (default: 24)'),
    ('--embed-dim', 'embed_dim', int, 'Event embedding size, d (default: 16)'),
    ('--num-heads', 'num_heads', int, 'HEA heads, M (default: 16)'),
    ('--hidden-size', 'hidden_size', int, 'BiLSTM hidden size, H (default: 64)'),
    ('--model-kind', 'model_kind', str, f'One of {", ".join(MODEL_KINDS)}'),
    ('--dense-embed-dim', 'dense_embed_dim', int, 'Embedding size of the dense_lstm baseline'),
    ('--learning-rate', 'learning_rate', float, 'Adam learning rate (default: 1e-3)'),
    ('--beta1', 'beta1', float, 'Adam beta1'),
    ('--beta2', 'beta2', float, 'Adam beta2'),
    ('--adam-eps', 'adam_eps', float, 'Adam epsilon'),
    ('--grad-clip', 'grad_clip', float, 'Global gradient norm limit (default: off)'),
    ('--batch-size', 'batch_size', int, 'Windows per minibatch'),
    ('--epochs', 'epochs', int, 'Training epochs'),
    ('--dropout', 'dropout', float, 'Dropout on the per-hour representation'),
    ('--weight-decay', 'weight_decay', float, 'L2 penalty added to the gradients'),
    ('--seed', 'seed', int, 'Seed for initialization, sampling and folds'),
    ('--precision', 'precision', str, f'One of {", ".join(PRECISIONS)}'),
    ('--pos-weight', 'pos_weight', float, 'Sampling weight of positive windows (default: automatic)'),
    ('--target-pos-fraction', 'target_pos_fraction', float, 'Positive share of draws when automatic'),
    ('--prob-eps', 'prob_eps', float, 'Probability clamp in the loss'),
    ('--std-floor', 'std_floor', float, 'Lower bound of fitted standard deviations'),
    ('--threshold', 'threshold', float, 'Decision threshold (normally selected on validation)'),
]


def add_config_flags(parser: argparse.ArgumentParser):
    group = parser.add_argument_group('model configuration (overrides --config)')
    group.add_argument('--config', type=str, default=None,
                       help=f'JSON config file (default: {DEFAULT_CONFIG.relative_to(Path(__file__).parent)})')
    for flag, name, kind, help_text in CONFIG_FLAGS:
        group.add_argument(flag, dest=name, type=kind, default=None, help=help_text)
    group.add_argument('--mlp-hidden', dest='mlp_hidden', type=int, nargs='+', default=None,
                       help='Hidden layer sizes of the mlp baseline (default: 256 64)')


def resolve_config(args: argparse.Namespace) -> ModelConfig:
    """Dataclass defaults <- JSON file <- command-line flags"""
    if args.config is not None:
        config = ModelConfig.from_json(args.config)
    elif DEFAULT_CONFIG.exists():
        config = ModelConfig.from_json(str(DEFAULT_CONFIG))
    else:
        config = ModelConfig()
    overrides = {name: getattr(args, name) for _, name, _, _ in CONFIG_FLAGS}
    overrides['mlp_hidden'] = args.mlp_hidden
    return config.update(overrides)


def banner(title: str):
    print("\n" + "=" * 70)
    print(title)
    print("=" * 70)


def print_report(report):
    print(f"\n  AUROC: {report.auroc:.4f}")
    print(f"  AUPRC: {report.auprc:.4f}")
    print(f"  Utility (normalized): {report.utility_normalized:.4f}")
    if report.threshold is not None:
        print(f"  Threshold: {report.threshold:.6f}")


def run_train(args) -> int:
    config = resolve_config(args)
    banner("STEP 1: TRAINING")
    print(f"\nModel: {config.model_kind} (L={config.window_length}, d={config.embed_dim}, "
          f"M={config.num_heads}, H={config.hidden_size})")
    print(f"Train: {args.train_dir}")
    print(f"Validation: {args.val_dir}")
    print(f"Output: {args.output}\n")
    result = cmd_train(config, args.train_dir, args.val_dir, args.output,
                       show_progress=not args.no_progress, plots=not args.no_plots)

    banner("VALIDATION RESULTS")
    print_report(result.report)
    print("\nOutput Files:")
    print(f"  1. Checkpoint: {Path(args.output) / 'model.ckpt'}")
    print(f"  2. Report: {Path(args.output) / 'train_report.txt'}")
    print(f"  3. Resolved config: {Path(args.output) / 'resolved_config.json'}")
    return 0


def run_cv(args) -> int:
    config = resolve_config(args)
    banner(f"{args.folds}-FOLD CROSS VALIDATION")
    result = cmd_cv(config, args.data_dir, args.output, k=args.folds, test_dir=args.test_dir,
                    show_progress=not args.no_progress, plots=args.plots)

    banner("ENSEMBLE RESULTS")
    print_report(result.report)
    print("\n  Vote modes:")
    for mode, value in result.report.ensemble_utilities.items():
        print(f"    {mode}: {value:.4f}")
    print(f"\n✓ Report saved to: {Path(args.output) / 'cv_report.txt'}")
    return 0


def run_predict(args) -> int:
    banner("PREDICTION")
    paths = cmd_predict(args.checkpoint, args.input_dir, args.output)
    print(f"\n✓ {len(paths)} prediction files written to: {args.output}")
    return 0


def run_evaluate(args) -> int:
    banner("EVALUATION")
    report = cmd_evaluate(args.label_dir, args.prediction_dir, args.output)
    print(f"\n  Patients: {report.n_patients}")
    print(f"  Hours: {report.n_hours}")
    print_report(report)
    return 0


def run_gradcheck(args) -> int:
    banner("GRADIENT CHECK")
    kinds = ('hea_lstm', 'dense_lstm', 'mlp') if args.baselines else ('hea_lstm',)
    summary = cmd_gradcheck(seed=args.seed, n_windows=args.windows, heads=args.heads,
                            window_length=args.window_length, embed_dim=args.embed_dim,
                            hidden_size=args.hidden_size,
                            max_entries=args.max_entries or None,
                            primitive_trials=args.trials, model_kinds=kinds)
    print()
    print(summary.to_frame().to_string(index=False, float_format=lambda v: f"{v:.2e}"))
    if summary.passed:
        print("\n✓ All gradient checks passed")
        return 0
    print("\n✗ Gradient check failed")
    return 1


def run_synth(args) -> int:
    banner("SYNTHETIC COHORT")
    records = generate_cohort(args.output, n_patients=args.patients, seed=args.seed,
                              septic_fraction=args.septic_fraction,
                              ramp_variable=args.ramp_variable, ramp_slope=args.ramp_slope)
    summary = summarize_records(records)
    print(f"\n  Patients: {summary.n_patients}")
    print(f"  Septic: {summary.n_septic}")
    print(f"  Hours: {summary.n_rows}")
    print(f"  Positive hours: {summary.positive_row_fraction:.2%}")
    print(f"\n✓ Files written to: {args.output}")
    return 0


def run_split(args) -> int:
    banner(f"PATIENT SPLIT {args.ratio}")
    parts = cmd_split(args.data_dir, args.output, ratio=args.ratio, seed=args.seed,
                      copy_files=not args.ids_only)
    for name, ids in parts.items():
        print(f"  {name}: {len(ids)} patients")
    print(f"\n✓ Split written to: {args.output}")
    return 0


def run_compare(args) -> int:
    config = resolve_config(args)
    banner("MODEL COMPARISON")
    table = cmd_compare(config, args.train_dir, args.val_dir, args.output, heads=args.heads,
                        show_progress=not args.no_progress, plots=not args.no_plots)
    print()
    print(table.to_string(index=False, float_format='%.4f'))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description='Early sepsis prediction with Heterogeneous Event Aggregation and a BiLSTM'
    )
    parser.add_argument('--log-level', type=str, default='INFO',
                        choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'],
                        help='Logging verbosity (default: INFO)')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('train', help='Train a model and select its threshold on validation data')
    p.add_argument('--train-dir', type=str, required=True, help='Directory of training .psv files')
    p.add_argument('--val-dir', type=str, required=True, help='Directory of validation .psv files')
    p.add_argument('--output', type=str, default='data/output/train',
                   help='Output directory (default: data/output/train)')
    p.add_argument('--no-plots', action='store_true', help='Skip plot generation')
    p.add_argument('--no-progress', action='store_true', help='Hide progress bars')
    add_config_flags(p)
    p.set_defaults(handler=run_train)

    p = sub.add_parser('cv', help='Stratified k-fold cross validation with fold ensembling')
    p.add_argument('--data-dir', type=str, required=True, help='Directory of .psv files')
    p.add_argument('--test-dir', type=str, default=None,
                   help='Ensemble test patients (default: hold out 10%% of --data-dir)')
    p.add_argument('--folds', type=int, default=5, help='Number of folds (default: 5)')
    p.add_argument('--output', type=str, default='data/output/cv',
                   help='Output directory (default: data/output/cv)')
    p.add_argument('--plots', action='store_true', help='Write per-fold plots')
    p.add_argument('--no-progress', action='store_true', help='Hide progress bars')
    add_config_flags(p)
    p.set_defaults(handler=run_cv)

    p = sub.add_parser('predict', help='Write per-patient prediction files from a checkpoint')
    p.add_argument('--checkpoint', type=str, required=True, help='Checkpoint written by train or cv')
    p.add_argument('--input-dir', type=str, required=True, help='Directory of .psv files')
    p.add_argument('--output', type=str, default='data/output/predictions',
                   help='Output directory (default: data/output/predictions)')
    p.set_defaults(handler=run_predict)

    p = sub.add_parser('evaluate', help='Score prediction files against labelled files')
    p.add_argument('--label-dir', type=str, required=True, help='Directory of labelled .psv files')
    p.add_argument('--prediction-dir', type=str, required=True, help='Directory of prediction files')
    p.add_argument('--output', type=str, default=None, help='Write evaluation_report.{txt,json} here')
    p.set_defaults(handler=run_evaluate)

    p = sub.add_parser('gradcheck', help='Primitive and end-to-end gradient checks')
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--windows', type=int, default=5, help='Random windows per model (default: 5)')
    p.add_argument('--heads', type=int, nargs='+', default=[1, 8], help='Head counts (default: 1 8)')
    p.add_argument('--window-length', type=int, default=24)
    p.add_argument('--embed-dim', type=int, default=16)
    p.add_argument('--hidden-size', type=int, default=8)
    p.add_argument('--max-entries', type=int, default=20,
                   help='Entries sampled per parameter tensor, 0 = all (default: 20)')
    p.add_argument('--trials', type=int, default=100, help='Random draws per primitive (default: 100)')
    p.add_argument('--baselines', action='store_true', help='Also check the dense_lstm and mlp models')
    p.set_defaults(handler=run_gradcheck)

    p = sub.add_parser('synth', help='Generate the planted-signal synthetic cohort')
    p.add_argument('--output', type=str, default='data/synthetic',
                   help='Output directory (default: data/synthetic)')
    p.add_argument('--patients', type=int, default=200, help='Number of patients (default: 200)')
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--septic-fraction', type=float, default=0.3)
    p.add_argument('--ramp-variable', type=str, default='HR')
    p.add_argument('--ramp-slope', type=float, default=5.0)
    p.set_defaults(handler=run_synth)

    p = sub.add_parser('split', help='Stratified 7:3 or 9:1 patient split')
    p.add_argument('--data-dir', type=str, required=True, help='Directory of .psv files')
    p.add_argument('--output', type=str, default='data/splits', help='Output directory')
    p.add_argument('--ratio', type=str, default='7:3', choices=['7:3', '9:1'])
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--ids-only', action='store_true', help='Write id lists without copying files')
    p.set_defaults(handler=run_split)

    p = sub.add_parser('compare', help='Train MLP, LSTM and HEA-LSTM variants on one split')
    p.add_argument('--train-dir', type=str, required=True)
    p.add_argument('--val-dir', type=str, required=True)
    p.add_argument('--output', type=str, default='data/output/compare')
    p.add_argument('--heads', type=int, nargs='+', default=[1, 8, 16],
                   help='HEA head counts (default: 1 8 16)')
    p.add_argument('--no-plots', action='store_true')
    p.add_argument('--no-progress', action='store_true')
    add_config_flags(p)
    p.set_defaults(handler=run_compare)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level), format='%(message)s')

    print("=" * 70)
    print("EARLY SEPSIS PREDICTION PIPELINE")
    print("=" * 70)
    try:
        status = args.handler(args)
    except SepsisPipelineError as e:
        print(f"\n✗ Error: {e}")
        return 1
    if status == 0:
        print("\n" + "=" * 70)
        print("COMPLETED SUCCESSFULLY!")
        print("=" * 70)
    return status


if __name__ == '__main__':
    sys.exit(main())
