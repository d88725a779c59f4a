"""
Example Usage Script
Demonstrates how to use the early sepsis prediction pipeline
"""

# Example 1: Synthetic data
print("=" * 70)
print("EXAMPLE 1: Generate a Synthetic Cohort")
print("=" * 70)
print("""
# 200 patients, 30% septic; HR ramps over the 6 hours before onset
python main.py synth --output data/synthetic --patients 200 --seed 0

# Each patient becomes one challenge-format file: data/synthetic/p000000.psv ...
""")

# Example 2: Splits
print("\n" + "=" * 70)
print("EXAMPLE 2: Stratified Patient Splits")
print("=" * 70)
print("""
# 7:3 train/test split, septic share preserved in both parts
python main.py split --data-dir data/synthetic --output data/splits --ratio 7:3

# 9:1 train/held split
python main.py split --data-dir data/splits/train --output data/splits_held --ratio 9:1

# Only write id lists, no file copies
python main.py split --data-dir data/synthetic --output data/splits --ids-only
""")

# Example 3: Training
print("\n" + "=" * 70)
print("EXAMPLE 3: Train the 16-heads HEA-LSTM")
print("=" * 70)
print("""
python main.py train \\
  --train-dir data/splits/train \\
  --val-dir data/splits/test \\
  --output data/output/hea16

# Config resolution: dataclass defaults <- config/model_config.json <- flags
python main.py train \\
  --train-dir data/splits/train --val-dir data/splits/test \\
  --config my_config.json --num-heads 8 --epochs 20 --learning-rate 3e-4

# Writes:
# - model.ckpt: config, normalization stats, threshold, float32 weights
# - train_report.txt / .json: AUROC, AUPRC, normalized utility
# - training_curves.png, roc_pr_curves.png, attention_heatmap.png
""")

# Example 4: Baselines
print("\n" + "=" * 70)
print("EXAMPLE 4: Baselines and Model Comparison")
print("=" * 70)
print("""
python main.py train --model-kind mlp --train-dir data/splits/train --val-dir data/splits/test
python main.py train --model-kind dense_lstm --train-dir data/splits/train --val-dir data/splits/test

# MLP, LSTM and HEA-LSTM with 1, 8 and 16 heads on one split
python main.py compare --train-dir data/splits/train --val-dir data/splits/test \\
  --output data/output/compare
""")

# Example 5: Cross validation
print("\n" + "=" * 70)
print("EXAMPLE 5: 5-Fold Cross Validation with Ensembling")
print("=" * 70)
print("""
python main.py cv --data-dir data/splits/train --test-dir data/splits/test --folds 5

# cv_report.txt lists every fold and the average / major_vote / any_vote utilities
""")

# Example 6: Prediction and evaluation
print("\n" + "=" * 70)
print("EXAMPLE 6: Predict and Evaluate")
print("=" * 70)
print("""
python main.py predict --checkpoint data/output/hea16/model.ckpt \\
  --input-dir data/splits/test --output data/output/predictions

python main.py evaluate --label-dir data/splits/test \\
  --prediction-dir data/output/predictions --output data/output/evaluation
""")

# Example 7: Gradient checks
print("\n" + "=" * 70)
print("EXAMPLE 7: Gradient Checks")
print("=" * 70)
print("""
# Every primitive op, then the full HEA-LSTM loss with 1 and 8 heads
python main.py gradcheck

# Include the baselines and check every parameter entry (slow)
python main.py gradcheck --baselines --max-entries 0
""")

# Python API usage example
print("\n" + "=" * 70)
print("EXAMPLE 8: Python API Usage")
print("=" * 70)
print("""
import sys
sys.path.insert(0, 'src')

from config import ModelConfig
from psv_ingest import read_directory
from trainer import train_model, predict_records

config = ModelConfig(num_heads=8, epochs=5)
train = read_directory('data/splits/train')
val = read_directory('data/splits/test')

result = train_model(config, train, val)
print(result.report.to_text())

# Hourly probabilities for new patients
probs = predict_records(result.model, result.norm_stats, val)
""")

print("\n" + "=" * 70)
print("For more information, see README.md")
print("=" * 70)
