"""
Visualization Module
Training curves, ROC/PR curves, attention heat maps and model comparison charts
"""

import logging
from typing import Dict, List, Optional, Sequence

import matplotlib
matplotlib.use('Agg')
import matplotlib.pyplot as plt
import numpy as np
import pandas as pd
import seaborn as sns

from metrics import auprc, auroc, pr_curve, roc_curve
from psv_ingest import CANONICAL_COLUMNS

logger = logging.getLogger(__name__)


class SepsisVisualizer:
    """
    Generate plots for training runs and evaluations
    """

    def __init__(self, style: str = 'seaborn-v0_8-darkgrid', dpi: int = 300):
        """
        Initialize visualizer

        Args:
            style: Matplotlib style
            dpi: Resolution of saved figures
        """
        try:
            plt.style.use(style)
        except (OSError, ValueError):
            plt.style.use('default')

        sns.set_palette("husl")
        self.colors = sns.color_palette("husl", 8)
        self.dpi = dpi

    def _save(self, output_path: str, what: str):
        plt.tight_layout()
        plt.savefig(output_path, dpi=self.dpi, bbox_inches='tight')
        plt.close()
        logger.info(f"✓ {what} saved to: {output_path}")

    def plot_training_curves(self, history: Dict[str, List[float]], output_path: str):
        """
        Plot per-epoch training (and validation) loss

        Args:
            history: 'train_loss' and optionally 'val_loss' lists, one value per epoch
            output_path: Path to save plot
        """
        train_loss = history.get('train_loss', [])
        if not train_loss:
            logger.warning("⚠ No loss history to plot")
            return
        epochs = np.arange(1, len(train_loss) + 1)

        fig, ax = plt.subplots(figsize=(10, 6))
        ax.plot(epochs, train_loss, marker='o', linewidth=2, markersize=4,
                color='#2E86AB', label='Training loss (weighted sampling)')
        if history.get('val_loss'):
            ax.plot(epochs, history['val_loss'], marker='s', linewidth=2, markersize=4,
                    linestyle='--', color='#A23B72', label='Validation loss')
        ax.set_xlabel('Epoch', fontsize=11)
        ax.set_ylabel('Binary cross entropy', fontsize=11)
        ax.set_title('Training Progress', fontsize=13, fontweight='bold')
        ax.legend(loc='best')
        ax.grid(True, alpha=0.3)
        self._save(output_path, "Training curves")

    def plot_roc_pr(self, scores: np.ndarray, labels: np.ndarray, output_path: str):
        """
        ROC and precision-recall curves side by side

        Args:
            scores: Hourly probabilities
            labels: Hourly SepsisLabel
            output_path: Path to save plot
        """
        labels = np.asarray(labels)
        if labels.min() == labels.max():
            logger.warning("⚠ Only one class present, skipping ROC/PR plot")
            return
        fpr, tpr = roc_curve(scores, labels)
        recall, precision = pr_curve(scores, labels)

        fig, axes = plt.subplots(1, 2, figsize=(14, 6))
        axes[0].plot(fpr, tpr, linewidth=2, color='#2E86AB',
                     label=f"AUROC = {auroc(scores, labels):.4f}")
        axes[0].plot([0, 1], [0, 1], linestyle='--', color='gray', linewidth=1)
        axes[0].set_xlabel('False positive rate', fontsize=11)
        axes[0].set_ylabel('True positive rate', fontsize=11)
        axes[0].set_title('ROC Curve', fontsize=13, fontweight='bold')
        axes[0].legend(loc='lower right')
        axes[0].grid(True, alpha=0.3)

        axes[1].step(recall, precision, where='post', linewidth=2, color='#06A77D',
                     label=f"AUPRC = {auprc(scores, labels):.4f}")
        axes[1].axhline(y=labels.mean(), color='orange', linestyle='--', linewidth=1.5,
                        label=f"Positive rate ({labels.mean():.3f})")
        axes[1].set_xlabel('Recall', fontsize=11)
        axes[1].set_ylabel('Precision', fontsize=11)
        axes[1].set_title('Precision-Recall Curve', fontsize=13, fontweight='bold')
        axes[1].legend(loc='best')
        axes[1].grid(True, alpha=0.3)
        self._save(output_path, "ROC/PR curves")

    def plot_attention_heatmap(self, weights: np.ndarray, output_path: str,
                               head: Optional[int] = None, observed: Optional[np.ndarray] = None):
        """
        Attention over the 40 events for every hour of one window

        Args:
            weights: L x 40 x M attention weights of one window
            output_path: Path to save plot
            head: Head to show; None averages over heads
            observed: Optional L x 40 mask; unobserved cells are left blank
        """
        shown = weights.mean(axis=-1) if head is None else weights[..., head]
        df = pd.DataFrame(shown.T, index=CANONICAL_COLUMNS,
                          columns=[f"t-{len(shown) - 1 - t}" if t < len(shown) - 1 else 't'
                                   for t in range(len(shown))])
        mask = None if observed is None else ~np.asarray(observed, dtype=bool).T

        fig, ax = plt.subplots(figsize=(16, 10))
        sns.heatmap(df, cmap='YlOrRd', mask=mask, linewidths=0.3,
                    cbar_kws={'label': 'Attention weight'}, ax=ax)
        ax.set_xlabel('Hour in window', fontsize=12)
        ax.set_ylabel('Event', fontsize=12)
        title = 'mean over heads' if head is None else f'head {head}'
        ax.set_title(f'Event Attention ({title})', fontsize=14, fontweight='bold')
        self._save(output_path, "Attention heatmap")

    def plot_model_comparison(self, table: pd.DataFrame, output_path: str,
                              metrics: Sequence[str] = ('auroc', 'auprc', 'utility_normalized')):
        """
        Grouped bars of each model's validation metrics

        Args:
            table: One row per model, a 'model' column plus metric columns
            output_path: Path to save plot
            metrics: Columns to draw
        """
        if table.empty:
            logger.warning("⚠ Empty comparison table, nothing to plot")
            return
        long = table.melt(id_vars='model', value_vars=list(metrics),
                          var_name='metric', value_name='value')

        fig, ax = plt.subplots(figsize=(12, 6))
        sns.barplot(data=long, x='metric', y='value', hue='model', edgecolor='black', ax=ax)
        ax.set_xlabel('')
        ax.set_ylabel('Score', fontsize=12)
        ax.set_title('Model Comparison (validation)', fontsize=14, fontweight='bold')
        ax.grid(axis='y', alpha=0.3)
        ax.legend(loc='best')
        self._save(output_path, "Model comparison")
