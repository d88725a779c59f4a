"""
Sequence Model Module
Bidirectional LSTM readout, sigmoid head and loss, plus the MLP and dense-embedding baselines
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

import numcore as nc
from config import ModelConfig
from errors import ContractError
from hea_model import HeterogeneousEventAggregation
from numcore import ParamStore, Tensor
from preprocess import WindowBatch, WindowSample, raw_window_features, windows_to_arrays
from psv_ingest import NUM_VARIABLES

logger = logging.getLogger(__name__)


class LstmCell:
    """
    Standard LSTM cell; gate blocks in the order input, forget, cell, output
    """

    def __init__(self, params: ParamStore, input_size: int, hidden_size: int, prefix: str):
        self.input_size = input_size
        self.hidden_size = hidden_size
        H = hidden_size
        self.W_x = params.create(f'{prefix}.W_x', (input_size, 4 * H), fan=H)
        self.W_h = params.create(f'{prefix}.W_h', (H, 4 * H), fan=H)
        # Biases take the weights' uniform draw; the forget gate gets no +1 offset
        self.b = params.create(f'{prefix}.b', (4 * H,), fan=H)

    def project_inputs(self, x: Tensor) -> Tensor:
        """x W_x + b for every timestep at once"""
        return nc.add(nc.matmul(x, self.W_x), self.b)


@dataclass
class BiLstmParams:
    forward: LstmCell
    backward: LstmCell

    @property
    def hidden_size(self) -> int:
        return self.forward.hidden_size


def _cell_update(z_x: Tensor, h_prev: Tensor, c_prev: Tensor, cell: LstmCell) -> Tuple[Tensor, Tensor]:
    H = cell.hidden_size
    z = nc.add(z_x, nc.matmul(h_prev, cell.W_h))
    i = nc.sigmoid(nc.slice_axis(z, 0, H))
    f = nc.sigmoid(nc.slice_axis(z, H, 2 * H))
    g = nc.tanh(nc.slice_axis(z, 2 * H, 3 * H))
    o = nc.sigmoid(nc.slice_axis(z, 3 * H, 4 * H))
    c = nc.add(nc.elementwise_mul(f, c_prev), nc.elementwise_mul(i, g))
    h = nc.elementwise_mul(o, nc.tanh(c))
    return h, c


def lstm_cell_step(x, h_prev, c_prev, cell: LstmCell) -> Tuple[Tensor, Tensor]:
    """
    One LSTM step

    Args:
        x: ... x input_size
        h_prev, c_prev: ... x H previous hidden and cell state
        cell: Cell parameters

    Returns:
        (h, c)
    """
    return _cell_update(cell.project_inputs(nc.as_tensor(x)), nc.as_tensor(h_prev),
                        nc.as_tensor(c_prev), cell)


def _run_direction(projected: Tensor, cell: LstmCell, order) -> Tensor:
    lead = projected.shape[:-2]
    dtype = projected.data.dtype
    h = Tensor(np.zeros(lead + (cell.hidden_size,), dtype=dtype))
    c = Tensor(np.zeros(lead + (cell.hidden_size,), dtype=dtype))
    for t in order:
        h, c = _cell_update(nc.select(projected, t, axis=-2), h, c, cell)
    return h


def bilstm_readout(A, params: BiLstmParams) -> Tensor:
    """
    Sum of the last outputs of the forward and backward recurrences

    Args:
        A: ... x L x input_size sequence
        params: Both directions' cells

    Returns:
        ... x H readout; the backward pass ends at sequence position 0
    """
    A = nc.as_tensor(A)
    L = A.shape[-2]
    if L < 1:
        raise ContractError("sequence must have at least one step")
    h_fwd = _run_direction(params.forward.project_inputs(A), params.forward, range(L))
    h_bwd = _run_direction(params.backward.project_inputs(A), params.backward, range(L - 1, -1, -1))
    return nc.add(h_fwd, h_bwd)


@dataclass
class PredictionOutput:
    prob: float
    logit: float


def bce_loss(y, y_true, eps: float = 1e-7) -> Tensor:
    """
    Mean binary cross entropy -(t log y + (1 - t) log(1 - y))

    Args:
        y: Predicted probabilities (tensor), clamped to [eps, 1 - eps]
        y_true: 0/1 targets
        eps: Clamp margin

    Returns:
        Scalar tensor
    """
    y = nc.clip(nc.as_tensor(y), eps, 1.0 - eps)
    t = np.asarray(y_true, dtype=y.data.dtype)
    if t.shape != y.shape:
        raise ContractError(f"targets {t.shape} do not match predictions {y.shape}")
    pos = nc.elementwise_mul(nc.log(y), t)
    neg = nc.elementwise_mul(nc.log(nc.sub(1.0, y)), 1.0 - t)
    return nc.scale(nc.mean(nc.add(pos, neg)), -1.0)


class SepsisModel:
    """
    Common surface of every model kind: logits for a window batch
    """

    kind = 'base'

    def __init__(self, config: ModelConfig):
        self.config = config
        self.params = ParamStore(seed=config.seed, dtype=config.precision)
        self.dropout_rng = np.random.default_rng(config.seed + 1)

    def logits(self, batch: WindowBatch, training: bool = False) -> Tensor:
        raise NotImplementedError

    def forward(self, batch: WindowBatch, training: bool = False) -> Tensor:
        return self.logits(batch, training)

    def _dropout(self, x: Tensor, training: bool) -> Tensor:
        if training and self.config.dropout > 0:
            return nc.dropout(x, self.config.dropout, self.dropout_rng)
        return x

    def _head(self, readout: Tensor) -> Tensor:
        return nc.add(nc.matmul(readout, self.head_w), self.head_b)

    def probabilities(self, batch: WindowBatch, training: bool = False) -> Tensor:
        return nc.sigmoid(self.logits(batch, training))

    def loss(self, batch: WindowBatch, training: bool = True) -> Tensor:
        return bce_loss(self.probabilities(batch, training), batch.labels, self.config.prob_eps)

    def predict_proba(self, batch: WindowBatch, batch_size: Optional[int] = None) -> np.ndarray:
        """Probabilities for every window, evaluated in chunks without a tape"""
        batch_size = batch_size or self.config.batch_size
        out = []
        for start in range(0, len(batch), batch_size):
            index = np.arange(start, min(start + batch_size, len(batch)))
            out.append(self.probabilities(batch.subset(index)).data.astype(np.float64))
        return np.concatenate(out) if out else np.zeros(0)

    def predict(self, window: WindowSample) -> PredictionOutput:
        logits = self.logits(windows_to_arrays([window]))
        return PredictionOutput(prob=float(nc.sigmoid(logits).data[0]), logit=float(logits.data[0]))

    def parameters(self) -> List[Tensor]:
        return list(self.params)

    def _cast(self, array: np.ndarray) -> np.ndarray:
        return np.asarray(array, dtype=self.params.dtype)


class HeaLstmModel(SepsisModel):
    """HEA aggregation per hour -> BiLSTM -> dense sigmoid head"""

    kind = 'hea_lstm'

    def __init__(self, config: ModelConfig):
        super().__init__(config)
        self.hea = HeterogeneousEventAggregation(self.params, config.embed_dim, config.num_heads)
        H = config.hidden_size
        self.lstm = BiLstmParams(LstmCell(self.params, self.hea.output_size, H, 'lstm.fwd'),
                                 LstmCell(self.params, self.hea.output_size, H, 'lstm.bwd'))
        self.head_w = self.params.create('head.w', (H,))
        self.head_b = self.params.create('head.b', (1,), init='constant')

    def logits(self, batch: WindowBatch, training: bool = False) -> Tensor:
        A = self.hea.forward(self._cast(batch.values), batch.obs_mask, batch.cat_idx)
        return self._head(bilstm_readout(self._dropout(A, training), self.lstm))


class DenseLstmModel(SepsisModel):
    """Dense layer embedding of the raw 40-vector per hour -> BiLSTM -> head"""

    kind = 'dense_lstm'

    def __init__(self, config: ModelConfig):
        super().__init__(config)
        d, H = config.dense_embed_dim, config.hidden_size
        self.embed_w = self.params.create('dense.W', (NUM_VARIABLES, d))
        self.embed_b = self.params.create('dense.b', (d,), init='constant')
        self.lstm = BiLstmParams(LstmCell(self.params, d, H, 'lstm.fwd'),
                                 LstmCell(self.params, d, H, 'lstm.bwd'))
        self.head_w = self.params.create('head.w', (H,))
        self.head_b = self.params.create('head.b', (1,), init='constant')

    def embed(self, batch: WindowBatch) -> Tensor:
        """B x L x d dense representation of each hour"""
        x = self._cast(raw_window_features(batch, nan_category_value=0.5))
        return nc.tanh(nc.add(nc.matmul(x, self.embed_w), self.embed_b))

    def logits(self, batch: WindowBatch, training: bool = False) -> Tensor:
        return self._head(bilstm_readout(self._dropout(self.embed(batch), training), self.lstm))


class MlpModel(SepsisModel):
    """Flattened raw window -> tanh hidden layers -> sigmoid head"""

    kind = 'mlp'

    def __init__(self, config: ModelConfig):
        super().__init__(config)
        sizes = [config.window_length * NUM_VARIABLES] + list(config.mlp_hidden)
        self.layers = []
        for k, (n_in, n_out) in enumerate(zip(sizes[:-1], sizes[1:])):
            self.layers.append((self.params.create(f'mlp.W{k}', (n_in, n_out), fan=n_in),
                                self.params.create(f'mlp.b{k}', (n_out,), init='constant')))
        self.head_w = self.params.create('head.w', (sizes[-1],))
        self.head_b = self.params.create('head.b', (1,), init='constant')

    def logits(self, batch: WindowBatch, training: bool = False) -> Tensor:
        if batch.window_length != self.config.window_length:
            raise ContractError(f"MLP expects windows of {self.config.window_length} hours, "
                                f"got {batch.window_length}")
        x = self._cast(raw_window_features(batch, nan_category_value=0.0)).reshape(len(batch), -1)
        h = Tensor(x)
        for k, (W, b) in enumerate(self.layers):
            h = nc.tanh(nc.add(nc.matmul(h, W), b))
            if k == 0:
                h = self._dropout(h, training)
        return self._head(h)


MODEL_CLASSES = {cls.kind: cls for cls in (HeaLstmModel, DenseLstmModel, MlpModel)}


def build_model(config: ModelConfig) -> SepsisModel:
    """Instantiate the model named by config.model_kind"""
    model = MODEL_CLASSES[config.model_kind](config)
    logger.info(f"✓ Built {config.model_kind} model with {model.params.num_values():,} parameters")
    return model


def predict(window: WindowSample, model: SepsisModel) -> PredictionOutput:
    return model.predict(window)


def mlp_baseline(window: WindowSample, model: MlpModel) -> float:
    return model.predict(window).prob


def dense_embed_baseline(window: WindowSample, model: DenseLstmModel) -> float:
    return model.predict(window).prob


class WeightedSampler:
    """
    Draws training windows with replacement, positives up-weighted
    """

    def __init__(self, labels: np.ndarray, pos_weight: Optional[float] = None,
                 target_pos_fraction: float = 0.25):
        """
        Args:
            labels: 0/1 label of every training window
            pos_weight: Sampling weight of a positive window relative to a negative one;
                None picks the weight that makes positives target_pos_fraction of draws
            target_pos_fraction: Used when pos_weight is None
        """
        labels = np.asarray(labels)
        n_pos = int(labels.sum())
        n_neg = len(labels) - n_pos
        if pos_weight is None:
            pos_weight = (target_pos_fraction / (1.0 - target_pos_fraction)) * n_neg / n_pos if n_pos and n_neg else 1.0
        self.pos_weight = float(pos_weight)
        weights = np.where(labels == 1, self.pos_weight, 1.0)
        self.probs = weights / weights.sum() if len(labels) else weights

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        return rng.choice(len(self.probs), size=n, replace=True, p=self.probs)


def end_to_end_grad_check(model: SepsisModel, batch: WindowBatch, eps: float = 1e-5,
                          max_entries: Optional[int] = None,
                          rng: Optional[np.random.Generator] = None) -> nc.GradCheckReport:
    """
    Central-difference check of the training loss against every model parameter

    Args:
        model: A float64 model
        batch: Windows the loss is evaluated on
        eps: Finite-difference step
        max_entries: Per-parameter sample size (None checks every entry)
        rng: Generator for the entry sample
    """
    if model.params.dtype != np.float64:
        raise ContractError("gradient checks need a float64 model")
    return nc.grad_check(lambda: model.loss(batch, training=False), model.parameters(),
                         eps=eps, max_entries=max_entries, rng=rng)
