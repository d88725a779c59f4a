"""
Heterogeneous Event Aggregation Module
Embeds the 40 clinical events of each hour and pools them with M attention heads
"""

import logging
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

import numcore as nc
from errors import ContractError
from numcore import ParamStore, Tensor
from preprocess import NUM_CATEGORIES, WindowBatch, WindowSample
from psv_ingest import NUM_CATEGORICAL, NUM_NUMERIC, NUM_VARIABLES

logger = logging.getLogger(__name__)


@dataclass
class EmbeddingTables:
    W_ne: Tensor    # 37 x d, numerical event vectors
    W_vn: Tensor    # 37 x d, value vectors
    W_ce: Tensor    # 7 x d, categorical lookup


@dataclass
class HeadParams:
    """Per-head matrices stacked along the first axis"""
    W_k: Tensor     # M x d x d
    W_v: Tensor     # M x d x d
    m: Tensor       # M x d, mask-vectors

    @property
    def num_heads(self) -> int:
        return self.m.shape[0]

    def head(self, i: int) -> Tuple[Tensor, Tensor, Tensor]:
        return nc.select(self.W_k, i, 0), nc.select(self.W_v, i, 0), nc.select(self.m, i, 0)


@dataclass
class StepEmbedding:
    E: Tensor               # ... x 40 x d, unobserved numeric rows are zero
    K: Tensor               # ... x 40 x d
    att_mask: np.ndarray    # ... x 40, True = event takes part in attention


def embed_step(values: np.ndarray, obs_mask: np.ndarray, cat_idx: np.ndarray,
               tables: EmbeddingTables) -> StepEmbedding:
    """
    Event embeddings and keys for one hour (or any stack of hours)

    Args:
        values: ... x 37 normalized values, 0 where unobserved
        obs_mask: ... x 37, True where observed
        cat_idx: ... x 3 category indices in [0, 6]
        tables: Embedding tables

    Returns:
        StepEmbedding with E = Mask(Concat(En, Ec)) and K = Concat(W_ne, Ec)
    """
    values = np.asarray(values, dtype=tables.W_ne.data.dtype)
    obs_mask = np.asarray(obs_mask, dtype=bool)
    if values.shape[-1] != NUM_NUMERIC or obs_mask.shape != values.shape:
        raise ContractError(f"expected ... x {NUM_NUMERIC} values and mask, got {values.shape} / {obs_mask.shape}")
    if not np.all(np.isfinite(values)):
        raise ContractError("event values must be finite")
    lead = values.shape[:-1]
    d = tables.W_ne.shape[1]

    en = nc.add(nc.row_scale(tables.W_vn, values), tables.W_ne)
    ec = nc.lookup(tables.W_ce, np.asarray(cat_idx))
    att_mask = np.concatenate([obs_mask, np.ones(lead + (NUM_CATEGORICAL,), dtype=bool)], axis=-1)
    E = nc.mask_fill(nc.concat([en, ec], axis=-2), ~att_mask[..., None], 0.0)
    K = nc.concat([nc.broadcast_to(tables.W_ne, lead + (NUM_NUMERIC, d)), ec], axis=-2)
    return StepEmbedding(E, K, att_mask)


def attend_head(E: Tensor, K: Tensor, att_mask: np.ndarray, W_k: Tensor, W_v: Tensor,
                m: Tensor) -> Tuple[Tensor, Tensor]:
    """
    One attention head over the events of an hour

    Args:
        E, K: ... x 40 x d event embeddings and keys
        att_mask: ... x 40, False events get weight exactly 0
        W_k, W_v: d x d head matrices
        m: d mask-vector

    Returns:
        (h, weights): h is ... x d, weights is ... x 40
    """
    if not np.all(np.any(att_mask, axis=-1)):
        raise ContractError("every hour needs at least one unmasked event")
    scores = nc.matmul(nc.matmul(K, nc.swapaxes(W_k, 0, 1)), m)
    weights = nc.softmax(nc.mask_fill(scores, ~att_mask, -np.inf), axis=-1)
    projected = nc.matmul(E, nc.swapaxes(W_v, 0, 1))
    lead = weights.shape[:-1]
    h = nc.matmul(nc.reshape(weights, lead + (1, NUM_VARIABLES)), projected)
    return nc.reshape(h, lead + (W_v.shape[0],)), weights


def aggregate_step(step: StepEmbedding, heads: HeadParams) -> Tensor:
    """Concatenate the M head outputs of one hour into an M*d vector"""
    if heads.num_heads < 1:
        raise ContractError("at least one head is required")
    outputs = [attend_head(step.E, step.K, step.att_mask, *heads.head(i))[0]
               for i in range(heads.num_heads)]
    return nc.concat(outputs, axis=-1)


class HeterogeneousEventAggregation:
    """
    Event embedding plus attentional multi-head aggregation.

    The batched forward computes each head's score K[j]·(W_k^T m) and output
    W_v (sum_j w_j E[j]), the same bilinear forms attend_head evaluates, with
    all heads and hours in a handful of array ops.
    """

    def __init__(self, params: ParamStore, embed_dim: int = 16, num_heads: int = 16,
                 prefix: str = 'hea'):
        """
        Args:
            params: Store the tables and head matrices are registered in
            embed_dim: d, embedding size (default: 16)
            num_heads: M, number of aggregation heads (default: 16)
            prefix: Parameter name prefix
        """
        if embed_dim < 1 or num_heads < 1:
            raise ContractError("embed_dim and num_heads must be positive")
        d, M = embed_dim, num_heads
        self.embed_dim = d
        self.num_heads = M
        self.tables = EmbeddingTables(
            W_ne=params.create(f'{prefix}.W_ne', (NUM_NUMERIC, d)),
            W_vn=params.create(f'{prefix}.W_vn', (NUM_NUMERIC, d)),
            W_ce=params.create(f'{prefix}.W_ce', (NUM_CATEGORIES, d)),
        )
        self.heads = HeadParams(
            W_k=params.create(f'{prefix}.W_k', (M, d, d)),
            W_v=params.create(f'{prefix}.W_v', (M, d, d)),
            m=params.create(f'{prefix}.m', (M, d)),
        )

    @property
    def output_size(self) -> int:
        return self.num_heads * self.embed_dim

    def embed_step(self, values_t, obs_mask_t, cat_idx_t) -> StepEmbedding:
        return embed_step(values_t, obs_mask_t, cat_idx_t, self.tables)

    def aggregate_step(self, step: StepEmbedding) -> Tensor:
        return aggregate_step(step, self.heads)

    def _scores_and_embeddings(self, values, obs_mask, cat_idx) -> Tuple[Tensor, StepEmbedding]:
        step = embed_step(values, obs_mask, cat_idx, self.tables)
        d, M = self.embed_dim, self.num_heads
        # q_i = W_k,i^T m_i, so that score_ij = (W_k,i K[j]) . m_i = K[j] . q_i
        q = nc.reshape(nc.matmul(nc.swapaxes(self.heads.W_k, 1, 2),
                                 nc.reshape(self.heads.m, (M, d, 1))), (M, d))
        scores = nc.swapaxes(nc.matmul(step.K, nc.swapaxes(q, 0, 1)), -1, -2)
        return scores, step

    def forward(self, values: np.ndarray, obs_mask: np.ndarray, cat_idx: np.ndarray) -> Tensor:
        """
        Aggregate every hour of a stack of windows

        Args:
            values: B x L x 37
            obs_mask: B x L x 37
            cat_idx: B x L x 3

        Returns:
            B x L x (M*d) tensor, heads concatenated in order
        """
        scores, step = self._scores_and_embeddings(values, obs_mask, cat_idx)
        weights = nc.softmax(nc.mask_fill(scores, ~step.att_mask[..., None, :], -np.inf), axis=-1)
        pooled = nc.matmul(weights, step.E)                          # ... x M x d
        lead = pooled.shape[:-2]
        d, M = self.embed_dim, self.num_heads
        # Heads first so the W_v gradient is one M x d x d contraction
        by_head = nc.swapaxes(nc.reshape(pooled, (-1, M, d)), 0, 1)  # M x N x d
        heads = nc.matmul(by_head, nc.swapaxes(self.heads.W_v, 1, 2))
        return nc.reshape(nc.swapaxes(heads, 0, 1), lead + (M * d,))

    def aggregate_window(self, window: WindowSample) -> Tensor:
        """L x (M*d) aggregation of a single window"""
        return self.forward(window.values, window.obs_mask, window.cat_idx)

    def aggregate_batch(self, batch: WindowBatch) -> Tensor:
        return self.forward(batch.values, batch.obs_mask, batch.cat_idx)

    def attention_weights(self, batch: WindowBatch) -> np.ndarray:
        """B x L x 40 x M attention weights (masked events hold exact zeros)"""
        scores, step = self._scores_and_embeddings(batch.values, batch.obs_mask, batch.cat_idx)
        weights = nc.softmax(nc.mask_fill(scores, ~step.att_mask[..., None, :], -np.inf), axis=-1)
        return np.swapaxes(weights.data, -1, -2)

    def parameters(self) -> List[Tensor]:
        return [self.tables.W_ne, self.tables.W_vn, self.tables.W_ce,
                self.heads.W_k, self.heads.W_v, self.heads.m]
