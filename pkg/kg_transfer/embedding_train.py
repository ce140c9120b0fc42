"""
Embedding module objective

Uniform initialization, "unif" negative sampling and the self-contained
negative-sampling loss over target triplets. Gradients are collected as
(row, value) blocks in EmbeddingGrads and coalesced before the sparse
optimizer step, so a row used by several triplets receives the sum of
their contributions.
"""

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .exceptions import ConfigError, TrainingError
from .nn_core import sigmoid
from .scoring import EmbeddingTable, ModelKind, score_grad_batch

logger = logging.getLogger(__name__)


def softplus(x: np.ndarray) -> np.ndarray:
    """log(1 + exp(x)), i.e. -log(sigmoid(-x))"""
    return np.logaddexp(0.0, x)


@dataclass
class EmbeddingGrads:
    """Uncoalesced gradient blocks for entity and relation rows"""

    entity_rows: List[np.ndarray] = field(default_factory=list)
    entity_values: List[np.ndarray] = field(default_factory=list)
    relation_rows: List[np.ndarray] = field(default_factory=list)
    relation_values: List[np.ndarray] = field(default_factory=list)

    def add_entities(self, rows: np.ndarray, values: np.ndarray, scale: float = 1.0) -> None:
        self.entity_rows.append(np.asarray(rows, dtype=np.int64).reshape(-1))
        self.entity_values.append(values if scale == 1.0 else values * scale)

    def add_relations(self, rows: np.ndarray, values: np.ndarray, scale: float = 1.0) -> None:
        self.relation_rows.append(np.asarray(rows, dtype=np.int64).reshape(-1))
        self.relation_values.append(values if scale == 1.0 else values * scale)

    def merge(self, other: 'EmbeddingGrads', scale: float = 1.0) -> None:
        for rows, values in zip(other.entity_rows, other.entity_values):
            self.add_entities(rows, values, scale)
        for rows, values in zip(other.relation_rows, other.relation_values):
            self.add_relations(rows, values, scale)

    @staticmethod
    def _coalesce(rows: List[np.ndarray], values: List[np.ndarray], width: int) -> Tuple[np.ndarray, np.ndarray]:
        if not rows:
            return np.zeros(0, dtype=np.int64), np.zeros((0, width))
        all_rows = np.concatenate(rows)
        all_values = np.concatenate(values, axis=0)
        unique, inverse = np.unique(all_rows, return_inverse=True)
        summed = np.zeros((len(unique), all_values.shape[1]))
        np.add.at(summed, inverse, all_values)
        return unique, summed

    def coalesce_entities(self, width: int = 0) -> Tuple[np.ndarray, np.ndarray]:
        return self._coalesce(self.entity_rows, self.entity_values, width)

    def coalesce_relations(self, width: int = 0) -> Tuple[np.ndarray, np.ndarray]:
        return self._coalesce(self.relation_rows, self.relation_values, width)

    def dense(self, table: EmbeddingTable) -> Tuple[np.ndarray, np.ndarray]:
        """Full-size gradient matrices, mainly for checks"""
        entities = np.zeros_like(table.entities)
        relations = np.zeros_like(table.relations)
        rows, values = self.coalesce_entities(table.entities.shape[1])
        entities[rows] = values
        rows, values = self.coalesce_relations(table.relations.shape[1])
        relations[rows] = values
        return entities, relations


@dataclass
class NegativeBatch:
    """k corrupted triplets per positive and which slot each one replaced"""

    triplets: np.ndarray
    head_corrupted: np.ndarray

    @property
    def k(self) -> int:
        return int(self.triplets.shape[-2])


@dataclass
class EmbeddingLoss:
    loss: float
    grads: EmbeddingGrads


def init_embeddings(
    kind: ModelKind,
    n_entities: int,
    n_relations: int,
    dim: int,
    gamma: float,
    epsilon: float,
    rng: np.random.Generator,
    norm_p: Optional[int] = None,
) -> EmbeddingTable:
    """
    Draw every parameter from U(-(gamma + epsilon) / dim, (gamma + epsilon) / dim)

    RotatE relation phases are drawn from U(-pi, pi) instead.
    """
    kind = ModelKind(kind)
    if dim <= 0:
        raise ConfigError(f"embedding dimension must be positive, got {dim}")
    if kind.is_complex and dim % 2:
        raise ConfigError(f"{kind.value} needs an even dimension (real and imaginary planes), got {dim}")

    bound = (gamma + epsilon) / dim
    entities = rng.uniform(-bound, bound, size=(n_entities, dim))
    if kind is ModelKind.ROTATE:
        relations = rng.uniform(-np.pi, np.pi, size=(n_relations, kind.relation_dim(dim)))
    else:
        relations = rng.uniform(-bound, bound, size=(n_relations, dim))
    return EmbeddingTable(entities, relations, kind, dim, norm_p)


def sample_negative_batch(positives: np.ndarray, k: int, n_entities: int, rng: np.random.Generator) -> NegativeBatch:
    """
    "unif" corruption of a (B, 3) batch into (B, k, 3) negatives

    Each negative flips a fair coin for head or tail and draws the replacement
    uniformly from all entities; collisions with true triplets are kept.
    """
    if k < 1:
        raise ConfigError(f"negative sample size must be at least 1, got {k}")
    positives = np.asarray(positives, dtype=np.int64).reshape(-1, 3)
    head_corrupted = rng.random((len(positives), k)) < 0.5
    replacements = rng.integers(0, n_entities, size=(len(positives), k))

    negatives = np.repeat(positives[:, None, :], k, axis=1)
    negatives[..., 0] = np.where(head_corrupted, replacements, negatives[..., 0])
    negatives[..., 2] = np.where(head_corrupted, negatives[..., 2], replacements)
    return NegativeBatch(negatives, head_corrupted)


def sample_negatives(positive: np.ndarray, k: int, n_entities: int, rng: np.random.Generator) -> NegativeBatch:
    """Corrupt a single positive triplet k times"""
    batch = sample_negative_batch(np.asarray(positive)[None], k, n_entities, rng)
    return NegativeBatch(batch.triplets[0], batch.head_corrupted[0])


def embedding_loss(
    positives: np.ndarray,
    negatives: NegativeBatch,
    table: EmbeddingTable,
    gamma: float,
) -> EmbeddingLoss:
    """
    Negative-sampling loss averaged over positives

    loss = mean_b [ -log s(gamma - f(pos_b)) - mean_k log s(f(neg_bk) - gamma) ]
    """
    positives = np.asarray(positives, dtype=np.int64).reshape(-1, 3)
    n_pos = len(positives)
    k = negatives.k
    flat_neg = negatives.triplets.reshape(-1, 3)

    def scored(triplets: np.ndarray):
        return score_grad_batch(
            table.kind,
            table.entities[triplets[:, 0]],
            table.relations[triplets[:, 1]],
            table.entities[triplets[:, 2]],
            table.norm_p,
        )

    pos_scores, pos_grads = scored(positives)
    neg_scores, neg_grads = scored(flat_neg)
    if not (np.all(np.isfinite(pos_scores)) and np.all(np.isfinite(neg_scores))):
        raise TrainingError("non-finite triplet score in embedding loss")

    pos_terms = softplus(pos_scores - gamma)
    neg_terms = softplus(gamma - neg_scores).reshape(n_pos, k).mean(axis=1)
    loss = float(np.mean(pos_terms + neg_terms))

    pos_coef = (sigmoid(pos_scores - gamma) / n_pos)[:, None]
    neg_coef = (-sigmoid(gamma - neg_scores) / (n_pos * k))[:, None]

    grads = EmbeddingGrads()
    grads.add_entities(positives[:, 0], pos_coef * pos_grads.d_head)
    grads.add_entities(positives[:, 2], pos_coef * pos_grads.d_tail)
    grads.add_relations(positives[:, 1], pos_coef * pos_grads.d_relation)
    grads.add_entities(flat_neg[:, 0], neg_coef * neg_grads.d_head)
    grads.add_entities(flat_neg[:, 2], neg_coef * neg_grads.d_tail)
    grads.add_relations(flat_neg[:, 1], neg_coef * neg_grads.d_relation)
    return EmbeddingLoss(loss, grads)
