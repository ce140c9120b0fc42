"""
Filtered link-prediction evaluation

Each test triplet yields two queries, (?, r, t) and (h, r, ?). Every entity is
scored as the missing slot, candidates forming known true triplets are
removed (the true entity itself always stays), and the rank of the true
entity is aggregated into MR, MRR and Hits@{1,3,10}.
"""

import enum
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, FrozenSet, Optional, Tuple

import numpy as np

from .exceptions import ShapeError, UsageError
from .graph_data import FilterIndex
from .scoring import EmbeddingTable, ModelKind, score_batch

logger = logging.getLogger(__name__)

HITS_AT = (1, 3, 10)


class TiePolicy(str, enum.Enum):
    OPTIMISTIC = 'optimistic'
    PESSIMISTIC = 'pessimistic'
    MEAN = 'mean'


@dataclass
class RankingMetrics:
    mr: float
    mrr: float
    hits: Dict[int, float] = field(default_factory=dict)
    n_queries: int = 0

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {'mr': self.mr, 'mrr': self.mrr}
        for k in HITS_AT:
            data[f"hits{k}"] = self.hits[k]
        data['n_queries'] = self.n_queries
        return data

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'RankingMetrics':
        return cls(
            mr=float(data['mr']),
            mrr=float(data['mrr']),
            hits={k: float(data[f"hits{k}"]) for k in HITS_AT},
            n_queries=int(data['n_queries']),
        )


def _filtered_rank(scores: np.ndarray, true_id: int, filtered: FrozenSet[int], tie_policy: TiePolicy) -> float:
    target = scores[true_id]
    keep = np.ones(len(scores), dtype=bool)
    if filtered:
        keep[np.fromiter(filtered, dtype=np.int64, count=len(filtered))] = False
    keep[true_id] = False
    candidates = scores[keep]
    better = int(np.count_nonzero(candidates < target))
    if tie_policy is TiePolicy.OPTIMISTIC:
        return float(1 + better)
    ties = int(np.count_nonzero(candidates == target))
    if tie_policy is TiePolicy.PESSIMISTIC:
        return float(1 + better + ties)
    return 1.0 + better + ties / 2.0


def rank_triplet(
    triplet: Tuple[int, int, int],
    table: EmbeddingTable,
    filter_index: FilterIndex,
    kind: Optional[ModelKind] = None,
    tie_policy: TiePolicy = TiePolicy.OPTIMISTIC,
) -> Tuple[float, float]:
    """Filtered (head rank, tail rank) of one true triplet"""
    kind = ModelKind(kind) if kind is not None else table.kind
    if kind is not table.kind:
        raise ShapeError(f"table holds {table.kind.value} embeddings, cannot rank as {kind.value}")
    tie_policy = TiePolicy(tie_policy)
    head, relation, tail = (int(x) for x in triplet)

    entities = table.entities
    n = table.n_entities
    relation_rows = np.broadcast_to(table.relations[relation], (n, table.relations.shape[1]))
    head_scores = score_batch(kind, entities, relation_rows, np.broadcast_to(entities[tail], entities.shape), table.norm_p)
    tail_scores = score_batch(kind, np.broadcast_to(entities[head], entities.shape), relation_rows, entities, table.norm_p)

    head_rank = _filtered_rank(head_scores, head, filter_index.true_heads(relation, tail), tie_policy)
    tail_rank = _filtered_rank(tail_scores, tail, filter_index.true_tails(head, relation), tie_policy)
    return head_rank, tail_rank


def rank_all(
    triplets: np.ndarray,
    table: EmbeddingTable,
    filter_index: FilterIndex,
    tie_policy: TiePolicy = TiePolicy.OPTIMISTIC,
    threads: int = 1,
) -> np.ndarray:
    """(n, 2) array of head and tail ranks, in input order"""
    triplets = np.asarray(triplets, dtype=np.int64).reshape(-1, 3)

    def rank_chunk(chunk: np.ndarray) -> np.ndarray:
        ranks = np.zeros((len(chunk), 2))
        for i, row in enumerate(chunk):
            ranks[i] = rank_triplet(row, table, filter_index, table.kind, tie_policy)
        return ranks

    if threads <= 1 or len(triplets) < 2:
        return rank_chunk(triplets)
    chunks = np.array_split(triplets, min(len(triplets), threads * 4))
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return np.concatenate(list(pool.map(rank_chunk, chunks)), axis=0)


def aggregate_ranks(ranks: np.ndarray) -> RankingMetrics:
    """Order-independent MR, MRR and Hits@K over a flat list of ranks"""
    flat = np.asarray(ranks, dtype=np.float64).reshape(-1)
    if len(flat) == 0:
        raise UsageError("cannot aggregate an empty rank list")
    count = len(flat)
    return RankingMetrics(
        mr=math.fsum(flat.tolist()) / count,
        mrr=math.fsum((1.0 / flat).tolist()) / count,
        hits={k: int(np.count_nonzero(flat <= k)) / count for k in HITS_AT},
        n_queries=count,
    )


def evaluate(
    test: np.ndarray,
    table: EmbeddingTable,
    filter_index: FilterIndex,
    kind: Optional[ModelKind] = None,
    tie_policy: TiePolicy = TiePolicy.OPTIMISTIC,
    threads: int = 1,
) -> RankingMetrics:
    """Filtered ranking metrics over head and tail queries of every test triplet"""
    test = np.asarray(test, dtype=np.int64).reshape(-1, 3)
    if len(test) == 0:
        raise UsageError("evaluation needs at least one triplet")
    if kind is not None and ModelKind(kind) is not table.kind:
        raise ShapeError(f"table holds {table.kind.value} embeddings, cannot evaluate as {ModelKind(kind).value}")
    return aggregate_ranks(rank_all(test, table, filter_index, tie_policy, threads))
