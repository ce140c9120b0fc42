"""
Embedding transfer module

Projects frozen teacher entity embeddings into the target space with a
transition network and builds the two soft constraints that pull the target
embeddings toward them:
- the distance constraint, a weighted cosine distance per aligned pair
- the triplet constraint, which scores target triplets after substituting
  an aligned entity with its projected teacher counterpart

Per-pair weights are constants here; no gradient is ever produced for the
teacher embeddings.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple, Union

import numpy as np

from .embedding_train import EmbeddingGrads, softplus
from .exceptions import ShapeError
from .graph_data import AlignmentSet
from .nn_core import Activation, DenseNet, InitScheme, build_dense_net, sigmoid
from .scoring import EmbeddingTable, score_grad_batch

logger = logging.getLogger(__name__)

DEGENERATE_NORM = 1e-12

PairWeights = Union[None, np.ndarray, Callable[[np.ndarray, np.ndarray], np.ndarray]]


class DegenerateInputCounter:
    """Running count of cosine evaluations on near-zero vectors"""

    def __init__(self):
        self.count = 0

    def add(self, n: int) -> None:
        if n:
            self.count += n
            logger.warning(f"{n} degenerate cosine input(s) (norm < {DEGENERATE_NORM}); distance set to 1")

    def reset(self) -> None:
        self.count = 0


@dataclass
class TransitionNetwork:
    """Two linear layers mapping teacher space R^m to target space R^n"""

    net: DenseNet

    @property
    def m(self) -> int:
        return self.net.in_dim

    @property
    def n(self) -> int:
        return self.net.out_dim


def build_transition_network(
    m: int,
    n: int,
    rng: np.random.Generator,
    hidden: Optional[int] = None,
    activation: bool = True,
    slope: float = 0.01,
) -> TransitionNetwork:
    """Orthogonally initialized m -> max(m, n) -> n network"""
    width = hidden if hidden is not None else max(m, n)
    first = Activation.LEAKY_RELU if activation else Activation.NONE
    net = build_dense_net([m, width, n], [first, Activation.NONE], rng, scheme=InitScheme.ORTHOGONAL, slope=slope)
    return TransitionNetwork(net)


def project_teacher(W: TransitionNetwork, e_t: np.ndarray) -> np.ndarray:
    """W(e_t) for one teacher vector or a batch of them"""
    return W.net(e_t)


def cosine_distance_grad(u: np.ndarray, v: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """
    Row-wise 1 - cos(u, v) with gradients

    Rows where either vector has norm below 1e-12 get distance 1 and zero
    gradients.

    Returns:
        Tuple of (distances, d_u, d_v, degenerate mask)
    """
    u = np.atleast_2d(np.asarray(u, dtype=np.float64))
    v = np.atleast_2d(np.asarray(v, dtype=np.float64))
    if u.shape != v.shape:
        raise ShapeError(f"cosine distance needs equal shapes, got {u.shape} and {v.shape}")

    norm_u = np.sqrt((u * u).sum(axis=1))
    norm_v = np.sqrt((v * v).sum(axis=1))
    degenerate = (norm_u < DEGENERATE_NORM) | (norm_v < DEGENERATE_NORM)
    safe_u = np.where(degenerate, 1.0, norm_u)
    safe_v = np.where(degenerate, 1.0, norm_v)

    cos = (u * v).sum(axis=1) / (safe_u * safe_v)
    cos = np.where(degenerate, 0.0, cos)
    distance = 1.0 - cos

    keep = (~degenerate)[:, None]
    d_u = -(v / (safe_u * safe_v)[:, None] - cos[:, None] * u / (safe_u * safe_u)[:, None])
    d_v = -(u / (safe_u * safe_v)[:, None] - cos[:, None] * v / (safe_v * safe_v)[:, None])
    d_u = np.where(keep, d_u, 0.0)
    d_v = np.where(keep, d_v, 0.0)

    return distance, d_u, d_v, degenerate


def cosine_distance(u: np.ndarray, v: np.ndarray) -> float:
    """1 - cos(u, v), in [0, 2]"""
    distance, _, _, _ = cosine_distance_grad(np.asarray(u)[None], np.asarray(v)[None])
    return float(distance[0])


def _zero_grads(net: DenseNet) -> Dict[str, np.ndarray]:
    return {name: np.zeros_like(value) for name, value in net.parameters().items()}


@dataclass
class DistanceConstraintResult:
    loss: float
    target_grads: np.ndarray
    w_grads: Dict[str, np.ndarray]
    n_degenerate: int = 0


def distance_constraint(
    teacher_vectors: np.ndarray,
    target_vectors: np.ndarray,
    W: TransitionNetwork,
    weights: np.ndarray,
) -> DistanceConstraintResult:
    """
    Batch mean of weight_i * (1 - cos(W(e_t,i), e_s,i))

    ``target_grads`` rows line up with ``target_vectors``; the caller scatters
    them onto the target entity rows.
    """
    target_vectors = np.atleast_2d(np.asarray(target_vectors, dtype=np.float64))
    weights = np.asarray(weights, dtype=np.float64).reshape(-1)
    batch = len(target_vectors)
    if batch == 0 or not np.any(weights):
        return DistanceConstraintResult(0.0, np.zeros_like(target_vectors), _zero_grads(W.net))
    if len(weights) != batch:
        raise ShapeError(f"{len(weights)} weights for {batch} aligned pairs")

    projected, cache = W.net.forward(np.atleast_2d(teacher_vectors))
    distance, d_projected, d_target, degenerate = cosine_distance_grad(projected, target_vectors)
    loss = float(np.mean(weights * distance))

    coef = (weights / batch)[:, None]
    w_grads, _ = W.net.backward(cache, d_projected * coef)
    return DistanceConstraintResult(loss, d_target * coef, w_grads, int(degenerate.sum()))


@dataclass
class TransferredTriplets:
    """Target triplets with one aligned slot replaced by a teacher entity"""

    teacher_ids: np.ndarray
    target_ids: np.ndarray
    relations: np.ndarray
    others: np.ndarray
    replaced_head: np.ndarray

    def __len__(self) -> int:
        return int(self.teacher_ids.shape[0])


def expand_transferred(
    batch: np.ndarray,
    alignment: AlignmentSet,
    cap: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> TransferredTriplets:
    """
    One transferred triplet per (batch triplet, aligned slot, teacher entity)

    With ``cap`` set, a triplet with more expansions keeps a uniform subsample
    of ``cap`` of them, drawn from ``rng``.
    """
    columns: Tuple[List[int], ...] = ([], [], [], [], [])
    for head, relation, tail in np.asarray(batch, dtype=np.int64).reshape(-1, 3).tolist():
        expansions = [(t, head, relation, tail, True) for t in alignment.teacher_ids_for(head)]
        expansions += [(t, tail, relation, head, False) for t in alignment.teacher_ids_for(tail)]
        if cap is not None and len(expansions) > cap:
            if rng is None:
                raise ShapeError("a transfer cap needs an rng to subsample expansions")
            keep = np.sort(rng.choice(len(expansions), size=cap, replace=False))
            expansions = [expansions[i] for i in keep]
        for item in expansions:
            for column, value in zip(columns, item):
                column.append(value)

    return TransferredTriplets(
        teacher_ids=np.array(columns[0], dtype=np.int64),
        target_ids=np.array(columns[1], dtype=np.int64),
        relations=np.array(columns[2], dtype=np.int64),
        others=np.array(columns[3], dtype=np.int64),
        replaced_head=np.array(columns[4], dtype=bool),
    )


@dataclass
class TripletConstraintResult:
    loss: float
    grads: EmbeddingGrads
    w_grads: Dict[str, np.ndarray]
    n_transferred: int = 0
    weights: np.ndarray = field(default_factory=lambda: np.zeros(0))


def triplet_constraint(
    batch: np.ndarray,
    alignment: AlignmentSet,
    table: EmbeddingTable,
    teacher_matrix: np.ndarray,
    W: TransitionNetwork,
    gamma: float,
    weights: PairWeights = None,
    cap: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
) -> TripletConstraintResult:
    """
    Mean over transferred triplets of weight * -log sigmoid(gamma - f)

    ``weights`` is None (all 1), an array aligned with the expansion order, or
    a callable mapping (teacher_ids, target_ids) to per-triplet weights.
    Gradients reach the untouched entity row, the relation row and W.
    """
    transferred = expand_transferred(batch, alignment, cap, rng)
    n = len(transferred)
    if n == 0:
        return TripletConstraintResult(0.0, EmbeddingGrads(), _zero_grads(W.net))

    if weights is None:
        w = np.ones(n)
    elif callable(weights):
        w = np.asarray(weights(transferred.teacher_ids, transferred.target_ids), dtype=np.float64)
    else:
        w = np.asarray(weights, dtype=np.float64)
    if w.shape != (n,):
        raise ShapeError(f"{w.shape} weights for {n} transferred triplets")
    if not np.any(w):
        return TripletConstraintResult(0.0, EmbeddingGrads(), _zero_grads(W.net), n, w)

    projected, cache = W.net.forward(teacher_matrix[transferred.teacher_ids])
    if projected.shape[1] != table.dim:
        raise ShapeError(f"transition output width {projected.shape[1]} differs from target dim {table.dim}")
    others = table.entities[transferred.others]
    head_side = transferred.replaced_head[:, None]
    heads = np.where(head_side, projected, others)
    tails = np.where(head_side, others, projected)

    scores, grads = score_grad_batch(table.kind, heads, table.relations[transferred.relations], tails, table.norm_p)
    loss = float(np.mean(w * softplus(scores - gamma)))

    coef = (w * sigmoid(scores - gamma) / n)[:, None]
    d_projected = np.where(head_side, grads.d_head, grads.d_tail) * coef
    d_others = np.where(head_side, grads.d_tail, grads.d_head) * coef

    embedding_grads = EmbeddingGrads()
    embedding_grads.add_entities(transferred.others, d_others)
    embedding_grads.add_relations(transferred.relations, grads.d_relation * coef)
    w_grads, _ = W.net.backward(cache, d_projected)
    return TripletConstraintResult(loss, embedding_grads, w_grads, n, w)
