"""
Shallow knowledge graph score functions

TransE, DistMult, ComplEx and RotatE scores with analytic gradients. Every
score follows one convention: lower means more plausible, so the bilinear
models are stored negated. Complex-valued vectors use a split-plane layout of
length 2d (d real parts, then d imaginary parts); RotatE relations are d
phase angles.
"""

import enum
import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .exceptions import ShapeError

logger = logging.getLogger(__name__)


class ModelKind(str, enum.Enum):
    TRANSE = 'transe'
    DISTMULT = 'distmult'
    COMPLEX = 'complex'
    ROTATE = 'rotate'

    @property
    def is_complex(self) -> bool:
        return self in (ModelKind.COMPLEX, ModelKind.ROTATE)

    def default_norm(self) -> Optional[int]:
        if self is ModelKind.TRANSE:
            return 1
        if self is ModelKind.ROTATE:
            return 2
        return None

    def relation_dim(self, dim: int) -> int:
        return dim // 2 if self is ModelKind.ROTATE else dim


@dataclass
class EmbeddingTable:
    """Entity and relation parameter matrices laid out for one model kind"""

    entities: np.ndarray
    relations: np.ndarray
    kind: ModelKind
    dim: int
    norm_p: Optional[int] = None

    def __post_init__(self):
        if self.norm_p is None:
            self.norm_p = self.kind.default_norm()

    @property
    def n_entities(self) -> int:
        return int(self.entities.shape[0])

    @property
    def n_relations(self) -> int:
        return int(self.relations.shape[0])

    def copy(self) -> 'EmbeddingTable':
        return EmbeddingTable(self.entities.copy(), self.relations.copy(), self.kind, self.dim, self.norm_p)

    def score_triplets(self, triplets: np.ndarray) -> np.ndarray:
        triplets = np.asarray(triplets, dtype=np.int64).reshape(-1, 3)
        return score_batch(
            self.kind,
            self.entities[triplets[:, 0]],
            self.relations[triplets[:, 1]],
            self.entities[triplets[:, 2]],
            self.norm_p,
        )


@dataclass
class TripletGrad:
    d_head: np.ndarray
    d_relation: np.ndarray
    d_tail: np.ndarray


def _check_shapes(kind: ModelKind, heads: np.ndarray, relations: np.ndarray, tails: np.ndarray) -> None:
    if heads.shape != tails.shape:
        raise ShapeError(f"head shape {heads.shape} differs from tail shape {tails.shape}")
    dim = heads.shape[-1]
    if kind.is_complex and dim % 2:
        raise ShapeError(f"{kind.value} vectors need an even length, got {dim}")
    expected = kind.relation_dim(dim)
    if relations.shape[-1] != expected or relations.shape[:-1] != heads.shape[:-1]:
        raise ShapeError(
            f"{kind.value} relation shape {relations.shape} does not fit entity shape {heads.shape}"
        )


def _planes(x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    half = x.shape[-1] // 2
    return x[..., :half], x[..., half:]


def _safe_divide(numerator: np.ndarray, denominator: np.ndarray) -> np.ndarray:
    """numerator / denominator with 0 where the denominator is 0"""
    out = np.zeros(np.broadcast(numerator, denominator).shape, dtype=np.float64)
    np.divide(numerator, denominator, out=out, where=denominator != 0)
    return out


def score_grad_batch(
    kind: ModelKind,
    heads: np.ndarray,
    relations: np.ndarray,
    tails: np.ndarray,
    norm_p: Optional[int] = None,
    need_grad: bool = True,
) -> Tuple[np.ndarray, Optional[TripletGrad]]:
    """
    Score rows of (head, relation, tail) vectors and their partial derivatives

    Arrays share leading batch dimensions. Returns (scores, grads) where grads
    is None when ``need_grad`` is False. Non-differentiable points (a zero
    residual under L1, a zero-length residual under L2) get subgradient 0.
    """
    heads = np.asarray(heads, dtype=np.float64)
    relations = np.asarray(relations, dtype=np.float64)
    tails = np.asarray(tails, dtype=np.float64)
    _check_shapes(kind, heads, relations, tails)
    p = norm_p if norm_p is not None else kind.default_norm()

    if kind is ModelKind.TRANSE:
        residual = heads + relations - tails
        if p == 1:
            scores = np.abs(residual).sum(axis=-1)
            d_res = np.sign(residual) if need_grad else None
        elif p == 2:
            scores = np.sqrt((residual * residual).sum(axis=-1))
            d_res = _safe_divide(residual, scores[..., None]) if need_grad else None
        else:
            raise ShapeError(f"unsupported TransE norm L{p}")
        if not need_grad:
            return scores, None
        return scores, TripletGrad(d_res, d_res.copy(), -d_res)

    if kind is ModelKind.DISTMULT:
        scores = -(heads * relations * tails).sum(axis=-1)
        if not need_grad:
            return scores, None
        return scores, TripletGrad(-relations * tails, -heads * tails, -heads * relations)

    if kind is ModelKind.COMPLEX:
        hr, hi = _planes(heads)
        rr, ri = _planes(relations)
        tr, ti = _planes(tails)
        real_part = (hr * rr - hi * ri) * tr + (hr * ri + hi * rr) * ti
        scores = -real_part.sum(axis=-1)
        if not need_grad:
            return scores, None
        d_head = -np.concatenate([rr * tr + ri * ti, rr * ti - ri * tr], axis=-1)
        d_rel = -np.concatenate([hr * tr + hi * ti, hr * ti - hi * tr], axis=-1)
        d_tail = -np.concatenate([hr * rr - hi * ri, hr * ri + hi * rr], axis=-1)
        return scores, TripletGrad(d_head, d_rel, d_tail)

    if kind is ModelKind.ROTATE:
        hr, hi = _planes(heads)
        tr, ti = _planes(tails)
        cos, sin = np.cos(relations), np.sin(relations)
        ur = hr * cos - hi * sin - tr
        ui = hr * sin + hi * cos - ti
        moduli = np.sqrt(ur * ur + ui * ui)
        if p == 1:
            scores = moduli.sum(axis=-1)
            scale = _safe_divide(np.ones_like(moduli), moduli) if need_grad else None
        elif p == 2:
            scores = np.sqrt((moduli * moduli).sum(axis=-1))
            scale = _safe_divide(np.ones_like(moduli), scores[..., None]) if need_grad else None
        else:
            raise ShapeError(f"unsupported RotatE norm L{p}")
        if not need_grad:
            return scores, None
        gr = ur * scale
        gi = ui * scale
        d_head = np.concatenate([gr * cos + gi * sin, gi * cos - gr * sin], axis=-1)
        d_tail = np.concatenate([-gr, -gi], axis=-1)
        d_rel = gr * (-hr * sin - hi * cos) + gi * (hr * cos - hi * sin)
        return scores, TripletGrad(d_head, d_rel, d_tail)

    raise ShapeError(f"unknown model kind {kind!r}")


def score_batch(
    kind: ModelKind,
    heads: np.ndarray,
    relations: np.ndarray,
    tails: np.ndarray,
    norm_p: Optional[int] = None,
) -> np.ndarray:
    scores, _ = score_grad_batch(kind, heads, relations, tails, norm_p, need_grad=False)
    return scores


def score(kind: ModelKind, h: np.ndarray, r: np.ndarray, t: np.ndarray, norm_p: Optional[int] = None) -> float:
    """Score a single triplet from its vectors"""
    return float(score_batch(kind, np.asarray(h)[None], np.asarray(r)[None], np.asarray(t)[None], norm_p)[0])


def score_grad(
    kind: ModelKind,
    h: np.ndarray,
    r: np.ndarray,
    t: np.ndarray,
    norm_p: Optional[int] = None,
) -> Tuple[float, TripletGrad]:
    """Score a single triplet and return its analytic gradient"""
    scores, grads = score_grad_batch(kind, np.asarray(h)[None], np.asarray(r)[None], np.asarray(t)[None], norm_p)
    return float(scores[0]), TripletGrad(grads.d_head[0], grads.d_relation[0], grads.d_tail[0])


def wrap_phases(phases: np.ndarray) -> np.ndarray:
    """Map angles into [-pi, pi)"""
    return np.mod(phases + np.pi, 2.0 * np.pi) - np.pi


def project_constraints(
    table: EmbeddingTable,
    entity_rows: Optional[np.ndarray] = None,
    relation_rows: Optional[np.ndarray] = None,
) -> int:
    """
    Enforce the model's embedding constraints in place

    TransE entity rows are rescaled to unit L2 norm (zero rows are left as
    they are and counted); RotatE phases are wrapped into [-pi, pi).
    DistMult and ComplEx are unconstrained. ``entity_rows`` and
    ``relation_rows`` restrict the projection to touched rows.

    Returns:
        Number of zero entity rows that could not be normalized
    """
    if table.kind is ModelKind.TRANSE:
        rows = np.arange(table.n_entities) if entity_rows is None else np.asarray(entity_rows, dtype=np.int64)
        block = table.entities[rows]
        norms = np.sqrt((block * block).sum(axis=1))
        zero = norms == 0
        if np.any(~zero):
            table.entities[rows[~zero]] = block[~zero] / norms[~zero, None]
        flagged = int(zero.sum())
        if flagged:
            logger.warning(f"{flagged} zero entity row(s) left unnormalized")
        return flagged

    if table.kind is ModelKind.ROTATE:
        if relation_rows is None:
            table.relations[:] = wrap_phases(table.relations)
        else:
            rows = np.asarray(relation_rows, dtype=np.int64)
            table.relations[rows] = wrap_phases(table.relations[rows])
    return 0
