"""Shared fixtures and the central-difference gradient oracle"""

import os
from typing import Callable, Iterable, Iterator, Sequence, Tuple

import numpy as np

from kg_transfer.graph_data import AlignmentSet, KnowledgeGraph, Vocabulary, split_dataset
from kg_transfer.nn_core import Activation, DenseLayer, DenseNet
from kg_transfer.scoring import EmbeddingTable, ModelKind
from kg_transfer.trainer import TargetData
from kg_transfer.transfer import TransitionNetwork

FD_STEP = 1e-6
FD_TOLERANCE = 1e-5
FD_DRAWS = 100


def numerical_gradient(f: Callable[[], float], x: np.ndarray, step: float = FD_STEP) -> np.ndarray:
    """Central differences of f() wrt every entry of x, perturbing x in place"""
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + step
        upper = f()
        flat[i] = original - step
        lower = f()
        flat[i] = original
        out[i] = (upper - lower) / (2.0 * step)
    return grad


def seeded_draws(key: int, count: int = FD_DRAWS) -> Iterator[Tuple[int, np.random.Generator]]:
    """(draw, rng) pairs with one independent generator per draw"""
    for draw in range(count):
        yield draw, np.random.default_rng([key, draw])


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    scale = max(np.linalg.norm(analytic) + np.linalg.norm(numeric), 1e-8)
    return float(np.linalg.norm(analytic - numeric) / scale)


def write_lines(directory: str, name: str, lines: Iterable[str]) -> str:
    path = os.path.join(directory, name)
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as handle:
        for line in lines:
            handle.write(line + '\n')
    return path


def write_triplets(directory: str, name: str, rows: Iterable[Tuple[str, str, str]]) -> str:
    return write_lines(directory, name, ('\t'.join(row) for row in rows))


def random_table(kind: ModelKind, n_entities: int, n_relations: int, dim: int, rng: np.random.Generator,
                 norm_p=None) -> EmbeddingTable:
    entities = rng.normal(size=(n_entities, dim))
    if kind is ModelKind.ROTATE:
        relations = rng.uniform(-np.pi, np.pi, size=(n_relations, dim // 2))
    else:
        relations = rng.normal(size=(n_relations, dim))
    return EmbeddingTable(entities, relations, kind, dim, norm_p)


def random_graph(n_entities: int, n_relations: int, n_triplets: int, rng: np.random.Generator,
                 prefix: str = '') -> KnowledgeGraph:
    """Distinct random triplets over e0..e{n-1} and r0..r{m-1}"""
    seen = set()
    rows = []
    while len(rows) < n_triplets:
        row = (int(rng.integers(n_entities)), int(rng.integers(n_relations)), int(rng.integers(n_entities)))
        if row not in seen:
            seen.add(row)
            rows.append(row)
    return KnowledgeGraph(
        Vocabulary([f"{prefix}e{i}" for i in range(n_entities)], frozen=True),
        Vocabulary([f"{prefix}r{j}" for j in range(n_relations)], frozen=True),
        np.array(rows, dtype=np.int64),
    )


def target_from_graph(graph: KnowledgeGraph, ratios: Sequence[float] = (0.6, 0.2, 0.2), seed: int = 0) -> TargetData:
    return TargetData(graph, split_dataset(graph, ratios, seed))


def brute_force_rank(scores: np.ndarray, true_id: int, known: set) -> int:
    """Sort-based filtered rank: position of the true entity among unfiltered candidates"""
    order = sorted(range(len(scores)), key=lambda e: (scores[e], e != true_id))
    rank = 0
    for entity in order:
        if entity != true_id and entity in known:
            continue
        rank += 1
        if entity == true_id:
            return rank
    raise AssertionError("true entity missing from candidate list")


def identity_transition(n: int) -> TransitionNetwork:
    """W(x) = x: two identity layers with a slope-1 LeakyReLU between them"""
    return TransitionNetwork(DenseNet([
        DenseLayer(np.eye(n), np.zeros(n), Activation.LEAKY_RELU, slope=1.0),
        DenseLayer(np.eye(n), np.zeros(n), Activation.NONE),
    ]))


def alignment_of(pairs: Sequence[Tuple[int, int]]) -> AlignmentSet:
    by_target = {}
    for teacher_id, target_id in pairs:
        by_target.setdefault(target_id, []).append(teacher_id)
    return AlignmentSet(
        np.array(pairs, dtype=np.int64).reshape(-1, 2),
        {key: tuple(value) for key, value in by_target.items()},
    )
