"""
Synthetic worlds for overlap-ratio experiments

A ground-truth graph is generated from a latent translation model: entities
are unit vectors scattered around cluster centers, relations are translation
vectors, and a triplet's tail is usually one of the entities nearest to
``x_h + r``. TransE can represent the world exactly, so a trained model can
be checked against held-out triplets. The world is then cut into a teacher
view and a target view with nested alignment sets, one per overlap ratio.
"""

import logging
import math
import os
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .exceptions import ConfigError
from .graph_data import KnowledgeGraph, Vocabulary, export_graph, split_dataset

logger = logging.getLogger(__name__)

TEACHER_PREFIX = 'teacher:'
TARGET_PREFIX = 'target:'

LATENT_DIM = 8
CLUSTER_SPREAD = 0.5
RELATION_SCALE = 1.0
TAIL_POOL = 3


@dataclass
class SyntheticWorld:
    graph: KnowledgeGraph
    clusters: np.ndarray
    entity_vectors: np.ndarray
    relation_vectors: np.ndarray


@dataclass
class SyntheticBenchmark:
    """Paths and statistics of a written benchmark directory"""

    out_dir: str
    world_path: str
    teacher_path: str
    target_dir: str
    alignment_paths: Dict[str, str] = field(default_factory=dict)
    stats: Dict[str, int] = field(default_factory=dict)

    def files(self) -> List[str]:
        paths = [self.world_path, self.teacher_path]
        paths += [os.path.join(self.target_dir, name) for name in ('train.tsv', 'valid.tsv', 'test.tsv')]
        paths += [self.alignment_paths[key] for key in sorted(self.alignment_paths)]
        return paths


def ratio_label(ratio: float) -> str:
    return f"{ratio:g}"


def generate_world(
    n_entities: int = 200,
    n_relations: int = 8,
    n_triplets: int = 2000,
    n_clusters: int = 8,
    noise: float = 0.3,
    seed: int = 0,
) -> SyntheticWorld:
    """
    Draw exactly ``n_triplets`` distinct triplets over ``n_entities`` entities

    Every entity heads at least one triplet and every relation is used. With
    probability ``1 - noise`` the tail is one of the ``TAIL_POOL`` entities
    nearest (L1) to ``x_h + r``; otherwise it is any entity but the head.
    """
    if min(n_entities, n_relations, n_clusters) < 1:
        raise ConfigError("entity, relation and cluster counts must be positive")
    if n_clusters > n_entities:
        raise ConfigError(f"{n_clusters} clusters cannot partition {n_entities} entities")
    if n_triplets < max(n_entities, n_relations):
        raise ConfigError(f"{n_triplets} triplets cannot cover {n_entities} entities and {n_relations} relations")
    if n_triplets > n_entities * n_relations * (n_entities - 1):
        raise ConfigError(f"{n_triplets} distinct triplets do not fit the requested graph size")
    if not 0 <= noise <= 1:
        raise ConfigError(f"noise must lie in [0, 1], got {noise}")

    rng = np.random.default_rng(seed)
    clusters = rng.permutation(np.arange(n_entities) % n_clusters)
    centers = _unit_rows(rng.normal(size=(n_clusters, LATENT_DIM)))
    offsets = rng.normal(scale=CLUSTER_SPREAD / math.sqrt(LATENT_DIM), size=(n_entities, LATENT_DIM))
    entity_vectors = _unit_rows(centers[clusters] + offsets)
    relation_vectors = rng.normal(scale=RELATION_SCALE / math.sqrt(LATENT_DIM), size=(n_relations, LATENT_DIM))

    # nearest[r, h] lists every entity but h by L1 distance to x_h + r
    nearest = np.empty((n_relations, n_entities, n_entities - 1), dtype=np.int64)
    for relation in range(n_relations):
        moved = entity_vectors + relation_vectors[relation]
        distance = np.abs(moved[:, None, :] - entity_vectors[None, :, :]).sum(axis=2)
        np.fill_diagonal(distance, np.inf)
        nearest[relation] = np.argsort(distance, axis=1, kind='stable')[:, :n_entities - 1]
    pool = min(TAIL_POOL, n_entities - 1)

    def draw_tail(head: int, relation: int) -> int:
        reach = pool if rng.random() >= noise else n_entities - 1
        return int(nearest[relation, head, rng.integers(reach)])

    seen = set()
    rows: List[Tuple[int, int, int]] = []
    attempts = 0
    limit = 200 * n_triplets
    cover = max(n_entities, n_relations)
    while len(rows) < n_triplets:
        attempts += 1
        if attempts > limit:
            raise ConfigError(f"could only draw {len(rows)} of {n_triplets} distinct triplets; raise noise or sizes")
        index = len(rows)
        if index < cover:
            # first pass: every entity heads a triplet, every relation is used
            head = index if index < n_entities else int(rng.integers(n_entities))
            relation = index % n_relations
        else:
            head = int(rng.integers(n_entities))
            relation = int(rng.integers(n_relations))
        row = (head, relation, draw_tail(head, relation))
        if row in seen:
            continue
        seen.add(row)
        rows.append(row)

    graph = KnowledgeGraph(
        Vocabulary([f"e{i}" for i in range(n_entities)], frozen=True),
        Vocabulary([f"r{j}" for j in range(n_relations)], frozen=True),
        np.array(rows, dtype=np.int64),
    )
    return SyntheticWorld(graph, clusters, entity_vectors, relation_vectors)


def _unit_rows(x: np.ndarray) -> np.ndarray:
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def _view(world: KnowledgeGraph, triplets: np.ndarray, prefix: str) -> KnowledgeGraph:
    entities = Vocabulary()
    relations = Vocabulary()
    rows = []
    for head, relation, tail in world.labeled_triplets(triplets):
        rows.append((entities.add(prefix + head), relations.add(prefix + relation), entities.add(prefix + tail)))
    return KnowledgeGraph(entities.freeze(), relations.freeze(), np.array(rows, dtype=np.int64).reshape(-1, 3))


def make_views(
    world: SyntheticWorld,
    target_fraction: float = 0.4,
    teacher_fraction: float = 1.0,
    seed: int = 0,
) -> Tuple[KnowledgeGraph, KnowledgeGraph]:
    """Teacher and target graphs seeing random fractions of the world's triplets"""
    for name, fraction in (('target_fraction', target_fraction), ('teacher_fraction', teacher_fraction)):
        if not 0 < fraction <= 1:
            raise ConfigError(f"{name} must lie in (0, 1], got {fraction}")
    rng = np.random.default_rng([seed, 1])
    total = len(world.graph)

    def pick(fraction: float) -> np.ndarray:
        count = max(3, int(round(fraction * total)))
        return world.graph.triplets[np.sort(rng.choice(total, size=min(count, total), replace=False))]

    teacher = _view(world.graph, pick(teacher_fraction), TEACHER_PREFIX)
    target = _view(world.graph, pick(target_fraction), TARGET_PREFIX)
    return teacher, target


def nested_alignments(
    teacher: KnowledgeGraph,
    target: KnowledgeGraph,
    ratios: Sequence[float],
    seed: int = 0,
) -> Dict[float, List[Tuple[str, str]]]:
    """
    Alignment pairs for each overlap ratio, nested across ratios

    One permutation of the target entities known to the teacher is drawn;
    ratio r takes its first ceil(r * |E_target|) entries (capped at the
    entities the teacher shares), so smaller ratios are prefixes of larger ones.
    """
    for ratio in ratios:
        if not 0 < ratio <= 1:
            raise ConfigError(f"overlap ratio must lie in (0, 1], got {ratio}")
    shared = [
        label for label in target.entity_vocab.labels
        if TEACHER_PREFIX + label[len(TARGET_PREFIX):] in teacher.entity_vocab
    ]
    order = np.random.default_rng([seed, 2]).permutation(len(shared))
    alignments: Dict[float, List[Tuple[str, str]]] = {}
    for ratio in sorted(set(ratios)):
        count = min(len(shared), math.ceil(ratio * target.n_entities - 1e-9))
        chosen = [shared[i] for i in order[:count]]
        alignments[ratio] = [(TEACHER_PREFIX + label[len(TARGET_PREFIX):], label) for label in chosen]
        if count < math.ceil(ratio * target.n_entities - 1e-9):
            logger.warning(f"Ratio {ratio_label(ratio)} capped at {count} shared entities")
    return alignments


def write_benchmark(
    out_dir: str,
    ratios: Sequence[float],
    n_entities: int = 200,
    n_relations: int = 8,
    n_triplets: int = 2000,
    n_clusters: int = 8,
    noise: float = 0.3,
    target_fraction: float = 0.4,
    teacher_fraction: float = 1.0,
    split_ratios: Sequence[float] = (0.6, 0.2, 0.2),
    seed: int = 0,
) -> SyntheticBenchmark:
    """
    Generate a world and write its views, fixed target split and alignments

    Layout: world.tsv, teacher/triplets.tsv, target/{train,valid,test}.tsv,
    alignment/ratio_<r>.tsv.
    """
    if not ratios:
        raise ConfigError("at least one overlap ratio is needed")
    for ratio in ratios:
        if not 0 < ratio <= 1:
            raise ConfigError(f"overlap ratio must lie in (0, 1], got {ratio}")

    world = generate_world(n_entities, n_relations, n_triplets, n_clusters, noise, seed)
    teacher, target = make_views(world, target_fraction, teacher_fraction, seed)
    splits = split_dataset(target, split_ratios, seed)
    alignments = nested_alignments(teacher, target, ratios, seed)

    benchmark = SyntheticBenchmark(
        out_dir=out_dir,
        world_path=os.path.join(out_dir, 'world.tsv'),
        teacher_path=os.path.join(out_dir, 'teacher', 'triplets.tsv'),
        target_dir=os.path.join(out_dir, 'target'),
    )
    export_graph(world.graph, benchmark.world_path)
    export_graph(teacher, benchmark.teacher_path)
    for name, part in zip(('train.tsv', 'valid.tsv', 'test.tsv'), (splits.train, splits.valid, splits.test)):
        export_graph(target, os.path.join(benchmark.target_dir, name), part)

    alignment_dir = os.path.join(out_dir, 'alignment')
    os.makedirs(alignment_dir, exist_ok=True)
    for ratio, pairs in alignments.items():
        path = os.path.join(alignment_dir, f"ratio_{ratio_label(ratio)}.tsv")
        with open(path, 'w', encoding='utf-8') as handle:
            for teacher_label, target_label in pairs:
                handle.write(f"{teacher_label}\t{target_label}\n")
        benchmark.alignment_paths[ratio_label(ratio)] = path

    benchmark.stats = {
        'world_entities': world.graph.n_entities,
        'world_relations': world.graph.n_relations,
        'world_triplets': len(world.graph),
        'teacher_triplets': len(teacher),
        'target_entities': target.n_entities,
        'target_triplets': len(target),
        'target_train': len(splits.train),
        'target_valid': len(splits.valid),
        'target_test': len(splits.test),
    }
    logger.info(f"Synthetic benchmark written to {out_dir}: {benchmark.stats}")
    return benchmark
