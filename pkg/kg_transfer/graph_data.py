"""
Knowledge graph data layer

Loads, indexes and splits the inputs of a transfer run:
- triplet files (head<TAB>relation<TAB>tail) with label vocabularies
- aligned entity pairs between a teacher graph and the target graph
- pre-trained teacher entity embeddings in the text dump format
- the filter index used by filtered ranking evaluation

All returned objects are treated as read-only once built.
"""

import logging
import math
import os
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .exceptions import AlignmentError, ConfigError, DataError, LoadError, ParseError, VocabularyError

logger = logging.getLogger(__name__)

SPLIT_FILES = ('train.tsv', 'valid.tsv', 'test.tsv')


class Vocabulary:
    """Bidirectional label <-> dense id map, ids assigned in first-appearance order"""

    def __init__(self, labels: Iterable[str] = (), frozen: bool = False):
        self._labels: List[str] = []
        self._index: Dict[str, int] = {}
        for label in labels:
            self._add(label)
        self._frozen = frozen

    def _add(self, label: str) -> int:
        index = self._index.get(label)
        if index is None:
            index = len(self._labels)
            self._index[label] = index
            self._labels.append(label)
        return index

    def add(self, label: str) -> int:
        """Return the id of ``label``, assigning the next id when it is new"""
        if self._frozen:
            return self.id_of(label)
        return self._add(label)

    def id_of(self, label: str) -> int:
        try:
            return self._index[label]
        except KeyError:
            raise VocabularyError(f"Unknown label '{label}'") from None

    def get(self, label: str) -> Optional[int]:
        return self._index.get(label)

    def label_of(self, index: int) -> str:
        return self._labels[index]

    def freeze(self) -> 'Vocabulary':
        """Return a frozen copy; adding an unknown label to it raises VocabularyError"""
        return Vocabulary(self._labels, frozen=True)

    @property
    def frozen(self) -> bool:
        return self._frozen

    @property
    def labels(self) -> Tuple[str, ...]:
        return tuple(self._labels)

    def __len__(self) -> int:
        return len(self._labels)

    def __contains__(self, label: object) -> bool:
        return label in self._index

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Vocabulary):
            return NotImplemented
        return self._labels == other._labels


@dataclass
class KnowledgeGraph:
    """Entity and relation vocabularies plus an indexed, duplicate-free triplet array"""

    entity_vocab: Vocabulary
    relation_vocab: Vocabulary
    triplets: np.ndarray
    duplicates_dropped: int = 0

    @property
    def n_entities(self) -> int:
        return len(self.entity_vocab)

    @property
    def n_relations(self) -> int:
        return len(self.relation_vocab)

    def __len__(self) -> int:
        return int(self.triplets.shape[0])

    def labeled_triplets(self, triplets: Optional[np.ndarray] = None) -> Iterator[Tuple[str, str, str]]:
        rows = self.triplets if triplets is None else triplets
        for head, relation, tail in rows:
            yield (
                self.entity_vocab.label_of(int(head)),
                self.relation_vocab.label_of(int(relation)),
                self.entity_vocab.label_of(int(tail)),
            )


@dataclass
class SplitDataset:
    """Disjoint train/valid/test triplet arrays sharing one graph's vocabularies"""

    train: np.ndarray
    valid: np.ndarray
    test: np.ndarray
    seed: int
    ratios: Tuple[float, float, float] = (0.6, 0.2, 0.2)

    def all_triplets(self) -> np.ndarray:
        return np.concatenate([self.train, self.valid, self.test], axis=0)

    @property
    def sizes(self) -> Tuple[int, int, int]:
        return len(self.train), len(self.valid), len(self.test)


@dataclass
class AlignmentSet:
    """Aligned (teacher id, target id) pairs and their inversion keyed by target id"""

    pairs: np.ndarray
    by_target: Dict[int, Tuple[int, ...]]
    skipped: int = 0

    def __len__(self) -> int:
        return int(self.pairs.shape[0])

    def target_ids(self) -> np.ndarray:
        return np.unique(self.pairs[:, 1])

    def teacher_ids_for(self, target_id: int) -> Tuple[int, ...]:
        return self.by_target.get(int(target_id), ())


@dataclass
class TeacherEmbeddings:
    """Frozen pre-trained teacher entity matrix in teacher vocabulary order"""

    matrix: np.ndarray
    dim: int

    def __post_init__(self):
        self.matrix.setflags(write=False)


@dataclass
class FilterIndex:
    """Known true heads per (relation, tail) and tails per (head, relation)"""

    head_filter: Dict[Tuple[int, int], FrozenSet[int]] = field(default_factory=dict)
    tail_filter: Dict[Tuple[int, int], FrozenSet[int]] = field(default_factory=dict)

    def true_heads(self, relation: int, tail: int) -> FrozenSet[int]:
        return self.head_filter.get((relation, tail), frozenset())

    def true_tails(self, head: int, relation: int) -> FrozenSet[int]:
        return self.tail_filter.get((head, relation), frozenset())


def _data_lines(path: str) -> Iterator[Tuple[int, str]]:
    """Yield (line number, stripped line), skipping blanks and '#' comments"""
    with open(path, 'r', encoding='utf-8') as handle:
        for line_number, raw in enumerate(handle, start=1):
            line = raw.rstrip('\r\n')
            if not line.strip() or line.startswith('#'):
                continue
            yield line_number, line


def load_triplets(
    path: str,
    entity_vocab: Optional[Vocabulary] = None,
    relation_vocab: Optional[Vocabulary] = None,
) -> KnowledgeGraph:
    """
    Load a head<TAB>relation<TAB>tail file into a KnowledgeGraph

    Vocabularies are built in first-appearance order unless supplied; a
    supplied frozen vocabulary rejects unknown labels with VocabularyError.
    Duplicate lines are dropped and counted.
    """
    entities = entity_vocab if entity_vocab is not None else Vocabulary()
    relations = relation_vocab if relation_vocab is not None else Vocabulary()

    seen = set()
    rows: List[Tuple[int, int, int]] = []
    duplicates = 0
    for line_number, line in _data_lines(path):
        fields = line.split('\t')
        if len(fields) != 3:
            raise ParseError(f"expected 3 tab-separated fields, found {len(fields)}", path, line_number)
        head_label, relation_label, tail_label = fields
        try:
            row = (entities.add(head_label), relations.add(relation_label), entities.add(tail_label))
        except VocabularyError as e:
            raise VocabularyError(f"{path}:{line_number}: {e}") from None
        if row in seen:
            duplicates += 1
            continue
        seen.add(row)
        rows.append(row)

    if duplicates:
        logger.warning(f"Dropped {duplicates} duplicate triplet line(s) from {path}")

    triplets = np.array(rows, dtype=np.int64).reshape(-1, 3)
    return KnowledgeGraph(entities, relations, triplets, duplicates_dropped=duplicates)


def export_graph(graph: KnowledgeGraph, path: str, triplets: Optional[np.ndarray] = None) -> None:
    """Write triplets (all of the graph's by default) back to a labeled TSV file"""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as handle:
        for head, relation, tail in graph.labeled_triplets(triplets):
            handle.write(f"{head}\t{relation}\t{tail}\n")


def split_dataset(
    graph: KnowledgeGraph,
    ratios: Sequence[float] = (0.6, 0.2, 0.2),
    seed: int = 0,
) -> SplitDataset:
    """
    Shuffle the triplets with a seeded RNG and cut them into train/valid/test

    Valid and test sizes are floor(ratio * |S|); the remainder goes to train.
    """
    if len(ratios) != 3 or any(r < 0 for r in ratios):
        raise ConfigError(f"split ratios must be three non-negative numbers, got {list(ratios)}")
    if abs(math.fsum(ratios) - 1.0) > 1e-9:
        raise ConfigError(f"split ratios must sum to 1, got {list(ratios)} (sum {math.fsum(ratios)})")
    total = len(graph)
    if total < 3:
        raise ConfigError(f"cannot split a graph with {total} triplet(s); at least 3 are needed")

    n_valid = int(math.floor(ratios[1] * total + 1e-9))
    n_test = int(math.floor(ratios[2] * total + 1e-9))
    n_train = total - n_valid - n_test

    order = np.random.default_rng(seed).permutation(total)
    shuffled = graph.triplets[order]
    return SplitDataset(
        train=shuffled[:n_train],
        valid=shuffled[n_train:n_train + n_valid],
        test=shuffled[n_train + n_valid:],
        seed=seed,
        ratios=(float(ratios[0]), float(ratios[1]), float(ratios[2])),
    )


def load_split_directory(
    directory: str,
    entity_vocab: Optional[Vocabulary] = None,
    relation_vocab: Optional[Vocabulary] = None,
) -> Tuple[KnowledgeGraph, SplitDataset]:
    """
    Load pre-split train/valid/test files sharing one vocabulary

    Ids follow first appearance in train, then valid, then test, unless
    vocabularies are supplied. The returned graph holds the union of the
    three parts.
    """
    entities = entity_vocab if entity_vocab is not None else Vocabulary()
    relations = relation_vocab if relation_vocab is not None else Vocabulary()
    parts = []
    for name in SPLIT_FILES:
        path = os.path.join(directory, name)
        if not os.path.exists(path):
            raise LoadError(f"split directory {directory} has no {name}")
        parts.append(load_triplets(path, entities, relations).triplets)

    union = np.concatenate(parts, axis=0)
    unique_rows = {tuple(row) for row in union.tolist()}
    if len(unique_rows) != len(union):
        raise DataError(f"split files in {directory} share {len(union) - len(unique_rows)} triplet(s)")

    graph = KnowledgeGraph(entities.freeze(), relations.freeze(), union)
    splits = SplitDataset(train=parts[0], valid=parts[1], test=parts[2], seed=-1)
    return graph, splits


def load_alignment(path: str, teacher: KnowledgeGraph, target: KnowledgeGraph) -> AlignmentSet:
    """
    Load teacher_label<TAB>target_label pairs

    Pairs naming a label unknown to either vocabulary are skipped and counted.
    An alignment set left empty cannot drive transfer and raises AlignmentError.
    """
    pairs: List[Tuple[int, int]] = []
    seen = set()
    skipped = 0
    for line_number, line in _data_lines(path):
        fields = line.split('\t')
        if len(fields) != 2:
            raise ParseError(f"expected 2 tab-separated fields, found {len(fields)}", path, line_number)
        teacher_id = teacher.entity_vocab.get(fields[0])
        target_id = target.entity_vocab.get(fields[1])
        if teacher_id is None or target_id is None:
            skipped += 1
            continue
        pair = (teacher_id, target_id)
        if pair in seen:
            continue
        seen.add(pair)
        pairs.append(pair)

    if skipped:
        logger.warning(f"Skipped {skipped} alignment pair(s) with unknown labels in {path}")
    if not pairs:
        raise AlignmentError(f"no usable aligned pairs in {path}; transfer is impossible")

    by_target: Dict[int, List[int]] = {}
    for teacher_id, target_id in pairs:
        by_target.setdefault(target_id, []).append(teacher_id)

    return AlignmentSet(
        pairs=np.array(pairs, dtype=np.int64),
        by_target={key: tuple(value) for key, value in by_target.items()},
        skipped=skipped,
    )


def alignment_ratio(alignment: AlignmentSet, graph: KnowledgeGraph) -> float:
    """Fraction of the graph's entities that appear on the target side of the alignment"""
    if graph.n_entities == 0:
        return 0.0
    return len(alignment.target_ids()) / graph.n_entities


def _parse_header(line: str, tag: str, path: str, line_number: int) -> Tuple[int, int]:
    fields = line.split()
    if len(fields) != 3 or fields[0] != tag:
        raise ParseError(f"expected '{tag} n_rows dim' header", path, line_number)
    try:
        return int(fields[1]), int(fields[2])
    except ValueError:
        raise ParseError(f"non-integer values in '{tag}' header", path, line_number) from None


def _parse_vector(text: str, dim: int, path: str, line_number: int) -> np.ndarray:
    values = text.split()
    if len(values) != dim:
        raise ParseError(f"expected {dim} values, found {len(values)}", path, line_number)
    try:
        return np.array([float(v) for v in values], dtype=np.float64)
    except ValueError:
        raise ParseError("non-numeric embedding value", path, line_number) from None


def read_embedding_dump(path: str, section: str = 'ENT') -> Tuple[List[str], np.ndarray]:
    """Read one section ('ENT' or 'REL') of a dump as (labels, matrix) in file order"""
    labels: List[str] = []
    rows: List[np.ndarray] = []
    dim = 0
    expected = 0
    active = False
    for line_number, line in _data_lines(path):
        if line.startswith('ENT ') or line.startswith('REL '):
            tag = line.split()[0]
            if active:
                break
            if tag == section:
                expected, dim = _parse_header(line, tag, path, line_number)
                active = True
            continue
        if not active:
            if not labels and section == 'ENT':
                raise ParseError("embedding dump must start with an 'ENT n_rows dim' header", path, line_number)
            continue
        label, sep, text = line.partition('\t')
        if not sep:
            raise ParseError("expected label<TAB>values", path, line_number)
        vector = _parse_vector(text, dim, path, line_number)
        if not np.all(np.isfinite(vector)):
            raise DataError(f"{path}:{line_number}: non-finite value in row for '{label}'")
        labels.append(label)
        rows.append(vector)

    if not active:
        raise LoadError(f"{path} has no '{section}' section")
    if len(labels) != expected:
        raise LoadError(f"{path}: '{section}' header announces {expected} rows, found {len(labels)}")
    matrix = np.vstack(rows) if rows else np.zeros((0, dim), dtype=np.float64)
    return labels, matrix


def read_dump_vocabulary(path: str) -> Vocabulary:
    """Frozen entity vocabulary in dump order, for teachers known only by their dump"""
    labels, _ = read_embedding_dump(path, 'ENT')
    return Vocabulary(labels, frozen=True)


def load_teacher_embeddings(path: str, teacher: KnowledgeGraph) -> TeacherEmbeddings:
    """Load a dump and reorder its rows into teacher vocabulary id order"""
    labels, matrix = read_embedding_dump(path, 'ENT')
    row_of = {label: index for index, label in enumerate(labels)}

    missing = [label for label in teacher.entity_vocab.labels if label not in row_of]
    if missing:
        raise LoadError(
            f"{path} has no row for entity '{missing[0]}'"
            + (f" (and {len(missing) - 1} more)" if len(missing) > 1 else "")
        )
    extra = len(labels) - teacher.n_entities
    if extra > 0:
        logger.warning(f"Ignoring {extra} dump row(s) in {path} outside the teacher vocabulary")

    order = np.array([row_of[label] for label in teacher.entity_vocab.labels], dtype=np.int64)
    ordered = np.ascontiguousarray(matrix[order]) if len(order) else np.zeros((0, matrix.shape[1]))
    return TeacherEmbeddings(matrix=ordered, dim=int(matrix.shape[1]))


def write_embedding_dump(
    path: str,
    entity_labels: Sequence[str],
    entity_matrix: np.ndarray,
    relation_labels: Optional[Sequence[str]] = None,
    relation_matrix: Optional[np.ndarray] = None,
    digits: int = 17,
) -> None:
    """Write the 'ENT n dim' dump (and optionally a 'REL n dim' section)"""
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    fmt = f".{digits}g"

    def write_section(handle, tag: str, labels: Sequence[str], matrix: np.ndarray) -> None:
        handle.write(f"{tag} {matrix.shape[0]} {matrix.shape[1]}\n")
        for label, row in zip(labels, matrix):
            handle.write(label + '\t' + ' '.join(format(float(v), fmt) for v in row) + '\n')

    with open(path, 'w', encoding='utf-8') as handle:
        write_section(handle, 'ENT', entity_labels, entity_matrix)
        if relation_labels is not None and relation_matrix is not None:
            write_section(handle, 'REL', relation_labels, relation_matrix)


def build_filter_index(splits: SplitDataset) -> FilterIndex:
    """Index every true triplet of every split for filtered ranking"""
    heads: Dict[Tuple[int, int], set] = {}
    tails: Dict[Tuple[int, int], set] = {}
    for head, relation, tail in splits.all_triplets().tolist():
        heads.setdefault((relation, tail), set()).add(head)
        tails.setdefault((head, relation), set()).add(tail)
    return FilterIndex(
        head_filter={key: frozenset(value) for key, value in heads.items()},
        tail_filter={key: frozenset(value) for key, value in tails.items()},
    )


def merge_joint_graph(
    target: KnowledgeGraph,
    target_train: np.ndarray,
    sources: Sequence[Tuple[KnowledgeGraph, AlignmentSet]],
) -> Tuple[KnowledgeGraph, np.ndarray]:
    """
    Merge teacher triplets into the target id space for joint training

    Target entities and relations keep their ids (a prefix of the merged
    vocabularies). An aligned teacher entity takes the id of its first aligned
    target entity; other teacher entities and all teacher relations are
    appended under a 'teacher<i>::' prefix, so relation vocabularies stay
    disjoint. Returns the merged graph and its training triplets
    (target train first, duplicates dropped).
    """
    entities = Vocabulary(target.entity_vocab.labels)
    relations = Vocabulary(target.relation_vocab.labels)
    rows: List[Tuple[int, int, int]] = [tuple(row) for row in target_train.tolist()]
    seen = set(rows)

    for index, (teacher, alignment) in enumerate(sources):
        prefix = f"teacher{index}::"
        to_target: Dict[int, int] = {}
        for teacher_id, target_id in alignment.pairs.tolist():
            to_target.setdefault(teacher_id, target_id)

        def entity_id(teacher_id: int) -> int:
            if teacher_id in to_target:
                return to_target[teacher_id]
            return entities.add(prefix + teacher.entity_vocab.label_of(teacher_id))

        for head, relation, tail in teacher.triplets.tolist():
            row = (
                entity_id(head),
                relations.add(prefix + teacher.relation_vocab.label_of(relation)),
                entity_id(tail),
            )
            if row not in seen:
                seen.add(row)
                rows.append(row)

    merged_train = np.array(rows, dtype=np.int64).reshape(-1, 3)
    merged = KnowledgeGraph(entities.freeze(), relations.freeze(), merged_train)
    logger.info(
        f"Joint graph: {merged.n_entities} entities ({target.n_entities} target), "
        f"{merged.n_relations} relations, {len(merged_train)} training triplets"
    )
    return merged, merged_train
