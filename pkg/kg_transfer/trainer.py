"""
Transfer training loop

Each outer step runs, per teacher, T_d discriminator updates and T_g
generator updates, then one embedding update on

    L = L_e + alpha_t * sum_teachers f_d + beta_t * sum_teachers f_n

with alpha_t, beta_t following a cyclical cosine schedule and both learning
rates warmed up linearly. Validation runs every ``eval_every`` steps and the
best snapshot by selection score is returned.

Random streams are split per purpose from the seed, so the embedding update
of a run with zero constraint weights is bit-identical to plain training.
"""

import enum
import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .adversarial import (
    Discriminator,
    Generator,
    build_discriminator,
    build_generator,
    consistency_weights,
    discriminator_loss,
    generator_loss,
    sample_noise_batch,
)
from .embedding_train import EmbeddingGrads, embedding_loss, init_embeddings, sample_negative_batch
from .evaluation import RankingMetrics, TiePolicy, evaluate
from .exceptions import AlignmentError, ConfigError, ShapeError, TrainingError, UsageError
from .graph_data import (
    AlignmentSet,
    FilterIndex,
    KnowledgeGraph,
    SplitDataset,
    TeacherEmbeddings,
    build_filter_index,
    merge_joint_graph,
)
from .nn_core import AdamState, SparseRowAdam, adam_step
from .scoring import EmbeddingTable, ModelKind, project_constraints
from .transfer import (
    DegenerateInputCounter,
    TransitionNetwork,
    build_transition_network,
    distance_constraint,
    triplet_constraint,
)

logger = logging.getLogger(__name__)

# Stream order is part of the determinism contract
STREAM_NAMES = ('init', 'negatives', 'shuffle', 'alignment', 'noise', 'teachers')


class TrainingMode(str, enum.Enum):
    ATRANSN = 'atransn'
    CTRANSE = 'ctranse'
    PLAIN = 'plain'
    JOINT = 'joint'


class FakePool(str, enum.Enum):
    ALIGNED = 'aligned'
    ALL = 'all'


@dataclass(frozen=True)
class TrainingConfig:
    """
    Hyperparameters of one run; enum fields accept their string values

    The default ``lr_a`` (2e-4) moves the discriminator slowly: a
    discriminator separating duplicated pairs from random ones needs about
    1e-2 to pass 90% accuracy within 200 steps. Raise it for short runs.
    """

    gamma: float = 8.0
    epsilon: float = 2.0
    alpha: float = 1.0
    beta: float = 0.1
    lr_e: float = 1e-3
    lr_a: float = 2e-4
    k: int = 128
    n_l: int = 128
    n_a: int = 128
    t_g: int = 5
    t_d: int = 5
    t_l: Optional[int] = None
    warmup_fraction: float = 0.01
    anneal_cycles: int = 4
    lambda_g: float = 1.0
    seed: int = 0
    mode: TrainingMode = TrainingMode.ATRANSN
    kind: ModelKind = ModelKind.TRANSE
    dim: int = 200
    epochs_max: int = 300
    eval_every: Optional[int] = None
    norm_p: Optional[int] = None
    leaky_slope: float = 0.01
    transition_activation: bool = True
    unit_weights: bool = False
    transfer_cap: Optional[int] = None
    full_alignment: bool = False
    fake_pool: FakePool = FakePool.ALIGNED
    tie_policy: TiePolicy = TiePolicy.OPTIMISTIC
    split_ratios: Tuple[float, float, float] = (0.6, 0.2, 0.2)
    teacher_dim: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, 'mode', TrainingMode(self.mode))
        object.__setattr__(self, 'kind', ModelKind(self.kind))
        object.__setattr__(self, 'fake_pool', FakePool(self.fake_pool))
        object.__setattr__(self, 'tie_policy', TiePolicy(self.tie_policy))
        object.__setattr__(self, 'split_ratios', tuple(float(r) for r in self.split_ratios))

        if self.lr_e <= 0 or self.lr_a <= 0:
            raise ConfigError(f"learning rates must be positive, got lr_e={self.lr_e}, lr_a={self.lr_a}")
        for name in ('k', 'n_l', 'n_a', 'dim', 'epochs_max', 'anneal_cycles'):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be at least 1, got {getattr(self, name)}")
        for name in ('t_l', 'eval_every', 'transfer_cap', 'teacher_dim'):
            value = getattr(self, name)
            if value is not None and value < 1:
                raise ConfigError(f"{name} must be at least 1 when set, got {value}")
        if self.t_g < 0 or self.t_d < 0:
            raise ConfigError(f"inner step counts must be non-negative, got t_g={self.t_g}, t_d={self.t_d}")
        if not 0 <= self.warmup_fraction < 1:
            raise ConfigError(f"warmup_fraction must lie in [0, 1), got {self.warmup_fraction}")
        if self.alpha < 0 or self.beta < 0:
            raise ConfigError(f"constraint weights must be non-negative, got alpha={self.alpha}, beta={self.beta}")
        if self.norm_p not in (None, 1, 2):
            raise ConfigError(f"norm_p must be 1 or 2, got {self.norm_p}")
        if self.kind.is_complex and self.dim % 2:
            raise ConfigError(f"{self.kind.value} needs an even dim, got {self.dim}")

    def replace(self, **changes) -> 'TrainingConfig':
        return replace(self, **changes)

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        for key, value in data.items():
            if isinstance(value, enum.Enum):
                data[key] = value.value
        data['split_ratios'] = list(self.split_ratios)
        return data


@dataclass
class TeacherContext:
    """One teacher's frozen inputs and the modules trained against it"""

    name: str
    alignment: AlignmentSet
    embeddings: Optional[TeacherEmbeddings] = None
    graph: Optional[KnowledgeGraph] = None
    W: Optional[TransitionNetwork] = None
    G: Optional[Generator] = None
    D: Optional[Discriminator] = None
    g_state: Optional[AdamState] = None
    d_state: Optional[AdamState] = None
    w_state: Optional[AdamState] = None

    def build_modules(self, config: TrainingConfig, rng: np.random.Generator) -> None:
        """Create W, G, D and their optimizer states; W first, then G, then D"""
        if self.embeddings is None:
            raise UsageError(f"teacher '{self.name}' has no embeddings to transfer from")
        if config.teacher_dim is not None and config.teacher_dim != self.embeddings.dim:
            raise ConfigError(
                f"teacher '{self.name}' embeddings have dim {self.embeddings.dim}, config says {config.teacher_dim}"
            )
        self.W = build_transition_network(
            self.embeddings.dim, config.dim, rng,
            activation=config.transition_activation, slope=config.leaky_slope,
        )
        self.G = build_generator(config.dim, rng, slope=config.leaky_slope)
        self.D = build_discriminator(config.dim, rng, slope=config.leaky_slope)
        self.g_state = AdamState.for_params(self.G.net.parameters())
        self.d_state = AdamState.for_params(self.discriminator_params())
        self.w_state = AdamState.for_params(self.W.net.parameters())

    def discriminator_params(self) -> Dict[str, np.ndarray]:
        """D and W parameters, as updated together by the discriminator phase"""
        params = {f"D.{name}": value for name, value in self.D.net.parameters().items()}
        params.update({f"W.{name}": value for name, value in self.W.net.parameters().items()})
        return params


@dataclass
class TargetData:
    graph: KnowledgeGraph
    splits: SplitDataset
    filter_index: Optional[FilterIndex] = None

    def __post_init__(self):
        if self.filter_index is None:
            self.filter_index = build_filter_index(self.splits)


@dataclass
class CheckpointRecord:
    step: int
    metrics: Optional[RankingMetrics]
    selection_score: float
    snapshot: Optional[EmbeddingTable] = None


@dataclass
class TrainingResult:
    table: EmbeddingTable
    log: List[Dict[str, Any]]
    best: CheckpointRecord
    history: List[CheckpointRecord] = field(default_factory=list)
    total_steps: int = 0


def anneal_weight(step: int, total_steps: int, w_max: float, cycles: int = 4) -> float:
    """Cyclical cosine ramp from 0 to w_max within each of ``cycles`` equal cycles"""
    if total_steps <= 0 or w_max == 0:
        return 0.0
    cycle_length = total_steps / cycles
    tau = math.fmod(step, cycle_length) / cycle_length
    return w_max * (1.0 - math.cos(math.pi * tau)) / 2.0


def warmup_lr(step: int, total_steps: int, base_lr: float, fraction: float = 0.01) -> float:
    """Linear ramp 0 -> base_lr over the first ceil(fraction * total_steps) steps"""
    warmup_steps = math.ceil(fraction * total_steps)
    if warmup_steps <= 0 or step >= warmup_steps:
        return base_lr
    return base_lr * max(step, 0) / warmup_steps


def selection_score(metrics: RankingMetrics) -> float:
    """100 / MR + MRR + Hits@3 + Hits@10"""
    return 100.0 / metrics.mr + metrics.mrr + metrics.hits[3] + metrics.hits[10]


def _scaled_sum(target: Dict[str, np.ndarray], grads: Dict[str, np.ndarray], scale: float) -> None:
    for name, value in grads.items():
        if name in target:
            target[name] = target[name] + scale * value
        else:
            target[name] = scale * value


class TransferTrainer:
    """
    Owns every mutable piece of one training run

    The three phases are public so callers can drive and inspect single
    steps; ``train()`` runs the full schedule.
    """

    def __init__(
        self,
        config: TrainingConfig,
        target: TargetData,
        teachers: Sequence[TeacherContext] = (),
        clock: Callable[[], float] = time.perf_counter,
        threads: int = 1,
    ):
        self.config = config
        self.target = target
        self.clock = clock
        self.threads = max(1, int(threads))
        self.mode = config.mode
        self.teachers: List[TeacherContext] = list(teachers)

        if self.mode in (TrainingMode.ATRANSN, TrainingMode.CTRANSE) and not self.teachers:
            logger.info(f"No teachers given; {self.mode.value} run degenerates to plain training")
            self.mode = TrainingMode.PLAIN
        if self.mode is TrainingMode.ATRANSN:
            for teacher in self.teachers:
                if len(teacher.alignment) == 0:
                    raise AlignmentError(f"teacher '{teacher.name}' has an empty alignment set")

        streams = np.random.SeedSequence(config.seed).spawn(len(STREAM_NAMES))
        self.rngs = {name: np.random.default_rng(s) for name, s in zip(STREAM_NAMES, streams)}

        self.train_triplets = target.splits.train
        self.n_target_entities = target.graph.n_entities
        self.n_target_relations = target.graph.n_relations
        n_entities, n_relations = self.n_target_entities, self.n_target_relations
        if self.mode is TrainingMode.JOINT:
            sources = []
            for teacher in self.teachers:
                if teacher.graph is None:
                    raise UsageError(f"joint training needs the triplets of teacher '{teacher.name}'")
                sources.append((teacher.graph, teacher.alignment))
            if not sources:
                raise UsageError("joint training needs at least one teacher triplet file")
            merged, self.train_triplets = merge_joint_graph(target.graph, target.splits.train, sources)
            n_entities, n_relations = merged.n_entities, merged.n_relations

        if len(self.train_triplets) == 0:
            raise UsageError("training split is empty")

        self.table = init_embeddings(
            config.kind, n_entities, n_relations, config.dim,
            config.gamma, config.epsilon, self.rngs['init'], config.norm_p,
        )
        project_constraints(self.table)
        self.entity_optimizer = SparseRowAdam(self.table.entities.shape, 'entities')
        self.relation_optimizer = SparseRowAdam(self.table.relations.shape, 'relations')

        if self.uses_constraints:
            teacher_streams = [np.random.default_rng(s) for s in streams[-1].spawn(len(self.teachers))]
            for teacher, rng in zip(self.teachers, teacher_streams):
                if teacher.W is None:
                    teacher.build_modules(config, rng)
                if teacher.W.n != config.dim:
                    raise ShapeError(f"teacher '{teacher.name}' projects to {teacher.W.n}, target dim is {config.dim}")

        self.steps_per_epoch = math.ceil(len(self.train_triplets) / config.n_l)
        self.total_steps = config.t_l if config.t_l is not None else config.epochs_max * self.steps_per_epoch
        self.eval_every = config.eval_every if config.eval_every is not None else self.steps_per_epoch
        self._order = np.arange(len(self.train_triplets))
        self.step_count = 0
        self._started = None
        self.degenerate_inputs = DegenerateInputCounter()

    @property
    def uses_constraints(self) -> bool:
        return self.mode in (TrainingMode.ATRANSN, TrainingMode.CTRANSE)

    @property
    def adversarial(self) -> bool:
        return self.mode is TrainingMode.ATRANSN

    def target_table(self) -> EmbeddingTable:
        """Current embeddings restricted to the target vocabulary"""
        if self.mode is not TrainingMode.JOINT:
            return self.table
        return EmbeddingTable(
            self.table.entities[:self.n_target_entities],
            self.table.relations[:self.n_target_relations],
            self.table.kind, self.table.dim, self.table.norm_p,
        )

    def _sample_pairs(self, alignment: AlignmentSet) -> np.ndarray:
        rng = self.rngs['alignment']
        count = len(alignment)
        index = rng.choice(count, size=self.config.n_a, replace=count < self.config.n_a)
        return alignment.pairs[index]

    def discriminator_phase(self, teacher: TeacherContext, lr: float) -> float:
        """T_d updates of D and W on real aligned pairs against generated fakes"""
        losses = []
        for _ in range(self.config.t_d):
            pairs = self._sample_pairs(teacher.alignment)
            teacher_vectors = teacher.embeddings.matrix[pairs[:, 0]]
            real_targets = self.table.entities[pairs[:, 1]]
            if self.config.fake_pool is FakePool.ALIGNED:
                conditions = real_targets
            else:
                conditions = self.table.entities[self.rngs['alignment'].integers(0, self.n_target_entities, len(pairs))]
            noise = sample_noise_batch(len(pairs), self.config.dim, self.rngs['noise'])
            fakes = teacher.G.net(np.concatenate([conditions, noise], axis=1))
            result = discriminator_loss(teacher.D, teacher.W, teacher_vectors, real_targets, conditions, fakes)
            grads = {f"D.{name}": value for name, value in result.grads.items()}
            grads.update({f"W.{name}": value for name, value in result.w_grads.items()})
            adam_step(teacher.discriminator_params(), grads, teacher.d_state, lr)
            losses.append(result.loss)
        return float(np.mean(losses)) if losses else 0.0

    def generator_phase(self, teacher: TeacherContext, lr: float) -> float:
        """T_g updates of G against the current D"""
        losses = []
        for _ in range(self.config.t_g):
            pairs = self._sample_pairs(teacher.alignment)
            if self.config.fake_pool is FakePool.ALIGNED:
                conditions = self.table.entities[pairs[:, 1]]
            else:
                conditions = self.table.entities[self.rngs['alignment'].integers(0, self.n_target_entities, len(pairs))]
            noise = sample_noise_batch(len(pairs), self.config.dim, self.rngs['noise'])
            result = generator_loss(teacher.G, teacher.D, conditions, noise, self.config.lambda_g)
            adam_step(teacher.G.net.parameters(), result.grads, teacher.g_state, lr)
            losses.append(result.loss)
        return float(np.mean(losses)) if losses else 0.0

    def _weights(self, teacher: TeacherContext, teacher_vectors: np.ndarray, target_vectors: np.ndarray) -> np.ndarray:
        if not self.adversarial or self.config.unit_weights:
            return np.ones(len(target_vectors))
        return consistency_weights(teacher.D, teacher.W, teacher_vectors, target_vectors)

    def embedding_phase(self, batch: np.ndarray, alpha_t: float, beta_t: float, lr: float) -> Tuple[float, Optional[float]]:
        """
        One update of the embeddings (and each teacher's W) on the combined loss

        Returns:
            Tuple of (combined loss, mean consistency weight or None)
        """
        config = self.config
        negatives = sample_negative_batch(batch, config.k, self.table.n_entities, self.rngs['negatives'])
        base = embedding_loss(batch, negatives, self.table, config.gamma)
        total = base.loss
        grads = base.grads
        w_updates: List[Tuple[TeacherContext, Dict[str, np.ndarray]]] = []
        weight_means: List[float] = []

        if self.uses_constraints:
            for teacher in self.teachers:
                w_grads: Dict[str, np.ndarray] = {}
                matrix = teacher.embeddings.matrix
                if alpha_t > 0:
                    pairs = teacher.alignment.pairs if config.full_alignment else self._sample_pairs(teacher.alignment)
                    teacher_vectors = matrix[pairs[:, 0]]
                    target_vectors = self.table.entities[pairs[:, 1]]
                    weights = self._weights(teacher, teacher_vectors, target_vectors)
                    weight_means.append(float(np.mean(weights)))
                    result = distance_constraint(teacher_vectors, target_vectors, teacher.W, weights)
                    self.degenerate_inputs.add(result.n_degenerate)
                    if np.any(weights):
                        total += alpha_t * result.loss
                        grads.add_entities(pairs[:, 1], result.target_grads, scale=alpha_t)
                        _scaled_sum(w_grads, result.w_grads, alpha_t)
                if beta_t > 0:
                    weight_fn = None
                    if self.adversarial and not config.unit_weights:
                        def weight_fn(teacher_ids, target_ids, teacher=teacher, matrix=matrix):
                            return consistency_weights(teacher.D, teacher.W, matrix[teacher_ids], self.table.entities[target_ids])
                    result = triplet_constraint(
                        batch, teacher.alignment, self.table, matrix, teacher.W, config.gamma,
                        weight_fn, config.transfer_cap, self.rngs['alignment'],
                    )
                    total += beta_t * result.loss
                    grads.merge(result.grads, scale=beta_t)
                    _scaled_sum(w_grads, result.w_grads, beta_t)
                if w_grads:
                    w_updates.append((teacher, w_grads))

        if not math.isfinite(total):
            raise TrainingError(f"non-finite combined loss {total} (embedding loss {base.loss})")

        for teacher, w_grads in w_updates:
            adam_step(teacher.W.net.parameters(), w_grads, teacher.w_state, lr)
        self._apply(grads, lr)
        return total, (float(np.mean(weight_means)) if weight_means else None)

    def _apply(self, grads: EmbeddingGrads, lr: float) -> None:
        entity_rows, entity_grads = grads.coalesce_entities(self.table.entities.shape[1])
        relation_rows, relation_grads = grads.coalesce_relations(self.table.relations.shape[1])
        self.entity_optimizer.step(self.table.entities, entity_rows, entity_grads, lr)
        self.relation_optimizer.step(self.table.relations, relation_rows, relation_grads, lr)
        project_constraints(self.table, entity_rows=entity_rows, relation_rows=relation_rows)

    def next_batch(self, step: int) -> np.ndarray:
        """Consecutive slices of a per-epoch shuffle of the training triplets"""
        position = (step - 1) % self.steps_per_epoch
        if position == 0:
            self._order = self.rngs['shuffle'].permutation(len(self.train_triplets))
        start = position * self.config.n_l
        return self.train_triplets[self._order[start:start + self.config.n_l]]

    def outer_step(self) -> Dict[str, Any]:
        """Run one outer step and return its log record"""
        if self._started is None:
            self._started = self.clock()
        config = self.config
        step = self.step_count + 1
        epoch = (step - 1) // self.steps_per_epoch
        batch = self.next_batch(step)
        lr_e = warmup_lr(step, self.total_steps, config.lr_e, config.warmup_fraction)
        lr_a = warmup_lr(step, self.total_steps, config.lr_a, config.warmup_fraction)
        alpha_t = anneal_weight(step - 1, self.total_steps, config.alpha, config.anneal_cycles)
        beta_t = anneal_weight(step - 1, self.total_steps, config.beta, config.anneal_cycles)

        loss_d = loss_g = None
        try:
            if self.adversarial:
                d_losses = [self.discriminator_phase(teacher, lr_a) for teacher in self.teachers]
                g_losses = [self.generator_phase(teacher, lr_a) for teacher in self.teachers]
                if config.t_d:
                    loss_d = float(np.mean(d_losses))
                if config.t_g:
                    loss_g = float(np.mean(g_losses))
            loss_e, mean_weight = self.embedding_phase(batch, alpha_t, beta_t, lr_e)
        except TrainingError as e:
            raise TrainingError(
                f"step {step} (epoch {epoch}, alpha_t={alpha_t:.6g}, beta_t={beta_t:.6g}, lr_t={lr_e:.6g}): {e}"
            ) from e
        for name, value in (('discriminator', loss_d), ('generator', loss_g)):
            if value is not None and not math.isfinite(value):
                raise TrainingError(f"step {step} (epoch {epoch}): non-finite {name} loss {value}")

        self.step_count = step
        return {
            'step': step,
            'epoch': epoch,
            'loss_e': loss_e,
            'loss_d': loss_d,
            'loss_g': loss_g,
            'alpha_t': alpha_t,
            'beta_t': beta_t,
            'lr_t': lr_e,
            'mean_consistency_weight': mean_weight,
            'wall_ms': round((self.clock() - self._started) * 1000.0, 3),
        }

    def validate(self) -> CheckpointRecord:
        """Score the current embeddings on the validation split"""
        valid = self.target.splits.valid
        table = self.target_table()
        if len(valid) == 0:
            return CheckpointRecord(self.step_count, None, float('-inf'))
        metrics = evaluate(valid, table, self.target.filter_index, None, self.config.tie_policy, self.threads)
        return CheckpointRecord(self.step_count, metrics, selection_score(metrics))

    def train(self) -> TrainingResult:
        config = self.config
        logger.info(
            f"Training {config.kind.value} in {self.mode.value} mode: {self.total_steps} steps "
            f"({self.steps_per_epoch} per epoch), {len(self.teachers)} teacher(s), seed {config.seed}"
        )
        log: List[Dict[str, Any]] = []
        history: List[CheckpointRecord] = []
        best: Optional[CheckpointRecord] = None

        while self.step_count < self.total_steps:
            record = self.outer_step()
            log.append(record)
            step = record['step']
            if step % self.eval_every == 0 or step == self.total_steps:
                checkpoint = self.validate()
                history.append(checkpoint)
                if best is None or checkpoint.metrics is None or checkpoint.selection_score > best.selection_score:
                    checkpoint.snapshot = self.target_table().copy()
                    best = checkpoint
                    if checkpoint.metrics is not None:
                        logger.info(
                            f"Step {step}: new best selection score {checkpoint.selection_score:.6f} "
                            f"(MRR {checkpoint.metrics.mrr:.4f}, MR {checkpoint.metrics.mr:.2f})"
                        )

        if best is None:
            best = CheckpointRecord(self.step_count, None, float('-inf'), self.target_table().copy())
        return TrainingResult(best.snapshot, log, best, history, self.total_steps)


def train(
    config: TrainingConfig,
    target: TargetData,
    teachers: Sequence[TeacherContext] = (),
    clock: Callable[[], float] = time.perf_counter,
    threads: int = 1,
) -> TrainingResult:
    """Run a full training schedule and return the best snapshot with its log"""
    return TransferTrainer(config, target, teachers, clock, threads).train()
