"""
Experiment service for knowledge graph transfer runs

Every management command goes through ExperimentService, which:
- loads configs, target data and teachers from files
- runs training and evaluation with the threads and clock it was given
- writes checkpoints, logs, metrics and dumps
- keeps a TrainingRun record and a manifest.json for every run
"""

import hashlib
import json
import logging
import os
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
from django.conf import settings
from django.db import DatabaseError

from . import __version__
from .evaluation import TiePolicy, aggregate_ranks, rank_all
from .exceptions import ConfigError, KGTransferError, LoadError, UsageError
from .graph_data import (
    KnowledgeGraph,
    Vocabulary,
    alignment_ratio,
    build_filter_index,
    load_alignment,
    load_split_directory,
    load_teacher_embeddings,
    load_triplets,
    read_dump_vocabulary,
    split_dataset,
    write_embedding_dump,
)
from .models import TrainingRun
from .reporting import build_report
from .scoring import EmbeddingTable, ModelKind
from .serializers import RunManifestSerializer, parse_training_config
from .synth import write_benchmark
from .trainer import TargetData, TeacherContext, TrainingConfig, TrainingMode, TrainingResult, train

logger = logging.getLogger(__name__)

CHECKPOINT_META = 'checkpoint.json'


@dataclass
class Checkpoint:
    table: EmbeddingTable
    entity_vocab: Vocabulary
    relation_vocab: Vocabulary
    meta: Dict[str, Any] = field(default_factory=dict)


def _dump_json(path: str, payload: Any) -> None:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as handle:
        json.dump(payload, handle, indent=2, sort_keys=True, allow_nan=False)
        handle.write('\n')


def _finite_or_none(value: Optional[float]) -> Optional[float]:
    if value is None or not np.isfinite(value):
        return None
    return float(value)


def file_digest(path: str) -> str:
    """sha256 of a file, or of a directory's files in sorted relative order"""
    digest = hashlib.sha256()
    if os.path.isdir(path):
        for root, dirs, files in os.walk(path):
            dirs.sort()
            for name in sorted(files):
                full = os.path.join(root, name)
                digest.update(os.path.relpath(full, path).encode('utf-8'))
                digest.update(file_digest(full).encode('ascii'))
        return digest.hexdigest()
    with open(path, 'rb') as handle:
        for block in iter(lambda: handle.read(1 << 20), b''):
            digest.update(block)
    return digest.hexdigest()


def write_checkpoint(
    directory: str,
    table: EmbeddingTable,
    entity_vocab: Vocabulary,
    relation_vocab: Vocabulary,
    meta: Dict[str, Any],
) -> None:
    """entities.npy, relations.npy and checkpoint.json in ``directory``"""
    if table.n_entities != len(entity_vocab) or table.n_relations != len(relation_vocab):
        raise UsageError("checkpoint table does not match its vocabularies")
    os.makedirs(directory, exist_ok=True)
    np.save(os.path.join(directory, 'entities.npy'), table.entities)
    np.save(os.path.join(directory, 'relations.npy'), table.relations)
    payload = dict(meta)
    payload.update({
        'kind': table.kind.value,
        'dim': table.dim,
        'norm_p': table.norm_p,
        'entities': list(entity_vocab.labels),
        'relations': list(relation_vocab.labels),
    })
    _dump_json(os.path.join(directory, CHECKPOINT_META), payload)


def load_checkpoint(directory: str) -> Checkpoint:
    meta_path = os.path.join(directory, CHECKPOINT_META)
    if not os.path.exists(meta_path):
        raise LoadError(f"{directory} is not a checkpoint (no {CHECKPOINT_META})")
    with open(meta_path, 'r', encoding='utf-8') as handle:
        meta = json.load(handle)
    entities = np.load(os.path.join(directory, 'entities.npy'))
    relations = np.load(os.path.join(directory, 'relations.npy'))
    entity_vocab = Vocabulary(meta.pop('entities'), frozen=True)
    relation_vocab = Vocabulary(meta.pop('relations'), frozen=True)
    if entities.shape[0] != len(entity_vocab) or relations.shape[0] != len(relation_vocab):
        raise LoadError(f"{directory}: embedding rows do not match the stored vocabularies")
    table = EmbeddingTable(entities, relations, ModelKind(meta['kind']), int(meta['dim']), meta.get('norm_p'))
    return Checkpoint(table, entity_vocab, relation_vocab, meta)


class ExperimentService:
    """Loads inputs, runs training and evaluation, and records artifacts"""

    def __init__(self, threads: Optional[int] = None, clock: Optional[Callable[[], float]] = None):
        self.threads = threads or getattr(settings, 'ATRANSN_THREADS', 1)
        self.runs_dir = str(getattr(settings, 'KG_TRANSFER_RUNS_DIR', 'runs'))
        self.digits = getattr(settings, 'KG_TRANSFER_FLOAT_DIGITS', 17)
        self.clock = clock or time.perf_counter

    def default_out_dir(self, command: str, seed: Optional[int] = None) -> str:
        name = command if seed is None else f"{command}-seed{seed}"
        return os.path.join(self.runs_dir, name)

    # Inputs

    def load_config(self, path: Optional[str], overrides: Optional[Dict[str, Any]] = None) -> TrainingConfig:
        payload: Any = {}
        if path:
            try:
                with open(path, 'r', encoding='utf-8') as handle:
                    payload = json.load(handle)
            except json.JSONDecodeError as e:
                raise ConfigError(f"{path}: not valid JSON ({e})") from None
        return parse_training_config(payload, overrides)

    def load_target(
        self,
        data_path: str,
        config: TrainingConfig,
        entity_vocab: Optional[Vocabulary] = None,
        relation_vocab: Optional[Vocabulary] = None,
        split_seed: Optional[int] = None,
    ) -> TargetData:
        """A split directory, or one triplet file split with the config's ratios"""
        if os.path.isdir(data_path):
            graph, splits = load_split_directory(data_path, entity_vocab, relation_vocab)
        else:
            graph = load_triplets(data_path, entity_vocab, relation_vocab)
            seed = config.seed if split_seed is None else split_seed
            splits = split_dataset(graph, config.split_ratios, seed)
        logger.info(
            f"Target {data_path}: {graph.n_entities} entities, {graph.n_relations} relations, "
            f"splits {splits.sizes}"
        )
        return TargetData(graph, splits)

    def load_teachers(
        self,
        config: TrainingConfig,
        target: KnowledgeGraph,
        embedding_paths: Sequence[str] = (),
        alignment_paths: Sequence[str] = (),
        triplet_paths: Sequence[str] = (),
    ) -> List[TeacherContext]:
        """
        Teachers paired by order of the repeated flags

        Transfer modes need one alignment per embedding dump; joint mode needs
        one alignment per teacher triplet file.
        """
        mode = config.mode
        if mode is TrainingMode.PLAIN:
            if embedding_paths or alignment_paths or triplet_paths:
                logger.info("Plain mode ignores teacher inputs")
            return []

        if mode is TrainingMode.JOINT:
            if not triplet_paths:
                raise UsageError("--mode joint needs at least one --teacher-triplets file")
            if len(alignment_paths) != len(triplet_paths):
                raise UsageError(
                    f"{len(triplet_paths)} teacher triplet file(s) but {len(alignment_paths)} alignment file(s)"
                )
        elif len(alignment_paths) != len(embedding_paths):
            raise UsageError(
                f"{len(embedding_paths)} teacher embedding file(s) but {len(alignment_paths)} alignment file(s)"
            )
        elif triplet_paths and len(triplet_paths) != len(embedding_paths):
            raise UsageError("--teacher-triplets must be given once per teacher or not at all")

        teachers = []
        for index, alignment_path in enumerate(alignment_paths):
            name = f"teacher{index}"
            embeddings = None
            if triplet_paths:
                graph = load_triplets(triplet_paths[index])
            else:
                graph = KnowledgeGraph(
                    read_dump_vocabulary(embedding_paths[index]),
                    Vocabulary(frozen=True),
                    np.zeros((0, 3), dtype=np.int64),
                )
            if mode is not TrainingMode.JOINT:
                embeddings = load_teacher_embeddings(embedding_paths[index], graph)
            alignment = load_alignment(alignment_path, graph, target)
            logger.info(
                f"{name}: {len(alignment)} aligned pair(s), "
                f"alignment ratio {alignment_ratio(alignment, target):.4f}"
            )
            teachers.append(TeacherContext(name=name, alignment=alignment, embeddings=embeddings, graph=graph))
        return teachers

    # Run records

    def _start_run(self, command: str, arguments: Dict[str, Any], inputs: Sequence[str], out_dir: str,
                   config: Optional[TrainingConfig] = None, label: str = '') -> TrainingRun:
        run = TrainingRun(
            command=command,
            status='running',
            seed=config.seed if config else None,
            mode=config.mode.value if config else '',
            label=label or '',
            config=config.to_dict() if config else {},
            arguments=arguments,
            input_digests={path: file_digest(path) for path in inputs if path},
            out_dir=out_dir,
            tool_version=__version__,
        )
        self._save(run)
        return run

    def _save(self, run: TrainingRun) -> None:
        try:
            run.save()
        except DatabaseError as e:
            logger.warning(f"Could not record {run.command} run in the database: {e}")

    def _fail_run(self, run: TrainingRun, error: Exception) -> None:
        run.status = 'failed'
        run.error_message = str(error)
        self._save(run)
        logger.error(f"{run.command} failed: {error}")

    def _complete_run(self, run: TrainingRun, manifest_path: str) -> Dict[str, Any]:
        run.status = 'completed'
        manifest = RunManifestSerializer(run).data
        _dump_json(manifest_path, dict(manifest))
        self._save(run)
        return dict(manifest)

    # Training

    def run_training(
        self,
        command: str,
        config: TrainingConfig,
        target: TargetData,
        teachers: Sequence[TeacherContext],
        out_dir: str,
        arguments: Dict[str, Any],
        inputs: Sequence[str],
        label: str = '',
        ratio: Optional[float] = None,
    ) -> Dict[str, Any]:
        """Train, then write checkpoint/, train_log.jsonl, metrics.json and manifest.json"""
        run = self._start_run(command, arguments, inputs, out_dir, config, label)
        try:
            result = train(config, target, teachers, clock=self.clock, threads=self.threads)
            metrics = self._write_training_artifacts(out_dir, config, target, result, label, ratio)
        except KGTransferError as e:
            self._fail_run(run, e)
            raise

        run.artifacts = {'checkpoint': 'checkpoint', 'log': 'train_log.jsonl'}
        if metrics is not None:
            run.artifacts['metrics'] = 'metrics.json'
        run.best_metrics = metrics
        run.selection_score = _finite_or_none(result.best.selection_score)
        self._complete_run(run, os.path.join(out_dir, 'manifest.json'))
        logger.info(f"{command} artifacts written to {out_dir}")
        return {'out_dir': out_dir, 'metrics': metrics, 'selection_score': run.selection_score, 'run': run}

    def _write_training_artifacts(
        self,
        out_dir: str,
        config: TrainingConfig,
        target: TargetData,
        result: TrainingResult,
        label: str,
        ratio: Optional[float],
    ) -> Optional[Dict[str, Any]]:
        os.makedirs(out_dir, exist_ok=True)
        best = result.best
        metrics = best.metrics.to_dict() if best.metrics is not None else None
        write_checkpoint(
            os.path.join(out_dir, 'checkpoint'),
            result.table,
            target.graph.entity_vocab,
            target.graph.relation_vocab,
            {
                'step': best.step,
                'selection_score': _finite_or_none(best.selection_score),
                'metrics': metrics,
                'mode': config.mode.value,
                'seed': config.seed,
                'split_seed': target.splits.seed,
                'split_ratios': list(target.splits.ratios),
                'tie_policy': config.tie_policy.value,
                'label': label,
                'ratio': ratio,
            },
        )
        with open(os.path.join(out_dir, 'train_log.jsonl'), 'w', encoding='utf-8') as handle:
            for record in result.log:
                handle.write(json.dumps(record, sort_keys=True) + '\n')
        report = dict(metrics) if metrics is not None else {}
        report.update({'label': label, 'mode': config.mode.value, 'ratio': ratio, 'split': 'valid'})
        if metrics is not None:
            _dump_json(os.path.join(out_dir, 'metrics.json'), report)
        return metrics

    # Evaluation and export

    def evaluate_checkpoint(
        self,
        checkpoint_dir: str,
        data_path: str,
        split: str = 'test',
        out_dir: Optional[str] = None,
        write_ranks: bool = False,
        tie_policy: Optional[str] = None,
        label: Optional[str] = None,
        ratio: Optional[float] = None,
        arguments: Optional[Dict[str, Any]] = None,
    ) -> Dict[str, Any]:
        """Filtered metrics of a checkpoint on one split of a dataset"""
        if split not in ('valid', 'test'):
            raise UsageError(f"unknown split '{split}'")
        checkpoint = load_checkpoint(checkpoint_dir)
        meta = checkpoint.meta
        config = TrainingConfig(split_ratios=tuple(meta.get('split_ratios') or (0.6, 0.2, 0.2)),
                                kind=checkpoint.table.kind, dim=checkpoint.table.dim)
        out_dir = out_dir or self.default_out_dir('eval')
        run = self._start_run('eval', arguments or {}, [checkpoint_dir, data_path], out_dir, label=label or '')
        try:
            target = self.load_target(
                data_path, config, checkpoint.entity_vocab, checkpoint.relation_vocab,
                split_seed=meta.get('split_seed', 0),
            )
            rows = target.splits.valid if split == 'valid' else target.splits.test
            policy = TiePolicy(tie_policy or meta.get('tie_policy', TiePolicy.OPTIMISTIC.value))
            ranks = rank_all(rows, checkpoint.table, target.filter_index, policy, self.threads)
            metrics = aggregate_ranks(ranks).to_dict()
        except KGTransferError as e:
            self._fail_run(run, e)
            raise

        report = dict(metrics)
        report.update({
            'label': label if label is not None else meta.get('label', ''),
            'mode': meta.get('mode'),
            'ratio': ratio if ratio is not None else meta.get('ratio'),
            'split': split,
        })
        _dump_json(os.path.join(out_dir, 'metrics.json'), report)
        run.artifacts = {'metrics': 'metrics.json'}
        if write_ranks:
            self._write_ranks(os.path.join(out_dir, 'ranks.csv'), ranks, policy)
            run.artifacts['ranks'] = 'ranks.csv'
        run.best_metrics = metrics
        self._complete_run(run, os.path.join(out_dir, 'manifest.json'))
        return report

    @staticmethod
    def _write_ranks(path: str, ranks: np.ndarray, policy: TiePolicy) -> None:
        with open(path, 'w', encoding='utf-8') as handle:
            handle.write('head_rank,tail_rank\n')
            for head_rank, tail_rank in ranks.tolist():
                if policy is TiePolicy.MEAN:
                    handle.write(f"{head_rank!r},{tail_rank!r}\n")
                else:
                    handle.write(f"{int(head_rank)},{int(tail_rank)}\n")

    def export_embeddings(
        self,
        checkpoint_dir: str,
        out_path: str,
        include_relations: bool = False,
        arguments: Optional[Dict[str, Any]] = None,
    ) -> Dict[str, Any]:
        """Write a checkpoint's entities (and optionally relations) as a text dump"""
        checkpoint = load_checkpoint(checkpoint_dir)
        table = checkpoint.table
        write_embedding_dump(
            out_path,
            checkpoint.entity_vocab.labels,
            table.entities,
            checkpoint.relation_vocab.labels if include_relations else None,
            table.relations if include_relations else None,
            digits=self.digits,
        )
        run = self._start_run('export', arguments or {}, [checkpoint_dir], os.path.dirname(out_path))
        run.artifacts = {'dump': os.path.basename(out_path)}
        self._complete_run(run, f"{out_path}.manifest.json")
        logger.info(f"Exported {table.n_entities} entity row(s) of dim {table.dim} to {out_path}")
        return {'path': out_path, 'n_entities': table.n_entities, 'dim': table.dim}

    # Experiment helpers

    def synthesize(self, out_dir: str, ratios: Sequence[float], params: Dict[str, Any],
                   arguments: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
        benchmark = write_benchmark(out_dir, ratios, **params)
        run = self._start_run('synth', arguments or {}, [], out_dir)
        run.seed = params.get('seed')
        run.artifacts = {
            os.path.relpath(path, out_dir): file_digest(path) for path in benchmark.files()
        }
        run.best_metrics = benchmark.stats
        self._complete_run(run, os.path.join(out_dir, 'manifest.json'))
        return {'out_dir': out_dir, 'stats': benchmark.stats, 'alignments': benchmark.alignment_paths}

    def report(self, metrics_paths: Sequence[str], out_path: str, plot_dir: Optional[str] = None,
               arguments: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
        run = self._start_run('report', arguments or {}, list(metrics_paths), os.path.dirname(out_path))
        try:
            summary = build_report(metrics_paths, out_path, plot_dir)
        except KGTransferError as e:
            self._fail_run(run, e)
            raise
        run.artifacts = {'csv': os.path.basename(out_path)}
        run.artifacts.update({f"plot:{os.path.basename(p)}": p for p in summary['plots']})
        self._complete_run(run, f"{out_path}.manifest.json")
        return summary
