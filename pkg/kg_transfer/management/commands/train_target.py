from kg_transfer.services import ExperimentService
from kg_transfer.trainer import TrainingMode

from ._base import ServiceCommand, add_training_arguments


class Command(ServiceCommand):
    help = "Train target embeddings with knowledge transferred from one or more teachers"

    def add_arguments(self, parser):
        add_training_arguments(parser)
        parser.add_argument('--mode', choices=[m.value for m in TrainingMode], help="Overrides the config mode")
        parser.add_argument('--teacher-emb', action='append', default=[], dest='teacher_emb',
                            help="Teacher embedding dump (repeatable)")
        parser.add_argument('--align', action='append', default=[],
                            help="Teacher-to-target alignment file, paired with teachers by order (repeatable)")
        parser.add_argument('--teacher-triplets', action='append', default=[], dest='teacher_triplets',
                            help="Teacher triplet file (repeatable; required for --mode joint)")

    def run(self, **options):
        service = ExperimentService()
        config = service.load_config(options['config'], {'seed': options['seed'], 'mode': options['mode']})
        out_dir = options['out'] or service.default_out_dir('train_target', config.seed)
        target = service.load_target(options['data'], config)
        teachers = service.load_teachers(
            config, target.graph,
            embedding_paths=options['teacher_emb'],
            alignment_paths=options['align'],
            triplet_paths=options['teacher_triplets'],
        )
        inputs = [options['config'], options['data']]
        inputs += options['teacher_emb'] + options['align'] + options['teacher_triplets']
        summary = service.run_training(
            'train_target', config, target, teachers, out_dir,
            arguments=self.arguments(options),
            inputs=inputs,
            label=options['label'],
            ratio=options['ratio'],
        )
        return {'out_dir': out_dir, 'metrics': summary['metrics']}
