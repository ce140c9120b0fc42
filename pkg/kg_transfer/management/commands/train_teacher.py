from kg_transfer.services import ExperimentService

from ._base import ServiceCommand, add_training_arguments


class Command(ServiceCommand):
    help = "Train embeddings on a single graph (plain mode) for later use as a teacher"

    def add_arguments(self, parser):
        add_training_arguments(parser)

    def run(self, **options):
        service = ExperimentService()
        config = service.load_config(options['config'], {'seed': options['seed'], 'mode': 'plain'})
        out_dir = options['out'] or service.default_out_dir('train_teacher', config.seed)
        target = service.load_target(options['data'], config)
        summary = service.run_training(
            'train_teacher', config, target, [], out_dir,
            arguments=self.arguments(options),
            inputs=[options['config'], options['data']],
            label=options['label'],
            ratio=options['ratio'],
        )
        return {'out_dir': out_dir, 'metrics': summary['metrics']}
