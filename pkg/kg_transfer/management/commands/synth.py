from kg_transfer.services import ExperimentService

from ._base import ServiceCommand


class Command(ServiceCommand):
    help = "Generate a synthetic world with teacher/target views and nested alignments per overlap ratio"

    def add_arguments(self, parser):
        parser.add_argument('--out', required=True)
        parser.add_argument('--ratios', type=float, nargs='+', default=[0.25, 0.5, 1.0])
        parser.add_argument('--entities', type=int, default=200)
        parser.add_argument('--relations', type=int, default=8)
        parser.add_argument('--triplets', type=int, default=2000)
        parser.add_argument('--clusters', type=int, default=8)
        parser.add_argument('--noise', type=float, default=0.3)
        parser.add_argument('--target-fraction', type=float, default=0.4, dest='target_fraction')
        parser.add_argument('--teacher-fraction', type=float, default=1.0, dest='teacher_fraction')
        parser.add_argument('--seed', type=int, default=0)

    def run(self, **options):
        params = {
            'n_entities': options['entities'],
            'n_relations': options['relations'],
            'n_triplets': options['triplets'],
            'n_clusters': options['clusters'],
            'noise': options['noise'],
            'target_fraction': options['target_fraction'],
            'teacher_fraction': options['teacher_fraction'],
            'seed': options['seed'],
        }
        return ExperimentService().synthesize(
            options['out'], options['ratios'], params, arguments=self.arguments(options),
        )
