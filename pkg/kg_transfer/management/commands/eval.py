from kg_transfer.evaluation import TiePolicy
from kg_transfer.services import ExperimentService

from ._base import ServiceCommand


class Command(ServiceCommand):
    help = "Filtered link-prediction metrics of a checkpoint on the valid or test split"

    def add_arguments(self, parser):
        parser.add_argument('--checkpoint', required=True, help="Checkpoint directory written by a training run")
        parser.add_argument('--data', required=True, help="Dataset the checkpoint was trained on")
        parser.add_argument('--split', choices=['valid', 'test'], default='test')
        parser.add_argument('--out', help="Output directory for metrics.json (and ranks.csv)")
        parser.add_argument('--ranks', action='store_true', help="Also write per-triplet head/tail ranks")
        parser.add_argument('--tie-policy', choices=[p.value for p in TiePolicy], dest='tie_policy')
        parser.add_argument('--label', help="Overrides the checkpoint's run label")
        parser.add_argument('--ratio', type=float, help="Overrides the checkpoint's overlap ratio")

    def run(self, **options):
        service = ExperimentService()
        return service.evaluate_checkpoint(
            options['checkpoint'],
            options['data'],
            split=options['split'],
            out_dir=options['out'],
            write_ranks=options['ranks'],
            tie_policy=options['tie_policy'],
            label=options['label'],
            ratio=options['ratio'],
            arguments=self.arguments(options),
        )
