from kg_transfer.services import ExperimentService

from ._base import ServiceCommand


class Command(ServiceCommand):
    help = "Tabulate metrics JSON files into a CSV and optionally plot metric-vs-ratio curves"

    def add_arguments(self, parser):
        parser.add_argument('metrics', nargs='+', help="metrics.json files")
        parser.add_argument('--out', required=True, help="CSV file to write")
        parser.add_argument('--plot', help="Directory for PNG plots")

    def run(self, **options):
        summary = ExperimentService().report(
            options['metrics'], options['out'], options['plot'], arguments=self.arguments(options),
        )
        return {'csv': summary['csv'], 'rows': len(summary['rows']), 'plots': summary['plots']}
