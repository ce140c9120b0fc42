from kg_transfer.services import ExperimentService

from ._base import ServiceCommand


class Command(ServiceCommand):
    help = "Write a checkpoint's entity embeddings in the text dump format"

    def add_arguments(self, parser):
        parser.add_argument('--checkpoint', required=True)
        parser.add_argument('--out', required=True, help="Dump file to write")
        parser.add_argument('--include-relations', action='store_true', dest='include_relations',
                            help="Append a REL section (relations are withheld by default)")

    def run(self, **options):
        return ExperimentService().export_embeddings(
            options['checkpoint'],
            options['out'],
            include_relations=options['include_relations'],
            arguments=self.arguments(options),
        )
