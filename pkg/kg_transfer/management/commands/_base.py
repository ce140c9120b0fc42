import json
from typing import Any, Dict

from django.core.management.base import BaseCommand, CommandError

from kg_transfer.exceptions import KGTransferError

DJANGO_OPTIONS = {
    'verbosity', 'settings', 'pythonpath', 'traceback', 'no_color', 'force_color', 'skip_checks', 'stdout', 'stderr',
}


class ServiceCommand(BaseCommand):
    """Base for kg_transfer commands: user errors exit with status 2 and one line"""

    def handle(self, *args, **options):
        try:
            result = self.run(**options)
        except (KGTransferError, OSError) as e:
            raise CommandError(str(e), returncode=2) from e
        if result is not None:
            self.stdout.write(json.dumps(result, sort_keys=True))

    def run(self, **options) -> Any:
        raise NotImplementedError

    @staticmethod
    def arguments(options: Dict[str, Any]) -> Dict[str, Any]:
        """Command options worth recording in a manifest"""
        return {key: value for key, value in sorted(options.items()) if key not in DJANGO_OPTIONS}


def add_training_arguments(parser) -> None:
    parser.add_argument('--config', help="Training config JSON file")
    parser.add_argument('--data', required=True, help="Target triplet file or train/valid/test directory")
    parser.add_argument('--seed', type=int, help="Overrides the config seed")
    parser.add_argument('--out', help="Output directory (default: runs/<command>-seed<seed>)")
    parser.add_argument('--label', default='', help="Free-form run label carried into metrics.json")
    parser.add_argument('--ratio', type=float, help="Overlap ratio carried into metrics.json")
