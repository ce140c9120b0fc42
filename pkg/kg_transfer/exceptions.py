"""Error hierarchy shared by loaders, numerical code, services and commands."""

from typing import Optional


class KGTransferError(Exception):
    """Base class for every error raised by the kg_transfer app"""


class ParseError(KGTransferError):
    """Malformed line in an input file"""

    def __init__(self, message: str, path: Optional[str] = None, line_number: Optional[int] = None):
        self.path = path
        self.line_number = line_number
        location = ""
        if path is not None:
            location = f"{path}:"
        if line_number is not None:
            location = f"{location}{line_number}: "
        elif location:
            location = f"{location} "
        super().__init__(f"{location}{message}")


class VocabularyError(KGTransferError):
    """Label missing from a frozen vocabulary"""


class ConfigError(KGTransferError):
    """Invalid configuration value or key"""


class AlignmentError(KGTransferError):
    """Alignment set unusable for transfer"""


class LoadError(KGTransferError):
    """Input file is incomplete"""


class DataError(KGTransferError):
    """Input file holds invalid values"""


class ShapeError(KGTransferError):
    """Array dimensions do not fit the operation"""


class StateError(KGTransferError):
    """Cached state does not match the object it is used with"""


class TrainingError(KGTransferError):
    """Optimization produced a non-finite value"""


class UsageError(KGTransferError):
    """Operation called with unusable arguments"""
