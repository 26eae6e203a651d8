"""Exception hierarchy shared by the library and the CLI."""

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_DIVERGENCE = 4
EXIT_PERSISTENCE = 5
EXIT_STRUCTURAL = 6


class HPRNNError(Exception):
    exit_code = EXIT_CHECK_FAILED


class UsageError(HPRNNError):
    exit_code = EXIT_USAGE


class ConfigurationError(HPRNNError):
    exit_code = EXIT_USAGE


class StructuralError(HPRNNError):
    exit_code = EXIT_STRUCTURAL


class DataError(HPRNNError):
    exit_code = EXIT_DATA


class TrainingError(HPRNNError):
    exit_code = EXIT_DIVERGENCE

    def __init__(self, message: str, epoch: int | None = None) -> None:
        super().__init__(message)
        self.epoch = epoch


class PersistenceError(HPRNNError):
    exit_code = EXIT_PERSISTENCE


class VersionError(PersistenceError):
    pass


def with_context(exc: HPRNNError, context: str) -> HPRNNError:
    """Return a copy of ``exc`` whose message is prefixed with ``context``."""
    if isinstance(exc, TrainingError):
        return TrainingError(f"{context}: {exc}", epoch=exc.epoch)
    return type(exc)(f"{context}: {exc}")
