"""Exception hierarchy shared by all sciunit modules.

Each class maps to one stable CLI exit code (see `cli.EXIT_CODES`).
"""


class SciunitError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = 1


class InvalidArgumentError(SciunitError, ValueError):
    """A caller-supplied value violates a documented precondition."""

    exit_code = 2


class NotFoundError(SciunitError, KeyError):
    """A sciunit, execution, chunk, or graph node does not exist."""

    exit_code = 2

    def __str__(self):
        # KeyError would repr() the message, which is ugly for CLI output.
        return Exception.__str__(self)


class StorageError(SciunitError):
    """The on-disk store failed in a non-corruption way (I/O, bad layout)."""

    exit_code = 4


class CorruptionError(StorageError):
    """Stored or transported bytes do not match their recorded digest."""

    exit_code = 4

    def __init__(self, message, digests=()):
        super().__init__(message)
        self.digests = list(digests)


class BusyError(StorageError):
    """The single-writer store lock is held by someone else."""

    exit_code = 4


class BackendUnavailableError(SciunitError):
    """A platform-gated backend (live tracing, chroot redirect) cannot run here."""

    exit_code = 3


class AuditIncompleteError(SciunitError):
    """A dependency could not be read or copied while building a sandbox."""

    exit_code = 4

    def __init__(self, message, paths=()):
        super().__init__(message)
        self.paths = list(paths)


class ParseError(SciunitError):
    """A trace stream or config file is malformed."""

    exit_code = 2

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class LogInconsistencyError(SciunitError):
    """An interaction log violates its ordering/parentage invariants."""

    exit_code = 2


class CyclicGraphError(SciunitError):
    """A graph that must be acyclic contains a cycle."""

    exit_code = 4

    def __init__(self, message, cycle=()):
        super().__init__(message)
        self.cycle = list(cycle)


class PlanIncompleteError(SciunitError):
    """A sub-container plan references files missing from the parent container."""

    exit_code = 4

    def __init__(self, message, paths=()):
        super().__init__(message)
        self.paths = list(paths)


class TransportError(SciunitError):
    """Repository push/pull failed after retries."""

    exit_code = 5


class ConfigError(SciunitError):
    """Configuration is missing or invalid for the requested operation."""

    exit_code = 2
