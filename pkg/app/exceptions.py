class PapiError(Exception):
    """Base class for errors raised by the CS-PAPI toolkit"""


class DimensionMismatchError(PapiError, ValueError):
    """Operands disagree in shape (matrix columns vs sensors, array shapes)"""


class CapacityError(PapiError, ValueError):
    """Exhaustive subset enumeration would exceed the configured limit"""


class DesignInfeasibleError(PapiError):
    """No admissible matrix with a usable sparse injectivity number was found"""


class StorageError(PapiError, OSError):
    """A data file is missing, unreadable or inconsistent with its sidecar"""


# CLI exit codes
EXIT_OK = 0
EXIT_DESIGN_INFEASIBLE = 2
EXIT_IO_ERROR = 3
EXIT_DIMENSION_MISMATCH = 4
