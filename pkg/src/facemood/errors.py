"""Exception taxonomy shared by all facemood modules."""


class FacemoodError(Exception):
    """Base class for all errors raised by this package."""


class FormatError(FacemoodError):
    """A binary container is malformed (bad magic, version, or truncation)."""


class TopologyError(FacemoodError):
    """A weight bundle does not match the fixed network topology."""


class CorruptDataError(FacemoodError):
    """Loaded numeric data contains NaN or infinite values."""


class IoError(FacemoodError):
    """A file or directory could not be read or written."""


class ShapeError(FacemoodError):
    """Operands have inconsistent or unusable shapes."""


class ParseError(FacemoodError):
    """A cascade XML file is malformed."""


class UnsupportedCascadeError(FacemoodError):
    """A cascade XML file uses a node kind this detector does not implement."""


class DegenerateDataError(FacemoodError):
    """Training data lacks the variety required (missing label or sign)."""


class UndefinedMetricError(FacemoodError):
    """A metric is undefined for the given confusion matrix."""


class StateError(FacemoodError):
    """An operation was invoked before the engine was initialized."""
