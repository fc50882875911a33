"""Exception hierarchy.

Every domain error carries a stable ``name`` so the command line can print it
verbatim on standard error.
"""


class SigkitError(Exception):
    """Base class for all domain errors raised by sigkit."""

    @property
    def name(self):
        return type(self).__name__


class FileNotFound(SigkitError, FileNotFoundError):
    pass


class MalformedImage(SigkitError, ValueError):
    pass


class IoFailure(SigkitError, OSError):
    pass


class NoInk(SigkitError, ValueError):
    """No pixel darker than the ink threshold."""


class OutOfBounds(SigkitError, IndexError):
    pass


class DimensionMismatch(SigkitError, ValueError):
    pass


class ConstantImage(SigkitError, ValueError):
    """Zero variance: the correlation coefficient is undefined."""


class DegenerateRange(SigkitError, ValueError):
    """All values equal, so min-max normalization divides by zero."""


class BlockTooLarge(SigkitError, ValueError):
    pass


class NonPositiveWidth(SigkitError, ValueError):
    pass


class DuplicateConflict(SigkitError, ValueError):
    """Identical feature vectors carry different labels."""


class SingularSystem(SigkitError, ArithmeticError):
    pass


class NonFiniteCost(SigkitError, ArithmeticError):
    """Training diverged; the learning rates are too large."""


class InkClipped(SigkitError, ValueError):
    """A distortion pushed ink off the output canvas."""


class EmptyDirectory(SigkitError, ValueError):
    pass
