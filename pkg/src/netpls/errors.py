"""Exception hierarchy shared by every netpls module."""


class NetPLSError(Exception):
    """Base class for all errors raised by netpls."""


class InvalidArgumentError(NetPLSError, ValueError):
    """An argument has the wrong shape, range or type."""


class NumericalFailure(NetPLSError, ArithmeticError):
    """A numerical routine failed to converge or produced non-finite output."""


class SingularDesignError(NumericalFailure):
    """The covariate design matrix is rank deficient.

    Attributes
    ----------
    columns : tuple of int
        Zero-based indices of the covariates involved in the deficiency.
    """

    def __init__(self, message, columns=()):
        super().__init__(message)
        self.columns = tuple(int(c) for c in columns)


class DegenerateClusterError(NumericalFailure):
    """Every EM restart collapsed a mixture component."""


class EnsembleQualityError(NumericalFailure):
    """Too many bootstrap replicates failed."""


class GeneratorInvalidError(NetPLSError):
    """A simulation generator could not produce valid edge probabilities."""


class InputError(NetPLSError):
    """Malformed input file or dataset."""


class AsymmetricAdjacencyError(InputError):
    pass


class SelfLoopError(InputError):
    pass


class MissingValueError(InputError):
    pass


class DimensionMismatchError(InputError):
    pass


class ConfigError(NetPLSError):
    """Invalid combination of options."""
