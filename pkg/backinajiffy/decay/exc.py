class DecayError(Exception):
    """
    Base exception for exceptions of :mod:`decay`.
    """
    pass


class InputError(DecayError):
    """
    User input cannot be used: missing files, header mismatch, too many malformed rows, invalid coordinates.

    The CLI maps this to exit code 2.
    """
    pass


class ConfigurationError(InputError):
    """
    A configuration value is out of range or inconsistent.
    """
    pass


class DomainError(DecayError, ValueError):
    """
    A field was evaluated outside its domain, e.g. at r <= 0.
    """
    pass


class EstimationError(DecayError):
    pass


class SingularDesignError(EstimationError):
    """
    The design matrix is rank deficient.

    :ivar columns: Names of the columns that are linearly dependent on the preceding ones
    """

    def __init__(self, msg: str, columns=()):
        super().__init__(msg)
        self.columns = tuple(columns)


class InsufficientDataError(EstimationError):
    pass


class OracleError(DecayError):
    """
    The finite-difference oracle cannot produce a trustworthy profile on the given grid.
    """
    pass
