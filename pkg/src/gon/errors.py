"""Exception types shared across the package."""


class GonError(Exception):
    """Base class for all errors raised by this package."""


class DataError(GonError):
    """Problem with input data (exit code 2 on the command line)."""


class ConfigError(GonError):
    """Invalid hyperparameters or configuration (exit code 3)."""


class DomainError(GonError):
    """A query falls outside the region a model can answer (exit code 4)."""


class NotInvertibleAtValue(DomainError):
    pass


class ConditionalMaximizerOutOfRange(DomainError):
    def __init__(self, dim, target, lo, hi):
        self.dim = dim
        super().__init__(
            f"conditional maximizer out of range in dimension {dim}: "
            f"-r(z)={target:.6g} not in calibrator range [{lo:.6g}, {hi:.6g}]")


class OutOfDomain(DomainError):
    pass


class DegenerateInput(DataError):
    pass


class DegenerateLabels(DataError):
    pass


class EmptyDataset(DataError):
    pass


class MissingColumn(DataError):
    pass


class ParseError(DataError):
    """Non-numeric or non-finite cells.  ``errors`` holds (row, column) pairs."""

    def __init__(self, errors):
        self.errors = list(errors)
        row, col = self.errors[0]
        more = f" (and {len(self.errors) - 1} more)" if len(self.errors) > 1 else ""
        super().__init__(f"cannot parse row {row}, column {col!r}{more}")


class InvalidRange(ConfigError):
    pass


class EvenKeypointCount(ConfigError):
    pass


class EvenLatticeSize(ConfigError):
    pass


class InvalidArity(ConfigError):
    pass


class InvalidHyperparameters(ConfigError):
    pass


class ArityTooSmall(ConfigError):
    pass
