"""Exception hierarchy shared by all fedadmm modules."""


class FedAdmmError(Exception):
    """Base class for every error raised by this package."""


class DimensionMismatch(FedAdmmError):
    """Vector/matrix shapes are inconsistent for the requested operation."""


class NotSymmetric(FedAdmmError):
    """Matrix asymmetry exceeds the tolerated relative deviation."""


class FactorizationFailure(FedAdmmError):
    """Cholesky factorization hit a non-positive pivot."""


class NoConvergence(FedAdmmError):
    """An iterative routine failed to meet its tolerance within its cap."""


class LabelDomain(FedAdmmError):
    """Classification labels found outside {0, 1}."""


class InvalidMode(FedAdmmError):
    """Curvature mode incompatible with the loss family or its constraints."""


class InvalidGroups(FedAdmmError):
    """Synthetic generator needs a client count divisible by three."""


class InvalidRange(FedAdmmError):
    """Malformed per-client sample-count range."""


class TooManyClients(FedAdmmError):
    """Partition requested more clients than available samples."""


class ParseError(FedAdmmError):
    """Dataset file could not be parsed.

    Attributes:
        line: 1-based line number of the offending record.
    """

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"line {line}: {message}")
        self.line = line


class NonPositiveSigma(FedAdmmError):
    """Penalty schedule produced a non-positive sigma."""


class InnerSolveFailure(FedAdmmError):
    """The damped-Newton inner loop did not reach its tolerance."""


class NonFiniteIterate(FedAdmmError):
    """A solver iterate contains NaN or Inf.

    Attributes:
        iteration: index of the first non-finite iterate.
    """

    def __init__(self, iteration, detail=""):
        msg = f"non-finite iterate at iteration {iteration}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)
        self.iteration = iteration


class HypothesisViolation(FedAdmmError):
    """Penalties violate the strict thresholds the certified bounds assume."""


class ConfigError(FedAdmmError):
    """Experiment configuration failed validation.

    Attributes:
        field: dotted path of the offending field.
    """

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class SingularSystemWarning(UserWarning):
    """Pooled normal equations were singular; minimum-norm solution returned."""
