"""Exception types raised across the package."""


class ZKLabError(Exception):
    """Base class for all errors raised by zklab."""


class InvalidInputError(ZKLabError, ValueError):
    """Arguments are malformed or inconsistent with each other."""


class UnsupportedOrderError(InvalidInputError):
    """A derivative or Sobolev order lies outside the supported range."""


class PreconditionError(ZKLabError):
    """Input data violate a documented precondition (e.g. boundary decay)."""


class QuadratureError(ZKLabError):
    """An adaptive quadrature did not reach its tolerance.

    Attributes
    ----------
    estimate : float
        The final error estimate.
    """

    def __init__(self, message: str, estimate: float):
        super().__init__(f"{message} (error estimate {estimate:.3e})")
        self.estimate = estimate


class ResolutionError(ZKLabError):
    """A field carries too much energy near the grid Nyquist band."""


class TruncationError(ZKLabError):
    """A far-field truncation bound exceeds the requested tolerance."""

    def __init__(self, message: str, bound: float):
        super().__init__(f"{message} (tail bound {bound:.3e})")
        self.bound = bound


class DomainOverflowError(ZKLabError):
    """A mapped field no longer fits inside the computational box."""


class NoContractionError(ZKLabError):
    """Picard iteration stopped contracting.

    Attributes
    ----------
    diagnostics : object
        The iteration history collected before the failure.
    """

    def __init__(self, message: str, diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


class InstabilityError(ZKLabError):
    """Time stepping blew up; ``last_good`` holds the last accepted state."""

    def __init__(self, message: str, last_good):
        super().__init__(message)
        self.last_good = last_good


class FormatError(ZKLabError):
    """A snapshot or report file is malformed.

    Attributes
    ----------
    offset : int
        Byte offset at which the problem was detected.
    """

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at byte offset {offset}")
        self.offset = offset
