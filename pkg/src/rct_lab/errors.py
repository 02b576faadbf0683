"""Exception hierarchy shared by all modules."""


class RctError(Exception):
    """Base class for every error raised by rct_lab."""


class DomainError(RctError, ValueError):
    """An argument lies outside the domain where the operation is defined."""


class NegativeCurrentError(DomainError):
    """Terminal voltage below OCV: the CV charging model does not apply."""


class UnmeasurableResistanceError(DomainError, ZeroDivisionError):
    """Resistance cannot be computed from a zero-current sample."""


class NoCommandError(DomainError):
    """Commanded current is not positive, so accuracy is undefined."""


class UnreachableTargetError(DomainError):
    """The CV current vanishes before the target SOC is reached."""

    def __init__(self, soc: float, message: str | None = None):
        self.soc = soc
        super().__init__(message or f"CV C-rate is not positive at SOC {soc:.4f}")


class EmptyTrainingSetError(RctError, ValueError):
    """No usable CV samples were found."""


class ConfigError(RctError):
    """Configuration file or value is invalid."""


class TraceFormatError(RctError, ValueError):
    """A CSV or JSON input file could not be parsed."""
