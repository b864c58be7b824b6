"""Exception hierarchy shared by all modules."""


class MonitoredIsingError(Exception):
    """Base class for every error raised by this package."""


class CapacityError(MonitoredIsingError):
    """Requested system size exceeds the configured dense-memory cap."""


class ContractError(MonitoredIsingError, ValueError):
    """An input violates a stated contract (shape, hermiticity, range)."""


class PreconditionError(ContractError):
    """A state or parameter fails a precondition such as normalization."""


class NumericalError(MonitoredIsingError, ArithmeticError):
    """A numerical routine failed or produced an unusable result."""


class ImpossibleOutcomeError(NumericalError):
    """A sampled measurement branch has vanishing norm."""


class ExtinctionError(NumericalError):
    """The post-selected survival weight underflowed."""


class StepSizeError(NumericalError):
    """An integrator drifted beyond tolerance; retry with a smaller step."""


class NotBracketedError(NumericalError):
    """A scan grid does not contain the sought transition."""


class FitWindowError(ContractError):
    """A fit window is too narrow or has too few points."""


class ConfigError(MonitoredIsingError, ValueError):
    """An experiment configuration is malformed or out of range."""
