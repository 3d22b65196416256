"""Exception types shared across the package."""


class CritHeatError(Exception):
    """Base class for all package errors."""


class ConfigurationError(CritHeatError):
    """Invalid or inconsistent configuration values."""


class DiscretizationFailure(CritHeatError):
    """The discrete problem is too coarse or otherwise degenerate."""


class DecompositionFailure(CritHeatError):
    """The nonlinear soliton decomposition did not converge."""


class DomainExceeded(CritHeatError):
    """A requested evaluation point falls outside the radial domain."""


class InsufficientData(CritHeatError):
    """Not enough samples to perform the requested fit or check."""


class DegenerateInput(CritHeatError):
    """An input field is identically zero or otherwise unusable."""


class ConstructionFailure(CritHeatError):
    """A minimal-solution approximant left its validity window early."""
