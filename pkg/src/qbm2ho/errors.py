"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid physical parameters or run configuration."""


class UnsupportedOperation(ValueError):
    """Operation not defined for the given object."""


class RangeError(ValueError):
    """Requested time lies outside a tabulated range."""


class ResourceError(RuntimeError):
    """Requested grid would exceed the configured size cap."""


class NumericalError(RuntimeError):
    """A numerical routine failed; ``diagnostics`` carries details."""

    def __init__(self, msg, diagnostics=None):
        super().__init__(msg)
        self.diagnostics = dict(diagnostics or {})


class DegenerateHorizonError(NumericalError):
    """Boundary-value problem has no unique solution at this horizon."""

    def __init__(self, msg, t=None, diagnostics=None):
        d = dict(diagnostics or {})
        if t is not None:
            d["t"] = t
        super().__init__(msg, d)
        self.t = t


class UnsupportedModel(ValueError):
    """Model outside the Gaussian (quadratic) class."""
