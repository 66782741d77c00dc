"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Scenario configuration is malformed or inconsistent; message names the key."""


class DivergenceError(ArithmeticError):
    """A numerical integration produced non-finite state or covariance."""


class SingularRangeError(ValueError):
    """A range measurement is evaluated at zero separation; the Jacobian is undefined."""


class DiscretizationError(ValueError):
    """Extracted discrete process noise is indefinite beyond tolerance (grid too coarse)."""


class NotPsdError(ValueError):
    """A matrix required to be positive semidefinite has a significantly negative eigenvalue."""


class GainContractError(ValueError):
    """A gain column is nonzero on a channel whose precision is zero."""


class NumericalError(RuntimeError):
    """A linear-algebra step failed (singular innovation covariance or similar)."""
