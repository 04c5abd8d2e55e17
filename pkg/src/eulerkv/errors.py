"""Exception types shared across the package."""


class ConfigError(ValueError):
    """Invalid scenario, material or basis configuration."""


class NumericalError(RuntimeError):
    """A non-finite value appeared during a solve.

    ``term`` names the offending contribution and ``t`` the simulation time.
    """

    def __init__(self, message: str, term: str | None = None, t: float | None = None):
        super().__init__(message)
        self.term = term
        self.t = t
