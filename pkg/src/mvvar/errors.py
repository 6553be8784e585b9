"""Exception types shared across the package."""


class ParameterError(ValueError):
    """A model, risk or simulation parameter violates its domain."""


class InfeasibleProblemError(ValueError):
    """The VaR ceiling admits no strategy at all."""


class SimulationError(RuntimeError):
    """Wealth became non-finite during path simulation."""

    def __init__(self, message: str, path_index: int):
        super().__init__(f"{message} (path {path_index})")
        self.path_index = path_index


class DegenerateCurvatureError(ArithmeticError):
    """V_xx is too close to zero for the HJB residual to be evaluated."""


class ConfigError(ValueError):
    """Scenario configuration could not be parsed or validated."""
