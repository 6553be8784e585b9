"""Mean-variance investment with a stochastic cash flow, with and without a VaR ceiling."""

from .constrained import (Branch, ClampConstants, ConstrainedPolicy, PolicyEval, clamp_constants,
                          constant_strategy_value, optimal_f_constrained, value_constrained)
from .errors import (ConfigError, DegenerateCurvatureError, InfeasibleProblemError, ParameterError,
                     SimulationError)
from .market_model import (ConstantPolicy, MarketParams, PathBatch, Preference, SimConfig, correlated_increments,
                           gaussian_terminal_law, simulate_paths, validate_params)
from .unconstrained import (HJBConstants, Mode, hjb_constants, optimal_f_unconstrained, value_unconstrained)
from .var_risk import (Case, FeasibleSet, RiskSpec, classify_case, feasible_set, quantile_of_gain,
                       var_of_strategy)

__version__ = "0.1.0"
