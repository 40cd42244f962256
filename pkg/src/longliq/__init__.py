"""Optimal liquidation with transient impact and external order flow."""
from .model import (Constant, DampedExponential, ModelParams, Table, eval_coefficients,
                    figure1_params, load_params, validate_params)
from .riccati import (assemble_value, feedback_coefficients, solve_abar_finite, solve_abar_infinite,
                      solve_bbar_finite, solve_c_finite, solve_c_infinite, solve_finite,
                      solve_infinite, value_function)
from .discrete_dp import DPConfig, dp_backward, dp_optimal_trade, dp_value, dp_vs_ode_error

__version__ = "0.1.0"
