import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import minimize_scalar

from longliq import Constant, ModelParams, Table
from longliq.discrete_dp import (DiscreteDPResult, DPConfig, dp_backward, dp_optimal_trade, dp_value,
                                 dp_vs_ode_error, structural)
from longliq.riccati import solve_finite, value_function


def test_terminal_block(fig1):
    dp = dp_backward(DPConfig(fig1, 1.0, 0.01))
    assert np.allclose(dp.A[-1], [[0.251, 0.5], [0.5, 0.0]], atol=1e-15)
    assert np.all(dp.B[-1] == 0) and dp.C[-1] == 0
    assert np.isnan(dp.a[-1])


def test_close_to_ode(fig1):
    dp = dp_backward(DPConfig(fig1, 5.0, 0.005))
    ode = solve_finite(fig1, 5.0, 5000)
    assert abs(dp.A[0, 0, 0] - ode.abar[0]) <= 5e-3


def test_quiet_market_has_no_linear_or_constant_terms(fig1):
    dp = dp_backward(DPConfig(fig1.replace(sigma=Constant(0.0)), 5.0, 0.01))
    assert np.all(dp.B == 0.0) and np.all(dp.C == 0.0)


def test_optimal_trade_examples(fig1):
    dp = dp_backward(DPConfig(fig1, 5.0, 0.01))
    assert dp_optimal_trade(dp, 10, (0.0, 0.0)) == 0.0
    assert dp_optimal_trade(dp, dp.N, (1.7, -0.3)) == 1.7
    with pytest.raises(IndexError):
        dp_optimal_trade(dp, dp.N + 1, (1.0, 0.0))
    # continuous initial jump sells 0.383974 * x0 at long horizons
    long = dp_backward(DPConfig(fig1, 30.0, 0.001))
    assert dp_optimal_trade(long, 0, (5.0, 0.0)) == pytest.approx(1.919870, abs=5e-3)


def test_value_examples(fig1):
    dp = dp_backward(DPConfig(fig1, 5.0, 0.001))
    x, y = 1.3, -0.4
    assert dp_value(dp, dp.N, (x, y)) == pytest.approx((0.25 + 0.1 * 0.001) * x * x + x * y)
    assert dp_value(dp, 7, (0.0, 0.0)) == dp.C[7]
    ode = solve_finite(fig1, 5.0, 5000)
    assert dp_value(dp, 0, (5.0, 0.0)) == pytest.approx(value_function(ode.at(0), (5.0, 0.0)), abs=2e-2)


def bellman_rhs(params, dp, n, s):
    """min over xi of stage cost + E V_{n+1}, by numerical search (Gauss-Hermite expectation)."""
    m = structural(params, n, dp.dt)
    nodes, weights = np.polynomial.hermite_e.hermegauss(5)
    weights = weights / weights.sum()
    eps = np.sqrt(dp.dt) * nodes

    def total(xi):
        stage = s @ m["Q"] @ s + xi * (m["L"] @ s) + m["R"] * xi * xi
        nxt = m["A"] @ s + m["B"] * xi
        ev = sum(w * dp_value(dp, n + 1, nxt + m["D"] * e) for w, e in zip(weights, eps))
        return stage + ev

    res = minimize_scalar(total, bracket=(-10, 10), tol=1e-12)
    return res.fun, res.x


@pytest.mark.parametrize("n", [0, 3, 9])
def test_bellman_equation_holds(fig1_damped, n):
    dp = dp_backward(DPConfig(fig1_damped, 1.0, 0.1))
    rng = np.random.default_rng(n)
    for _ in range(3):
        s = rng.normal(size=2) * 2
        v, xi = bellman_rhs(fig1_damped, dp, n, s)
        assert dp_value(dp, n, s) == pytest.approx(v, abs=1e-9)
        assert dp_optimal_trade(dp, n, s) == pytest.approx(xi, abs=1e-5)


def test_first_order_convergence(fig1):
    ode = solve_finite(fig1, 5.0, 5000)
    rep = dp_vs_ode_error([dp_backward(DPConfig(fig1, 5.0, d)) for d in (0.02, 0.01, 0.005)], ode)
    assert 0.8 <= rep.order <= 1.3
    assert np.all(np.diff(rep.c_err) < 0)


def test_identical_inputs_give_zero_error(fig1):
    ode = solve_finite(fig1, 5.0, 500)
    rep = dp_vs_ode_error(DiscreteDPResult.from_ode(ode, 0.02), ode)
    assert rep.a11_err[0] == 0.0 and rep.c_err[0] == 0.0
    assert np.isnan(rep.order)


def test_zero_noise_zero_lambda_c_diffs_exact(fig1):
    p = fig1.replace(sigma=Constant(0.0), lam=Constant(0.0))
    rep = dp_vs_ode_error(dp_backward(DPConfig(p, 2.0, 0.01)), solve_finite(p, 2.0, 200))
    assert rep.c_err[0] == 0.0


def test_misaligned_grids(fig1):
    with pytest.raises(ValueError):
        dp_vs_ode_error(dp_backward(DPConfig(fig1, 2.0, 0.01)), solve_finite(fig1, 2.0, 300))
    with pytest.raises(ValueError):
        dp_vs_ode_error(dp_backward(DPConfig(fig1, 2.0, 0.01)), solve_finite(fig1, 3.0, 300))


def test_config_validation(fig1):
    with pytest.raises(ValueError):
        dp_backward(DPConfig(fig1, 1.0, 0.3))
    with pytest.raises(ValueError):
        dp_backward(DPConfig(fig1, -1.0, 0.1))
    with pytest.raises(ValueError):
        dp_backward(DPConfig(fig1.replace(phi=20.0), 1.0, 0.1))


def test_table_columns(fig1):
    cols, data = dp_backward(DPConfig(fig1, 1.0, 0.1)).table()
    assert cols[:3] == ["n", "t", "A11"]
    assert data.shape == (11, 9)


@given(g=st.floats(0.05, 3.0), phi=st.floats(0.01, 1.0), rho=st.floats(0.0, 3.0),
       lam=st.lists(st.floats(0.0, 2.0), min_size=1, max_size=4), sig=st.floats(0.0, 2.0),
       dt=st.sampled_from([0.01, 0.05, 0.1]))
@settings(max_examples=40, deadline=None)
def test_relations_hold_for_random_params(g, phi, rho, lam, sig, dt):
    lam_fn = Table.from_pairs([(float(i), v) for i, v in enumerate(lam)])
    dp = dp_backward(DPConfig(ModelParams(g, phi, Constant(rho), lam_fn, Constant(sig), 1.0), 2.0, dt))
    assert dp.relation_residuals().max() <= 1e-10
    assert np.all(dp.a[:-1] > 0)
