import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad, solve_ivp

from longliq import Constant, DampedExponential, ModelParams, Table
from longliq.discrete_dp import DPConfig, dp_backward
from longliq.riccati import (SolverError, abar_driver, assemble_value, c_integrand, feedback_coefficients,
                             solve_abar_finite, solve_abar_infinite, solve_bbar_finite, solve_c_finite,
                             solve_c_infinite, solve_finite, solve_infinite, value_function)

ABAR_INF = 0.1314100


def dense_backward(params, T=200.0):
    """Independent oracle: adaptive backward integration of the Riccati equation."""
    def rhs(s, y):
        return [abar_driver(params, s, y[0])]
    sol = solve_ivp(rhs, (T, 0.0), [params.gamma / 2], rtol=1e-12, atol=1e-14, method="DOP853")
    return float(sol.y[0, -1])


def test_terminal_condition(fig1):
    for T in (1.0, 7.5, 40.0):
        t, abar = solve_abar_finite(fig1, T, 200)
        assert abar[-1] == 0.25
        assert t[0] == 0.0 and t[-1] == T and len(t) == 201


def test_long_horizon_approaches_root(fig1):
    _, abar = solve_abar_finite(fig1, 40.0, 4000)
    assert abar[0] == pytest.approx(ABAR_INF, abs=1e-4)


def test_rk4_matches_adaptive_oracle(fig1_damped):
    _, abar = solve_abar_finite(fig1_damped, 12.0, 1200)
    assert abar[0] == pytest.approx(dense_backward(fig1_damped, 12.0), abs=1e-10)


def test_zero_lambda_decays_to_zero(fig1):
    p = fig1.replace(lam=Constant(0.0))
    vals = [solve_abar_finite(p, T, int(T * 100))[1][0] for T in (10.0, 20.0, 40.0)]
    assert vals[0] > vals[1] > vals[2] > 0
    assert vals[2] < 1e-3


def test_bad_horizon(fig1):
    with pytest.raises(ValueError, match="T must be positive"):
        solve_abar_finite(fig1, -1.0, 10)
    with pytest.raises(ValueError):
        solve_abar_finite(fig1, 1.0, 0)


def test_infinite_root_against_dense_ode(fig1):
    root = solve_abar_infinite(fig1)
    assert root == pytest.approx(ABAR_INF, abs=1e-7)
    assert root == pytest.approx(dense_backward(fig1), abs=1e-9)


def test_infinite_root_special_cases(fig1):
    assert solve_abar_infinite(fig1.replace(lam=Constant(0.0))) == 0.0
    p = fig1.replace(rho=Constant(0.0))
    assert solve_abar_infinite(p) == pytest.approx(1 / 6, abs=1e-6)
    assert solve_abar_infinite(p) == pytest.approx(dense_backward(p), abs=1e-9)


def test_infinite_root_needs_constant_coefficients(fig1):
    with pytest.raises((ValueError, SolverError)):
        solve_abar_infinite(fig1.replace(lam=Table.from_pairs([(0, 0.1), (1, 0.2)])))


def test_stable_root_form_is_the_quadratic_root():
    b, c, d = sp.symbols("b c d", real=True)
    stable = -2 * d / (c + sp.sqrt(c ** 2 - 4 * b * d))
    textbook = (-c + sp.sqrt(c ** 2 - 4 * b * d)) / (2 * b)
    assert sp.simplify(sp.radsimp(stable - textbook)) == 0
    root = stable.subs({b: sp.Rational(49, 50), c: sp.Rational(12, 25), d: sp.Rational(-2, 25)})
    assert float(root) == pytest.approx(ABAR_INF, abs=1e-7)


def test_c_is_tail_integral_of_h():
    # C(t) = int_t^T h(s) ds satisfies dC/dt = -h and C(T) = 0
    s, t, T, phi, sig, g, A = sp.symbols("s t T phi sigma gamma A", positive=True)
    h = sp.exp(-phi * s) * sig ** 2 * (2 * A - g) / (2 * g ** 2)
    C = sp.integrate(h, (s, t, T))
    assert sp.simplify(sp.diff(C, t) + h.subs(s, t)) == 0
    assert sp.simplify(C.subs(t, T)) == 0
    # infinite-horizon closed forms at t = 0
    psi = sp.symbols("psi", positive=True)
    c_const = sp.integrate(h, (s, 0, sp.oo))
    assert sp.simplify(c_const - sig ** 2 * (2 * A - g) / (2 * g ** 2 * phi)) == 0
    c_damp = sp.integrate(h * sp.exp(-2 * psi * s), (s, 0, sp.oo))
    assert sp.simplify(c_damp - sig ** 2 * (2 * A - g) / (2 * g ** 2 * (phi + 2 * psi))) == 0


def test_bbar_zero_without_forcing(fig1):
    vc = solve_finite(fig1, 10.0, 1000)
    assert np.max(np.abs(vc.bbar)) <= 1e-12
    p = fig1.replace(sigma=Constant(0.0), lam=Table.from_pairs([(0, 0.1), (2, 0.3)]))
    t, abar = solve_abar_finite(p, 5.0, 500)
    assert np.all(solve_bbar_finite(p, t, abar) == 0.0)


def test_c_long_horizon(fig1):
    vc = solve_finite(fig1, 120.0, 12000)
    assert vc.cval[0] == pytest.approx(-0.1482, abs=2e-3)
    assert vc.cval[-1] == 0.0


def test_c_zero_cases(fig1):
    vc = solve_finite(fig1.replace(sigma=Constant(0.0)), 5.0, 500)
    assert np.all(vc.cval == 0.0)
    t = np.linspace(0, 5, 501)
    forced = solve_c_finite(fig1, t, np.full_like(t, 0.25), np.zeros_like(t))
    assert np.all(forced == 0.0)


def quad_c(params, abar, t0=0.0):
    val, _ = quad(lambda s: float(c_integrand(params, s, abar, 0.0)), t0, np.inf, epsabs=1e-13, limit=400)
    return val


def test_c_infinite_closed_forms(fig1, fig1_damped):
    for p, expect in ((fig1, -0.148238), (fig1_damped, -0.049413)):
        sol = solve_infinite(p)
        assert float(sol.c(0.0)) == pytest.approx(expect, abs=1e-6)
        assert float(sol.c(0.0)) == pytest.approx(quad_c(p, sol.abar_inf), abs=1e-10)
        assert float(sol.c(2.5)) == pytest.approx(quad_c(p, sol.abar_inf, 2.5), abs=1e-10)
        assert abs(float(sol.c(300.0))) < 1e-20


def test_c_infinite_table_sigma(fig1):
    p = fig1.replace(sigma=Table.from_pairs([(0.0, 0.3), (2.0, 0.1), (5.0, 0.2)]))
    abar = solve_abar_infinite(p)
    c_fn = solve_c_infinite(p, abar)
    for t0 in (0.0, 1.0, 4.0, 8.0):
        assert float(c_fn(t0)) == pytest.approx(quad_c(p, abar, t0), abs=1e-9)


def test_finite_c_converges_to_infinite(fig1_damped):
    vc = solve_finite(fig1_damped, 80.0, 8000)
    assert vc.cval[0] == pytest.approx(float(solve_infinite(fig1_damped).c(0.0)), abs=1e-6)


def test_assemble_value():
    av = assemble_value(0.25, 0.0, 0.0, 0.5)
    assert np.allclose(av.A, [[0.25, 0.5], [0.5, 0.0]])
    av = assemble_value(ABAR_INF, 0.0, -0.1, 0.5)
    assert av.A[1, 1] == pytest.approx(-0.474360, abs=1e-6)
    # relation A12 = gamma * A22 + 1/2
    assert av.A[0, 1] == pytest.approx(0.5 * av.A[1, 1] + 0.5)
    assert np.all(av.B == 0.0)


def test_value_function(fig1):
    sol = solve_infinite(fig1)
    av = assemble_value(sol.abar_inf, 0.0, float(sol.c(0.0)), fig1.gamma)
    assert value_function(av, (5.0, 0.0)) == pytest.approx(3.13701, abs=1e-4)
    assert value_function(av, (0.0, 0.0)) == av.C
    quiet = solve_finite(fig1.replace(sigma=Constant(0.0)), 5.0, 100)
    assert value_function(quiet.at(0), (0.0, 0.0)) == 0.0


def test_feedback_coefficients(fig1):
    fb = feedback_coefficients(fig1, ABAR_INF, 0.0)
    assert np.allclose(fb.ia_over_a, [-0.383974, 1.232052], atol=1e-5)
    assert fb.coef == pytest.approx(0.616026, abs=1e-6)
    assert fb.kappa == pytest.approx(0.268782, abs=1e-6)
    assert fb.ib_over_a == 0.0


def test_feedback_against_discrete_program(fig1):
    # the discrete I^A_n / a_n far from the horizon converges to the continuous rule as dt -> 0
    fb = feedback_coefficients(fig1, solve_abar_infinite(fig1), 0.0)
    dp = dp_backward(DPConfig(fig1, 40.0, 0.001))
    assert np.allclose(dp.I_A[0] / dp.a[0], fb.ia_over_a, atol=2e-3)


@given(g=st.floats(0.05, 3.0), phi=st.floats(0.02, 1.5), rho=st.floats(0.0, 2.0), lam=st.floats(0.0, 1.5),
       T=st.floats(0.5, 30.0))
@settings(max_examples=40, deadline=None)
def test_abar_stays_in_range(g, phi, rho, lam, T):
    p = ModelParams(g, phi, Constant(rho), Constant(lam), Constant(0.2), 1.0)
    _, abar = solve_abar_finite(p, T, 400)
    assert np.all(abar >= -1e-12) and np.all(abar <= g / 2 + 1e-12)
    root = solve_abar_infinite(p)
    assert 0.0 <= root <= g / 2 + 1e-12
    assert abs(float(abar_driver(p, 0.0, root))) < 1e-10


@given(g=st.floats(0.05, 3.0), phi=st.floats(0.02, 1.5), rho=st.floats(0.0, 2.0), lam=st.floats(0.0, 1.5),
       sig=st.floats(0.0, 1.0))
@settings(max_examples=40, deadline=None)
def test_c_nonpositive(g, phi, rho, lam, sig):
    # h <= 0 because abar <= gamma/2, so every C is nonpositive
    p = ModelParams(g, phi, Constant(rho), Constant(lam), Constant(sig), 1.0)
    vc = solve_finite(p, 3.0, 300)
    assert np.all(vc.cval <= 1e-15)
    assert float(solve_infinite(p).c(0.0)) <= 0.0
