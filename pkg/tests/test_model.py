import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from longliq import Constant, DampedExponential, ModelParams, Table
from longliq.model import (ParameterError, coefficient_from_spec, derived, eval_coefficients, load_params,
                           validate_params)


def test_fig1_derived_coefficients(fig1):
    for t in (0.0, 3.7, 100.0):
        dc = eval_coefficients(fig1, t)
        # independent evaluation of the definitions
        a = 0.5 * 0.7 + 0.1 + 0.2 * 0.5 / 2
        assert dc.a == pytest.approx(a) == pytest.approx(0.5)
        assert dc.b == pytest.approx(0.7 ** 2 / a) == pytest.approx(0.98)
        assert dc.c == pytest.approx(2 * 0.1 * 0.7 / a + 0.2) == pytest.approx(0.48)
        assert dc.d == pytest.approx(0.1 ** 2 / a - 0.1) == pytest.approx(-0.08)


def test_zero_lambda_kills_lambda_terms(fig1):
    dc = eval_coefficients(fig1.replace(lam=Constant(0.0)), 1.0)
    assert dc.d == 0.0
    assert dc.c == pytest.approx(0.2)


def test_damped_sigma_limits():
    s = DampedExponential(0.25, 0.2)
    assert s(0.0) == 0.25
    assert s(500.0) < 1e-40
    assert s(5.0) == pytest.approx(0.25 * math.exp(-1.0))


def test_derived_is_vectorised(fig1_damped):
    t = np.linspace(0, 10, 7)
    dc = derived(fig1_damped, t)
    assert np.shape(dc.sigma) == (7,)
    assert np.allclose(dc.sigma, 0.25 * np.exp(-0.2 * t))


def test_table_interpolates_and_extrapolates_flat():
    tab = Table.from_pairs([(0.0, 1.0), (2.0, 3.0), (4.0, 0.0)])
    assert tab(1.0) == pytest.approx(2.0)
    assert tab(3.0) == pytest.approx(1.5)
    assert tab(10.0) == 0.0
    assert np.array_equal(tab.knots(), [0.0, 2.0, 4.0])


def test_eval_rejects_bad_time(fig1):
    with pytest.raises(ValueError):
        eval_coefficients(fig1, -1.0)
    with pytest.raises(ValueError):
        eval_coefficients(fig1, float("nan"))


def test_validate_fig1_clean(fig1, fig1_damped):
    assert validate_params(fig1) == []
    assert validate_params(fig1_damped) == []


def test_validate_messages(fig1):
    assert "gamma must be positive" in validate_params(fig1.replace(gamma=0.0))
    assert "phi must be positive" in validate_params(fig1.replace(phi=0.0))
    bad = fig1.replace(lam=Table.from_pairs([(0.0, 0.1), (1.0, -0.1)]))
    assert "lambda must be nonnegative" in validate_params(bad)
    assert "rho must be nonnegative" in validate_params(fig1.replace(rho=Constant(-0.5)))


def test_coefficient_spec_errors():
    with pytest.raises(ParameterError):
        coefficient_from_spec("fast")
    with pytest.raises(ParameterError):
        coefficient_from_spec({"kind": "spline"})
    assert coefficient_from_spec({"kind": "constant", "value": 2}) == Constant(2.0)


def test_missing_keys():
    with pytest.raises(ParameterError, match="lambda"):
        ModelParams.from_dict({"gamma": 1, "phi": 1, "rho": 1, "sigma": 1, "x0": 1})


def test_load_toml_and_json(tmp_path, fig1_damped):
    toml = tmp_path / "p.toml"
    toml.write_text('gamma = 0.5\nphi = 0.2\nrho = 0.7\nlambda = 0.1\nx0 = 5.0\n'
                    '[sigma]\nkind = "damped_exponential"\nbase = 0.25\ndecay = 0.2\n'
                    '[run]\nT = 3.0\n')
    assert load_params(toml) == fig1_damped
    js = tmp_path / "p.json"
    js.write_text(json.dumps(fig1_damped.to_dict()))
    assert load_params(js) == fig1_damped


coef_st = st.one_of(
    st.floats(0.0, 3.0).map(Constant),
    st.tuples(st.floats(0.0, 3.0), st.floats(0.01, 2.0)).map(lambda p: DampedExponential(*p)),
    st.lists(st.floats(0.0, 3.0), min_size=1, max_size=5).map(
        lambda v: Table.from_pairs([(float(i), x) for i, x in enumerate(v)])),
)


@given(g=st.floats(0.01, 5.0), phi=st.floats(0.01, 2.0), rho=coef_st, lam=coef_st, sig=coef_st,
       x0=st.floats(-10, 10))
@settings(max_examples=60, deadline=None)
def test_dict_round_trip(g, phi, rho, lam, sig, x0):
    p = ModelParams(g, phi, rho, lam, sig, x0, 0.3)
    assert ModelParams.from_dict(json.loads(json.dumps(p.to_dict()))) == p


@given(g=st.floats(0.01, 5.0), phi=st.floats(0.01, 2.0), rho=st.floats(0, 3), lam=st.floats(0, 3),
       t=st.floats(0, 50))
@settings(max_examples=100, deadline=None)
def test_a_positive_and_discriminant(g, phi, rho, lam, t):
    dc = eval_coefficients(ModelParams(g, phi, Constant(rho), Constant(lam), Constant(0.1), 1.0), t)
    assert dc.a > 0
    assert dc.b >= 0
    # a real stationary root always exists: c^2 - 4bd >= 0 since d <= 0 whenever a >= lam
    assert dc.c ** 2 - 4 * dc.b * dc.d >= -1e-12
