import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from structpop.errors import ConfigurationError, ModelError
from structpop.numerics import SizeGrid
from structpop.rates import (
    FAMILIES,
    VitalRates,
    custom_surface,
    fd_step,
    make_fertility,
    make_rate_surface,
    validate_rates,
)

E = math.e

# one admissible parameter set per registered family
FAMILY_SAMPLES = {
    "constant": {"c": 1.3},
    "affine_s": {"c0": 1.0, "c1": 2.0},
    "affine_P": {"c0": 0.5, "c1": 0.25},
    "exp_decay_P": {"a": 7.389056, "k": 1.0},
    "logistic_P": {"a": 3.0, "k": 2.0, "P0": 1.0},
    "gaussian_s": {"a": 2.0, "center": 0.4, "width": 0.3},
    "product": {"left": {"family": "affine_s", "params": {"c0": 1.0, "c1": 0.5}},
                "right": {"family": "exp_decay_P", "params": {"a": 1.0, "k": 0.2}}},
}


def baseline_rates(a=E ** 2):
    c1 = make_rate_surface("constant", {"c": 1.0})
    beta = make_fertility("separable", {
        "beta1": {"family": "exp_decay_P", "params": {"a": a, "k": 1.0}},
        "beta2": {"family": "constant", "params": {"c": 1.0}}})
    return VitalRates(c1, c1, beta, m=1.0)


def test_registry_covers_samples():
    assert set(FAMILY_SAMPLES) == set(FAMILIES)


def test_constant_family():
    v = make_rate_surface("constant", {"c": 1.0})
    s, P = np.linspace(0, 1, 5), np.linspace(0, 10, 5)
    assert np.all(v.value(s, P) == 1.0)
    for d in (v.ds, v.dP, v.dsP):
        assert np.all(d(s, P) == 0.0)


def test_exp_decay_family():
    v = make_rate_surface("exp_decay_P", {"a": 7.389056, "k": 1.0})
    P = np.array([0.0, 0.5, 3.0])
    np.testing.assert_allclose(v.value(0.2, P), 7.389056 * np.exp(-P))
    np.testing.assert_allclose(v.dP(0.2, P), -v.value(0.2, P))


def test_affine_s_family():
    v = make_rate_surface("affine_s", {"c0": 1, "c1": 2})
    assert v.value(0.25, 3.0) == pytest.approx(1.5)
    assert v.ds(0.25, 3.0) == pytest.approx(2.0)


def test_unknown_family_and_missing_param_name_the_field():
    with pytest.raises(ConfigurationError) as err:
        make_rate_surface("cubic", {})
    assert err.value.field == "family"
    with pytest.raises(ConfigurationError) as err:
        make_rate_surface("affine_s", {"c0": 1.0})
    assert err.value.field == "c1"


@pytest.mark.parametrize("family", sorted(FAMILY_SAMPLES))
def test_family_derivatives_match_finite_differences(family):
    v = make_rate_surface(family, FAMILY_SAMPLES[family])
    rng = np.random.default_rng(7)
    s, P = rng.uniform(0, 1, 100), rng.uniform(0, 100, 100)
    hs, hP = fd_step(s), fd_step(P)
    fd_s = (v.value(s + hs, P) - v.value(s - hs, P)) / (2 * hs)
    fd_P = (v.value(s, P + hP) - v.value(s, P - hP)) / (2 * hP)
    fd_sP = (v.ds(s, P + hP) - v.ds(s, P - hP)) / (2 * hP)
    for analytic, fd in ((v.ds(s, P), fd_s), (v.dP(s, P), fd_P), (v.dsP(s, P), fd_sP)):
        np.testing.assert_allclose(analytic, fd, rtol=1e-4, atol=1e-7)


def test_custom_surface_finite_difference_fallback():
    v = custom_surface(lambda s, P: np.sin(s) * np.exp(-0.3 * P))
    s, P = 0.4, 2.0
    assert v.ds(s, P) == pytest.approx(math.cos(s) * math.exp(-0.6), rel=1e-6)
    assert v.dP(s, P) == pytest.approx(-0.3 * math.sin(s) * math.exp(-0.6), rel=1e-6)
    assert v.dsP(s, P) == pytest.approx(-0.3 * math.cos(s) * math.exp(-0.6), rel=1e-5)


# ---------------------------------------------------------------- fertility

def test_separable_baseline_kernel():
    k = baseline_rates().beta
    assert k.separable
    for P in (0.0, 1.0, 4.0):
        np.testing.assert_allclose(k.b(0.3, 0.7, P), E ** 2 * math.exp(-P))
        np.testing.assert_allclose(k.b_P(0.3, 0.7, P), -E ** 2 * math.exp(-P))


def test_general_zero_kernel():
    k = make_fertility("general", {"b": lambda s, y, P: 0.0 * s * y})
    g = SizeGrid.uniform(1.0, 10)
    assert np.all(k.matrix(g, 1.0) == 0)
    assert np.all(k.apply(np.ones(10), g, 1.0) == 0)


def test_separable_with_linear_beta2():
    m = 2.0
    k = make_fertility("separable", {
        "beta1": {"family": "exp_decay_P", "params": {"a": 3.0, "k": 0.5}},
        "beta2": {"family": "affine_s", "params": {"c0": 0.0, "c1": 1 / m}}}, m=m)
    s, y, P = 0.4, 1.5, 2.0
    assert k.b(s, y, P) == pytest.approx(3.0 * math.exp(-1.0) * y / m)


def test_negative_fertility_is_a_model_error():
    with pytest.raises(ModelError):
        make_fertility("separable", {
            "beta1": {"family": "affine_s", "params": {"c0": 1.0, "c1": -3.0}},
            "beta2": {"family": "constant", "params": {"c": 1.0}}})


def test_beta2_must_not_depend_on_P():
    with pytest.raises(ConfigurationError):
        make_fertility("separable", {
            "beta1": {"family": "constant", "params": {"c": 1.0}},
            "beta2": {"family": "exp_decay_P", "params": {"a": 1.0, "k": 1.0}}})


def test_apply_matches_dense_quadrature():
    k = make_fertility("general", {"terms": [
        {"beta1": {"family": "gaussian_s", "params": {"a": 1.0, "center": 0.2, "width": 0.1}},
         "beta2": {"family": "affine_s", "params": {"c0": 0.5, "c1": 1.0}}},
        {"beta1": {"family": "exp_decay_P", "params": {"a": 2.0, "k": 0.3}},
         "beta2": {"family": "constant", "params": {"c": 1.0}}}]})
    g = SizeGrid.uniform(1.0, 30)
    u = np.random.default_rng(1).uniform(0, 1, 30)
    for deriv in (False, True):
        dense = k.matrix(g, 1.7, deriv) @ (g.weights * u)
        np.testing.assert_allclose(k.apply(u, g, 1.7, deriv), dense, rtol=1e-12)


@settings(max_examples=40)
@given(a=st.floats(0.1, 10), kk=st.floats(-1, 2), c0=st.floats(0, 2), c1=st.floats(0, 2),
       pts=st.lists(st.floats(0, 1), min_size=4, max_size=4), P=st.floats(0, 5))
def test_separable_kernel_has_rank_one(a, kk, c0, c1, pts, P):
    k = make_fertility("separable", {
        "beta1": {"family": "exp_decay_P", "params": {"a": a, "k": kk}},
        "beta2": {"family": "affine_s", "params": {"c0": c0, "c1": c1}}}, P_max=5.0)
    s, s2, y, y2 = pts
    lhs = k.b(s, y, P) * k.b(s2, y2, P)
    rhs = k.b(s, y2, P) * k.b(s2, y, P)
    assert abs(lhs - rhs) <= 1e-12 * max(abs(lhs), abs(rhs), 1e-300)


# --------------------------------------------------------------- validation

def test_validate_baseline_all_flags_pass():
    r = baseline_rates()
    rep = validate_rates(r, SizeGrid.uniform(1.0, 50), P_probe=[0.5, 1.0, 2.0])
    assert rep.mandatory_ok and rep.derivatives_ok and rep.irreducible
    for entry in rep.irreducibility:
        exact = entry["eps"] ** 2 * E ** 2 * math.exp(-entry["P"])
        assert entry["integral"] == pytest.approx(exact, rel=1e-10)


def test_validate_zero_fertility_not_irreducible():
    c1 = make_rate_surface("constant", {"c": 1.0})
    r = VitalRates(c1, c1, make_fertility("general", {"b": lambda s, y, P: 0.0 * s * y}))
    rep = validate_rates(r, SizeGrid.uniform(1.0, 20), P_probe=[1.0])
    assert rep.mandatory_ok
    assert not rep.irreducible
    assert all(not e["positive"] for e in rep.irreducibility)


def test_validate_flags_negative_growth_with_location():
    r = baseline_rates().replace(gamma=make_rate_surface("affine_s", {"c0": 1.0, "c1": -2.0}))
    rep = validate_rates(r, SizeGrid.uniform(1.0, 20), P_probe=[1.0])
    assert not rep.gamma_positive and not rep.mandatory_ok
    s, P = rep.gamma_violation
    assert 1.0 - 2.0 * s < 0
    assert rep.gamma_min == pytest.approx(-1.0)


def test_validate_is_deterministic_for_a_seed():
    r = baseline_rates()
    g = SizeGrid.uniform(1.0, 20)
    a = validate_rates(r, g, [1.0], seed=3).to_dict()
    b = validate_rates(r, g, [1.0], seed=3).to_dict()
    assert a == b
