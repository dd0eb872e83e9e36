import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from structpop.equilibrium import (
    assemble_B_P,
    check_existence_conditions,
    dominant_eigenvalue,
    net_reproduction,
    polish_equilibrium,
    solve_equilibrium,
    solve_equilibrium_general,
    solve_equilibrium_separable,
    spectral_bound,
    stationary_residual,
    survival_factor,
)
from structpop.errors import ModelError, RouteError, SpectralAnomalyError
from structpop.numerics import SizeGrid, integrate
from structpop.rates import VitalRates, make_fertility, make_rate_surface

E = math.e


def C(c):
    return {"family": "constant", "params": {"c": c}}


def model(gamma=C(1.0), mu=C(1.0), beta1=None, beta2=C(1.0), kind="separable", m=1.0):
    beta1 = beta1 or {"family": "exp_decay_P", "params": {"a": E ** 2, "k": 1.0}}
    comps = ({"beta1": beta1, "beta2": beta2} if kind == "separable"
             else {"terms": [{"beta1": beta1, "beta2": beta2}]})
    return VitalRates(make_rate_surface(**gamma), make_rate_surface(**mu),
                      make_fertility(kind, comps, m=m), m=m)


@pytest.fixture(scope="module")
def fine():
    return SizeGrid.uniform(1.0, 1000)


# -------------------------------------------------------- survival and R

def test_survival_factor_examples(fine):
    assert survival_factor(model(), fine, 1.0)[-1] == pytest.approx(math.exp(-1), abs=1e-3)
    np.testing.assert_allclose(survival_factor(model(), fine, 1.0), np.exp(-fine.midpoints),
                               rtol=1e-6)
    assert np.all(survival_factor(model(mu=C(0.0)), fine, 2.0) == 1.0)
    grow = model(gamma={"family": "affine_s", "params": {"c0": 1.0, "c1": 1.0}}, mu=C(0.0))
    np.testing.assert_allclose(survival_factor(grow, fine, 0.0), 1 / (1 + fine.midpoints),
                               rtol=1e-6)


def test_survival_factor_rejects_small_growth(fine):
    r = model(gamma={"family": "affine_s", "params": {"c0": 1.0, "c1": -2.0}})
    with pytest.raises(ModelError):
        survival_factor(r, fine, 0.0)


def test_net_reproduction_closed_form(fine):
    r = model()
    for P in (0.0, 0.5, 1.0, 3.0):
        assert net_reproduction(r, fine, P) == pytest.approx(math.exp(1 - P), rel=1e-5)


def test_net_reproduction_zero_and_linear(fine):
    assert net_reproduction(model(beta1=C(0.0)), fine, 1.0) == 0.0
    a = net_reproduction(model(beta1=C(1.5)), fine, 1.0)
    b = net_reproduction(model(beta1=C(3.0)), fine, 1.0)
    assert b == pytest.approx(2 * a, rel=1e-13)


def test_net_reproduction_needs_separable_kernel(fine):
    with pytest.raises(RouteError):
        net_reproduction(model(kind="general"), fine, 1.0)


# ------------------------------------------------------ separable route

def test_separable_baseline_closed_form(fine):
    (eq,) = solve_equilibrium_separable(model(), fine)
    assert eq.P_star == pytest.approx(1.0, abs=1e-6)
    assert eq.P_bar_star == pytest.approx(1.0, abs=1e-5)
    exact = E * (1 - np.exp(-fine.midpoints))
    assert np.abs(eq.p_star - exact).max() <= 1e-4
    assert eq.route == "separable"
    assert eq.residual_total <= 1e-8 * eq.P_star
    assert np.all(eq.p_star >= 0)


def test_separable_scaled_fertility(fine):
    r = model(beta1={"family": "exp_decay_P", "params": {"a": E ** 3, "k": 1.0}})
    (eq,) = solve_equilibrium_separable(r, fine)
    assert eq.P_star == pytest.approx(2.0, abs=1e-6)


def test_separable_without_fertility_finds_nothing(fine):
    assert solve_equilibrium_separable(model(beta1=C(0.0)), fine) == []


def test_first_cell_tends_to_zero():
    vals = [solve_equilibrium_separable(model(), SizeGrid.uniform(1.0, n))[0].p_star[0]
            for n in (50, 100, 200)]
    assert vals[0] > vals[1] > vals[2] > 0


def test_stationary_residual_shrinks_with_h():
    res = [solve_equilibrium_separable(model(), SizeGrid.uniform(1.0, n))[0].residual_stationary
           for n in (100, 200, 400)]
    assert res[0] > res[1] > res[2]
    assert res[2] <= 10 * (1 / 400)


@settings(max_examples=15, deadline=None)
@given(logA=st.floats(1.2, 4.0), k=st.floats(0.3, 2.0), mu0=st.floats(0.2, 2.0))
def test_separable_profile_is_a_fixed_point(logA, k, mu0):
    # R(P) = a e^{-kP} * I(mu0) with I decreasing in mu0; pick a so P* exists
    g = SizeGrid.uniform(1.0, 200)
    r = model(mu=C(mu0), beta1={"family": "exp_decay_P", "params": {"a": math.exp(logA), "k": k}})
    eqs = solve_equilibrium_separable(r, g)
    for eq in eqs:
        assert net_reproduction(r, g, eq.P_star) == pytest.approx(1.0, abs=1e-10)
        assert integrate(eq.p_star, g) == pytest.approx(eq.P_star, rel=1e-10)
        assert np.all(eq.p_star >= 0)


# ------------------------------------------------------------- operator

def test_pure_transport_matrix_is_upwind_shift():
    g = SizeGrid.uniform(1.0, 10)
    M = assemble_B_P(model(mu=C(0.0), beta1=C(0.0)), g, 0.5).entries
    h = g.h
    expected = np.diag(np.full(10, -1 / h)) + np.diag(np.full(9, 1 / h), -1)
    np.testing.assert_allclose(M, expected, rtol=1e-12)
    M2 = assemble_B_P(model(mu=C(0.7), beta1=C(0.0)), g, 0.5).entries
    np.testing.assert_allclose(M2 - M, -0.7 * np.eye(10), atol=1e-12)


def test_negative_growth_is_model_error():
    r = model(gamma={"family": "affine_s", "params": {"c0": 1.0, "c1": -2.0}})
    with pytest.raises(ModelError):
        assemble_B_P(r, SizeGrid.uniform(1.0, 10), 0.0)


@settings(max_examples=25, deadline=None)
@given(c0=st.floats(0.2, 3), c1=st.floats(0, 2), mu0=st.floats(0, 3), a=st.floats(0.5, 10),
       k=st.floats(-0.5, 2), P=st.floats(0, 5))
def test_operator_is_metzler_with_real_dominant_eigenvalue(c0, c1, mu0, a, k, P):
    r = model(gamma={"family": "affine_s", "params": {"c0": c0, "c1": c1}}, mu=C(mu0),
              beta1={"family": "exp_decay_P", "params": {"a": a, "k": k}},
              beta2={"family": "affine_s", "params": {"c0": 0.1, "c1": 1.0}})
    g = SizeGrid.uniform(1.0, 40)
    M = assemble_B_P(r, g, P).entries
    off = M - np.diag(np.diag(M))
    assert off.min() >= -1e-12
    lam, v = dominant_eigenvalue(r, g, P)
    assert np.all(v >= -1e-9)
    assert integrate(v, g) == pytest.approx(1.0)


def test_complex_dominant_eigenvalue_is_an_anomaly(monkeypatch):
    import structpop.equilibrium as eqm
    fake = np.array([-1.0 + 0.5j, -1.0 - 0.5j, -3.0])
    monkeypatch.setattr(eqm, "dense_eigen", lambda A: (fake, np.ones(3, complex) / 3))
    with pytest.raises(SpectralAnomalyError) as err:
        dominant_eigenvalue(model(), SizeGrid.uniform(1.0, 8), 1.0)
    assert len(err.value.spectrum_head) == 3


def test_dominant_eigenvalue_examples():
    g = SizeGrid.uniform(1.0, 200)
    lam1, _ = dominant_eigenvalue(model(), g, 1.0)
    lam1_fine, _ = dominant_eigenvalue(model(), SizeGrid.uniform(1.0, 400), 1.0)
    assert abs(lam1) <= 5e-2 and abs(lam1_fine) < abs(lam1)
    assert dominant_eigenvalue(model(), g, 3.0)[0] < 0
    lam0, _ = dominant_eigenvalue(model(mu=C(2.0), beta1=C(0.0)), g, 1.0)
    assert lam0 <= -2.0 + 10 * g.h


# -------------------------------------------------------- general route

@pytest.mark.slow
def test_general_route_agrees_with_separable():
    g = SizeGrid.uniform(1.0, 200)
    (eq,) = solve_equilibrium_general(model(), g)
    assert eq.P_star == pytest.approx(1.0, abs=2e-2)
    assert eq.route == "general" and eq.P_bar_star is None
    assert eq.residual_total <= 1e-8 * eq.P_star
    # exact discrete fixed point: B_{P*} p* = 0 up to the eigen-solver accuracy
    assert eq.residual_stationary <= 1e-8


def test_general_route_without_fertility_finds_nothing():
    g = SizeGrid.uniform(1.0, 50)
    assert solve_equilibrium_general(model(beta1=C(0.0)), g) == []


@pytest.mark.slow
def test_non_separable_kind_uses_general_route():
    r = model(kind="general", beta2={"family": "affine_s", "params": {"c0": 0.5, "c1": 0.5}})
    with pytest.raises(RouteError):
        solve_equilibrium(r, SizeGrid.uniform(1.0, 50), route="separable")
    coarse = solve_equilibrium(r, SizeGrid.uniform(1.0, 100))
    fine = solve_equilibrium(r, SizeGrid.uniform(1.0, 400))
    assert len(coarse) == len(fine) == 1
    assert coarse[0].route == "general"
    assert coarse[0].P_star == pytest.approx(fine[0].P_star, abs=2e-2)


def test_polish_moves_to_discrete_fixed_point():
    g = SizeGrid.uniform(1.0, 100)
    r = model()
    (sep,) = solve_equilibrium_separable(r, g)
    pol = polish_equilibrium(r, g, sep)
    assert abs(spectral_bound(r, g, pol.P_star)) <= 1e-9
    assert abs(pol.P_star - sep.P_star) <= 2e-2
    assert stationary_residual(r, g, pol.p_star) <= 1e-8


# ------------------------------------------------------------- conditions

def test_existence_conditions_baseline(fine):
    r = model()
    rep = check_existence_conditions(r, fine, beta_minus=r.beta, beta_plus=r.beta,
                                     P_minus=0.5, P_plus=2.0)
    lo = rep.entries["lower_comparison_integral"]
    hi = rep.entries["upper_comparison_integral"]
    assert lo["value"] == pytest.approx(math.exp(0.5), rel=1e-4) and lo["holds"]
    assert hi["value"] == pytest.approx(math.exp(-1.0), rel=1e-4) and hi["holds"]
    assert rep.holds("lower_kernel_dominated") and rep.holds("upper_kernel_dominates")
    assert rep.holds("fertility_exceeds_mortality_at_zero")
    assert rep.holds("beta1_mass_decays")
    # evaluated literally: int e^{-s} ds < m - 1 = 0 is false for m = 1
    assert rep.holds("survival_integral_below_m_minus_1") is False


def test_existence_conditions_zero_fertility(fine):
    r = model(beta1=C(0.0))
    rep = check_existence_conditions(r, fine, beta_minus=r.beta, P_minus=0.5)
    assert rep.holds("lower_comparison_integral") is False
    assert rep.holds("fertility_exceeds_mortality_at_zero") is False


def test_fertility_exceeds_zero_mortality():
    r = model(mu=C(0.0), beta1=C(1.0))
    rep = check_existence_conditions(r, SizeGrid.uniform(1.0, 50))
    assert rep.holds("fertility_exceeds_mortality_at_zero")
