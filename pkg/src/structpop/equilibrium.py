"""Positive equilibria of the size-structured model.

Two routes:

* separable fertility beta = beta1(s, P) * beta2(y): root of the net
  reproduction function R(P) = 1 and the closed-form stationary profile;
* any fertility: zero of the dominant eigenvalue of the discretised
  stationary operator B_P, whose Perron eigenvector (scaled to total mass P)
  is the equilibrium.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BracketError, ModelError, RouteError, SpectralAnomalyError
from .numerics import (
    SizeGrid,
    bracketed_root,
    cumulative_integral,
    dense_eigen,
    integrate,
    scan_sign_changes,
    volterra,
)
from .rates import FertilityKernel, VitalRates

__all__ = [
    "EquilibriumSolution",
    "OperatorMatrix",
    "ConditionsReport",
    "survival_factor",
    "net_reproduction",
    "solve_equilibrium_separable",
    "check_existence_conditions",
    "assemble_B_P",
    "spectral_bound",
    "dominant_eigenvalue",
    "solve_equilibrium_general",
    "solve_equilibrium",
    "polish_equilibrium",
    "scan_table",
    "transport_part",
    "stationary_residual",
]

N_SCAN = 64


@dataclass(eq=False)
class EquilibriumSolution:
    P_star: float
    p_star: np.ndarray
    P_bar_star: float | None
    route: str
    residual_stationary: float
    residual_total: float
    grid: SizeGrid

    def to_dict(self, profile: bool = False) -> dict:
        out = {"P_star": self.P_star, "P_bar_star": self.P_bar_star, "route": self.route,
               "residual_stationary": self.residual_stationary,
               "residual_total": self.residual_total, "grid": self.grid.describe()}
        if profile:
            out["s"] = self.grid.midpoints.tolist()
            out["p_star"] = self.p_star.tolist()
        return out


@dataclass(eq=False)
class OperatorMatrix:
    P: float
    entries: np.ndarray


def _gamma(rates: VitalRates, s, P):
    g = np.asarray(rates.gamma.value(s, P), dtype=float)
    if np.any(~np.isfinite(g)) or g.min() < rates.gamma_floor:
        i = int(np.argmin(np.nan_to_num(g, nan=-np.inf)))
        where = float(np.ravel(np.broadcast_to(s, g.shape))[i])
        raise ModelError(f"growth rate {g.ravel()[i]:.3g} below floor {rates.gamma_floor:g} "
                         f"at s={where:.4g}, P={P:.4g}", point=(where, P))
    return g


def _require_separable(rates: VitalRates, what: str):
    if not rates.beta.separable:
        raise RouteError(f"{what} needs a separable fertility kernel; "
                         f"use the general (operator spectrum) route instead")


def _growth_exponent(rates: VitalRates, grid: SizeGrid, P: float) -> np.ndarray:
    """Cumulative integral of (gamma_s + mu)/gamma from 0 to each midpoint."""
    s = grid.midpoints
    g = _gamma(rates, s, P)
    return cumulative_integral((rates.gamma.ds(s, P) + rates.mu.value(s, P)) / g, grid)


def survival_factor(rates: VitalRates, grid: SizeGrid, P: float) -> np.ndarray:
    """F(s, P) = exp(-int_0^s (gamma_s + mu)/gamma) on the midpoints."""
    if P < 0:
        raise ValueError("P must be nonnegative")
    return np.exp(-_growth_exponent(rates, grid, P))


def net_reproduction(rates: VitalRates, grid: SizeGrid, P: float) -> float:
    """Expected lifetime offspring of one newborn at fixed population size P."""
    _require_separable(rates, "net_reproduction")
    s = grid.midpoints
    g = _gamma(rates, s, P)
    mort = cumulative_integral(rates.mu.value(s, P) / g, grid)
    inner = volterra(rates.beta.beta1.value(s, P), mort, grid)
    return float(integrate(rates.beta.beta2_values(s) / g * inner, grid))


def _separable_profile(rates, grid, P):
    """Shape F(s) int_0^s beta1/(F gamma) of the stationary density."""
    s = grid.midpoints
    g = _gamma(rates, s, P)
    return volterra(rates.beta.beta1.value(s, P) / g, _growth_exponent(rates, grid, P), grid)


def solve_equilibrium_separable(rates: VitalRates, grid: SizeGrid,
                                P_range: tuple[float, float] | None = None,
                                tol: float = 1e-12) -> list[EquilibriumSolution]:
    """All equilibria with R(P*) = 1 inside ``P_range``, ascending in P*."""
    _require_separable(rates, "solve_equilibrium_separable")
    lo, hi = P_range or (1e-3, rates.P_max)
    if not 0 < lo < hi:
        raise ValueError("need 0 < lo < hi")

    def excess(P):
        return net_reproduction(rates, grid, P) - 1.0

    out = []
    for a, b in scan_sign_changes(excess, lo, hi, N_SCAN):
        P = bracketed_root(excess, a, b, tol)
        shape = _separable_profile(rates, grid, P)
        P_bar = P / float(integrate(shape, grid))
        out.append(_finish(rates, grid, P, P_bar * shape, P_bar, "separable"))
    return out


def _finish(rates, grid, P, p, P_bar, route):
    return EquilibriumSolution(
        P_star=float(P), p_star=p, P_bar_star=None if P_bar is None else float(P_bar),
        route=route,
        residual_stationary=stationary_residual(rates, grid, p, P),
        residual_total=abs(float(integrate(p, grid)) - P), grid=grid)


def stationary_residual(rates: VitalRates, grid: SizeGrid, p, P: float | None = None) -> float:
    """1-norm of the discrete stationary operator applied to ``p``."""
    if P is None:
        P = float(integrate(p, grid))
    return float(integrate(np.abs(assemble_B_P(rates, grid, P).entries @ p), grid))


# ------------------------------------------------------------- operator B_P

def transport_part(rates: VitalRates, grid: SizeGrid, P: float) -> tuple[np.ndarray, np.ndarray]:
    """Diagonal and subdiagonal of the upwind transport-plus-mortality matrix.

    Row i holds -(gamma(e_{i+1}) u_i - gamma(e_i) u_{i-1}) / w_i - mu(s_i) u_i
    with zero inflow at s = 0 and free outflow at s = m.
    """
    ge = _gamma(rates, grid.edges, P)
    w = grid.weights
    diag = -ge[1:] / w - rates.mu.value(grid.midpoints, P)
    sub = ge[1:-1] / w[1:]
    return diag, sub


def assemble_B_P(rates: VitalRates, grid: SizeGrid, P: float,
                 kernel: FertilityKernel | None = None) -> OperatorMatrix:
    """Discretised stationary operator at frozen population size ``P``.

    ``kernel`` overrides the model fertility (comparison arguments).
    """
    if P < 0:
        raise ValueError("P must be nonnegative")
    kernel = kernel or rates.beta
    diag, sub = transport_part(rates, grid, P)
    M = kernel.matrix(grid, P) * grid.weights[None, :]
    idx = np.arange(grid.n_cells)
    M[idx, idx] += diag
    M[idx[1:], idx[:-1]] += sub
    return OperatorMatrix(float(P), M)


def spectral_bound(rates: VitalRates, grid: SizeGrid, P: float,
                   kernel: FertilityKernel | None = None) -> float:
    """Largest real part in the spectrum of the discretised B_P."""
    vals = np.linalg.eigvals(assemble_B_P(rates, grid, P, kernel).entries)
    return float(vals.real.max())


def dominant_eigenvalue(rates: VitalRates, grid: SizeGrid, P: float,
                        kernel: FertilityKernel | None = None) -> tuple[float, np.ndarray]:
    """Perron eigenvalue of the discretised B_P and its eigenvector (unit integral)."""
    vals, v = dense_eigen(assemble_B_P(rates, grid, P, kernel).entries)
    k = int(np.argmax(vals.real))
    lam = vals[k]
    if abs(lam.imag) > 1e-8 or np.iscomplexobj(v):
        head = vals[np.argsort(-vals.real)[:6]]
        raise SpectralAnomalyError(
            f"dominant eigenvalue {lam:.6g} of B_P at P={P:.6g} is not real",
            spectrum_head=[complex(z) for z in head])
    total = float(integrate(v, grid))
    if total != 0.0:
        v = v / total
    return float(lam.real), v


def solve_equilibrium_general(rates: VitalRates, grid: SizeGrid,
                              P_range: tuple[float, float] | None = None,
                              tol: float = 1e-11) -> list[EquilibriumSolution]:
    """Equilibria as zeros of P -> s(B_P), ascending in P*."""
    lo, hi = P_range or (1e-3, rates.P_max)
    if not 0 < lo < hi:
        raise ValueError("need 0 < lo < hi")

    def bound(P):
        return spectral_bound(rates, grid, P)

    out = []
    for a, b in scan_sign_changes(bound, lo, hi, N_SCAN):
        P = bracketed_root(bound, a, b, tol)
        _, v = dominant_eigenvalue(rates, grid, P)
        out.append(_finish(rates, grid, P, P * v, None, "general"))
    return out


def polish_equilibrium(rates: VitalRates, grid: SizeGrid, eq: EquilibriumSolution,
                       tol: float = 1e-11) -> EquilibriumSolution:
    """The discrete fixed point of the upwind scheme closest to ``eq``.

    Any route's solution is a consistent approximation; the simulator,
    however, relaxes to the zero of P -> s(B_P) on its own grid. Growth
    rates are measured against that point, so it is located here by
    widening a bracket around ``eq.P_star``.
    """
    def bound(P):
        return spectral_bound(rates, grid, P)

    P0 = eq.P_star
    d = max(1e-3 * P0, 1e-9)
    for _ in range(60):
        lo, hi = max(P0 - d, 0.5 * P0), P0 + d
        if bound(lo) * bound(hi) <= 0:
            break
        d *= 2
    else:
        raise BracketError(f"no discrete fixed point found near P={P0:.6g}")
    P = bracketed_root(bound, lo, hi, tol)
    _, v = dominant_eigenvalue(rates, grid, P)
    return _finish(rates, grid, P, P * v, None, "general")


def solve_equilibrium(rates: VitalRates, grid: SizeGrid, route: str = "auto",
                      P_range: tuple[float, float] | None = None) -> list[EquilibriumSolution]:
    if route == "auto":
        route = "separable" if rates.beta.separable else "general"
    if route == "separable":
        return solve_equilibrium_separable(rates, grid, P_range)
    if route == "general":
        return solve_equilibrium_general(rates, grid, P_range)
    raise RouteError(f"unknown equilibrium route {route!r}")


def scan_table(rates: VitalRates, grid: SizeGrid, route: str = "auto",
               P_range: tuple[float, float] | None = None, n: int = N_SCAN) -> list[dict]:
    """The R(P) - 1 or s(B_P) samples used to bracket equilibria (diagnostics)."""
    if route == "auto":
        route = "separable" if rates.beta.separable else "general"
    lo, hi = P_range or (1e-3, rates.P_max)
    rows = []
    for P in np.geomspace(lo, hi, n):
        if route == "separable":
            rows.append({"P": float(P), "R_minus_1": net_reproduction(rates, grid, P) - 1.0})
        else:
            rows.append({"P": float(P), "spectral_bound": spectral_bound(rates, grid, P)})
    return rows


# ------------------------------------------------------ existence conditions

@dataclass
class ConditionsReport:
    entries: dict

    def holds(self, name: str) -> bool | None:
        e = self.entries.get(name)
        return None if e is None else e["holds"]

    def to_dict(self) -> dict:
        return self.entries


def _lemma_integral(rates, grid, kernel: FertilityKernel, beta2_kernel: FertilityKernel, P):
    """int_0^m beta2(s) int_0^s beta1(y)/gamma(y) exp(-int_y^s (gamma_s+mu)/gamma) dy ds."""
    s = grid.midpoints
    g = _gamma(rates, s, P)
    inner = volterra(kernel.beta1.value(s, P) / g, _growth_exponent(rates, grid, P), grid)
    return float(integrate(beta2_kernel.beta2_values(s) * inner, grid))


def check_existence_conditions(rates: VitalRates, grid: SizeGrid,
                               beta_minus: FertilityKernel | None = None,
                               beta_plus: FertilityKernel | None = None,
                               P_minus: float | None = None, P_plus: float | None = None,
                               n_lattice: int = 41) -> ConditionsReport:
    """Evaluate the sufficient conditions for a positive equilibrium.

    Covers the separable existence hypotheses (fertility exceeding mortality
    at P = 0, the survival integral bound, decay of beta1 mass, a positive
    floor for gamma) and, when comparison kernels are given, the pointwise
    bounds and the two comparison integrals of the general existence result.
    Nothing is raised; each entry reports a value and whether it holds.
    """
    m = rates.m
    sl = np.linspace(0.0, m, n_lattice)
    S, Y = sl[:, None], sl[None, :]
    e = {}

    gap = rates.beta.b(S, Y, 0.0) - rates.mu.value(S, 0.0)
    e["fertility_exceeds_mortality_at_zero"] = {"value": float(gap.min()),
                                               "holds": bool(gap.min() > 0)}
    g0 = _gamma(rates, grid.midpoints, 0.0)
    surv = float(integrate(np.exp(-cumulative_integral(rates.mu.value(grid.midpoints, 0.0) / g0,
                                                       grid)), grid))
    # evaluated literally, including for m <= 1
    e["survival_integral_below_m_minus_1"] = {"value": surv, "bound": m - 1.0,
                                             "holds": bool(surv < m - 1.0)}
    P_lat = np.linspace(0.0, rates.P_max, n_lattice)
    gmin = min(float(np.min(rates.gamma.value(sl, P))) for P in P_lat)
    e["gamma_bounded_below"] = {"value": gmin, "holds": bool(gmin > 0)}
    if rates.beta.separable:
        mass0 = float(integrate(rates.beta.beta1.value(grid.midpoints, 0.0), grid))
        massP = float(integrate(rates.beta.beta1.value(grid.midpoints, rates.P_max), grid))
        ratio = massP / mass0 if mass0 > 0 else (0.0 if massP == 0 else np.inf)
        e["beta1_mass_decays"] = {"value": massP, "at_zero": mass0, "P": rates.P_max,
                                  "holds": bool(ratio < 1e-3)}

    if beta_minus is not None and P_minus is not None:
        dom = rates.beta.b(S, Y, P_minus) - beta_minus.b(S, Y, P_minus)
        e["lower_kernel_dominated"] = {"value": float(dom.min()), "P": P_minus,
                                       "holds": bool(dom.min() >= 0)}
        val = _lemma_integral(rates, grid, beta_minus, beta_minus, P_minus)
        e["lower_comparison_integral"] = {"value": val, "P": P_minus, "holds": bool(val > 1)}
    if beta_plus is not None and P_plus is not None:
        dom = beta_plus.b(S, Y, P_plus) - rates.beta.b(S, Y, P_plus)
        e["upper_kernel_dominates"] = {"value": float(dom.min()), "P": P_plus,
                                       "holds": bool(dom.min() >= 0)}
        val = _lemma_integral(rates, grid, beta_plus, beta_plus, P_plus)
        e["upper_comparison_integral"] = {"value": val, "P": P_plus, "holds": bool(val < 1)}
    return ConditionsReport(e)
