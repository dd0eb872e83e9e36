"""Linearised stability of a positive equilibrium.

The linearised generator splits into transport, local reaction, a rank-one
environmental feedback with coefficient rho_* and a recruitment term.  Two
independent spectral routes are provided: the eigenvalues of the assembled
(finite-volume) linearised matrix, and, for separable fertility, the zeros
of a 2x2 characteristic determinant located with the argument principle.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .equilibrium import (
    EquilibriumSolution,
    _gamma,
    _growth_exponent,
    assemble_B_P,
    transport_part,
)
from .errors import (
    AssemblyError,
    BoundaryZeroError,
    ConfigurationError,
    InconsistencyError,
    RangeError,
    RouteError,
)
from .numerics import (
    Rectangle,
    SizeGrid,
    bracketed_root,
    cumulative_integral,
    dense_eigen,
    integrate,
    locate_zeros,
    volterra,
)
from .numerics import _rightmost_index
from .rates import FertilityKernel, VitalRates
from .simulator import PopulationState, rhs

__all__ = [
    "LinearizedOperator",
    "ConditionCheck",
    "InstabilityCertificate",
    "SpectralReport",
    "compute_rho_star",
    "equilibrium_derivative",
    "assemble_linearized",
    "numerical_jacobian",
    "check_positivity_condition",
    "check_sufficient_stability",
    "K_instability",
    "check_instability",
    "char_determinant",
    "find_char_roots",
    "reduced_char_constant_beta2",
    "reduced_stability_condition",
    "check_comparison_stability",
    "transit_time",
    "spectral_verdict",
]

JACOBIAN_RTOL = 1e-5
ROUTE_DISAGREEMENT = 0.5


@dataclass(frozen=True)
class ConditionCheck:
    holds: bool
    margin: float

    def to_dict(self):
        return {"holds": self.holds, "margin": self.margin}


@dataclass(frozen=True)
class InstabilityCertificate:
    eps: float
    K0: float
    growth_root: float

    def to_dict(self):
        return {"eps": self.eps, "K0": self.K0, "growth_root": self.growth_root}


@dataclass(eq=False)
class LinearizedOperator:
    equilibrium: EquilibriumSolution
    rho_star: np.ndarray
    matrix: np.ndarray
    jacobian_error: float | None = None


# ------------------------------------------------------------ coefficients

def equilibrium_derivative(rates: VitalRates, eq: EquilibriumSolution, grid: SizeGrid):
    """p_*' recovered from the stationary equation rather than by differencing."""
    s, P, p = grid.midpoints, eq.P_star, eq.p_star
    g = _gamma(rates, s, P)
    births = rates.beta.apply(p, grid, P)
    return (births - (rates.gamma.ds(s, P) + rates.mu.value(s, P)) * p) / g


def compute_rho_star(rates: VitalRates, eq: EquilibriumSolution, grid: SizeGrid) -> np.ndarray:
    """Coefficient of the rank-one feedback: gamma_sP p + mu_P p + gamma_P p'."""
    if rates.gamma.dsP is None:
        raise ConfigurationError("growth rate family lacks the mixed derivative", field="gamma")
    s, P, p = grid.midpoints, eq.P_star, eq.p_star
    rho = (rates.gamma.dsP(s, P) + rates.mu.dP(s, P)) * p
    gP = rates.gamma.dP(s, P)
    if np.any(gP != 0):
        rho = rho + gP * equilibrium_derivative(rates, eq, grid)
    return np.asarray(rho, dtype=float)


def _discrete_rho(rates, eq, grid):
    # derivative in P of the upwind transport + mortality terms at p_*;
    # reduces to mu_P p_* when gamma does not depend on P
    P, p = eq.P_star, eq.p_star
    gPe = rates.gamma.dP(grid.edges, P) * np.ones(grid.edges.size)
    flux = np.concatenate([[0.0], gPe[1:] * p])
    return (flux[1:] - flux[:-1]) / grid.weights + rates.mu.dP(grid.midpoints, P) * p


def _fertility_sensitivity(rates, eq, grid):
    """G(s) = int beta_P(s, z, P_*) p_*(z) dz."""
    return rates.beta.apply(eq.p_star, grid, eq.P_star, derivative=True)


# ------------------------------------------------------------ matrix route

def numerical_jacobian(rates: VitalRates, grid: SizeGrid, p, columns=None) -> np.ndarray:
    """Central-difference Jacobian of the simulator right-hand side at ``p``.

    Returns the requested columns (all by default) as an (n, len(columns)) array.
    """
    p = np.asarray(p, dtype=float)
    cols = range(p.size) if columns is None else columns
    out = []
    for j in cols:
        h = 1e-6 * max(1.0, abs(p[j]))
        up, dn = p.copy(), p.copy()
        up[j] += h
        dn[j] -= h
        out.append((rhs(PopulationState(grid, up), rates)
                    - rhs(PopulationState(grid, dn), rates)) / (2 * h))
    return np.array(out).T


def assemble_linearized(rates: VitalRates, eq: EquilibriumSolution, grid: SizeGrid,
                        check_jacobian: bool | str = True, n_check: int = 12,
                        seed: int = 0) -> LinearizedOperator:
    """Linearised generator at ``eq`` on ``grid``.

    B_{P*} plus the rank-one column (G - rho) times the quadrature row, where
    G is the fertility sensitivity and rho the feedback coefficient in the
    upwind-consistent form.  ``check_jacobian`` compares against central
    differences of the simulator right-hand side: ``True`` checks the first,
    last and ``n_check`` random columns, ``"full"`` checks every column.
    """
    P = eq.P_star
    M = assemble_B_P(rates, grid, P).entries
    col = _fertility_sensitivity(rates, eq, grid) - _discrete_rho(rates, eq, grid)
    M = M + np.outer(col, grid.weights)
    err = None
    if check_jacobian:
        n = grid.n_cells
        if check_jacobian == "full" or n <= n_check + 2:
            cols = np.arange(n)
        else:
            rng = np.random.default_rng(seed)
            cols = np.unique(np.concatenate([[0, n - 1], rng.choice(n, n_check, replace=False)]))
        J = numerical_jacobian(rates, grid, eq.p_star, cols)
        diff = np.abs(M[:, cols] - J)
        scale = np.abs(J).max()
        err = float(diff.max() / scale) if scale > 0 else float(diff.max())
        if err > JACOBIAN_RTOL:
            i, k = np.unravel_index(np.argmax(diff), diff.shape)
            raise AssemblyError(f"linearised matrix differs from the numerical Jacobian "
                                f"by {err:.3g} (relative) at entry ({i}, {cols[k]})",
                                location=(int(i), int(cols[k])))
    return LinearizedOperator(eq, compute_rho_star(rates, eq, grid), M, err)


# ------------------------------------------------------- lattice conditions

def _net_recruitment(rates, eq, grid, kernel=None):
    """H(s, y) = beta(s, y, P_*) + G(s) - rho_*(s) on the midpoint lattice."""
    kernel = kernel or rates.beta
    G = _fertility_sensitivity(rates, eq, grid)
    rho = compute_rho_star(rates, eq, grid)
    return kernel.matrix(grid, eq.P_star) + (G - rho)[:, None]


def check_positivity_condition(rates, eq, grid) -> ConditionCheck:
    """Sufficient condition for a positive linearised semigroup: H >= 0."""
    H = _net_recruitment(rates, eq, grid)
    slack = float(H.min())
    scale = max(1.0, float(np.abs(H).max()))
    return ConditionCheck(bool(slack >= -1e-9 * scale), slack)


def check_sufficient_stability(rates, eq, grid) -> ConditionCheck:
    """Dissipativity bound: inf mu > sup_s |sup_y H(s, y)| makes the growth bound negative."""
    H = _net_recruitment(rates, eq, grid)
    bound = float(np.abs(H.max(axis=1)).max())
    mu_inf = float(np.min(rates.mu.value(grid.midpoints, eq.P_star)))
    margin = mu_inf - bound
    return ConditionCheck(bool(margin > 0), margin)


def transit_time(rates, eq, grid) -> np.ndarray:
    """Gamma(s) = int_0^s dy / gamma(y, P_*) at the midpoints."""
    return cumulative_integral(1.0 / _gamma(rates, grid.midpoints, eq.P_star), grid)


def _total_transit(rates, eq, grid) -> float:
    return float(integrate(1.0 / _gamma(rates, grid.midpoints, eq.P_star), grid))


def K_instability(rates, eq, grid, eps: float, lam: float) -> float:
    """Characteristic function of transport + reaction + eps * (total mass)."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    g = _gamma(rates, grid.midpoints, eq.P_star)
    expo = _growth_exponent(rates, grid, eq.P_star) + lam * transit_time(rates, eq, grid)
    try:
        return float(eps * integrate(volterra(1.0 / g, expo, grid), grid))
    except OverflowError as exc:
        raise RangeError(f"K overflows at lambda={lam}; keep lambda >= "
                         f"-1/Gamma(m) = {-1 / _total_transit(rates, eq, grid):.4g}") from exc


def check_instability(rates, eq, grid) -> InstabilityCertificate | None:
    """Certificate of linear instability, or None when the test is inconclusive."""
    eps = float(_net_recruitment(rates, eq, grid).min())
    if eps <= 0:
        return None
    K0 = K_instability(rates, eq, grid, eps, 0.0)
    if K0 <= 1:
        return None
    hi = 1.0
    while K_instability(rates, eq, grid, eps, hi) > 1:
        hi *= 2
    root = bracketed_root(lambda x: K_instability(rates, eq, grid, eps, x) - 1.0, 0.0, hi, 1e-12)
    return InstabilityCertificate(eps, K0, root)


# --------------------------------------------------- characteristic route

@dataclass(eq=False)
class _CharData:
    w: np.ndarray
    base: np.ndarray       # cumulative (gamma_s + mu)/gamma
    transit: np.ndarray    # cumulative 1/gamma
    forcing: np.ndarray    # rows: g and beta1/gamma
    beta2: np.ndarray

    def determinant(self, lam):
        lam = np.asarray(lam, dtype=complex)
        expo = self.base + lam[..., None] * self.transit
        V = volterra(self.forcing, expo[..., None, :], _WGrid(self.w))
        a1 = -V[..., 0, :] @ self.w
        a2 = -V[..., 1, :] @ self.w
        a3 = -V[..., 0, :] @ (self.w * self.beta2)
        a4 = -V[..., 1, :] @ (self.w * self.beta2)
        with np.errstate(over="ignore", invalid="ignore"):  # callers test finiteness
            return (1 + a1) * (1 + a4) - a2 * a3


class _WGrid:
    """Minimal grid stand-in so ``volterra`` can run on cached weights."""

    def __init__(self, w):
        self.weights = w
        self.n_cells = w.size


def _char_data(rates, eq, grid, kernel: FertilityKernel | None = None) -> _CharData:
    kernel = kernel or rates.beta
    if not kernel.separable:
        raise RouteError("the characteristic determinant needs a separable fertility kernel")
    s, P = grid.midpoints, eq.P_star
    gam = _gamma(rates, s, P)
    G = _fertility_sensitivity(rates, eq, grid)
    g = (G - compute_rho_star(rates, eq, grid)) / gam
    forcing = np.vstack([g, kernel.beta1.value(s, P) / gam])
    return _CharData(grid.weights, _growth_exponent(rates, grid, P),
                     transit_time(rates, eq, grid), forcing, kernel.beta2_values(s))


def char_determinant(rates, eq, grid, lam, kernel: FertilityKernel | None = None):
    """2x2 characteristic determinant at ``lam`` (scalar or array, complex).

    ``kernel`` replaces the recruitment part (not the fertility sensitivity)
    by a separable comparison kernel.
    """
    d = _char_data(rates, eq, grid, kernel).determinant(lam)
    return complex(d) if np.ndim(d) == 0 else d


def default_region(rates, eq, grid, dominant: complex) -> Rectangle:
    Gm = _total_transit(rates, eq, grid)
    return Rectangle(-10.0 / Gm, 2 * abs(dominant) + 1.0, -50.0, 50.0)


def find_char_roots(rates, eq, grid, region: Rectangle | None = None,
                    kernel: FertilityKernel | None = None, tol: float = 1e-12) -> list[complex]:
    """Zeros of the characteristic determinant in ``region``, rightmost first."""
    data = _char_data(rates, eq, grid, kernel)
    if region is None:
        lin = assemble_linearized(rates, eq, grid, check_jacobian=False)
        vals, _ = dense_eigen(lin.matrix)
        region = default_region(rates, eq, grid, vals[_rightmost_index(vals)])
    rect = region
    for attempt in range(4):
        try:
            roots = locate_zeros(data.determinant, rect, tol)
            break
        except BoundaryZeroError:
            if attempt == 3:
                raise
            rect = region.jitter(1e-4 * (attempt + 1))
    return _symmetrize(roots, data.determinant, tol)


def _symmetrize(roots, F, tol):
    out = []
    for z in roots:
        if abs(z.imag) <= 1e-9 * max(1.0, abs(z)):
            z = complex(z.real, 0.0)
        elif z.imag < 0:
            z = z.conjugate()
        if not any(abs(z - u) <= 1e-7 * max(1.0, abs(z)) for u in out):
            out.append(z)
    full = []
    for z in out:
        full.append(z)
        if z.imag != 0.0:
            full.append(z.conjugate())
    full.sort(key=lambda z: (-z.real, -z.imag))
    return full


def _constant_beta2(rates, grid):
    if not rates.beta.separable:
        raise RouteError("needs a separable fertility kernel")
    b2 = rates.beta.beta2_values(grid.midpoints)
    if np.ptp(b2) > 1e-14 * max(1.0, abs(b2[0])):
        raise RouteError("beta2 is not constant")
    return float(b2[0])


def reduced_char_constant_beta2(rates, eq, grid, lam: float) -> float:
    """Reduced characteristic function (left side minus one) for constant beta2."""
    b2 = _constant_beta2(rates, grid)
    s, P = grid.midpoints, eq.P_star
    gam = _gamma(rates, s, P)
    g = (_fertility_sensitivity(rates, eq, grid) - compute_rho_star(rates, eq, grid)) / gam
    f = g + rates.beta.beta1.value(s, P) * b2 / gam
    expo = _growth_exponent(rates, grid, P) + lam * transit_time(rates, eq, grid)
    return float(integrate(volterra(f, expo, grid), grid).real) - 1.0


@dataclass(frozen=True)
class ReducedCondition:
    value_at_zero: float
    positivity_ok: bool
    holds: bool

    def to_dict(self):
        return {"value_at_zero": self.value_at_zero, "positivity_ok": self.positivity_ok,
                "holds": self.holds}


def reduced_stability_condition(rates, eq, grid) -> ReducedCondition:
    """Constant-beta2 stability test: reduced function at 0 below one with
    g*gamma + beta1*beta2 >= 0 on the grid."""
    b2 = _constant_beta2(rates, grid)
    s, P = grid.midpoints, eq.P_star
    gg = _fertility_sensitivity(rates, eq, grid) - compute_rho_star(rates, eq, grid)
    pos = bool(np.all(gg + rates.beta.beta1.value(s, P) * b2 >= 0))
    lhs = reduced_char_constant_beta2(rates, eq, grid, 0.0) + 1.0
    return ReducedCondition(lhs, pos, bool(lhs < 1 and pos))


def check_comparison_stability(rates, eq, grid, beta_tilde: FertilityKernel,
                               im_bound: float = 50.0) -> dict:
    """Stability by comparison with a dominating separable kernel.

    Holds when the positivity condition holds, beta <= beta_tilde on the
    lattice, and the comparison determinant has no zero with nonnegative
    real part in the searched box.  The box's right edge comes from the
    quasicontraction growth estimate; the imaginary extent is finite, so the
    region searched is reported rather than claimed exhaustive.
    """
    pos = check_positivity_condition(rates, eq, grid)
    dom = float((beta_tilde.matrix(grid, eq.P_star) - rates.beta.matrix(grid, eq.P_star)).min())
    H = _net_recruitment(rates, eq, grid, beta_tilde)
    omega = float(np.abs(H.max(axis=1)).max()) - float(
        np.min(rates.mu.value(grid.midpoints, eq.P_star)))
    region = Rectangle(-1e-3, max(omega, 0.0) + 1.0, -im_bound, im_bound)
    roots = find_char_roots(rates, eq, grid, region, kernel=beta_tilde)
    bad = [z for z in roots if z.real >= 0]
    return {"positivity": pos.to_dict(), "domination_slack": dom,
            "dominated": bool(dom >= 0), "region": region.as_list(),
            "roots_nonnegative_real": [[z.real, z.imag] for z in bad],
            "holds": bool(pos.holds and dom >= 0 and not bad)}


# ------------------------------------------------------------------ verdict

@dataclass(eq=False)
class SpectralReport:
    dominant_matrix_eig: complex
    char_roots: list
    rightmost_char_root: complex | None
    positivity: ConditionCheck
    sufficient_stability: ConditionCheck
    instability_certificate: InstabilityCertificate | None
    verdict: str
    cross_check_gap: float | None
    tol_verdict: float
    region: Rectangle | None
    P_star: float
    grid: SizeGrid
    reduced_condition: ReducedCondition | None = None
    jacobian_error: float | None = None
    dominant_eigvec: np.ndarray | None = field(default=None, repr=False)

    @property
    def positivity_condition_holds(self) -> bool:
        return self.positivity.holds

    @property
    def sufficient_stability_holds(self) -> bool:
        return self.sufficient_stability.holds

    def to_dict(self) -> dict:
        def c(z):
            return None if z is None else [float(z.real), float(z.imag)]
        return {
            "P_star": self.P_star,
            "grid": self.grid.describe(),
            "verdict": self.verdict,
            "dominant_matrix_eig": c(self.dominant_matrix_eig),
            "rightmost_char_root": c(self.rightmost_char_root),
            "char_roots": [c(z) for z in self.char_roots],
            "cross_check_gap": self.cross_check_gap,
            "tol_verdict": self.tol_verdict,
            "searched_region": None if self.region is None else self.region.as_list(),
            "positivity_condition": self.positivity.to_dict(),
            "sufficient_stability": self.sufficient_stability.to_dict(),
            "instability_certificate": (None if self.instability_certificate is None
                                        else self.instability_certificate.to_dict()),
            "reduced_condition": (None if self.reduced_condition is None
                                  else self.reduced_condition.to_dict()),
            "jacobian_error": self.jacobian_error,
        }


def spectral_verdict(rates: VitalRates, eq: EquilibriumSolution, grid: SizeGrid,
                     region: Rectangle | None = None, tol_verdict: float | None = None,
                     check_jacobian: bool | str = True,
                     max_disagreement: float = ROUTE_DISAGREEMENT) -> SpectralReport:
    """Run every check and classify the equilibrium as stable/unstable/inconclusive."""
    lin = assemble_linearized(rates, eq, grid, check_jacobian=check_jacobian)
    vals, vec = dense_eigen(lin.matrix)
    dom = complex(vals[_rightmost_index(vals)])
    tol = 10 * grid.h if tol_verdict is None else tol_verdict

    roots, rightmost, gap, reduced = [], None, None, None
    if rates.beta.separable:
        region = region or default_region(rates, eq, grid, dom)
        roots = find_char_roots(rates, eq, grid, region)
        if roots:
            rightmost = roots[0]
            gap = abs(dom - rightmost)
            if gap > max_disagreement:
                raise InconsistencyError(
                    f"matrix route {dom:.6g} and characteristic route {rightmost:.6g} "
                    f"disagree by {gap:.3g}; refine the grid", values=(dom, rightmost))
        try:
            reduced = reduced_stability_condition(rates, eq, grid)
        except RouteError:
            reduced = None
    else:
        region = None

    cert = check_instability(rates, eq, grid)
    if dom.real > tol or cert is not None:
        verdict = "unstable"
    elif dom.real < -tol and (rightmost is None or rightmost.real < -tol):
        verdict = "stable"
    else:
        verdict = "inconclusive"
    return SpectralReport(
        dominant_matrix_eig=dom, char_roots=roots, rightmost_char_root=rightmost,
        positivity=check_positivity_condition(rates, eq, grid),
        sufficient_stability=check_sufficient_stability(rates, eq, grid),
        instability_certificate=cert, verdict=verdict, cross_check_gap=gap,
        tol_verdict=tol, region=region, P_star=eq.P_star, grid=grid,
        reduced_condition=reduced, jacobian_error=lin.jacobian_error, dominant_eigvec=vec)
