"""Vital rates: growth gamma(s, P), mortality mu(s, P) and fertility
beta(s, y, P), each with analytic partial derivatives.

Rate surfaces come from a closed registry of analytic families so the
linearisation gets exact gamma_sP, mu_P and beta_P.  ``custom_surface`` wraps
an arbitrary callable with finite-difference derivatives for exploratory use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.special import expit

from .errors import ConfigurationError, ModelError
from .numerics import SizeGrid

__all__ = [
    "RateSurface",
    "FertilityKernel",
    "VitalRates",
    "ValidationReport",
    "FAMILIES",
    "make_rate_surface",
    "custom_surface",
    "make_fertility",
    "validate_rates",
    "fd_step",
]

P_MAX_DEFAULT = 100.0
GAMMA_FLOOR_DEFAULT = 1e-8


def fd_step(x):
    return 1e-6 * np.maximum(1.0, np.abs(x))


def _zero(s, P):
    return np.zeros(np.broadcast_shapes(np.shape(s), np.shape(P)))


@dataclass(frozen=True, eq=False)
class RateSurface:
    """A function v(s, P) together with v_s, v_P and v_sP.

    All evaluators broadcast over array arguments.
    """

    family: str
    params: dict
    value: Callable
    ds: Callable
    dP: Callable
    dsP: Callable
    p_independent: bool = False

    def __call__(self, s, P):
        return self.value(s, P)

    def to_dict(self) -> dict:
        params = {k: (v.to_dict() if isinstance(v, RateSurface) else v)
                  for k, v in self.params.items()}
        return {"family": self.family, "params": params}


def _const(c):
    c = float(c)
    return RateSurface("constant", {"c": c},
                       lambda s, P: np.full(np.broadcast_shapes(np.shape(s), np.shape(P)), c),
                       _zero, _zero, _zero, p_independent=True)


def _affine_s(c0, c1):
    c0, c1 = float(c0), float(c1)
    return RateSurface(
        "affine_s", {"c0": c0, "c1": c1},
        lambda s, P: c0 + c1 * np.asarray(s) + 0.0 * np.asarray(P),
        lambda s, P: np.full(np.broadcast_shapes(np.shape(s), np.shape(P)), c1),
        _zero, _zero, p_independent=True)


def _affine_P(c0, c1):
    c0, c1 = float(c0), float(c1)
    return RateSurface(
        "affine_P", {"c0": c0, "c1": c1},
        lambda s, P: c0 + c1 * np.asarray(P) + 0.0 * np.asarray(s),
        _zero,
        lambda s, P: np.full(np.broadcast_shapes(np.shape(s), np.shape(P)), c1),
        _zero, p_independent=(c1 == 0.0))


def _exp_decay_P(a, k):
    a, k = float(a), float(k)

    def value(s, P):
        return a * np.exp(-k * np.asarray(P)) + 0.0 * np.asarray(s)

    return RateSurface("exp_decay_P", {"a": a, "k": k}, value, _zero,
                       lambda s, P: -k * value(s, P), _zero, p_independent=(k == 0.0))


def _logistic_P(a, k, P0):
    a, k, P0 = float(a), float(k), float(P0)

    def value(s, P):
        return a * expit(-k * (np.asarray(P) - P0)) + 0.0 * np.asarray(s)

    def dP(s, P):
        x = k * (np.asarray(P) - P0)
        return -a * k * expit(x) * expit(-x) + 0.0 * np.asarray(s)

    return RateSurface("logistic_P", {"a": a, "k": k, "P0": P0}, value, _zero, dP, _zero,
                       p_independent=(k == 0.0))


def _gaussian_s(a, center, width):
    a, center, width = float(a), float(center), float(width)
    if width <= 0:
        raise ConfigurationError("gaussian_s width must be positive", field="width")

    def value(s, P):
        s = np.asarray(s)
        return a * np.exp(-0.5 * ((s - center) / width) ** 2) + 0.0 * np.asarray(P)

    return RateSurface("gaussian_s", {"a": a, "center": center, "width": width}, value,
                       lambda s, P: -(np.asarray(s) - center) / width ** 2 * value(s, P),
                       _zero, _zero, p_independent=True)


def _product(left, right):
    f = left if isinstance(left, RateSurface) else make_rate_surface(**_spec(left, "left"))
    g = right if isinstance(right, RateSurface) else make_rate_surface(**_spec(right, "right"))
    return RateSurface(
        "product", {"left": f, "right": g},
        lambda s, P: f.value(s, P) * g.value(s, P),
        lambda s, P: f.ds(s, P) * g.value(s, P) + f.value(s, P) * g.ds(s, P),
        lambda s, P: f.dP(s, P) * g.value(s, P) + f.value(s, P) * g.dP(s, P),
        lambda s, P: (f.dsP(s, P) * g.value(s, P) + f.ds(s, P) * g.dP(s, P)
                      + f.dP(s, P) * g.ds(s, P) + f.value(s, P) * g.dsP(s, P)),
        p_independent=f.p_independent and g.p_independent)


def _spec(obj, name):
    if not isinstance(obj, dict) or "family" not in obj:
        raise ConfigurationError(f"'{name}' must be a rate specification with a 'family'",
                                 field=name)
    return {"family": obj["family"], "params": obj.get("params", {})}


#: family name -> (constructor, required parameter names, formula)
FAMILIES: dict[str, tuple[Callable, tuple[str, ...], str]] = {
    "constant": (_const, ("c",), "c"),
    "affine_s": (_affine_s, ("c0", "c1"), "c0 + c1*s"),
    "affine_P": (_affine_P, ("c0", "c1"), "c0 + c1*P"),
    "exp_decay_P": (_exp_decay_P, ("a", "k"), "a*exp(-k*P)"),
    "logistic_P": (_logistic_P, ("a", "k", "P0"), "a/(1 + exp(k*(P - P0)))"),
    "gaussian_s": (_gaussian_s, ("a", "center", "width"),
                   "a*exp(-(s - center)^2 / (2*width^2))"),
    "product": (_product, ("left", "right"), "left(s,P)*right(s,P)"),
}


def make_rate_surface(family: str, params: dict | None = None) -> RateSurface:
    """Build a registered rate surface, e.g. ``make_rate_surface("constant", {"c": 1})``."""
    if family not in FAMILIES:
        raise ConfigurationError(
            f"unknown rate family {family!r}; known: {sorted(FAMILIES)}", field="family")
    ctor, names, _ = FAMILIES[family]
    params = dict(params or {})
    missing = [n for n in names if n not in params]
    if missing:
        raise ConfigurationError(f"family {family!r} is missing parameter(s) {missing}",
                                 field=missing[0])
    extra = sorted(set(params) - set(names))
    if extra:
        raise ConfigurationError(f"family {family!r} got unknown parameter(s) {extra}",
                                 field=extra[0])
    if family != "product":
        for n in names:
            v = params[n]
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ConfigurationError(f"parameter {n!r} must be a finite number", field=n)
    return ctor(**{n: params[n] for n in names})


def custom_surface(fn: Callable, name: str = "custom") -> RateSurface:
    """Wrap ``fn(s, P)`` with central-difference derivatives.

    Only for experimentation: run :func:`validate_rates` before trusting the
    linearisation built on top of it.
    """
    def ds(s, P):
        s = np.asarray(s, dtype=float)
        h = fd_step(s)
        return (fn(s + h, P) - fn(s - h, P)) / (2 * h)

    def dP(s, P):
        P = np.asarray(P, dtype=float)
        h = fd_step(P)
        return (fn(s, P + h) - fn(s, P - h)) / (2 * h)

    def dsP(s, P):
        P = np.asarray(P, dtype=float)
        h = 1e-4 * np.maximum(1.0, np.abs(P))
        return (ds(s, P + h) - ds(s, P - h)) / (2 * h)

    return RateSurface(name, {}, fn, ds, dP, dsP)


# ---------------------------------------------------------------- fertility

@dataclass(frozen=True, eq=False)
class FertilityKernel:
    """Recruitment kernel beta(s, y, P): rate at which individuals of size y
    produce newborns of size s.

    ``terms`` is a list of (beta1, beta2) pairs with
    beta = sum_k beta1_k(s, P) * beta2_k(y); the separable kind has exactly
    one term.  A general kernel may instead carry raw callables.
    """

    kind: str
    terms: tuple = ()
    b_fn: Callable | None = None
    b_P_fn: Callable | None = None

    @property
    def separable(self) -> bool:
        return self.kind == "separable"

    @property
    def beta1(self) -> RateSurface:
        return self.terms[0][0]

    @property
    def beta2(self) -> RateSurface:
        return self.terms[0][1]

    def beta2_values(self, y):
        return self.beta2.value(y, 0.0)

    @property
    def p_independent(self) -> bool:
        if self.b_fn is not None:
            return False
        return all(b1.p_independent for b1, _ in self.terms)

    def b(self, s, y, P):
        if self.b_fn is not None:
            return np.asarray(self.b_fn(s, y, P), dtype=float)
        out = np.zeros(np.broadcast_shapes(np.shape(s), np.shape(y), np.shape(P)))
        for b1, b2 in self.terms:
            out = out + b1.value(s, P) * b2.value(y, 0.0)
        return out

    def b_P(self, s, y, P):
        if self.b_fn is not None:
            if self.b_P_fn is not None:
                return np.asarray(self.b_P_fn(s, y, P), dtype=float)
            P = np.asarray(P, dtype=float)
            h = fd_step(P)
            return (self.b_fn(s, y, P + h) - self.b_fn(s, y, P - h)) / (2 * h)
        out = np.zeros(np.broadcast_shapes(np.shape(s), np.shape(y), np.shape(P)))
        for b1, b2 in self.terms:
            out = out + b1.dP(s, P) * b2.value(y, 0.0)
        return out

    def matrix(self, grid: SizeGrid, P: float, derivative: bool = False) -> np.ndarray:
        """Kernel on the midpoint lattice, ``K[i, j] = beta(s_i, y_j, P)``."""
        s = grid.midpoints[:, None]
        y = grid.midpoints[None, :]
        return self.b_P(s, y, P) if derivative else self.b(s, y, P)

    def apply(self, u, grid: SizeGrid, P: float, derivative: bool = False) -> np.ndarray:
        """Quadrature of ``int beta(s_i, y, P) u(y) dy`` (or of beta_P)."""
        u = np.asarray(u)
        if self.b_fn is not None:
            return self.matrix(grid, P, derivative) @ (grid.weights * u)
        s = grid.midpoints
        out = np.zeros(grid.n_cells)
        for b1, b2 in self.terms:
            moment = (grid.weights * b2.value(s, 0.0)) @ u
            out = out + (b1.dP(s, P) if derivative else b1.value(s, P)) * moment
        return out

    def to_dict(self) -> dict:
        if self.b_fn is not None:
            return {"kind": self.kind, "callable": True}
        if self.separable:
            return {"kind": "separable", "beta1": self.beta1.to_dict(),
                    "beta2": self.beta2.to_dict()}
        return {"kind": "general",
                "terms": [{"beta1": a.to_dict(), "beta2": b.to_dict()} for a, b in self.terms]}


def _surface(obj, name):
    if isinstance(obj, RateSurface):
        return obj
    return make_rate_surface(**_spec(obj, name))


def make_fertility(kind: str, components: dict, m: float = 1.0,
                   P_max: float = P_MAX_DEFAULT, n_check: int = 21) -> FertilityKernel:
    """Build and sample-check a fertility kernel.

    ``kind="separable"`` takes ``beta1`` (in s, P) and ``beta2`` (in y only);
    ``kind="general"`` takes either ``terms`` (list of {beta1, beta2}) or the
    callables ``b`` and optionally ``b_P``.
    """
    if kind == "separable":
        try:
            b1 = _surface(components["beta1"], "beta1")
            b2 = _surface(components["beta2"], "beta2")
        except KeyError as exc:
            raise ConfigurationError(f"separable fertility needs {exc.args[0]!r}",
                                     field=exc.args[0]) from None
        if not b2.p_independent:
            raise ConfigurationError("beta2 must not depend on P", field="beta2")
        kernel = FertilityKernel("separable", ((b1, b2),))
    elif kind == "general":
        if "b" in components:
            kernel = FertilityKernel("general", (), components["b"], components.get("b_P"))
        else:
            terms = []
            for k, t in enumerate(components.get("terms", [])):
                try:
                    b1 = _surface(t["beta1"], f"terms[{k}].beta1")
                    b2 = _surface(t["beta2"], f"terms[{k}].beta2")
                except KeyError as exc:
                    raise ConfigurationError(f"fertility term {k} needs {exc.args[0]!r}",
                                             field=f"terms[{k}]") from None
                if not b2.p_independent:
                    raise ConfigurationError("beta2 must not depend on P",
                                             field=f"terms[{k}].beta2")
                terms.append((b1, b2))
            kernel = FertilityKernel("general", tuple(terms))
    else:
        raise ConfigurationError(f"unknown fertility kind {kind!r}", field="kind")

    s = np.linspace(0.0, m, n_check)
    for P in np.linspace(0.0, P_max, n_check):
        vals = kernel.b(s[:, None], s[None, :], P)
        if np.any(vals < 0) or not np.all(np.isfinite(vals)):
            i, j = np.unravel_index(np.argmin(np.nan_to_num(vals, nan=-np.inf)), vals.shape)
            raise ModelError(f"fertility is negative or non-finite at s={s[i]:.4g}, "
                             f"y={s[j]:.4g}, P={P:.4g}", point=(s[i], s[j], P))
    return kernel


@dataclass(frozen=True, eq=False)
class VitalRates:
    gamma: RateSurface
    mu: RateSurface
    beta: FertilityKernel
    m: float = 1.0
    P_max: float = P_MAX_DEFAULT
    gamma_floor: float = GAMMA_FLOOR_DEFAULT

    def replace(self, **changes) -> "VitalRates":
        from dataclasses import replace
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {"gamma": self.gamma.to_dict(), "mu": self.mu.to_dict(),
                "beta": self.beta.to_dict(), "m": self.m, "P_max": self.P_max}


# ---------------------------------------------------------------- validation

@dataclass
class ValidationReport:
    gamma_positive: bool
    gamma_min: float
    gamma_violation: tuple | None
    mu_nonnegative: bool
    mu_min: float
    beta_nonnegative: bool
    beta_min: float
    derivatives_ok: bool
    derivative_errors: dict
    irreducibility: list = field(default_factory=list)
    seed: int = 42

    @property
    def irreducible(self) -> bool:
        return bool(self.irreducibility) and all(e["positive"] for e in self.irreducibility)

    @property
    def mandatory_ok(self) -> bool:
        return self.gamma_positive and self.mu_nonnegative and self.beta_nonnegative

    def to_dict(self) -> dict:
        return {
            "gamma_positive": self.gamma_positive,
            "gamma_min": self.gamma_min,
            "gamma_violation": list(self.gamma_violation) if self.gamma_violation else None,
            "mu_nonnegative": self.mu_nonnegative,
            "mu_min": self.mu_min,
            "beta_nonnegative": self.beta_nonnegative,
            "beta_min": self.beta_min,
            "derivatives_ok": self.derivatives_ok,
            "derivative_errors": self.derivative_errors,
            "irreducibility": self.irreducibility,
            "irreducible": self.irreducible,
            "mandatory_ok": self.mandatory_ok,
            "seed": self.seed,
        }


def _fd_error(analytic, fd):
    """Worst violation ratio of |a - fd| <= 1e-4*max(|a|, |fd|) + 1e-7."""
    analytic, fd = np.asarray(analytic, float), np.asarray(fd, float)
    allowed = 1e-4 * np.maximum(np.abs(analytic), np.abs(fd)) + 1e-7
    return float(np.max(np.abs(analytic - fd) / allowed))


def _check_surface_derivatives(surf: RateSurface, s, P) -> dict:
    hs, hP = fd_step(s), fd_step(P)
    fd_s = (surf.value(s + hs, P) - surf.value(s - hs, P)) / (2 * hs)
    fd_P = (surf.value(s, P + hP) - surf.value(s, P - hP)) / (2 * hP)
    fd_sP = (surf.ds(s, P + hP) - surf.ds(s, P - hP)) / (2 * hP)
    return {"ds": _fd_error(surf.ds(s, P), fd_s),
            "dP": _fd_error(surf.dP(s, P), fd_P),
            "dsP": _fd_error(surf.dsP(s, P), fd_sP)}


def _gauss_square(fn, a0, a1, b0, b1, n=12):
    x, w = np.polynomial.legendre.leggauss(n)
    sa = 0.5 * (a1 - a0) * x + 0.5 * (a1 + a0)
    sb = 0.5 * (b1 - b0) * x + 0.5 * (b1 + b0)
    vals = fn(sa[:, None], sb[None, :])
    return float(0.25 * (a1 - a0) * (b1 - b0) * (w @ vals @ w))


def validate_rates(rates: VitalRates, grid: SizeGrid, P_probe, seed: int = 42,
                   n_lattice: int = 30, n_random: int = 100) -> ValidationReport:
    """Check the standing assumptions on the rates numerically.

    Samples a ``n_lattice`` x ``n_lattice`` (s, P) lattice over
    [0, m] x [0, P_max] plus ``n_random`` seeded random points. Findings are
    returned, never raised.
    """
    m, Pmax = rates.m, rates.P_max
    rng = np.random.default_rng(seed)
    s_lat, P_lat = np.meshgrid(np.linspace(0, m, n_lattice), np.linspace(0, Pmax, n_lattice),
                               indexing="ij")
    s_rnd = rng.uniform(0, m, n_random)
    P_rnd = rng.uniform(0, Pmax, n_random)
    s_all = np.concatenate([s_lat.ravel(), s_rnd])
    P_all = np.concatenate([P_lat.ravel(), P_rnd])

    g = np.asarray(rates.gamma.value(s_all, P_all), float)
    ig = int(np.argmin(g))
    gamma_ok = bool(np.all(np.isfinite(g)) and g.min() >= rates.gamma_floor)
    mu = np.asarray(rates.mu.value(s_all, P_all), float)
    mu_ok = bool(np.all(np.isfinite(mu)) and mu.min() >= 0)

    y_rnd = rng.uniform(0, m, n_random)
    sl = np.linspace(0, m, n_lattice)
    beta_min = np.inf
    for P in np.linspace(0, Pmax, n_lattice):
        beta_min = min(beta_min, float(np.min(rates.beta.b(sl[:, None], sl[None, :], P))))
    beta_min = min(beta_min, float(np.min(rates.beta.b(s_rnd, y_rnd, P_rnd))))
    beta_ok = bool(np.isfinite(beta_min) and beta_min >= 0)

    # derivative agreement at the random points only (lattice hits P=0 edges)
    derr = {"gamma": _check_surface_derivatives(rates.gamma, s_rnd, P_rnd),
            "mu": _check_surface_derivatives(rates.mu, s_rnd, P_rnd)}
    hP = fd_step(P_rnd)
    fd_bP = (rates.beta.b(s_rnd, y_rnd, P_rnd + hP) - rates.beta.b(s_rnd, y_rnd, P_rnd - hP)) / (2 * hP)
    derr["beta"] = {"dP": _fd_error(rates.beta.b_P(s_rnd, y_rnd, P_rnd), fd_bP)}
    deriv_ok = all(v <= 1.0 for d in derr.values() for v in d.values())

    irr = []
    for P in P_probe:
        for eps in (m / 10, m / 20, m / 40):
            val = _gauss_square(lambda s, y: rates.beta.b(s, y, P), 0.0, eps, m - eps, m)
            irr.append({"P": float(P), "eps": float(eps), "integral": val,
                        "positive": bool(val > 0)})

    return ValidationReport(
        gamma_positive=gamma_ok,
        gamma_min=float(g.min()),
        gamma_violation=None if gamma_ok else (float(s_all[ig]), float(P_all[ig])),
        mu_nonnegative=mu_ok,
        mu_min=float(mu.min()),
        beta_nonnegative=beta_ok,
        beta_min=float(beta_min),
        derivatives_ok=deriv_ok,
        derivative_errors=derr,
        irreducibility=irr,
        seed=seed,
    )
