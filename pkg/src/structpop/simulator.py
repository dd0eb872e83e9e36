"""Direct simulation of the nonlinear model with a positivity-preserving
finite-volume scheme: first-order upwind fluxes in size, Heun in time.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import FitError, ModelError, OscillationError, StepSizeError, StiffnessError
from .numerics import SizeGrid, integrate
from .rates import VitalRates

__all__ = [
    "PopulationState",
    "SimulationTrace",
    "rhs",
    "admissible_dt",
    "step",
    "simulate",
    "perturb_equilibrium",
    "measure_growth_rate",
    "measure_envelope_growth_rate",
    "write_trace_csv",
    "write_snapshots_csv",
]

CFL = 0.9


@dataclass(frozen=True, eq=False)
class PopulationState:
    grid: SizeGrid
    density: np.ndarray
    time: float = 0.0

    @property
    def total(self) -> float:
        return float(integrate(self.density, self.grid))


@dataclass(eq=False)
class SimulationTrace:
    times: np.ndarray
    totals: np.ndarray
    snapshot_times: np.ndarray
    snapshots: np.ndarray
    mass_balance_residuals: np.ndarray
    grid: SizeGrid
    final: PopulationState | None = field(default=None, repr=False)
    stopped_early: bool = False


def _rates_at(state, rates):
    g, P = state.grid, state.total
    ge = np.asarray(rates.gamma.value(g.edges, P), dtype=float) * np.ones(g.edges.size)
    if ge.min() <= 0:
        i = int(ge.argmin())
        raise ModelError(f"growth rate {ge[i]:.3g} <= 0 at s={g.edges[i]:.4g}, P={P:.4g}",
                         point=(float(g.edges[i]), P))
    mu = np.asarray(rates.mu.value(g.midpoints, P), dtype=float) * np.ones(g.n_cells)
    return P, ge, mu


def rhs(state: PopulationState, rates: VitalRates) -> np.ndarray:
    """Time derivative of the density: upwind flux differences of gamma*p,
    minus mortality, plus recruitment.  P is the current total population."""
    g, p = state.grid, state.density
    P, ge, mu = _rates_at(state, rates)
    flux = np.empty(g.n_cells + 1)
    flux[0] = 0.0  # no influx at s = 0
    flux[1:] = ge[1:] * p
    return -np.diff(flux) / g.weights - mu * p + rates.beta.apply(p, g, P)


def _balance_terms(state, rates):
    """(births - deaths - outflow) for the integrated equation."""
    g, p = state.grid, state.density
    P, ge, mu = _rates_at(state, rates)
    births = integrate(rates.beta.apply(p, g, P), g)
    deaths = integrate(mu * p, g)
    return float(births - deaths - ge[-1] * p[-1])


def admissible_dt(state: PopulationState, rates: VitalRates) -> float:
    """Largest step keeping each Euler stage of Heun nonnegative, with CFL 0.9.

    Also satisfies dt <= 0.9 h / max gamma and dt * max mu <= 0.9.
    """
    _, ge, mu = _rates_at(state, rates)
    return CFL / float(np.max(ge[1:] / state.grid.weights + mu))


def step(state: PopulationState, rates: VitalRates, dt: float) -> PopulationState:
    """One Heun step; raises StepSizeError if ``dt`` could break positivity."""
    bound = admissible_dt(state, rates)
    if dt > bound * (1 + 1e-12) or not dt > 0:
        raise StepSizeError(f"dt={dt:.6g} exceeds the admissible {bound:.6g}", admissible=bound)
    p = state.density
    stage = np.maximum(p + dt * rhs(state, rates), 0.0)
    mid = PopulationState(state.grid, stage, state.time + dt)
    bound_mid = admissible_dt(mid, rates)
    if dt > bound_mid / CFL:
        raise StepSizeError(f"dt={dt:.6g} exceeds the admissible {bound_mid:.6g} "
                            f"at the intermediate stage", admissible=bound_mid)
    # clipping only removes round-off negatives; both stages are convex combinations
    new = np.maximum(0.5 * (p + stage + dt * rhs(mid, rates)), 0.0)
    return PopulationState(state.grid, new, state.time + dt)


def simulate(p0, rates: VitalRates, grid: SizeGrid, t_end: float, cadence: float | None = None,
             dt: float | None = None, stop_outside=None) -> SimulationTrace:
    """Integrate from density ``p0`` to ``t_end``.

    Totals are recorded every step, density snapshots every ``cadence``
    time units (and at both ends); steps are shortened to hit those times.  The step is chosen from the CFL rule
    unless ``dt`` is given (it is still capped by it).  With
    ``stop_outside=(P_ref, radius)`` the run ends early, with a final
    snapshot, once |P - P_ref| exceeds ``radius``.
    """
    p0 = np.asarray(p0, dtype=float)
    if p0.shape != (grid.n_cells,):
        raise ValueError(f"initial density must have {grid.n_cells} entries")
    if np.any(p0 < 0):
        raise ValueError("initial density must be nonnegative")
    if t_end < 0:
        raise ValueError("t_end must be nonnegative")
    state = PopulationState(grid, p0.copy(), 0.0)
    times, totals, resid = [0.0], [state.total], []
    snap_t, snaps = [0.0], [p0.copy()]
    next_snap = cadence if cadence else np.inf
    stopped = False
    while state.time < t_end * (1 - 1e-14):
        h = admissible_dt(state, rates)
        if dt is not None:
            h = min(h, dt)
        h = min(h, t_end - state.time)
        if next_snap - state.time > 1e-12:
            h = min(h, next_snap - state.time)  # land exactly on snapshot times
        if h < 1e-12 and t_end - state.time > 1e-12:
            raise StiffnessError(f"step size underflow (dt={h:.3g}) at t={state.time:.6g}")
        before = _balance_terms(state, rates)
        while True:
            try:
                new = step(state, rates, h)
                break
            except StepSizeError as exc:
                # the environment moved enough within the step to tighten the bound
                h = min(0.5 * h, exc.admissible)
                if h < 1e-12:
                    raise StiffnessError(f"step size underflow (dt={h:.3g}) "
                                         f"at t={state.time:.6g}") from None
        if not np.all(np.isfinite(new.density)):
            raise StiffnessError(f"density became non-finite at t={new.time:.6g}; "
                                 f"the solution blows up")
        after = _balance_terms(new, rates)
        resid.append(abs((new.total - state.total) / h - 0.5 * (before + after)))
        state = new
        times.append(state.time)
        totals.append(state.total)
        if stop_outside is not None and abs(state.total - stop_outside[0]) > stop_outside[1]:
            stopped = True
        if (stopped or state.time >= next_snap * (1 - 1e-12)
                or state.time >= t_end * (1 - 1e-14)):
            snap_t.append(state.time)
            snaps.append(state.density.copy())
            while next_snap <= state.time * (1 + 1e-12):
                next_snap += cadence if cadence else np.inf
        if stopped:
            break
    return SimulationTrace(np.array(times), np.array(totals), np.array(snap_t),
                           np.array(snaps), np.array(resid), grid, state, stopped)


# ----------------------------------------------------------- perturbations

def perturb_equilibrium(eq, amplitude: float, mode: str = "uniform", seed: int = 0,
                        eigvec=None) -> np.ndarray:
    """Initial density near ``eq.p_star``.

    ``uniform`` and ``random`` scale p_* by (1 + amplitude * shape) with a
    unit max-norm shape.  ``first_eigvec`` adds amplitude * max(p_*) times the
    dominant linearised eigenvector (``eigvec``), oriented to increase the
    total.  The result is clipped at zero.
    """
    p = eq.p_star
    if mode == "uniform":
        return np.maximum(p * (1 + amplitude), 0.0)
    if mode == "random":
        shape = np.random.default_rng(seed).uniform(-1, 1, p.size)
        shape /= np.abs(shape).max()
        return np.maximum(p * (1 + amplitude * shape), 0.0)
    if mode == "first_eigvec":
        if eigvec is None:
            raise ValueError("first_eigvec mode needs the dominant linearised eigenvector")
        v = np.real(np.asarray(eigvec))
        v = v / np.abs(v).max()
        if integrate(v, eq.grid) < 0:
            v = -v
        return np.maximum(p + amplitude * p.max() * v, 0.0)
    raise ValueError(f"unknown perturbation mode {mode!r}")


def _window(trace, P_star, window):
    t0, t1 = window
    sel = (trace.times >= t0) & (trace.times <= t1)
    if sel.sum() < 3:
        raise FitError(f"trace has fewer than 3 samples in window {window}")
    return trace.times[sel], trace.totals[sel] - P_star


def measure_growth_rate(trace: SimulationTrace, eq, window) -> tuple[float, float]:
    """Least-squares slope of log|P(t) - P_*| over ``window``.

    Returns (rate, rms residual of the log fit).
    """
    t, dev = _window(trace, eq.P_star, window)
    if np.any(dev == 0):
        raise FitError("deviation from equilibrium vanishes inside the window")
    if np.any(np.sign(dev) != np.sign(dev[0])):
        raise OscillationError("deviation changes sign inside the window; fit the envelope")
    y = np.log(np.abs(dev))
    A = np.vstack([t, np.ones_like(t)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    return float(coef[0]), float(np.sqrt(np.mean((A @ coef - y) ** 2)))


def measure_envelope_growth_rate(trace: SimulationTrace, eq, window) -> tuple[float, float]:
    """Growth rate of the envelope of an oscillating deviation (log-linear fit
    through the local maxima of |P(t) - P_*|)."""
    t, dev = _window(trace, eq.P_star, window)
    a = np.abs(dev)
    peaks = np.flatnonzero((a[1:-1] >= a[:-2]) & (a[1:-1] > a[2:])) + 1
    if peaks.size < 2:
        raise FitError("fewer than two local maxima in the window")
    y = np.log(a[peaks])
    A = np.vstack([t[peaks], np.ones(peaks.size)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    return float(coef[0]), float(np.sqrt(np.mean((A @ coef - y) ** 2)))


# ------------------------------------------------------------------ output

def write_trace_csv(trace: SimulationTrace, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "P"])
        for t, P in zip(trace.times, trace.totals):
            w.writerow([repr(float(t)), repr(float(P))])


def write_snapshots_csv(trace: SimulationTrace, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "s", "density"])
        for t, snap in zip(trace.snapshot_times, trace.snapshots):
            for s, v in zip(trace.grid.midpoints, snap):
                w.writerow([repr(float(t)), repr(float(s)), repr(float(v))])
