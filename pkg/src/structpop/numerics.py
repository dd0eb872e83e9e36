"""Shared numerical kernels: midpoint quadrature on a size grid, real and
complex root finding, and dense eigenvalue computation.

Everything here is a pure function of its inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize

from .errors import (
    ArgumentError,
    BoundaryZeroError,
    BracketError,
    ConvergenceError,
    EvaluationError,
    NumericalError,
)

__all__ = [
    "SizeGrid",
    "Rectangle",
    "integrate",
    "cumulative_integral",
    "volterra",
    "bracketed_root",
    "scan_sign_changes",
    "winding_count",
    "refine_complex_root",
    "locate_zeros",
    "dense_eigen",
]


@dataclass(frozen=True, eq=False)
class SizeGrid:
    """Finite-volume partition of the size interval [0, m].

    Values live on cell midpoints; ``weights`` are the cell widths, so the
    quadrature is the midpoint rule.
    """

    m: float
    edges: np.ndarray
    midpoints: np.ndarray
    weights: np.ndarray

    @classmethod
    def uniform(cls, m: float, n_cells: int) -> "SizeGrid":
        if not (np.isfinite(m) and m > 0):
            raise ArgumentError(f"maximal size must be positive, got {m!r}")
        if int(n_cells) != n_cells or n_cells < 1:
            raise ArgumentError(f"n_cells must be a positive integer, got {n_cells!r}")
        edges = np.linspace(0.0, float(m), int(n_cells) + 1)
        edges[-1] = float(m)
        return cls.from_edges(edges)

    @classmethod
    def from_edges(cls, edges) -> "SizeGrid":
        edges = np.asarray(edges, dtype=float)
        if edges.ndim != 1 or edges.size < 2:
            raise ArgumentError("edges must be a 1-d sequence with at least two entries")
        if edges[0] != 0.0:
            raise ArgumentError("edges must start at 0")
        if np.any(np.diff(edges) <= 0):
            raise ArgumentError("edges must be strictly increasing")
        edges = edges.copy()
        edges.setflags(write=False)
        mid = 0.5 * (edges[:-1] + edges[1:])
        w = np.diff(edges)
        mid.setflags(write=False)
        w.setflags(write=False)
        return cls(float(edges[-1]), edges, mid, w)

    @property
    def n_cells(self) -> int:
        return self.midpoints.size

    @property
    def h(self) -> float:
        """Largest cell width."""
        return float(self.weights.max())

    def describe(self) -> dict:
        return {"m": self.m, "n_cells": self.n_cells, "h": self.h}


@dataclass(frozen=True)
class Rectangle:
    """Closed axis-aligned rectangle in the complex plane."""

    re_lo: float
    re_hi: float
    im_lo: float
    im_hi: float

    def __post_init__(self):
        if not (self.re_lo < self.re_hi and self.im_lo < self.im_hi):
            raise ArgumentError(f"degenerate rectangle {self}")

    @property
    def center(self) -> complex:
        return complex(0.5 * (self.re_lo + self.re_hi), 0.5 * (self.im_lo + self.im_hi))

    def contains(self, z: complex, margin: float = 0.0) -> bool:
        return (self.re_lo - margin <= z.real <= self.re_hi + margin
                and self.im_lo - margin <= z.imag <= self.im_hi + margin)

    def split(self, fx: float = 0.5, fy: float = 0.5) -> list["Rectangle"]:
        xm = self.re_lo + fx * (self.re_hi - self.re_lo)
        ym = self.im_lo + fy * (self.im_hi - self.im_lo)
        return [
            Rectangle(self.re_lo, xm, self.im_lo, ym),
            Rectangle(xm, self.re_hi, self.im_lo, ym),
            Rectangle(self.re_lo, xm, ym, self.im_hi),
            Rectangle(xm, self.re_hi, ym, self.im_hi),
        ]

    def jitter(self, amount: float) -> "Rectangle":
        return Rectangle(self.re_lo - amount, self.re_hi + 0.7 * amount,
                         self.im_lo - 0.3 * amount, self.im_hi + 1.1 * amount)

    def as_list(self) -> list[float]:
        return [self.re_lo, self.re_hi, self.im_lo, self.im_hi]


# ---------------------------------------------------------------- quadrature

def _check_length(values, grid: SizeGrid) -> np.ndarray:
    values = np.asarray(values)
    if values.shape[-1:] != (grid.n_cells,):
        raise ArgumentError(
            f"expected {grid.n_cells} values on the grid, got shape {values.shape}")
    return values


def integrate(values, grid: SizeGrid):
    """Midpoint-rule integral over [0, m] (along the last axis)."""
    values = _check_length(values, grid)
    return values @ grid.weights


def cumulative_integral(values, grid: SizeGrid) -> np.ndarray:
    """Approximate ``I[k] = int_0^{midpoint[k]} f``.

    Full cells to the left of ``k`` plus half of cell ``k`` itself.
    """
    values = _check_length(values, grid)
    contrib = values * grid.weights
    total = np.cumsum(contrib, axis=-1)
    return total - 0.5 * contrib


def volterra(f, exponent, grid: SizeGrid) -> np.ndarray:
    """Evaluate ``V(s) = int_0^s exp(E(y) - E(s)) f(y) dy`` at the midpoints.

    ``exponent`` holds E at the midpoints (real or complex). Leading axes of
    ``f`` and ``exponent`` broadcast. The sum is accumulated as a first-order
    recursion so only differences of E between neighbouring cells are ever
    exponentiated; this stays finite whenever the true integral does.
    """
    f = _check_length(f, grid)
    exponent = _check_length(exponent, grid)
    shape = np.broadcast_shapes(f.shape, exponent.shape)
    dtype = np.result_type(f.dtype, exponent.dtype, float)
    wf = np.broadcast_to(f * grid.weights, shape)
    dE = np.diff(exponent, axis=-1)
    if np.iscomplexobj(dE):
        worst = np.max(-dE.real, initial=-np.inf)
    else:
        worst = np.max(-dE, initial=-np.inf)
    if worst > 700.0:
        raise OverflowError("exponent increment too large for double precision")
    decay = np.exp(-dE)
    out = np.empty(shape, dtype=dtype)
    acc = np.zeros(shape[:-1], dtype=dtype)
    out[..., 0] = 0.5 * wf[..., 0]
    with np.errstate(over="ignore", invalid="ignore"):  # checked just below
        for i in range(1, shape[-1]):
            acc = (acc + wf[..., i - 1]) * decay[..., i - 1]
            out[..., i] = acc + 0.5 * wf[..., i]
    if not np.all(np.isfinite(out)):
        raise OverflowError("Volterra sum overflowed")
    return out


# ------------------------------------------------------------ real roots

def bracketed_root(f, lo: float, hi: float, tol: float = 1e-12) -> float:
    """Brent root of ``f`` on a sign-changing bracket ``[lo, hi]``."""
    if not tol > 0:
        raise ArgumentError("tol must be positive")
    flo, fhi = f(lo), f(hi)
    if not (np.isfinite(flo) and np.isfinite(fhi)):
        raise EvaluationError("non-finite value at a bracket end", point=(lo, hi))
    if flo == 0.0:
        return float(lo)
    if fhi == 0.0:
        return float(hi)
    if flo * fhi > 0:
        raise BracketError(f"no sign change on [{lo}, {hi}]: f={flo:.6g}, {fhi:.6g}")
    try:
        return float(optimize.brentq(f, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps,
                                     maxiter=200))
    except RuntimeError as exc:
        raise ConvergenceError(str(exc)) from exc


def scan_sign_changes(f, lo: float, hi: float, n_samples: int) -> list[tuple[float, float]]:
    """Sample ``f`` and return every adjacent pair of samples that brackets a root.

    Samples are geometric when ``lo > 0`` (population sizes span decades),
    uniform otherwise. A sample landing exactly on a zero yields a single
    bracket ending at that sample.
    """
    if not lo < hi:
        raise ArgumentError("need lo < hi")
    if n_samples < 2:
        raise ArgumentError("need at least two samples")
    xs = np.geomspace(lo, hi, n_samples) if lo > 0 else np.linspace(lo, hi, n_samples)
    fs = np.empty(n_samples)
    for k, x in enumerate(xs):
        v = float(f(x))
        if not np.isfinite(v):
            raise EvaluationError(f"f({x!r}) is not finite", point=float(x))
        fs[k] = v
    out = []
    for i in range(n_samples - 1):
        if fs[i + 1] == 0.0:
            out.append((float(xs[i]), float(xs[i + 1])))
        elif fs[i] == 0.0:
            if i == 0:
                out.append((float(xs[0]), float(xs[1])))
        elif fs[i] * fs[i + 1] < 0:
            out.append((float(xs[i]), float(xs[i + 1])))
    return out


# --------------------------------------------------------- complex roots

def _evaluate(F, z: np.ndarray) -> np.ndarray:
    try:
        out = np.asarray(F(z), dtype=complex)
        if out.shape == z.shape:
            return out
    except (TypeError, ValueError):
        pass
    return np.array([complex(F(complex(v))) for v in z])


_MAX_SIDE_SAMPLES = 8192


def winding_count(F, rect: Rectangle, n_boundary_samples: int = 256,
                  zero_tol: float = 1e-9) -> int:
    """Number of zeros of an analytic ``F`` inside ``rect`` (argument principle).

    Each side starts with ``n_boundary_samples`` points; segments whose phase
    increment reaches pi/2 are bisected until none does or a side holds more
    than 8192 points.
    """
    corners = [complex(rect.re_lo, rect.im_lo), complex(rect.re_hi, rect.im_lo),
               complex(rect.re_hi, rect.im_hi), complex(rect.re_lo, rect.im_hi)]
    total = 0.0
    for k in range(4):
        a, b = corners[k], corners[(k + 1) % 4]
        t = np.linspace(0.0, 1.0, n_boundary_samples + 1)
        vals = _evaluate(F, a + (b - a) * t)
        while True:
            mags = np.abs(vals)
            if not np.all(np.isfinite(vals)):
                raise EvaluationError("non-finite value on rectangle boundary")
            if mags.min() < zero_tol:
                i = int(mags.argmin())
                raise BoundaryZeroError("zero on or near the rectangle boundary",
                                        point=complex(a + (b - a) * t[i]))
            dphi = np.angle(vals[1:] / vals[:-1])
            bad = np.abs(dphi) >= 0.5 * np.pi
            if not bad.any():
                break
            if t.size > _MAX_SIDE_SAMPLES:
                raise NumericalError(
                    f"phase still unresolved with {t.size} samples on one side")
            tm = 0.5 * (t[:-1][bad] + t[1:][bad])
            vm = _evaluate(F, a + (b - a) * tm)
            order = np.argsort(np.concatenate([t, tm]), kind="stable")
            t = np.concatenate([t, tm])[order]
            vals = np.concatenate([vals, vm])[order]
        total += dphi.sum()
    return int(round(total / (2 * np.pi)))


def refine_complex_root(F, z0: complex, tol: float = 1e-12, max_iter: int = 100) -> complex:
    """Newton iteration with a central-difference derivative."""
    z = complex(z0)
    fz = complex(F(z))
    for _ in range(max_iter):
        if abs(fz) < tol:
            return z
        step = 1e-7 * max(1.0, abs(z))
        try:
            dF = (complex(F(z + step)) - complex(F(z - step))) / (2 * step)
            if dF == 0 or not np.isfinite(dF):
                break
            z = z - fz / dF
            fz = complex(F(z))
        except OverflowError:
            # an iterate left the range where F is representable
            fz = complex(np.inf)
        if not np.isfinite(fz):
            break
    if abs(fz) < tol:
        return z
    raise ConvergenceError(f"Newton did not converge from {z0} (last |F|={abs(fz):.3g})")


def locate_zeros(F, rect: Rectangle, tol: float = 1e-12, n_boundary_samples: int = 256,
                 max_depth: int = 14) -> list[complex]:
    """All zeros of ``F`` in ``rect`` by quadrisection plus Newton refinement.

    Cuts are placed off-centre so symmetric problems (real zeros on the real
    axis, conjugate pairs) do not put a zero on a cut.
    """
    count = winding_count(F, rect, n_boundary_samples)
    return _locate(F, rect, count, tol, n_boundary_samples, max_depth)


_SPLITS = [(0.4913, 0.5377), (0.5231, 0.4689), (0.4601, 0.5119)]


def _locate(F, rect, count, tol, nbs, depth):
    if count <= 0:
        return []
    size = max(rect.re_hi - rect.re_lo, rect.im_hi - rect.im_lo)
    if count == 1 or depth == 0 or size < 1e-8:
        try:
            z = refine_complex_root(F, rect.center, tol)
            if rect.contains(z, margin=1e-9 * max(1.0, abs(z))):
                return [z] * count
        except ConvergenceError:
            if depth == 0 or size < 1e-8:
                raise
        if depth == 0 or size < 1e-8:
            raise ConvergenceError(f"could not isolate zeros inside {rect}")
    for fx, fy in _SPLITS:
        try:
            children = rect.split(fx, fy)
            counts = [winding_count(F, c, nbs) for c in children]
            break
        except BoundaryZeroError:
            continue
    else:
        raise BoundaryZeroError(f"every subdivision of {rect} cuts through a zero")
    roots = []
    for c, k in zip(children, counts):
        roots.extend(_locate(F, c, k, tol, nbs, depth - 1))
    return roots


# ------------------------------------------------------------ eigenvalues

def dense_eigen(A) -> tuple[np.ndarray, np.ndarray]:
    """All eigenvalues of ``A`` and the right eigenvector of the rightmost one.

    The eigenvector has unit 1-norm and is rotated so its largest-magnitude
    entry is real and positive; it is returned as a real array when the
    eigenvalue is real.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
        raise ArgumentError(f"need a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ArgumentError("matrix has non-finite entries")
    try:
        vals, vecs = np.linalg.eig(A)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigenvalue iteration failed for {A.shape[0]}x{A.shape[0]} "
                             f"matrix: {exc}") from exc
    k = _rightmost_index(vals)
    v = vecs[:, k]
    j = int(np.argmax(np.abs(v)))
    v = v * (abs(v[j]) / v[j])
    v = v / np.abs(v).sum()
    if abs(vals[k].imag) <= 1e-12 * max(1.0, abs(vals[k])):
        v = v.real
    return vals, v


def _rightmost_index(vals: np.ndarray) -> int:
    re = vals.real
    top = re.max()
    cand = np.flatnonzero(re >= top - 1e-14 * max(1.0, abs(top)))
    # among ties prefer the real one, then the one in the upper half plane
    return int(cand[np.lexsort((-vals[cand].imag, np.abs(vals[cand].imag)))[0]])
