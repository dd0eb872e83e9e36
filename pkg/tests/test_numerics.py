import cmath
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from structpop.errors import (
    ArgumentError,
    BoundaryZeroError,
    BracketError,
    ConvergenceError,
    EvaluationError,
)
from structpop.numerics import (
    Rectangle,
    SizeGrid,
    bracketed_root,
    cumulative_integral,
    dense_eigen,
    integrate,
    locate_zeros,
    refine_complex_root,
    scan_sign_changes,
    volterra,
    winding_count,
)


# ------------------------------------------------------------------ grid

@given(m=st.floats(0.1, 50.0), n=st.integers(1, 400))
def test_grid_invariants(m, n):
    g = SizeGrid.uniform(m, n)
    assert g.edges[0] == 0.0 and g.edges[-1] == m
    assert np.all(np.diff(g.edges) > 0)
    assert abs(g.weights.sum() - m) <= 1e-12 * m
    assert np.all((g.midpoints > g.edges[:-1]) & (g.midpoints < g.edges[1:]))


def test_grid_rejects_bad_edges():
    with pytest.raises(ArgumentError):
        SizeGrid.from_edges([0.0, 0.5, 0.5, 1.0])
    with pytest.raises(ArgumentError):
        SizeGrid.from_edges([0.1, 1.0])


def test_rectangle_requires_order():
    with pytest.raises(ArgumentError):
        Rectangle(1.0, 0.0, -1.0, 1.0)


# ------------------------------------------------------------ quadrature

@pytest.mark.parametrize("n", [1, 7, 100])
def test_integrate_constant(n):
    g = SizeGrid.uniform(1.0, n)
    assert integrate(np.ones(n), g) == pytest.approx(1.0, abs=1e-14)


def test_integrate_linear_and_exponential():
    g = SizeGrid.uniform(1.0, 1000)
    s = g.midpoints
    assert integrate(s, g) == pytest.approx(0.5, abs=1e-6)
    assert integrate(np.exp(-s), g) == pytest.approx(1 - math.exp(-1), abs=1e-6)


def test_integrate_length_mismatch():
    with pytest.raises(ArgumentError):
        integrate(np.ones(3), SizeGrid.uniform(1.0, 4))


@settings(max_examples=50)
@given(a=st.floats(-10, 10), b=st.floats(-10, 10), seed=st.integers(0, 2**31))
def test_integrate_is_linear(a, b, seed):
    g = SizeGrid.uniform(2.0, 37)
    rng = np.random.default_rng(seed)
    f, h = rng.normal(size=37), rng.normal(size=37)
    lhs = integrate(a * f + b * h, g)
    rhs = a * integrate(f, g) + b * integrate(h, g)
    scale = abs(a) * np.abs(f).sum() + abs(b) * np.abs(h).sum() + 1.0
    assert abs(lhs - rhs) <= 1e-12 * scale


def test_cumulative_integral_examples():
    g = SizeGrid.uniform(1.0, 1000)
    np.testing.assert_allclose(cumulative_integral(np.ones(1000), g), g.midpoints, atol=1e-12)
    assert np.all(cumulative_integral(np.zeros(1000), g) == 0)
    np.testing.assert_allclose(cumulative_integral(2 * g.midpoints, g), g.midpoints ** 2,
                               atol=1e-5)


@settings(max_examples=50)
@given(seed=st.integers(0, 2**31), n=st.integers(2, 200))
def test_cumulative_integral_monotone_and_consistent(seed, n):
    g = SizeGrid.uniform(1.0, n)
    f = np.random.default_rng(seed).uniform(0, 5, n)
    I = cumulative_integral(f, g)
    assert np.all(np.diff(I) >= 0)
    assert abs(integrate(f, g) - I[-1]) <= g.weights[-1] * f[-1] + 1e-12


def test_volterra_matches_closed_form():
    # V(s) = int_0^s exp(-(s-y)) dy = 1 - exp(-s)
    g = SizeGrid.uniform(1.0, 2000)
    V = volterra(np.ones(2000), g.midpoints, g)
    np.testing.assert_allclose(V, 1 - np.exp(-g.midpoints), atol=1e-6)


def test_volterra_broadcasts_over_complex_exponents():
    g = SizeGrid.uniform(1.0, 400)
    lam = np.array([0.0, 1.0 + 2.0j, -3.0])
    V = volterra(np.ones(400), lam[:, None] * g.midpoints, g)
    for k, l in enumerate(lam):
        exact = (1 - np.exp(-l * g.midpoints)) / l if l != 0 else g.midpoints
        np.testing.assert_allclose(V[k], exact, atol=1e-4)


def test_volterra_overflow_is_reported():
    g = SizeGrid.uniform(1.0, 4)
    with pytest.raises(OverflowError):
        volterra(np.ones(4), np.array([0.0, -800.0, -1600.0, -2400.0]), g)


# ------------------------------------------------------------ real roots

def test_bracketed_root_examples():
    assert bracketed_root(lambda x: x - 0.5, 0, 1, 1e-12) == pytest.approx(0.5, abs=1e-12)
    assert bracketed_root(lambda x: math.exp(1 - x) - 1, 0, 5) == pytest.approx(1.0, abs=1e-10)
    with pytest.raises(BracketError):
        bracketed_root(lambda x: x * x + 1, 0, 1)


def test_bracketed_root_argument_checks():
    with pytest.raises(ArgumentError):
        bracketed_root(lambda x: x, -1, 1, tol=0.0)
    with pytest.raises(EvaluationError):
        bracketed_root(lambda x: math.inf, -1, 1)


def test_scan_sign_changes_examples():
    br = scan_sign_changes(math.sin, 0.1, 7, 100)
    assert len(br) == 2
    assert br[0][0] < math.pi < br[0][1] and br[1][0] < 2 * math.pi < br[1][1]
    assert scan_sign_changes(lambda x: 1.0, 0.1, 7, 10) == []
    br = scan_sign_changes(lambda x: x - 3, 0, 10, 11)
    assert len(br) == 1 and br[0][0] <= 3 <= br[0][1]


def test_scan_sign_changes_nonfinite_carries_point():
    with pytest.raises(EvaluationError) as err:
        scan_sign_changes(lambda x: math.nan if x > 5 else 1.0, 0, 10, 11)
    assert err.value.point == 6.0


@settings(max_examples=40)
@given(roots=st.lists(st.floats(0.2, 9.8), min_size=1, max_size=4, unique=True))
def test_scan_finds_well_separated_roots(roots):
    roots = sorted(roots)
    if min(np.diff(roots), default=1.0) < 0.3:
        return
    f = lambda x: float(np.prod([x - r for r in roots]))  # noqa: E731
    br = scan_sign_changes(f, 0.0, 10.0, 201)
    assert len(br) == len(roots)
    for (a, b), r in zip(br, roots):
        assert a <= r <= b
        assert bracketed_root(f, a, b) == pytest.approx(r, abs=1e-9)


# --------------------------------------------------------- complex roots

def test_winding_count_examples():
    assert winding_count(lambda z: z - 0.5, Rectangle(-1, 1, -1, 1)) == 1
    assert winding_count(lambda z: z * z + 1, Rectangle(-2, 2, -2, 2)) == 2
    assert winding_count(np.exp, Rectangle(-3, 5, -20, 20)) == 0


def test_winding_count_boundary_zero():
    with pytest.raises(BoundaryZeroError):
        winding_count(lambda z: z - 1.0, Rectangle(-1, 1, -1, 1))


@settings(max_examples=30, deadline=None)
@given(roots=st.lists(st.tuples(st.floats(-3, 3), st.floats(-3, 3)), min_size=1, max_size=5),
       cut=st.floats(-2.5, 2.5))
def test_winding_count_additive_over_a_split(roots, cut):
    zs = [complex(a, b) for a, b in roots]
    if any(abs(z.real - cut) < 1e-3 or abs(abs(z.real) - 4) < 1e-3 for z in zs):
        return
    F = lambda z: np.prod([z - r for r in zs], axis=0)  # noqa: E731
    whole = winding_count(F, Rectangle(-4, 4, -4, 4))
    parts = (winding_count(F, Rectangle(-4, cut, -4, 4))
             + winding_count(F, Rectangle(cut, 4, -4, 4)))
    assert whole == parts == len(zs)


def test_refine_complex_root_examples():
    assert abs(refine_complex_root(lambda z: z * z + 1, 0.1 + 0.9j) - 1j) < 1e-10
    assert abs(refine_complex_root(lambda z: z - 2, 0) - 2) < 1e-12
    z = refine_complex_root(lambda z: cmath.exp(-z) - 0.5, 0.5)
    assert abs(z - math.log(2)) < 1e-10


def test_refine_complex_root_divergence():
    # from a real start Newton for z^2 + 1 never leaves the real line
    with pytest.raises(ConvergenceError):
        refine_complex_root(lambda z: z * z + 1, 0.5)


def test_locate_zeros_finds_polynomial_roots():
    zs = [0.3, -1.2 + 0.7j, -1.2 - 0.7j, 2.1 + 3.3j]
    F = lambda z: np.prod([z - r for r in zs], axis=0)  # noqa: E731
    found = locate_zeros(F, Rectangle(-5, 5, -5, 5))
    assert len(found) == len(zs)
    for r in zs:
        assert min(abs(f - r) for f in found) < 1e-9


# ------------------------------------------------------------ eigenvalues

def test_dense_eigen_examples():
    vals, vec = dense_eigen(np.diag([1.0, 2.0, 3.0]))
    assert sorted(vals.real) == [1.0, 2.0, 3.0]
    np.testing.assert_allclose(vec, [0, 0, 1])
    vals, _ = dense_eigen([[0.0, 1.0], [1.0, 0.0]])
    np.testing.assert_allclose(sorted(vals.real), [-1.0, 1.0])


def test_dense_eigen_rejects_bad_input():
    with pytest.raises(ArgumentError):
        dense_eigen(np.ones((2, 3)))
    with pytest.raises(ArgumentError):
        dense_eigen([[np.nan]])


def _metzler(seed, n):
    rng = np.random.default_rng(seed)
    A = rng.uniform(0, 1, (n, n)) * (rng.uniform(size=(n, n)) < 0.6)
    np.fill_diagonal(A, rng.normal(0, 3, n))
    return A


@settings(max_examples=60)
@given(seed=st.integers(0, 2**31), n=st.integers(1, 12))
def test_metzler_dominant_eigenpair_is_real_and_nonnegative(seed, n):
    vals, vec = dense_eigen(_metzler(seed, n))
    top = vals[np.argmax(vals.real)]
    assert abs(top.imag) <= 1e-9
    assert np.isrealobj(vec) or np.abs(vec.imag).max() < 1e-9
    assert np.real(vec).min() >= -1e-9
    assert np.abs(vec).sum() == pytest.approx(1.0)


@settings(max_examples=40)
@given(seed=st.integers(0, 2**31), n=st.integers(1, 10))
def test_eigenvalues_invariant_under_permutation(seed, n):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n, n))
    perm = rng.permutation(n)
    P = np.eye(n)[perm]
    a = np.sort_complex(dense_eigen(A)[0])
    b = np.sort_complex(dense_eigen(P @ A @ P.T)[0])
    np.testing.assert_allclose(a, b, atol=1e-9)
