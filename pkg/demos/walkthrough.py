"""Equilibrium, stability and simulation for three small models.

    python3 demos/walkthrough.py

All three use growth 1, mortality 1 and fertility a*exp(-k P) on sizes
[0, 1].  The equilibrium is P* = ln(a/e)/k and the linearised births are
proportional to 1 - k P*, which decides what the spectrum looks like:

* a = e^2, k = 1: births cancel exactly.  The matrix route only sees a
  roundoff-split defective block and the characteristic route has no roots.
* a = e^1.5, k = 1: damped, a single real mode near -2.06.
* a = e^0.5, k = -1: fertility rises with crowding and the equilibrium is
  unstable; the instability certificate fires with K(0) = eps/e > 1.
"""

import math

import numpy as np

from structpop.equilibrium import polish_equilibrium, solve_equilibrium
from structpop.numerics import SizeGrid
from structpop.rates import VitalRates, make_fertility, make_rate_surface
from structpop.simulator import measure_growth_rate, perturb_equilibrium, simulate
from structpop.stability import spectral_verdict


def rates(a, k):
    one = make_rate_surface("constant", {"c": 1.0})
    beta = make_fertility("separable", {
        "beta1": {"family": "exp_decay_P", "params": {"a": a, "k": k}},
        "beta2": {"family": "constant", "params": {"c": 1.0}}})
    return VitalRates(one, one, beta)


def show(name, a, k, t_end, window):
    grid = SizeGrid.uniform(1.0, 200)
    r = rates(a, k)
    (eq,) = solve_equilibrium(r, grid)
    rep = spectral_verdict(r, eq, grid)
    print(f"\n{name}: P* = {eq.P_star:.6f} (closed form {math.log(a / math.e) / k:.6f})")
    print(f"  verdict {rep.verdict}; dominant matrix eigenvalue {rep.dominant_matrix_eig:.4f}")
    root = rep.rightmost_char_root
    print("  rightmost characteristic root", "none in the search box" if root is None
          else f"{root:.4f}")
    if rep.instability_certificate is not None:
        c = rep.instability_certificate
        print(f"  certificate: eps = {c.eps:.4f}, K(0) = {c.K0:.4f}, growth >= {c.growth_root:.4f}")

    eq = polish_equilibrium(r, grid, eq)
    tr = simulate(perturb_equilibrium(eq, 0.01), r, grid, t_end)
    dev = np.abs(tr.totals - eq.P_star)
    print(f"  |P - P*| from {dev[0]:.2e} to {dev[-1]:.2e} over t in [0, {t_end}]")
    try:
        rate, _ = measure_growth_rate(tr, eq, window)
        print(f"  measured growth rate on {window}: {rate:.4f}")
    except Exception as exc:   # the baseline deviation hits roundoff
        print(f"  no growth fit: {exc}")


if __name__ == "__main__":
    show("births cancel", math.e ** 2, 1.0, 4.0, (2.0, 4.0))
    show("damped fertility", math.e ** 1.5, 1.0, 6.0, (2.0, 6.0))
    show("crowding raises fertility", math.e ** 0.5, -1.0, 2.0, (0.5, 2.0))
