"""How the equilibrium and its stability move with the fertility scale.

    python3 demos/fertility_sweep.py

Sweeps a in a*exp(-P) from below the existence threshold a = e upward.  The
equilibrium P* = ln(a) - 1 appears at a = e.  Below a = e^2 the linearised
births are positive and the dominant mode is real; past a = e^2 they turn
negative and the dominant mode becomes a decaying complex pair.
"""

import math

from structpop.equilibrium import solve_equilibrium
from structpop.errors import InconsistencyError
from structpop.numerics import SizeGrid
from structpop.rates import VitalRates, make_fertility, make_rate_surface
from structpop.stability import spectral_verdict

grid = SizeGrid.uniform(1.0, 100)
one = make_rate_surface("constant", {"c": 1.0})

print(f"{'ln a':>6} {'P*':>10} {'dominant eigenvalue':>24} verdict")
for ln_a in (0.5, 1.25, 1.5, 1.75, 2.5, 3.0, 4.0):
    beta = make_fertility("separable", {
        "beta1": {"family": "exp_decay_P", "params": {"a": math.exp(ln_a), "k": 1.0}},
        "beta2": {"family": "constant", "params": {"c": 1.0}}})
    r = VitalRates(one, one, beta)
    eqs = solve_equilibrium(r, grid)
    if not eqs:
        print(f"{ln_a:6.2f} {'-':>10} {'-':>24} no positive equilibrium")
        continue
    try:
        rep = spectral_verdict(r, eqs[0], grid, check_jacobian=False)
    except InconsistencyError as exc:
        print(f"{ln_a:6.2f} {eqs[0].P_star:10.5f} routes disagree: {exc}")
        continue
    lam = rep.dominant_matrix_eig
    print(f"{ln_a:6.2f} {eqs[0].P_star:10.5f} {lam.real:11.4f} {lam.imag:+11.4f}j {rep.verdict}")
