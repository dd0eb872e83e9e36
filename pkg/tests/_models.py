"""Model factories shared by the test modules.

Most models use gamma = mu = 1 and beta = a exp(-kP) on [0, 1], where the
separable equilibrium is P* = ln(a / e) / k and the linearised births are
proportional to e (1 - k P*).
"""

import math

from structpop.rates import VitalRates, make_fertility, make_rate_surface

E = math.e


def C(c):
    return {"family": "constant", "params": {"c": c}}


def affine_s(c0, c1):
    return {"family": "affine_s", "params": {"c0": c0, "c1": c1}}


def affine_P(c0, c1):
    return {"family": "affine_P", "params": {"c0": c0, "c1": c1}}


def exp_decay(a, k):
    return {"family": "exp_decay_P", "params": {"a": a, "k": k}}


def model(gamma=C(1.0), mu=C(1.0), beta1=None, beta2=C(1.0), kind="separable", m=1.0):
    beta1 = beta1 or exp_decay(E ** 2, 1.0)
    comps = ({"beta1": beta1, "beta2": beta2} if kind == "separable"
             else {"terms": [{"beta1": beta1, "beta2": beta2}]})
    return VitalRates(make_rate_surface(**gamma), make_rate_surface(**mu),
                      make_fertility(kind, comps, m=m), m=m)


def baseline():
    return model()


def damped_fertility():
    """P* = 0.5, real dominant eigenvalue near -2.08."""
    return model(beta1=exp_decay(E ** 1.5, 1.0))


def crowded_mortality():
    """Density-dependent mortality 0.5 + 0.5 P, constant fertility e."""
    return model(mu=affine_P(0.5, 0.5), beta1=C(E))


def size_dependent():
    """Size-dependent growth and birth sizes with crowded mortality."""
    return model(gamma=affine_s(1.0, 0.5), mu=affine_P(0.5, 0.5), beta1=C(3.0),
                 beta2=affine_s(0.5, 1.0))


def unstable_certificate():
    """Fertility increasing with P: P* = 0.5 and K(0) = eps / e > 1."""
    return model(beta1=exp_decay(E ** 0.5, -1.0))


def strongly_damped():
    return model(mu=C(5.0), beta1=exp_decay(6.2395 * E, 1.0))


def growth_dependent():
    """Growth rate 1 + 0.3 P."""
    return model(gamma=affine_P(1.0, 0.3))
