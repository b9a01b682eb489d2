"""Independent reference values for the test suite.

Everything here reaches its number by a different route than the package:
quadrature plus root bracketing instead of discounted cell solves, dense
minimization instead of marching schemes, closed forms where the calculus
permits them.  Keeping the routes disjoint is the point -- a shared bug
cannot cancel.
"""

import numpy as np
from scipy.integrate import quad
from scipy.optimize import brentq, minimize_scalar

# kinks of the tent potential inside one period, for the quadrature
_TENT_KINKS = [1.0 / 3.0, 0.5, 2.0 / 3.0]


def tent(y):
    d = y - np.round(y)
    return np.minimum(1.0, np.maximum(0.0, 6.0 * (0.5 - np.abs(d))))


def _int_sqrt(h: float) -> float:
    """integral over one period of sqrt(2(h + V_tent))."""
    val, err = quad(lambda y: np.sqrt(2.0 * (h + tent(y))), 0.0, 1.0,
                    points=_TENT_KINKS, limit=200)
    if err > 5e-9:
        raise RuntimeError(f"quadrature too loose: err={err}")
    return val


# momentum where the flat piece of the effective Hamiltonian ends
P_STAR = _int_sqrt(0.0)

# right slope of hbar at P_STAR: 1 / integral of 1/sqrt(2V) (chain rule on
# the level-set identity |p| = integral sqrt(2(hbar+V)))
_INV_SPEED, _ = quad(lambda y: 1.0 / np.sqrt(2.0 * tent(y)), 0.0, 1.0,
                     points=_TENT_KINKS, limit=200)
V_CRIT = 1.0 / _INV_SPEED  # largest velocity served by the flat piece


def hbar_tent(p: float) -> float:
    """Effective Hamiltonian of H = p^2/2 - V_tent by quadrature + brentq.

    Flat piece: hbar = 0 for |p| <= P_STAR.  Coercive branch: hbar solves
    |p| = integral sqrt(2(hbar + V)), increasing in hbar, bracketed by
    [0, p^2/2] since V >= 0.
    """
    q = abs(float(p))
    if q <= P_STAR:
        return 0.0
    return brentq(lambda h: _int_sqrt(h) - q, 0.0, 0.5 * q * q + 1e-12,
                  xtol=1e-12)


def lbar_tent(v: float) -> float:
    """Conjugate of hbar_tent.  Linear piece p*|v| up to V_CRIT, else a
    bracketed 1-D maximization of p v - hbar(p)."""
    s = abs(float(v))
    if s <= V_CRIT:
        return P_STAR * s
    res = minimize_scalar(lambda p: -(p * s - hbar_tent(p)),
                          bracket=(P_STAR, P_STAR + 1.0 + 2.0 * s),
                          method="brent", options={"xtol": 1e-10})
    return -float(res.fun)


def hopf_lax(phi, x: float, t: float, period: float = 1.0,
             n_dense: int = 20001, windings: int = 3) -> float:
    """Dense-grid Hopf-Lax value for H = p^2/2 on the torus.

    u(x,t) = min_y phi(y) + d(x,y)^2 / (2t) with the displacement allowed to
    wind; dense minimization instead of any marching, so errors are O(dy^2).
    """
    y = np.linspace(0.0, period, n_dense)
    best = np.inf
    for k in range(-windings, windings + 1):
        d = x - y + k * period
        best = min(best, float(np.min(phi(y) + d * d / (2.0 * t))))
    return best


def hopf_lax_quarter(phi, x: float, t: float, period: float = 1.0,
                     n_dense: int = 20001, windings: int = 3) -> float:
    """Same for H = p^2 (Lagrangian v^2/4), the second component of the
    sharpness example."""
    y = np.linspace(0.0, period, n_dense)
    best = np.inf
    for k in range(-windings, windings + 1):
        d = x - y + k * period
        best = min(best, float(np.min(phi(y) + d * d / (4.0 * t))))
    return best


def min_winding_action(a: float, b: float, t: float, lbar,
                       period: float = 1.0, windings: int = 3) -> float:
    """t * Lbar of the best winding class: the effective point action of an
    x-independent convex Lagrangian (constant speed is optimal by Jensen)."""
    return min(t * lbar((b - a + k * period) / t)
               for k in range(-windings, windings + 1))


if __name__ == "__main__":
    print(f"P_STAR  = {P_STAR:.15f}")
    print(f"V_CRIT  = {V_CRIT:.15f}")
    for p in (0.0, 0.4, 0.8, 1.2, 1.2570787, 1.35, 1.5, 1.8, 2.2):
        print(f"hbar({p}) = {hbar_tent(p):.12f}")
    for v in (0.2, 0.375, 0.4375, 0.5, 0.7071, 0.9, 1.3):
        print(f"lbar({v}) = {lbar_tent(v):.12f}")
