"""Built-in problems and config-file loading.

Each problem bundles a HamiltonianSpec, initial data, and a Lagrangian
evaluator with the closed-form conjugate filled in where one exists. The
same built-ins are reachable from a line-oriented key=value config file
(configparser syntax, see `load_problem_config`).

Built-in names:
  example11            two-component sharpness benchmark: H1 = p^2/2 - V(y) + F(u),
                       H2 = p^2 + F(u), zero data; F is 0 or (1/2) sin(u1 - u2)
  eikonal-1d           single eikonal equation with tent-potential oscillation
                       and a slow cosine background; coupling=sin upgrades it
                       to a two-component system
  linear-coupling-2sys two eikonal components coupled by a zero-row-sum matrix
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import PreconditionError
from .model import (
    HamiltonianSpec,
    InitialData,
    LagrangianEvaluator,
    SamplePlan,
    check_hypotheses,
)

TWO_PI = 2.0 * np.pi


def tent_potential(y):
    """Periodic tent: 1 on [-1/3, 1/3], linear down to 0 at y = +-1/2."""
    d = y - np.round(y)  # wrap to [-1/2, 1/2)
    return np.minimum(1.0, np.maximum(0.0, 6.0 * (0.5 - np.abs(d))))


def bump_potential(y):
    """Smooth comparison potential sin^2(pi y): min 0 at integers."""
    return np.sin(np.pi * y) ** 2


_POTENTIALS = {"tent": tent_potential, "bump": bump_potential}


@dataclass
class Problem:
    """A ready-to-solve bundle: spec, data, Lagrangian, parameter record."""

    name: str
    spec: HamiltonianSpec
    data: InitialData
    lagrangian: LagrangianEvaluator
    params: dict = field(default_factory=dict)

    @property
    def m(self) -> int:
        return self.spec.m


def _sin_coupling(u):
    return 0.5 * np.sin(u[0] - u[1])


def _expect(overrides, allowed):
    extra = set(overrides) - set(allowed)
    if extra:
        raise PreconditionError(f"unknown problem overrides: {sorted(extra)}")


def _example11(**overrides) -> Problem:
    _expect(overrides, {"coupling", "v"})
    coupling = overrides.get("coupling", "sin")
    vname = overrides.get("v", "tent")
    if coupling not in ("sin", "zero"):
        raise PreconditionError(f"example11 coupling must be sin or zero, not {coupling!r}")
    V = _POTENTIALS[vname]
    if coupling == "sin":
        F = _sin_coupling
        theta, fmax = 1.0, 0.5
    else:
        F = lambda u: np.zeros_like(u[0])  # noqa: E731
        theta, fmax = 0.0, 0.0

    def H(i, x, y, p, u, t=0.0):
        if i == 0:
            return 0.5 * p[0] ** 2 - V(y[0]) + F(u)
        return p[0] ** 2 + F(u)

    def radius(i, u_bound):
        level = (1.0 if i == 0 else 0.0) + fmax
        if i == 0:
            return float(np.sqrt(2.0 * (level + 1.0 + 1.0 + fmax)))
        return float(np.sqrt(level + 1.0 + fmax))

    def L(i, x, y, v, u):
        if i == 0:
            return 0.5 * v[0] ** 2 + V(y[0]) - F(u)
        return 0.25 * v[0] ** 2 - F(u)

    spec = HamiltonianSpec(
        m=2, n=1, evaluate=H, theta=theta, lip_x=0.0,
        coercivity_radius=radius, shift_invariant=True, name="example11",
    )
    data = InitialData(m=2, n=1, phi=lambda i, x: np.zeros(x.shape[1:]),
                       lip=0.0, bound=0.0, name="zero")
    lag = LagrangianEvaluator(spec, p_search_radius=radius(0, 1.0) + 1.0,
                              closed_form=L)
    return Problem("example11", spec, data, lag,
                   params={"coupling": coupling, "v": vname, "theta": theta})


def _eikonal_1d(**overrides) -> Problem:
    _expect(overrides, {"coupling", "x_amp", "phi_amp"})
    coupling = overrides.get("coupling", "none")
    phi_amp = float(overrides.get("phi_amp", 0.15))
    if coupling not in ("none", "sin"):
        raise PreconditionError(f"eikonal-1d coupling must be none or sin, not {coupling!r}")

    if coupling == "none":
        x_amp = float(overrides.get("x_amp", 0.25))

        def H(i, x, y, p, u, t=0.0):
            return 0.5 * p[0] ** 2 - tent_potential(y[0]) + x_amp * np.cos(TWO_PI * x[0])

        def L(i, x, y, v, u):
            return 0.5 * v[0] ** 2 + tent_potential(y[0]) - x_amp * np.cos(TWO_PI * x[0])

        def radius(i, u_bound):
            return float(np.sqrt(2.0 * (1.0 + 2.0 * (1.0 + x_amp))))

        spec = HamiltonianSpec(
            m=1, n=1, evaluate=H, theta=0.0, lip_x=TWO_PI * x_amp,
            coercivity_radius=radius, shift_invariant=True, name="eikonal-1d",
        )
        data = InitialData(
            m=1, n=1,
            phi=lambda i, x: phi_amp * np.cos(TWO_PI * x[0]),
            lip=TWO_PI * phi_amp, bound=phi_amp, name="cosine",
        )
        lag = LagrangianEvaluator(spec, p_search_radius=radius(0, 1.0) + 1.0,
                                  closed_form=L)
        return Problem("eikonal-1d", spec, data, lag,
                       params={"coupling": coupling, "x_amp": x_amp,
                               "phi_amp": phi_amp, "theta": 0.0})

    # coupled variant: two eikonal components, different potentials, the slow
    # cosine dropped so the effective cache lattice stays (p, c1, c2) only
    x_amp = float(overrides.get("x_amp", 0.0))
    if x_amp != 0.0:
        raise PreconditionError("eikonal-1d with coupling=sin has no x dependence")
    pots = (tent_potential, bump_potential)

    def H(i, x, y, p, u, t=0.0):
        return 0.5 * p[0] ** 2 - pots[i](y[0]) + _sin_coupling(u)

    def L(i, x, y, v, u):
        return 0.5 * v[0] ** 2 + pots[i](y[0]) - _sin_coupling(u)

    def radius(i, u_bound):
        return float(np.sqrt(2.0 * (1.0 + 2.0 * 1.5)))

    def phi(i, x):
        if i == 0:
            return phi_amp * np.cos(TWO_PI * x[0])
        return phi_amp * np.sin(TWO_PI * x[0])

    spec = HamiltonianSpec(
        m=2, n=1, evaluate=H, theta=1.0, lip_x=0.0,
        coercivity_radius=radius, shift_invariant=True, name="eikonal-1d+sin",
    )
    data = InitialData(m=2, n=1, phi=phi, lip=TWO_PI * phi_amp,
                       bound=phi_amp, name="cos-sin")
    lag = LagrangianEvaluator(spec, p_search_radius=radius(0, 1.0) + 1.0,
                              closed_form=L)
    return Problem("eikonal-1d", spec, data, lag,
                   params={"coupling": coupling, "phi_amp": phi_amp, "theta": 1.0})


def _linear_coupling(**overrides) -> Problem:
    _expect(overrides, {"b", "phi_amp"})
    b_off = float(overrides.get("b", 0.5))
    phi_amp = float(overrides.get("phi_amp", 0.15))
    B = np.array([[b_off, -b_off], [-b_off, b_off]])
    theta = float(np.max(np.sum(np.abs(B), axis=1)))
    pots = (tent_potential, bump_potential)

    def H(i, x, y, p, u, t=0.0):
        return 0.5 * p[0] ** 2 - pots[i](y[0]) + B[i, 0] * u[0] + B[i, 1] * u[1]

    def L(i, x, y, v, u):
        return 0.5 * v[0] ** 2 + pots[i](y[0]) - B[i, 0] * u[0] - B[i, 1] * u[1]

    def radius(i, u_bound):
        return float(np.sqrt(2.0 * (1.0 + 2.0 * (1.0 + theta * u_bound))))

    def phi(i, x):
        if i == 0:
            return phi_amp * np.cos(TWO_PI * x[0])
        return phi_amp * np.sin(TWO_PI * x[0])

    spec = HamiltonianSpec(
        m=2, n=1, evaluate=H, theta=theta, lip_x=0.0,
        coercivity_radius=radius, shift_invariant=True,
        name="linear-coupling-2sys",
    )
    data = InitialData(m=2, n=1, phi=phi, lip=TWO_PI * phi_amp,
                       bound=phi_amp, name="cos-sin")
    lag = LagrangianEvaluator(spec, p_search_radius=radius(0, 2.0) + 1.0,
                              closed_form=L)
    return Problem("linear-coupling-2sys", spec, data, lag,
                   params={"b": b_off, "phi_amp": phi_amp, "theta": theta})


def shift_invariant_counterexample() -> Problem:
    """Coupling (u1 - u2)^2: invariant under common shifts, but with no
    global Lipschitz bound in u, so any declared finite theta is wrong on a
    large enough box. Used to exercise the hypothesis checker."""
    pots = (tent_potential, bump_potential)
    B = np.array([[1.0, -1.0], [-1.0, 1.0]])

    def H(i, x, y, p, u, t=0.0):
        lin = B[i, 0] * u[0] + B[i, 1] * u[1]
        return 0.5 * p[0] ** 2 - pots[i](y[0]) + lin**2

    def radius(i, u_bound):
        return float(np.sqrt(2.0 * (2.0 + (2.0 * u_bound) ** 2 + 1.0)))

    spec = HamiltonianSpec(
        m=2, n=1, evaluate=H, theta=2.0, lip_x=0.0,
        coercivity_radius=radius, shift_invariant=True,
        name="squared-difference-coupling",
    )
    data = InitialData(m=2, n=1, phi=lambda i, x: np.zeros(x.shape[1:]),
                       lip=0.0, bound=0.0)
    lag = LagrangianEvaluator(spec, p_search_radius=radius(0, 1.0) + 1.0)
    return Problem("squared-difference-coupling", spec, data, lag)


_BUILTINS = {
    "example11": _example11,
    "eikonal-1d": _eikonal_1d,
    "linear-coupling-2sys": _linear_coupling,
}


def validate_problem(problem: Problem) -> None:
    """Load-time gate: sampled midpoint convexity in p must hold."""
    spec = problem.spec
    plan = SamplePlan(seed=7, batch=96, u_bound=1.0)
    report = check_hypotheses(spec, plan)
    conv = report.results["convexity"]
    if not conv.passed:
        raise PreconditionError(
            f"problem {problem.name!r} is not convex in p "
            f"(midpoint excess {conv.worst:.3e})"
        )


def get_problem(name: str, **overrides) -> Problem:
    if name not in _BUILTINS:
        raise PreconditionError(
            f"unknown problem {name!r}; built-ins: {sorted(_BUILTINS)}"
        )
    problem = _BUILTINS[name](**overrides)
    validate_problem(problem)
    return problem


def _coerce(value: str):
    for cast in (int, float):
        try:
            return cast(value)
        except ValueError:
            pass
    return value


def load_problem_config(path):
    """Read a problem (and any run settings) from a key=value config file.

    Format: configparser sections; [problem] must contain name=..., all other
    keys in that section are passed as overrides. Remaining sections are
    returned untouched for the caller (the CLI merges them with flags).
    """
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    read = cp.read(path)
    if not read:
        raise PreconditionError(f"config file not found: {path}")
    if "problem" not in cp:
        raise PreconditionError("config file has no [problem] section")
    section = dict(cp["problem"])
    if "name" not in section:
        raise PreconditionError("[problem] section must set name=")
    name = section.pop("name")
    overrides = {k: _coerce(v) for k, v in section.items()}
    rest = {s: {k: _coerce(v) for k, v in cp[s].items()}
            for s in cp.sections() if s != "problem"}
    return get_problem(name, **overrides), rest
