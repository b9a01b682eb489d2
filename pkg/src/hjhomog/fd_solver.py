"""Monotone finite-difference solvers for the coupled systems.

The numerical Hamiltonian is global Lax-Friedrichs per axis,

    H(x, x/eps, (D+ u + D- u)/2, u) - sum_ax sigma_ax (D+ u - D- u)/2,

marched with forward Euler under the monotonicity CFL condition
dt * sum_ax sigma_ax/h <= cfl and, for coupled systems, dt * theta <= 1/2.
The dissipation sigma is, per component and axis, a sampled bound on
|dH/dp| over the coercivity box inflated by 10%. Coupling is explicit: the
full vector of current (or frozen) component values feeds every H_i call.

Store times are hit exactly: the step size is shortened inside each segment
so stamps never need time interpolation downstream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .errors import NumericalError, PreconditionError
from .grid import Field, TorusGrid
from .model import HamiltonianSpec, InitialData, kruzhkov_transform

_GUARD_EVERY = 256


@dataclass
class SchemeConfig:
    grid: TorusGrid
    t_end: float
    cfl: float = 0.45
    store_times: Optional[Sequence[float]] = None  # defaults to {0, t_end}
    sigma: Optional[np.ndarray] = None  # (m, n) override, skips sampling
    sigma_pad: float = 0.1
    u_bound: Optional[float] = None  # box for sigma sampling; sampled if None
    bound_factor: float = 20.0  # blow-up guard multiple

    def resolved_store_times(self) -> np.ndarray:
        if self.store_times is None:
            ts = np.array([0.0, self.t_end])
        else:
            ts = np.unique(np.asarray(self.store_times, dtype=float))
            if ts[0] > 1e-14:
                ts = np.concatenate([[0.0], ts])
        if ts[-1] > self.t_end + 1e-12 or np.any(ts < -1e-14):
            raise PreconditionError("store times must lie inside [0, t_end]")
        if not math.isclose(ts[-1], self.t_end, rel_tol=0, abs_tol=1e-12):
            ts = np.concatenate([ts, [self.t_end]])
        return ts


@dataclass
class StationaryConfig:
    grid: TorusGrid
    cfl: float = 0.45
    steady_tol: float = 1e-7  # sup update per unit pseudo-time
    check_every: int = 40
    window: int = 10  # consecutive passing checks required
    max_time: Optional[float] = None  # pseudo-time budget
    sigma: Optional[np.ndarray] = None
    sigma_pad: float = 0.1
    u_bound: Optional[float] = None
    warm_start: Optional[Field] = None


def _check_eps(grid: TorusGrid, eps: float) -> None:
    ratio = grid.period / eps
    if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
        raise PreconditionError(f"period/eps = {ratio} is not an integer")
    if grid.h > eps / 16.0 + 1e-14:
        raise PreconditionError(
            f"grid too coarse for eps={eps}: need h <= eps/16, got h={grid.h}"
        )


def estimate_sigma(
    spec: HamiltonianSpec,
    u_bound: float,
    pad: float = 0.1,
    n_random: int = 64,
    seed: int = 3,
) -> np.ndarray:
    """Sampled per-component, per-axis bound on |dH/dp| over the coercivity box.

    Convexity puts the extreme slopes on the box faces, so the faces are
    sampled densely along with random interior points; the result is inflated
    by `pad`.
    """
    rng = np.random.default_rng(seed)
    m, n = spec.m, spec.n
    out = np.zeros((m, n))
    xs = np.linspace(0, spec.period, 24, endpoint=False)
    ys = np.linspace(0, 1, 24, endpoint=False)
    base = xs.size * ys.size
    x = np.repeat(xs, ys.size)[None, :]
    yv = np.tile(ys, xs.size)[None, :]
    if n == 2:
        x = np.vstack([x, rng.uniform(0, spec.period, base)[None, :]])
        yv = np.vstack([yv, rng.uniform(0, 1, base)[None, :]])
    for i in range(m):
        R = spec.p_radius(i, u_bound)
        dq = 1e-4 * max(R, 1.0)
        u_samp = np.concatenate(
            [np.zeros((m, 1)), rng.uniform(-u_bound, u_bound, (m, 4))], axis=1
        )
        for ax in range(n):
            worst = 0.0
            for uk in range(u_samp.shape[1]):
                u = np.tile(u_samp[:, uk : uk + 1], (1, base))
                p_faces = [np.full(base, R), np.full(base, -R)]
                p_faces += [rng.uniform(-R, R, base) for _ in range(max(1, n_random // 32))]
                for pax in p_faces:
                    p = rng.uniform(-R, R, (n, base))
                    p[ax] = pax
                    ph = p.copy()
                    ph[ax] = np.clip(pax + dq, -R, R)
                    pl = p.copy()
                    pl[ax] = np.clip(pax - dq, -R, R)
                    hi = spec.evaluate(i, x, yv, ph, u, 0.0)
                    lo = spec.evaluate(i, x, yv, pl, u, 0.0)
                    worst = max(
                        worst,
                        float(np.max(np.abs(hi - lo) / (ph[ax] - pl[ax]))),
                    )
            out[i, ax] = worst * (1.0 + pad)
    return out


def _prepare(spec, data, eps, cfg, lam=0.0):
    grid = cfg.grid
    if data is not None and data.m != spec.m:
        raise PreconditionError("initial data and spec disagree on m")
    if grid.n != spec.n:
        raise PreconditionError("grid and spec disagree on n")
    if eps is None:
        if spec.y_dependent:
            raise PreconditionError(
                "eps=None requires an effective (y-independent) Hamiltonian"
            )
    else:
        _check_eps(grid, eps)
    X = grid.nodes()
    Y = np.mod(X / eps, 1.0) if eps is not None else np.zeros_like(X)
    if cfg.sigma is not None:
        sigma = np.asarray(cfg.sigma, dtype=float).reshape(spec.m, spec.n)
    else:
        if cfg.u_bound is not None:
            ub = cfg.u_bound
        else:
            from .model import estimate_solution_bound

            horizon = getattr(cfg, "t_end", 1.0)
            ub = estimate_solution_bound(spec, data, horizon) if data is not None else 1.0
        sigma = estimate_sigma(spec, ub, pad=cfg.sigma_pad)
    sig_tot = float(np.max(np.sum(sigma, axis=1)))  # worst component
    dt_cfl = cfg.cfl * grid.h / max(sig_tot, 1e-12)
    if spec.theta > 0 or lam > 0:
        dt_cfl = min(dt_cfl, 0.5 / (spec.theta + lam))
    return grid, X, Y, sigma, dt_cfl


def _lf_rhs(spec, X, Y, u, t, sigma, h, coupling):
    """Lax-Friedrichs numerical Hamiltonian for every component at once."""
    m, n = spec.m, spec.n
    rhs = np.empty_like(u)
    for i in range(m):
        grads = np.empty((n,) + u.shape[1:])
        visc = np.zeros(u.shape[1:])
        for ax in range(n):
            up = np.roll(u[i], -1, axis=ax)
            um = np.roll(u[i], 1, axis=ax)
            grads[ax] = (up - um) / (2.0 * h)
            visc += sigma[i, ax] * (up - 2.0 * u[i] + um) / (2.0 * h)
        rhs[i] = spec.evaluate(i, X, Y, grads, coupling, t) - visc
    return rhs


def _guard(u, step, bound):
    if not np.all(np.isfinite(u)):
        raise NumericalError(f"solution lost finiteness at step {step}")
    if bound is not None and np.max(np.abs(u)) > bound:
        raise NumericalError(
            f"solution exceeded the blow-up guard {bound:.3g} at step {step}"
        )


def solve_cauchy(
    spec: HamiltonianSpec,
    data: InitialData,
    eps: Optional[float],
    cfg: SchemeConfig,
    frozen_coupling: Optional[Field] = None,
) -> Field:
    """March the coupled (or frozen-coupling) system to t_end.

    frozen_coupling, when given, supplies the undifferentiated arguments of
    every H_i from a previously stored Field (linear in time) instead of the
    evolving solution; that is the decoupled inner solve of the fixed-point
    iteration.
    """
    grid, X, Y, sigma, dt_cfl = _prepare(spec, data, eps, cfg)
    if frozen_coupling is not None:
        if frozen_coupling.grid != grid:
            raise PreconditionError("frozen coupling must live on the solve grid")
        if frozen_coupling.m != spec.m:
            raise PreconditionError("frozen coupling has the wrong component count")
    stamps = cfg.resolved_store_times()
    u = data.sample(grid)
    guard_level = None
    if cfg.u_bound is not None:
        guard_level = cfg.bound_factor * max(cfg.u_bound, 1.0)
    out = np.empty((spec.m, stamps.size) + grid.shape)
    out[:, 0] = u
    t = 0.0
    step = 0
    for k in range(1, stamps.size):
        seg = stamps[k] - stamps[k - 1]
        n_sub = max(1, math.ceil(seg / dt_cfl - 1e-12))
        dt = seg / n_sub
        for _ in range(n_sub):
            coupling = u if frozen_coupling is None else frozen_coupling.at_time(t)
            u = u - dt * _lf_rhs(spec, X, Y, u, t, sigma, grid.h, coupling)
            t += dt
            step += 1
            if step % _GUARD_EVERY == 0:
                _guard(u, step, guard_level)
        t = stamps[k]  # kill fp drift
        out[:, k] = u
    _guard(u, step, guard_level)
    return Field(grid=grid, times=stamps, values=out,
                 meta={"eps": eps, "scheme": "lax-friedrichs", "sigma": sigma.tolist()})


def solve_cauchy_monotonized(
    spec: HamiltonianSpec,
    data: InitialData,
    eps: Optional[float],
    lam: float,
    cfg: SchemeConfig,
) -> Field:
    """Solve through the monotonizing substitution u_i = e^(lam t) v_i.

    Requires lam > theta. The v-system is marched with the same LF scheme
    (its gradient slopes are bounded by the base sigma, since the transform
    rescales the gradient argument back into the original box), and the
    result is mapped back to u at every stamp.
    """
    if lam <= spec.theta:
        raise PreconditionError(f"monotonization needs lam > theta={spec.theta}")
    tspec = kruzhkov_transform(spec, lam)
    grid, X, Y, sigma, _ = _prepare(spec, data, eps, cfg)  # sigma of the base spec
    dt_cfl = cfg.cfl * grid.h / max(float(np.max(np.sum(sigma, axis=1))), 1e-12)
    dt_cfl = min(dt_cfl, 0.5 / (lam + spec.theta))
    stamps = cfg.resolved_store_times()
    v = data.sample(grid)
    out = np.empty((spec.m, stamps.size) + grid.shape)
    out[:, 0] = v
    t = 0.0
    step = 0
    for k in range(1, stamps.size):
        seg = stamps[k] - stamps[k - 1]
        n_sub = max(1, math.ceil(seg / dt_cfl - 1e-12))
        dt = seg / n_sub
        for _ in range(n_sub):
            v = v - dt * _lf_rhs(tspec, X, Y, v, t, sigma, grid.h, v)
            t += dt
            step += 1
            if step % _GUARD_EVERY == 0:
                _guard(v, step, None)
        t = stamps[k]
        out[:, k] = np.exp(lam * t) * v
    return Field(grid=grid, times=stamps, values=out,
                 meta={"eps": eps, "scheme": "lax-friedrichs+kruzhkov", "lam": lam})


def solve_stationary(
    spec: HamiltonianSpec,
    eps: Optional[float],
    lam: float,
    cfg: StationaryConfig,
    frozen_coupling: Optional[Field] = None,
) -> Field:
    """March d_tau u + lam u + H = 0 in fictitious time to a steady state.

    Convergence is declared when the sup update per unit pseudo-time stays
    below steady_tol for `window` consecutive checks; exceeding the
    pseudo-time budget raises NumericalError. frozen_coupling (a stationary
    Field) replaces the evolving solution in the undifferentiated slots.
    """
    if lam <= spec.theta and frozen_coupling is None:
        raise PreconditionError(
            f"stationary solves need lam > theta; got lam={lam}, theta={spec.theta}"
        )
    if lam <= 0:
        raise PreconditionError("stationary solves need lam > 0")
    scfg = SchemeConfig(grid=cfg.grid, t_end=1.0, cfl=cfg.cfl, sigma=cfg.sigma,
                        sigma_pad=cfg.sigma_pad, u_bound=cfg.u_bound or 1.0)
    grid, X, Y, sigma, dt = _prepare(spec, None, eps, scfg, lam=lam)
    if frozen_coupling is not None:
        if frozen_coupling.grid != grid:
            raise PreconditionError("frozen coupling must live on the solve grid")
        if frozen_coupling.m != spec.m:
            raise PreconditionError("frozen coupling has the wrong component count")
    if cfg.warm_start is not None:
        if cfg.warm_start.grid != grid:
            raise PreconditionError("warm start must live on the solve grid")
        u = cfg.warm_start.values[:, -1].copy()
    else:
        u = np.zeros((spec.m,) + grid.shape)
    effective_rate = lam if frozen_coupling is not None else lam - spec.theta
    budget = cfg.max_time if cfg.max_time is not None else 80.0 / effective_rate
    u_ref = u.copy()
    tau = 0.0
    tau_ref = 0.0
    passes = 0
    step = 0
    while True:
        coupling = u if frozen_coupling is None else frozen_coupling.values[:, -1]
        u = u - dt * (lam * u + _lf_rhs(spec, X, Y, u, 0.0, sigma, grid.h, coupling))
        tau += dt
        step += 1
        if step % cfg.check_every == 0:
            _guard(u, step, None)
            rate = float(np.max(np.abs(u - u_ref))) / (tau - tau_ref)
            u_ref = u.copy()
            tau_ref = tau
            passes = passes + 1 if rate < cfg.steady_tol else 0
            if passes >= cfg.window:
                break
            if tau > budget:
                raise NumericalError(
                    f"stationary march did not settle within pseudo-time {budget:.1f} "
                    f"(last rate {rate:.3e})"
                )
    return Field(grid=grid, times=np.array([0.0]), values=u[:, None],
                 meta={"eps": eps, "lam": lam, "pseudo_time": tau, "sigma": sigma.tolist()})


def scheme_error_estimate(
    spec: HamiltonianSpec,
    data: InitialData,
    eps: Optional[float],
    cfg: SchemeConfig,
    refinements: int = 1,
) -> float:
    """Richardson-style bound on the discretization error of cfg's grid.

    Re-solves on grids refined 2x (and 4x for refinements=2) and scales the
    successive sup-distance by r/(r-1) = 2 for the first-order scheme. With
    several refinements the estimate is the conservative max over levels, so
    a pre-asymptotic coarse level cannot hide a larger true error.
    """
    from .grid import sup_distance

    runs = []
    for level in range(refinements + 1):
        g = TorusGrid(cfg.grid.n, cfg.grid.points_per_axis * 2**level, cfg.grid.period)
        runs.append(solve_cauchy(spec, data, eps, replace(cfg, grid=g)))
    dists = [sup_distance(runs[k + 1], runs[k]) for k in range(refinements)]
    return 2.0 * max(dists)
