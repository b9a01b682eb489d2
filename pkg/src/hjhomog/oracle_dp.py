"""Dynamic-programming oracle built on the variational (optimal-control) form.

Everything here discretizes the Lax-Oleinik representation directly: one
backward-Euler step of the value function is

    u_i(x, t + dt) = min over grid offsets o of
        u_i(x - o h, t) + dt L_i(x_mid, x_mid/eps, o h / dt, c(x_mid, t)),

with the running cost evaluated at the segment midpoint x_mid = x - o h / 2
and the coupling argument c taken explicitly from the previous time level
(or from a frozen Field for decoupled inner solves). Velocities live on the
lattice {o h / dt}; an audit tracks how often minimizers land on the largest
admissible offset, since a pinned minimizer means v_bound truncated the true
characteristic and the computed value is garbage.

This is a deliberately independent discretization family from the
finite-difference solvers (different consistency error, different failure
modes), which is what makes the cross-checks between the two meaningful.
Spatially 1-D only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .errors import NumericalError, PreconditionError
from .grid import Field, TorusGrid
from .model import InitialData, LagrangianEvaluator

_INF = 1e30


@dataclass
class DPConfig:
    dt: float = 0.01
    v_bound: float = 3.0
    trunc_tol: float = 1e-8  # tail bound for discounted value iteration
    pin_frac: float = 1e-3  # tolerated share of boundary-pinned minimizers
    max_iters: int = 500_000
    # run-cost quadrature panels along each hop (point actions): 1 = midpoint.
    # A hop can straddle kinks of L(., v); panel subdivision shrinks that
    # quadrature error ~ 1/panels, which otherwise floors point-action
    # accuracy at fixed dt/eps independently of eps.
    run_cost_panels: int = 1

    def offsets(self, h: float, dt: float) -> np.ndarray:
        top = int(math.floor(self.v_bound * dt / h + 1e-12))
        if top < 2:
            raise PreconditionError(
                f"v_bound*dt/h = {self.v_bound * dt / h:.2f} gives fewer than "
                "two offsets; refine dt or coarsen the grid"
            )
        return np.arange(-top, top + 1)


@dataclass
class ActionResult:
    value: float
    times: np.ndarray
    points: np.ndarray  # path nodes, shape (n_steps + 1,)
    speeds: np.ndarray  # shape (n_steps,)
    start: float  # snapped endpoints actually used
    end: float

    @property
    def max_speed(self) -> float:
        return float(np.max(np.abs(self.speeds))) if self.speeds.size else 0.0


def _mid_values(vals: np.ndarray, o: int) -> np.ndarray:
    """Values of a nodal array at x_j - o*h/2 (linear interpolation)."""
    if o % 2 == 0:
        return np.roll(vals, o // 2, axis=-1)
    lo = np.roll(vals, (o - 1) // 2, axis=-1)
    hi = np.roll(vals, (o + 1) // 2, axis=-1)
    return 0.5 * (lo + hi)


def _check_eps_dp(grid: TorusGrid, eps: Optional[float]) -> None:
    if eps is None:
        return
    ratio = grid.period / eps
    if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
        raise PreconditionError(f"period/eps = {ratio} is not an integer")


def value_function(
    lag: LagrangianEvaluator,
    data: InitialData,
    eps: Optional[float],
    grid: TorusGrid,
    t_end: float,
    cfg: Optional[DPConfig] = None,
    frozen_coupling: Optional[Field] = None,
    store_times: Optional[Sequence[float]] = None,
) -> Field:
    """Backward DP solve of the coupled system on grid-point candidates.

    The coupling is explicit: L_i sees the previous level of every component
    (interpolated to the segment midpoint), or the frozen Field when given.
    Returns a Field whose meta carries the pinning audit.
    """
    cfg = cfg or DPConfig()
    spec = lag.spec
    if spec.n != 1:
        raise PreconditionError("the DP oracle is 1-D only")
    if data.m != spec.m:
        raise PreconditionError("initial data and spec disagree on m")
    _check_eps_dp(grid, eps)
    if frozen_coupling is not None and frozen_coupling.grid != grid:
        raise PreconditionError("frozen coupling must live on the solve grid")

    h = grid.h
    extra = [] if store_times is None else store_times
    stamps = np.unique(np.concatenate([[0.0, t_end],
                                       np.asarray(extra, dtype=float)]))
    if stamps[0] < -1e-14 or stamps[-1] > t_end + 1e-12:
        raise PreconditionError("store times must lie inside [0, t_end]")

    x = grid.axis_nodes()
    u = data.sample(grid)
    out = np.empty((spec.m, stamps.size) + grid.shape)
    out[:, 0] = u
    pinned = 0
    total = 0
    t = 0.0
    for k in range(1, stamps.size):
        seg = stamps[k] - stamps[k - 1]
        n_sub = max(1, math.ceil(seg / cfg.dt - 1e-12))
        dt = seg / n_sub
        offs = cfg.offsets(h, dt)
        for _ in range(n_sub):
            coupling = u if frozen_coupling is None else frozen_coupling.at_time(t)
            best = np.full((spec.m,) + grid.shape, np.inf)
            arg = np.zeros((spec.m,) + grid.shape, dtype=np.int32)
            for o in offs:
                x_mid = np.mod(x - o * h / 2.0, grid.period)[None, :]
                y_mid = np.mod(x_mid / eps, 1.0) if eps is not None else np.zeros_like(x_mid)
                c_mid = _mid_values(coupling, o)
                v = np.full_like(x_mid, o * h / dt)
                for i in range(spec.m):
                    cand = np.roll(u[i], o) + dt * lag.evaluate(i, x_mid, y_mid, v, c_mid)
                    upd = cand < best[i]
                    best[i] = np.where(upd, cand, best[i])
                    arg[i] = np.where(upd, o, arg[i])
            u = best
            t += dt
            pinned += int(np.sum(np.abs(arg) == offs[-1]))
            total += arg.size
        t = stamps[k]
        out[:, k] = u
    frac = pinned / max(total, 1)
    if frac > cfg.pin_frac:
        raise NumericalError(
            f"{100 * frac:.2f}% of DP minimizers sat on the speed bound "
            f"v_bound={cfg.v_bound}; the velocity box is too small"
        )
    return Field(grid=grid, times=stamps, values=out,
                 meta={"eps": eps, "scheme": "dp", "dt": cfg.dt,
                       "pinned_frac": frac, "v_bound": cfg.v_bound})


def point_action(
    lag: LagrangianEvaluator,
    i: int,
    start: float,
    end: float,
    t: float,
    eps: Optional[float],
    grid: TorusGrid,
    cfg: Optional[DPConfig] = None,
    coupling: Optional[np.ndarray] = None,
) -> ActionResult:
    """Minimal action over paths from `start` (time 0) to `end` (time t).

    Both endpoints snap to the nearest grid node. The coupling argument of
    L_i is frozen at the constant vector `coupling` (zeros by default). The
    minimizing path is recovered by backtracking the stored argmins.
    """
    cfg = cfg or DPConfig()
    spec = lag.spec
    if spec.n != 1:
        raise PreconditionError("the DP oracle is 1-D only")
    if t <= 0:
        raise PreconditionError("point actions need t > 0")
    _check_eps_dp(grid, eps)
    h = grid.h
    n_pts = grid.points_per_axis
    c = np.zeros(spec.m) if coupling is None else np.asarray(coupling, dtype=float)

    n_steps = max(1, math.ceil(t / cfg.dt - 1e-12))
    dt = t / n_steps
    offs = cfg.offsets(h, dt)
    x = grid.axis_nodes()
    i_start = int(round(start / h)) % n_pts
    i_end = int(round(end / h)) % n_pts

    A = np.full(n_pts, _INF)
    A[i_start] = 0.0
    args = np.zeros((n_steps, n_pts), dtype=np.int32)
    cb = np.broadcast_to(c[:, None], (spec.m, n_pts))
    # frozen coupling and no time dependence: the run-cost table is the same
    # at every step, so hoist it out of the march
    kp = max(1, int(cfg.run_cost_panels))
    runs = np.empty((offs.size, n_pts))
    for j, o in enumerate(offs):
        run = 0.0
        for s in range(kp):
            frac = (2 * s + 1) / (2.0 * kp)
            x_s = np.mod(x - o * h * frac, grid.period)[None, :]
            y_s = np.mod(x_s / eps, 1.0) if eps is not None else np.zeros_like(x_s)
            v = np.full_like(x_s, o * h / dt)
            run = run + lag.evaluate(i, x_s, y_s, v, cb) / kp
        runs[j] = dt * run
    for k in range(n_steps):
        best = np.full(n_pts, np.inf)
        arg = np.zeros(n_pts, dtype=np.int32)
        for j, o in enumerate(offs):
            prev = np.roll(A, o)
            cand = np.where(prev >= _INF / 2, np.inf, prev + runs[j])
            upd = cand < best
            best = np.where(upd, cand, best)
            arg = np.where(upd, o, arg)
        A = np.where(np.isfinite(best), best, _INF)
        args[k] = arg

    if A[i_end] >= _INF / 2:
        raise NumericalError(
            f"no admissible DP path reaches x={end} at t={t}; "
            f"raise v_bound (now {cfg.v_bound})"
        )
    idx = np.empty(n_steps + 1, dtype=np.int64)
    idx[n_steps] = i_end
    for k in range(n_steps, 0, -1):
        idx[k - 1] = (idx[k] - args[k - 1, idx[k]]) % n_pts
    speeds = args[np.arange(n_steps), idx[1:]] * h / dt
    if idx[0] != i_start:
        raise NumericalError("DP backtracking did not return to the start node")
    # unwrap the path so plots do not jump across the periodic seam
    points = np.empty(n_steps + 1)
    points[0] = x[i_start]
    points[1:] = x[i_start] + np.cumsum(speeds) * dt
    return ActionResult(
        value=float(A[i_end]),
        times=np.arange(n_steps + 1) * dt,
        points=points,
        speeds=speeds,
        start=x[i_start],
        end=x[i_end],
    )


def discounted_value(
    lag: LagrangianEvaluator,
    eps: Optional[float],
    lam: float,
    grid: TorusGrid,
    cfg: Optional[DPConfig] = None,
    frozen_coupling: Optional[Union[np.ndarray, Field]] = None,
) -> Field:
    """Stationary discounted value by fixed-point (value) iteration.

    One Bellman application contracts by e^(-lam dt), so the truncation tail
    after stopping is bounded by sup-update * q/(1-q) <= trunc_tol. The
    coupling is frozen (constant vector or stationary Field); the coupled
    stationary problem is handled by the outer fixed-point iteration.
    """
    cfg = cfg or DPConfig()
    spec = lag.spec
    if spec.n != 1:
        raise PreconditionError("the DP oracle is 1-D only")
    if lam <= 0:
        raise PreconditionError("discounted values need lam > 0")
    _check_eps_dp(grid, eps)
    h = grid.h
    n_pts = grid.points_per_axis
    dt = cfg.dt
    offs = cfg.offsets(h, dt)
    q = math.exp(-lam * dt)
    x = grid.axis_nodes()

    if frozen_coupling is None:
        cvals = np.zeros((spec.m, n_pts))
    elif isinstance(frozen_coupling, Field):
        if frozen_coupling.grid != grid:
            raise PreconditionError("frozen coupling must live on the solve grid")
        cvals = frozen_coupling.values[:, -1]
    else:
        cvals = np.broadcast_to(
            np.asarray(frozen_coupling, dtype=float)[:, None], (spec.m, n_pts)
        ).copy()

    # per-offset running costs never change; precompute them
    run = np.empty((spec.m, offs.size, n_pts))
    mids = []
    for k, o in enumerate(offs):
        x_mid = np.mod(x - o * h / 2.0, grid.period)[None, :]
        y_mid = np.mod(x_mid / eps, 1.0) if eps is not None else np.zeros_like(x_mid)
        v = np.full_like(x_mid, o * h / dt)
        c_mid = _mid_values(cvals, o)
        mids.append((x_mid, y_mid, v, c_mid))
        for i in range(spec.m):
            run[i, k] = dt * lag.evaluate(i, x_mid, y_mid, v, c_mid)

    w = np.zeros((spec.m, n_pts))
    last_diff = np.inf
    grew = 0
    for it in range(cfg.max_iters):
        best = np.full((spec.m, n_pts), np.inf)
        for k, o in enumerate(offs):
            for i in range(spec.m):
                cand = run[i, k] + q * np.roll(w[i], o)
                best[i] = np.minimum(best[i], cand)
        diff = float(np.max(np.abs(best - w)))
        w = best
        if diff * q / (1.0 - q) <= cfg.trunc_tol:
            break
        grew = grew + 1 if diff > last_diff * (1.0 + 1e-12) else 0
        if grew >= 50:
            raise NumericalError(
                "discounted value iteration is not contracting "
                f"(update {diff:.3e} after {it} sweeps)"
            )
        last_diff = diff
    else:
        raise NumericalError(
            f"discounted value iteration did not meet trunc_tol={cfg.trunc_tol} "
            f"within {cfg.max_iters} sweeps"
        )
    return Field(grid=grid, times=np.array([0.0]), values=w[:, None],
                 meta={"eps": eps, "scheme": "dp-discounted", "lam": lam,
                       "dt": cfg.dt, "sweeps": it + 1})
