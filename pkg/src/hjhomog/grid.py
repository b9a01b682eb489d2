"""Periodic grids and space-time fields.

Everything lives on a flat torus: uniform nodes x_j = j*P/N per axis, no
ghost layers (indexing wraps). A Field stores one vector-valued solution on
such a grid at a list of time stamps; comparisons between runs go through
`sup_distance`, which restricts the finer grid to the coarser one and
interpolates linearly in time where stamp sets differ.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import PreconditionError

CSV_FMT = "%.17g"  # round-trips float64 exactly


@dataclass(frozen=True)
class TorusGrid:
    """Uniform periodic grid on [0, P)^n."""

    n: int
    points_per_axis: int
    period: float = 1.0

    def __post_init__(self):
        if self.n not in (1, 2):
            raise PreconditionError(f"dimension must be 1 or 2, got {self.n}")
        if self.points_per_axis < 4:
            raise PreconditionError("need at least 4 points per axis")
        if not self.period > 0:
            raise PreconditionError("period must be positive")

    @property
    def h(self) -> float:
        return self.period / self.points_per_axis

    @property
    def shape(self) -> tuple:
        return (self.points_per_axis,) * self.n

    @property
    def size(self) -> int:
        return self.points_per_axis**self.n

    def axis_nodes(self) -> np.ndarray:
        return np.arange(self.points_per_axis) * self.h

    def nodes(self) -> np.ndarray:
        """Node coordinates, shape (n, N) in 1D and (n, N, N) in 2D."""
        ax = self.axis_nodes()
        if self.n == 1:
            return ax[None, :]
        xx, yy = np.meshgrid(ax, ax, indexing="ij")
        return np.stack([xx, yy])

    def is_refinement_of(self, other: "TorusGrid") -> bool:
        return (
            self.n == other.n
            and np.isclose(self.period, other.period)
            and self.points_per_axis % other.points_per_axis == 0
        )


@dataclass
class Field:
    """Values of an m-component function on a TorusGrid at stored times.

    values has shape (m, n_times) + grid.shape.
    """

    grid: TorusGrid
    times: np.ndarray
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 2 + self.grid.n:
            raise PreconditionError(
                f"values must have shape (m, n_times) + grid shape; got {self.values.shape}"
            )
        if self.values.shape[1] != self.times.size:
            raise PreconditionError("time axis does not match stamps")
        if self.values.shape[2:] != self.grid.shape:
            raise PreconditionError("space axes do not match the grid")
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise PreconditionError("time stamps must be strictly increasing")

    @property
    def m(self) -> int:
        return self.values.shape[0]

    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.values)))

    def at_time(self, t: float) -> np.ndarray:
        """Linear interpolation in time; t must lie inside the stamp range."""
        ts = self.times
        if t < ts[0] - 1e-12 or t > ts[-1] + 1e-12:
            raise PreconditionError(f"t={t} outside stored range [{ts[0]}, {ts[-1]}]")
        if ts.size == 1:
            return self.values[:, 0]
        k = int(np.clip(np.searchsorted(ts, t) - 1, 0, ts.size - 2))
        w = (t - ts[k]) / (ts[k + 1] - ts[k])
        w = min(max(w, 0.0), 1.0)
        return (1.0 - w) * self.values[:, k] + w * self.values[:, k + 1]

    def interp_space(self, points: np.ndarray, t: float) -> np.ndarray:
        """Periodic linear interpolation at arbitrary points.

        points: shape (n, K). Returns shape (m, K).
        """
        snap = self.at_time(t)
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        coords = pts / self.grid.h  # fractional indices, wrapped by map_coordinates
        out = np.empty((self.m,) + coords.shape[1:])
        for i in range(self.m):
            out[i] = ndimage.map_coordinates(
                snap[i], coords, order=1, mode="grid-wrap"
            )
        return out

    def lipschitz_seminorm(self, t_index: int = -1) -> float:
        """Max forward difference quotient over axes and components."""
        snap = self.values[:, t_index]
        worst = 0.0
        for ax in range(self.grid.n):
            d = np.abs(np.roll(snap, -1, axis=1 + ax) - snap) / self.grid.h
            worst = max(worst, float(d.max()))
        return worst

    def to_csv(self, path) -> None:
        """One row per (component, t, x..., value), 17 significant digits."""
        nodes = self.grid.nodes().reshape(self.grid.n, -1)
        with open(path, "w") as fh:
            cols = ["component", "t"] + [f"x{d}" for d in range(self.grid.n)] + ["value"]
            fh.write(",".join(cols) + "\n")
            for i in range(self.m):
                for k, t in enumerate(self.times):
                    vals = self.values[i, k].reshape(-1)
                    for j in range(vals.size):
                        row = [str(i), CSV_FMT % t]
                        row += [CSV_FMT % nodes[d, j] for d in range(self.grid.n)]
                        row.append(CSV_FMT % vals[j])
                        fh.write(",".join(row) + "\n")

    @staticmethod
    def from_csv(path, grid: TorusGrid, m: int) -> "Field":
        raw = np.loadtxt(path, delimiter=",", skiprows=1)
        ts = np.unique(raw[:, 1])
        values = np.zeros((m, ts.size) + grid.shape)
        per_snap = grid.size
        for i in range(m):
            sel = raw[raw[:, 0] == i]
            for k, t in enumerate(ts):
                block = sel[np.isclose(sel[:, 1], t)]
                if block.shape[0] != per_snap:
                    raise PreconditionError("csv does not match the stated grid")
                values[i, k] = block[:, -1].reshape(grid.shape)
        return Field(grid=grid, times=ts, values=values)


def restrict_to_coarser(f: Field, target: TorusGrid) -> Field:
    """Subsample a field onto a coarser grid whose nodes it contains."""
    if not f.grid.is_refinement_of(target):
        raise PreconditionError(
            f"grid with N={f.grid.points_per_axis} is not a refinement of N={target.points_per_axis}"
        )
    step = f.grid.points_per_axis // target.points_per_axis
    vals = f.values
    for ax in range(f.grid.n):
        vals = np.take(vals, np.arange(0, f.grid.points_per_axis, step), axis=2 + ax)
    return Field(grid=target, times=f.times.copy(), values=vals.copy(), meta=dict(f.meta))


def sup_distance(a: Field, b: Field, time_window=None) -> float:
    """Sup-norm distance over a's stamps (within the window), in b's range.

    Fields must share a grid or one grid must refine the other; the finer one
    is restricted. b is interpolated linearly at a's stamps.
    """
    if a.m != b.m:
        raise PreconditionError("fields have different component counts")
    if a.grid != b.grid:
        if a.grid.is_refinement_of(b.grid):
            a = restrict_to_coarser(a, b.grid)
        elif b.grid.is_refinement_of(a.grid):
            b = restrict_to_coarser(b, a.grid)
        else:
            raise PreconditionError("grids are not nested")
    lo, hi = (-np.inf, np.inf) if time_window is None else time_window
    lo = max(lo, b.times[0] - 1e-12)
    hi = min(hi, b.times[-1] + 1e-12)
    worst = 0.0
    hit = False
    for k, t in enumerate(a.times):
        if t < lo or t > hi:
            continue
        hit = True
        worst = max(worst, float(np.max(np.abs(a.values[:, k] - b.at_time(t)))))
    if not hit:
        raise PreconditionError("no stamps of a fall inside the window")
    return worst
