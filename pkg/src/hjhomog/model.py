"""Problem contracts: Hamiltonians, initial data, conjugates, hypotheses.

A weakly coupled system is described by one HamiltonianSpec: m scalar
Hamiltonians H_i(x, y, p, u) on the torus, where y is the fast variable
(x/eps at solve time), p the gradient of component i, and u the vector of
all components (the coupling enters only through undifferentiated values).
Structural assumptions the theory needs are recorded as metadata (theta,
lip_x, coercivity radius, convexity, shift invariance) and can be audited
against the callable by `check_hypotheses`.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .errors import CoercivityError, PreconditionError

INVPHI = (np.sqrt(5.0) - 1.0) / 2.0


@dataclass
class HamiltonianSpec:
    """Callable Hamiltonian plus the structural metadata solvers rely on.

    evaluate(i, x, y, p, u, t) is vectorized: x, y, p have shape (n,) + S,
    u has shape (m,) + S, and the result has shape S. y is ignored by
    effective (already homogenized) specs, flagged by y_dependent=False.
    """

    m: int
    n: int
    evaluate: Callable
    theta: float = 0.0
    lip_x: float = 0.0
    period: float = 1.0
    coercivity_radius: Optional[Callable] = None  # (i, u_bound) -> float
    convex_in_p: bool = True
    shift_invariant: bool = False
    time_dependent: bool = False
    y_dependent: bool = True
    name: str = ""
    base: Optional["HamiltonianSpec"] = None
    kruzhkov_lam: Optional[float] = None

    def at(self, i, x, y, p, u, t=0.0) -> float:
        """Scalar convenience wrapper around the vectorized evaluate."""
        x = np.atleast_1d(np.asarray(x, dtype=float)).reshape(self.n, 1)
        y = np.atleast_1d(np.asarray(y, dtype=float)).reshape(self.n, 1)
        p = np.atleast_1d(np.asarray(p, dtype=float)).reshape(self.n, 1)
        u = np.atleast_1d(np.asarray(u, dtype=float)).reshape(self.m, 1)
        return float(np.asarray(self.evaluate(i, x, y, p, u, t)).reshape(-1)[0])

    def p_radius(self, i: int, u_bound: float) -> float:
        if self.coercivity_radius is None:
            raise PreconditionError(
                f"spec {self.name!r} does not declare a coercivity radius"
            )
        return float(self.coercivity_radius(i, u_bound))

    def p_radius_all(self, u_bound: float) -> float:
        return max(self.p_radius(i, u_bound) for i in range(self.m))


@dataclass
class InitialData:
    """Initial data phi_i; phi(i, x) is vectorized like HamiltonianSpec."""

    m: int
    n: int
    phi: Callable
    lip: Optional[float] = None
    bound: Optional[float] = None
    name: str = ""

    def sample(self, grid) -> np.ndarray:
        nodes = grid.nodes()
        out = np.empty((self.m,) + grid.shape)
        for i in range(self.m):
            out[i] = self.phi(i, nodes)
        return out

    def validate_on(self, grid) -> None:
        """Sampled Lipschitz/bound audit of the declared metadata."""
        vals = self.sample(grid)
        if self.bound is not None and np.max(np.abs(vals)) > self.bound + 1e-12:
            raise PreconditionError("initial data exceeds its declared bound")
        if self.lip is not None:
            for ax in range(self.n):
                quot = np.abs(np.roll(vals, -1, axis=1 + ax) - vals) / grid.h
                if quot.max() > self.lip * (1 + 1e-9) + 1e-12:
                    raise PreconditionError(
                        "initial data violates its declared Lipschitz constant"
                    )


@dataclass
class LagrangianEvaluator:
    """Convex conjugate of a HamiltonianSpec in the gradient slot.

    evaluate(i, x, y, v, u) returns sup_p (p.v - H_i(x, y, p, u)), computed
    numerically unless a closed form is supplied (built-in problems do).
    """

    spec: HamiltonianSpec
    p_search_radius: float
    p_samples: int = 33
    tol: float = 1e-6
    closed_form: Optional[Callable] = None

    def evaluate(self, i, x, y, v, u, t=0.0):
        if self.closed_form is not None:
            return self.closed_form(i, x, y, v, u)
        return legendre_transform(self, i, x, y, v, u, t=t)


def legendre_transform(lag: LagrangianEvaluator, i, x, y, v, u, t=0.0):
    """Numerical conjugate: coarse grid scan plus golden-section refinement.

    Raises CoercivityError if the maximizer lands on the truncation boundary
    (the declared search box was too small for this velocity).
    """
    spec = lag.spec
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    v = np.asarray(v, dtype=float)
    u = np.asarray(u, dtype=float)
    S = x.shape[1:]
    R = float(lag.p_search_radius)
    ps = np.linspace(-R, R, lag.p_samples)
    dp = ps[1] - ps[0]

    if spec.n == 1:
        best_val = np.full(S, -np.inf)
        best_p = np.zeros(S)
        for pk in ps:
            pa = np.full((1,) + S, pk)
            score = pk * v[0] - spec.evaluate(i, x, y, pa, u, t)
            upd = score > best_val
            best_val = np.where(upd, score, best_val)
            best_p = np.where(upd, pk, best_p)

        def f(q):
            return q * v[0] - spec.evaluate(i, x, y, q[None], u, t)

        lo = np.maximum(best_p - dp, -R)
        hi = np.minimum(best_p + dp, R)
        p_star, val = _golden_max_1d(f, lo, hi)
        if np.any(np.abs(p_star) > R - 0.51 * dp):
            raise CoercivityError(
                "conjugate maximizer on the truncation boundary; "
                f"increase p_search_radius (currently {R})"
            )
        return val

    # n == 2: coarse scan over the product grid, then coordinate refinement.
    best_val = np.full(S, -np.inf)
    best_p = np.zeros((2,) + S)
    for pk0 in ps:
        for pk1 in ps:
            pa = np.stack([np.full(S, pk0), np.full(S, pk1)])
            score = pk0 * v[0] + pk1 * v[1] - spec.evaluate(i, x, y, pa, u, t)
            upd = score > best_val
            best_val = np.where(upd, score, best_val)
            best_p[0] = np.where(upd, pk0, best_p[0])
            best_p[1] = np.where(upd, pk1, best_p[1])
    p_cur = best_p.copy()
    for _ in range(4):
        for ax in range(2):
            other = 1 - ax

            def f(q, ax=ax, other=other):
                pa = np.empty((2,) + S)
                pa[ax] = q
                pa[other] = p_cur[other]
                return (
                    q * v[ax]
                    + p_cur[other] * v[other]
                    - spec.evaluate(i, x, y, pa, u, t)
                )

            lo = np.maximum(p_cur[ax] - dp, -R)
            hi = np.minimum(p_cur[ax] + dp, R)
            p_cur[ax], val = _golden_max_1d(f, lo, hi)
    if np.any(np.abs(p_cur) > R - 0.51 * dp):
        raise CoercivityError("conjugate maximizer on the truncation boundary")
    return val


def _golden_max_1d(f, lo, hi, iters: int = 44):
    """Golden-section maximization on per-point intervals [lo, hi]."""
    a = np.array(lo, dtype=float, copy=True)
    b = np.array(hi, dtype=float, copy=True)
    c = b - INVPHI * (b - a)
    d = a + INVPHI * (b - a)
    fc = f(c)
    fd = f(d)
    for _ in range(iters):
        left = fc >= fd
        a = np.where(left, a, c)
        b = np.where(left, d, b)
        c = b - INVPHI * (b - a)
        d = a + INVPHI * (b - a)
        fc = f(c)
        fd = f(d)
    mid = 0.5 * (a + b)
    return mid, f(mid)


def kruzhkov_transform(spec: HamiltonianSpec, lam: float) -> HamiltonianSpec:
    """Monotonizing change of unknown u_i = e^(lam t) v_i.

    The transformed Hamiltonian lam*v_i + e^(-lam t) H_i(x, y, e^(lam t) p,
    e^(lam t) v) is degenerate-monotone in the coupling once lam exceeds the
    coupling Lipschitz constant: at the argmax component of v1 - v2 the
    difference picks up at least (lam - theta) (v1_l - v2_l).
    """
    if lam <= spec.theta:
        raise PreconditionError(
            f"need lam > theta for monotonization; got lam={lam}, theta={spec.theta}"
        )
    base_eval = spec.evaluate

    def transformed(i, x, y, p, u, t=0.0):
        s = np.exp(lam * t)
        return lam * u[i] + base_eval(i, x, y, s * p, s * u, t) / s

    return replace(
        spec,
        evaluate=transformed,
        theta=lam + spec.theta,
        time_dependent=True,
        base=spec,
        kruzhkov_lam=lam,
        name=f"{spec.name}+kruzhkov",
    )


# ---------------------------------------------------------------------------
# hypothesis audit


@dataclass
class SamplePlan:
    """Sampling budget for the structural audit of a HamiltonianSpec."""

    seed: int = 0
    batch: int = 160
    pairs: int = 120
    p_radius: Optional[float] = None  # default: declared coercivity radius
    u_bound: float = 1.0
    lip_slack: float = 1e-7  # additive slack on Lipschitz-type checks


@dataclass
class CheckResult:
    name: str
    passed: bool
    worst: float
    note: str = ""


@dataclass
class HypothesisReport:
    results: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results.values())

    def failed(self):
        return [k for k, r in self.results.items() if not r.passed]

    def __str__(self):
        lines = []
        for k, r in self.results.items():
            lines.append(
                f"{'PASS' if r.passed else 'FAIL'} {k}: worst={r.worst:.3e} {r.note}"
            )
        return "\n".join(lines)


def _directions(n: int) -> np.ndarray:
    if n == 1:
        return np.array([[1.0], [-1.0]])
    ang = np.linspace(0, 2 * np.pi, 8, endpoint=False)
    return np.stack([np.cos(ang), np.sin(ang)], axis=1)


def check_hypotheses(spec: HamiltonianSpec, plan: SamplePlan | None = None) -> HypothesisReport:
    """Sampled audit of regularity, coercivity, convexity, the two Lipschitz
    bounds, and (when declared) shift invariance of the coupling.

    Lipschitz and convexity checks are necessary-condition tests on random
    pairs: they can only ever under-estimate the true constants, so a failure
    is a certificate that the declared metadata is wrong.
    """
    plan = plan or SamplePlan()
    rng = np.random.default_rng(plan.seed)
    m, n, P = spec.m, spec.n, spec.period
    B = plan.batch
    if plan.p_radius is not None:
        R = plan.p_radius
    else:
        R = spec.p_radius_all(plan.u_bound)
    U = plan.u_bound

    x = rng.uniform(0, P, (n, B))
    yv = rng.uniform(0, 1, (n, B))
    p = rng.uniform(-R, R, (n, B))
    u = rng.uniform(-U, U, (m, B))
    report = HypothesisReport()

    # regularity: finite values on the sampled box
    worst = 0.0
    finite = True
    for i in range(m):
        h = np.asarray(spec.evaluate(i, x, yv, p, u, 0.0))
        finite &= bool(np.all(np.isfinite(h)))
        worst = max(worst, float(np.max(np.abs(h))))
    report.results["regularity"] = CheckResult("regularity", finite, worst,
                                               "max |H| on sample box")

    # coercivity: minimum over samples on spheres of growing radius
    dirs = _directions(n)
    level = -np.inf
    for i in range(m):
        level = max(level, float(np.max(np.abs(
            spec.evaluate(i, x, yv, np.zeros_like(p), u, 0.0)))))
    radii = [R, 1.5 * R, 2.0 * R]
    mins = []
    for r in radii:
        lo = np.inf
        for i in range(m):
            for d in dirs:
                pr = np.tile((r * d)[:, None], (1, B))
                lo = min(lo, float(np.min(spec.evaluate(i, x, yv, pr, u, 0.0))))
        mins.append(lo)
    slack = min(mins[0] - level, mins[1] - mins[0], mins[2] - mins[1])
    report.results["coercivity"] = CheckResult(
        "coercivity", slack > 0, slack,
        f"min growth across radii {radii[0]:.2f}..{radii[2]:.2f}")

    # convexity in p: midpoint test on random pairs
    p2 = rng.uniform(-R, R, (n, B))
    worst = -np.inf
    for i in range(m):
        h1 = spec.evaluate(i, x, yv, p, u, 0.0)
        h2 = spec.evaluate(i, x, yv, p2, u, 0.0)
        hm = spec.evaluate(i, x, yv, 0.5 * (p + p2), u, 0.0)
        worst = max(worst, float(np.max(hm - 0.5 * (h1 + h2))))
    report.results["convexity"] = CheckResult(
        "convexity", worst <= 1e-9 * (1 + abs(worst)) + 1e-12, worst,
        "max midpoint excess")

    # x-Lipschitz with the periodic distance
    x2 = rng.uniform(0, P, (n, B))
    dxs = np.abs(x - x2)
    dxs = np.minimum(dxs, P - dxs)
    dist = np.sqrt(np.sum(dxs**2, axis=0))
    worst = -np.inf
    for i in range(m):
        d = np.abs(spec.evaluate(i, x, yv, p, u, 0.0)
                   - spec.evaluate(i, x2, yv, p, u, 0.0))
        worst = max(worst, float(np.max(d - spec.lip_x * dist)))
    report.results["x_lipschitz"] = CheckResult(
        "x_lipschitz", worst <= plan.lip_slack * (1 + spec.lip_x), worst,
        f"excess over declared lip_x={spec.lip_x}")

    # coupling Lipschitz against the max norm
    u2 = rng.uniform(-U, U, (m, B))
    du = np.max(np.abs(u - u2), axis=0)
    worst = -np.inf
    for i in range(m):
        d = np.abs(spec.evaluate(i, x, yv, p, u, 0.0)
                   - spec.evaluate(i, x, yv, p, u2, 0.0))
        worst = max(worst, float(np.max(d - spec.theta * du)))
    report.results["coupling_lipschitz"] = CheckResult(
        "coupling_lipschitz", worst <= plan.lip_slack * (1 + spec.theta), worst,
        f"excess over declared theta={spec.theta}")

    # shift invariance, only when declared
    if spec.shift_invariant:
        shifts = rng.uniform(-U, U, 5)
        worst = -np.inf
        for i in range(m):
            h0 = spec.evaluate(i, x, yv, p, u, 0.0)
            for c in shifts:
                hc = spec.evaluate(i, x, yv, p, u + c, 0.0)
                worst = max(worst, float(np.max(np.abs(hc - h0))))
        report.results["shift_invariance"] = CheckResult(
            "shift_invariance", worst <= 1e-9 * (1 + abs(worst)) + 1e-12, worst,
            "max |H(u + c 1) - H(u)|")

    return report


def sample_sup_h_at_rest(spec: HamiltonianSpec, n_samples: int = 4096, seed: int = 1) -> float:
    """sup over (i, x, y) of |H_i(x, y, 0, 0)|, sampled on a seeded cloud."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(0, spec.period, (spec.n, n_samples))
    yv = rng.uniform(0, 1, (spec.n, n_samples))
    # include lattice points so piecewise features are hit
    g = np.linspace(0, spec.period, 65, endpoint=False)
    gy = np.linspace(0, 1, 65, endpoint=False)
    if spec.n == 1:
        x = np.concatenate([x, g[None]], axis=1)
        yv = np.concatenate([yv, gy[None]], axis=1)
    zeros_p = np.zeros_like(x)
    zeros_u = np.zeros((spec.m,) + x.shape[1:])
    out = 0.0
    for i in range(spec.m):
        out = max(out, float(np.max(np.abs(
            spec.evaluate(i, x, yv, zeros_p, zeros_u, 0.0)))))
    return out


def estimate_solution_bound(spec: HamiltonianSpec, data: InitialData, T: float) -> float:
    """A-priori sup bound: e^(theta T) (||phi|| + T sup |H(x, y, 0, 0)|)."""
    m0 = sample_sup_h_at_rest(spec)
    phi_bound = data.bound
    if phi_bound is None:
        from .grid import TorusGrid

        phi_bound = float(np.max(np.abs(data.sample(TorusGrid(spec.n, 256, spec.period)))))
    return float(np.exp(spec.theta * T) * (phi_bound + T * m0))
