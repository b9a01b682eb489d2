import numpy as np
import pytest

from hjhomog.errors import CoercivityError, PreconditionError
from hjhomog.model import (
    HamiltonianSpec,
    InitialData,
    LagrangianEvaluator,
    SamplePlan,
    check_hypotheses,
    estimate_solution_bound,
    kruzhkov_transform,
    legendre_transform,
    sample_sup_h_at_rest,
)
from hjhomog.problems import get_problem, shift_invariant_counterexample


def _quadratic_spec():
    def H(i, x, y, p, u, t=0.0):
        return 0.5 * p[0] ** 2

    return HamiltonianSpec(m=1, n=1, evaluate=H, theta=0.0, lip_x=0.0,
                           coercivity_radius=lambda i, ub: 4.0,
                           name="half-p-squared")


def test_legendre_quadratic_closed_form(rng):
    # conjugate of p^2/2 is v^2/2; numerical transform should hit it to tol
    spec = _quadratic_spec()
    lag = LagrangianEvaluator(spec, p_search_radius=4.0)
    x = np.zeros((1, 1))
    for v in rng.uniform(-2.0, 2.0, size=12):
        got = legendre_transform(lag, 0, x, x, np.array([[v]]), np.zeros((1, 1)))
        assert got == pytest.approx(0.5 * v * v, abs=5e-6)


def test_legendre_raises_outside_search_box():
    spec = _quadratic_spec()
    lag = LagrangianEvaluator(spec, p_search_radius=1.0)
    x = np.zeros((1, 1))
    with pytest.raises(CoercivityError):
        # maximizer p = v = 3 sits outside the declared radius 1
        legendre_transform(lag, 0, x, x, np.array([[3.0]]), np.zeros((1, 1)))


def test_biconjugacy_recovers_hamiltonian(rng, eikonal_coupled):
    # sup_v (p v - L(v)) must reproduce H for convex coercive H
    lag = eikonal_coupled.lagrangian
    spec = eikonal_coupled.spec
    tol = 2.0 * lag.tol
    for _ in range(25):
        i = int(rng.integers(spec.m))
        x = rng.uniform(0, 1, size=(1, 1))
        y = rng.uniform(0, 1, size=(1, 1))
        p = float(rng.uniform(-1.5, 1.5))
        u = rng.uniform(-0.4, 0.4, size=(2, 1))
        vgrid = np.linspace(-4.0, 4.0, 4001)
        lvals = np.array([lag.evaluate(i, x, y, np.array([[v]]), u)[0]
                          for v in vgrid])
        back = np.max(p * vgrid - lvals)
        href = spec.evaluate(i, x, y, np.array([[p]]), u)[0]
        # grid resolution adds (dv)^2/2-ish on top of the transform tol
        assert back == pytest.approx(href, abs=tol + 1e-4)


def test_kruzhkov_transform_inverts_and_dominates(rng, eikonal_coupled):
    spec = eikonal_coupled.spec
    lam = 2.0  # > theta = 1
    tspec = kruzhkov_transform(spec, lam)
    assert tspec.theta == pytest.approx(lam + spec.theta)
    assert tspec.kruzhkov_lam == lam
    t = 0.7
    s = np.exp(lam * t)
    x = np.zeros((1, 1))
    p = np.array([[0.3]])
    for _ in range(20):
        v = rng.uniform(-0.5, 0.5, size=(2, 1))
        i = int(rng.integers(2))
        # inverse substitution recovers the base Hamiltonian exactly
        tv = tspec.evaluate(i, x, x, p, v, t=t)[0]
        base = spec.evaluate(i, x, x, s * p, s * v, t=t)[0]
        assert s * (tv - lam * v[i, 0]) == pytest.approx(base, abs=1e-12)
        # diagonal dominance: slope in v_i at least lam - theta
        h = 1e-5
        v2 = v.copy()
        v2[i] += h
        slope = (tspec.evaluate(i, x, x, p, v2, t=t)[0] - tv) / h
        assert slope >= lam - spec.theta - 1e-6


def test_kruzhkov_requires_lam_above_theta(eikonal_coupled):
    with pytest.raises(PreconditionError):
        kruzhkov_transform(eikonal_coupled.spec, 0.5)


def test_check_hypotheses_builtin_pass():
    for name in ("eikonal-1d", "example11", "linear-coupling-2sys"):
        rep = check_hypotheses(get_problem(name).spec)
        assert rep.passed, f"{name}: {rep.failed()}"


def test_check_hypotheses_counterexample_fails():
    # squared-difference coupling: shift-invariant, but no finite theta
    rep = check_hypotheses(shift_invariant_counterexample().spec,
                           SamplePlan(u_bound=3.0))
    assert not rep.passed
    assert "coupling_lipschitz" in rep.failed()
    assert rep.results["shift_invariance"].passed


def test_check_hypotheses_flags_wrong_theta(eikonal_coupled):
    spec = eikonal_coupled.spec
    lying = HamiltonianSpec(
        m=spec.m, n=spec.n, evaluate=spec.evaluate, theta=0.05,  # true is 1
        lip_x=spec.lip_x, coercivity_radius=spec.coercivity_radius,
        shift_invariant=spec.shift_invariant, name="understated-theta")
    rep = check_hypotheses(lying)
    assert "coupling_lipschitz" in rep.failed()


def test_sup_h_at_rest_eikonal(eikonal_plain):
    # sup over x, y of |0.25 cos(2 pi x) - V(y)| = 1.25 at the plateau
    got = sample_sup_h_at_rest(eikonal_plain.spec)
    assert got == pytest.approx(1.25, abs=2e-3)


def test_solution_bound_grows_with_horizon(eikonal_plain):
    spec, data = eikonal_plain.spec, eikonal_plain.data
    b1 = estimate_solution_bound(spec, data, 0.5)
    b2 = estimate_solution_bound(spec, data, 2.0)
    assert b2 > b1 > 0
    # phi bound + T * sup|H at rest| is the crude marching bound
    assert b1 >= data.bound


def test_initial_data_sampling(eikonal_plain):
    from hjhomog.grid import TorusGrid

    g = TorusGrid(1, 32, 1.0)
    vals = eikonal_plain.data.sample(g)
    assert vals.shape == (1, 32)
    assert np.max(np.abs(vals)) <= eikonal_plain.data.bound + 1e-12
