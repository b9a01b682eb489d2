import numpy as np
import pytest

import oracles
from hjhomog.errors import NumericalError, PreconditionError
from hjhomog.grid import TorusGrid
from hjhomog.model import HamiltonianSpec, InitialData, LagrangianEvaluator
from hjhomog.oracle_dp import DPConfig, discounted_value, point_action, value_function


def _free_lag():
    # H = p^2/2  <->  L = v^2/2, closed form keeps the DP runs cheap
    spec = HamiltonianSpec(
        m=1, n=1,
        evaluate=lambda i, x, y, p, u, t=0.0: 0.5 * p[0] ** 2,
        coercivity_radius=lambda i, ub: 4.0,
        y_dependent=False,
        convex_in_p=True,
    )
    return LagrangianEvaluator(
        spec, p_search_radius=4.0,
        closed_form=lambda i, x, y, v, u: 0.5 * v[0] ** 2,
    )


def _cos_data(amp=0.15):
    return InitialData(m=1, n=1,
                       phi=lambda i, x: amp * np.cos(2 * np.pi * x[0]),
                       lip=2 * np.pi * amp, bound=amp)


def test_offsets_precondition():
    cfg = DPConfig(dt=0.001, v_bound=1.0)
    with pytest.raises(PreconditionError, match="fewer than two offsets"):
        cfg.offsets(h=1 / 64, dt=0.001)


def test_value_function_matches_hopf_lax():
    grid = TorusGrid(1, 256, 1.0)
    field = value_function(_free_lag(), _cos_data(), None, grid, 0.5,
                           DPConfig(dt=0.025))
    xs = np.linspace(0, 1, 7, endpoint=False)
    exact = np.array(
        [oracles.hopf_lax(lambda z: 0.15 * np.cos(2 * np.pi * z), x, 0.5)
         for x in xs])
    got = field.interp_space(xs[None, :], 0.5)[0]
    assert np.max(np.abs(got - exact)) < 4e-3


def test_point_action_free_straight_line():
    # L = v^2/2 on the torus: optimal path is the shortest winding at
    # constant speed, action = dist^2 / (2t)
    grid = TorusGrid(1, 256, 1.0)
    # velocity lattice spacing is h/dt, so dt must stay large vs h
    res = point_action(_free_lag(), 0, 0.125, 0.375, 0.5, None, grid,
                       DPConfig(dt=0.05))
    assert res.start == pytest.approx(0.125)
    assert res.end == pytest.approx(0.375)
    assert res.value == pytest.approx(0.25 ** 2 / (2 * 0.5), abs=2e-3)
    assert res.max_speed < 1.5
    # recovered path is feasible: starts and ends where asked
    assert res.points[0] == pytest.approx(0.125)
    assert res.points[-1] % 1.0 == pytest.approx(0.375)


def test_point_action_prefers_short_winding():
    # start/end separated by 0.9 going right but 0.1 going left
    grid = TorusGrid(1, 256, 1.0)
    res = point_action(_free_lag(), 0, 0.95, 0.05, 0.25, None, grid,
                       DPConfig(dt=0.025))
    assert res.value == pytest.approx(0.1 ** 2 / (2 * 0.25), abs=2e-3)


def test_point_action_coupling_shift():
    # L depends on the frozen coupling additively: action shifts by c * t
    spec = HamiltonianSpec(
        m=1, n=1,
        evaluate=lambda i, x, y, p, u, t=0.0: 0.5 * p[0] ** 2 - u[0],
        theta=1.0, shift_invariant=True,
        coercivity_radius=lambda i, ub: 4.0,
        y_dependent=False,
    )
    lag = LagrangianEvaluator(
        spec, p_search_radius=4.0,
        closed_form=lambda i, x, y, v, u: 0.5 * v[0] ** 2 + u[0],
    )
    grid = TorusGrid(1, 128, 1.0)
    base = point_action(lag, 0, 0.0, 0.25, 0.5, None, grid, DPConfig(dt=0.025))
    lift = point_action(lag, 0, 0.0, 0.25, 0.5, None, grid, DPConfig(dt=0.025),
                        coupling=np.array([0.4]))
    assert lift.value == pytest.approx(base.value + 0.4 * 0.5, abs=1e-10)


def test_pinning_audit_raises():
    # steep initial data wants speeds beyond v_bound; the audit must refuse
    grid = TorusGrid(1, 128, 1.0)
    data = InitialData(m=1, n=1,
                       phi=lambda i, x: 2.0 * np.cos(2 * np.pi * x[0]))
    lag = _free_lag()
    with pytest.raises(NumericalError, match="speed bound"):
        value_function(lag, data, None, grid, 1.0,
                       DPConfig(dt=0.05, v_bound=1.0))


def test_discounted_value_constant_source():
    # lam u + v^2-type L with L(0) = ell0 constant: u = -(-ell0)/lam ...
    # with H = p^2/2 - f0, L = v^2/2 + f0, the fixed point is u = f0 / lam
    f0 = 0.35
    spec = HamiltonianSpec(
        m=1, n=1,
        evaluate=lambda i, x, y, p, u, t=0.0: 0.5 * p[0] ** 2 - f0,
        coercivity_radius=lambda i, ub: 4.0,
        y_dependent=False,
    )
    lag = LagrangianEvaluator(spec, p_search_radius=4.0,
                              closed_form=lambda i, x, y, v, u:
                              0.5 * v[0] ** 2 + f0)
    grid = TorusGrid(1, 64, 1.0)
    field = discounted_value(lag, None, 0.8, grid, DPConfig(dt=0.02))
    assert np.max(np.abs(field.values - f0 / 0.8)) < 5e-3


def test_discounted_value_needs_positive_lam():
    grid = TorusGrid(1, 64, 1.0)
    with pytest.raises(PreconditionError, match="lam > 0"):
        discounted_value(_free_lag(), None, 0.0, grid)


def test_discounted_frozen_coupling_forms_agree():
    # constant-vector coupling and an equivalent stationary Field coupling
    # must produce the same value table
    spec = HamiltonianSpec(
        m=2, n=1,
        evaluate=lambda i, x, y, p, u, t=0.0:
        0.5 * p[0] ** 2 + 0.5 * (u[i] - u[1 - i]),
        theta=0.5, shift_invariant=True,
        coercivity_radius=lambda i, ub: 4.0,
        y_dependent=False,
    )
    lag = LagrangianEvaluator(
        spec, p_search_radius=4.0,
        closed_form=lambda i, x, y, v, u: 0.5 * v[0] ** 2 - 0.5 * (u[i] - u[1 - i]),
    )
    grid = TorusGrid(1, 64, 1.0)
    cvec = np.array([0.3, -0.1])
    from hjhomog.grid import Field

    cfield = Field(grid=grid, times=np.array([0.0]),
                   values=np.broadcast_to(cvec[:, None, None],
                                          (2, 1, 64)).copy())
    a = discounted_value(lag, None, 1.0, grid, DPConfig(dt=0.02),
                         frozen_coupling=cvec)
    b = discounted_value(lag, None, 1.0, grid, DPConfig(dt=0.02),
                         frozen_coupling=cfield)
    assert np.array_equal(a.values, b.values)


def test_value_function_frozen_vs_self_coupling_decoupled(eikonal_plain):
    # theta = 0: freezing the coupling at anything changes nothing
    prob = eikonal_plain
    grid = TorusGrid(1, 128, 1.0)
    cfg = DPConfig(dt=0.01)
    live = value_function(prob.lagrangian, prob.data, 0.25, grid, 0.3, cfg)
    frozen = value_function(prob.lagrangian, prob.data, 0.25, grid, 0.3, cfg,
                            frozen_coupling=live)
    assert np.max(np.abs(live.values - frozen.values)) < 1e-12
