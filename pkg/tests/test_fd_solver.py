import numpy as np
import pytest

import oracles
from hjhomog.errors import NumericalError, PreconditionError
from hjhomog.fd_solver import (
    SchemeConfig,
    StationaryConfig,
    scheme_error_estimate,
    solve_cauchy,
    solve_cauchy_monotonized,
    solve_stationary,
)
from hjhomog.grid import TorusGrid
from hjhomog.model import HamiltonianSpec, InitialData


def _free_spec():
    # H = p^2/2, no fast variable, no coupling: Hopf-Lax gives the exact
    # solution for cross-checks
    return HamiltonianSpec(
        m=1,
        n=1,
        evaluate=lambda i, x, y, p, u, t=0.0: 0.5 * p[0] ** 2,
        coercivity_radius=lambda i, ub: 3.0,
        y_dependent=False,
        name="free",
    )


def _cos_data(amp=0.15):
    return InitialData(
        m=1,
        n=1,
        phi=lambda i, x: amp * np.cos(2 * np.pi * x[0]),
        lip=2 * np.pi * amp,
        bound=amp,
    )


def test_grid_coarser_than_eps_rejected(eikonal_plain):
    cfg = SchemeConfig(grid=TorusGrid(1, 32, 1.0), t_end=0.1)
    with pytest.raises(PreconditionError, match="eps/16"):
        solve_cauchy(eikonal_plain.spec, eikonal_plain.data, 0.125, cfg)


def test_non_resonant_eps_rejected(eikonal_plain):
    cfg = SchemeConfig(grid=TorusGrid(1, 128, 1.0), t_end=0.1)
    with pytest.raises(PreconditionError, match="not an integer"):
        solve_cauchy(eikonal_plain.spec, eikonal_plain.data, 0.3, cfg)


def test_eps_none_needs_effective_spec(eikonal_plain):
    cfg = SchemeConfig(grid=TorusGrid(1, 64, 1.0), t_end=0.1)
    with pytest.raises(PreconditionError, match="y-independent"):
        solve_cauchy(eikonal_plain.spec, eikonal_plain.data, None, cfg)


def test_store_times_hit_exactly():
    cfg = SchemeConfig(grid=TorusGrid(1, 64, 1.0), t_end=0.5,
                       store_times=[0.1, 0.3, 0.5])
    field = solve_cauchy(_free_spec(), _cos_data(), None, cfg)
    assert np.array_equal(field.times, [0.0, 0.1, 0.3, 0.5])


def test_constant_data_preserved():
    data = InitialData(m=1, n=1, phi=lambda i, x: np.full(x.shape[1:], 0.7),
                       lip=0.0, bound=0.7)
    cfg = SchemeConfig(grid=TorusGrid(1, 64, 1.0), t_end=0.4)
    field = solve_cauchy(_free_spec(), data, None, cfg)
    assert np.max(np.abs(field.values - 0.7)) < 1e-13


def test_free_hamiltonian_matches_hopf_lax():
    grid = TorusGrid(1, 512, 1.0)
    cfg = SchemeConfig(grid=grid, t_end=0.5)
    field = solve_cauchy(_free_spec(), _cos_data(), None, cfg)
    xs = np.linspace(0, 1, 9, endpoint=False)
    exact = np.array(
        [oracles.hopf_lax(lambda z: 0.15 * np.cos(2 * np.pi * z), x, 0.5)
         for x in xs]
    )
    got = field.interp_space(xs[None, :], 0.5)[0]
    # first-order LF on 512 nodes: error dominated by numerical viscosity
    assert np.max(np.abs(got - exact)) < 6e-3


def test_blowup_guard_trips():
    spec = HamiltonianSpec(
        m=1, n=1,
        evaluate=lambda i, x, y, p, u, t=0.0: np.full(p.shape[1:], -1.0),
        coercivity_radius=lambda i, ub: 1.0,
        y_dependent=False,
    )
    data = InitialData(m=1, n=1, phi=lambda i, x: np.zeros(x.shape[1:]))
    cfg = SchemeConfig(grid=TorusGrid(1, 16, 1.0), t_end=8.0,
                       u_bound=0.5, bound_factor=2.0)
    with pytest.raises(NumericalError, match="blow-up"):
        solve_cauchy(spec, data, None, cfg)


def test_monotonized_needs_dominating_lam(eikonal_coupled):
    cfg = SchemeConfig(grid=TorusGrid(1, 64, 1.0), t_end=0.1)
    with pytest.raises(PreconditionError, match="lam > theta"):
        solve_cauchy_monotonized(eikonal_coupled.spec, eikonal_coupled.data,
                                 0.25, 1.0, cfg)


def test_monotonized_agrees_with_plain_march(eikonal_plain):
    # theta = 0: the substitution changes the scheme but not the limit
    grid = TorusGrid(1, 128, 1.0)
    t_end = 0.25
    base = solve_cauchy(eikonal_plain.spec, eikonal_plain.data, 0.25,
                        SchemeConfig(grid=grid, t_end=t_end))
    mono = solve_cauchy_monotonized(eikonal_plain.spec, eikonal_plain.data,
                                    0.25, 0.75,
                                    SchemeConfig(grid=grid, t_end=t_end))
    gap = np.max(np.abs(base.values[:, -1] - mono.values[:, -1]))
    assert gap < 5e-3


def test_comparison_principle_monotonized(eikonal_coupled, rng):
    # ordered data stays ordered under the monotone scheme, pair by pair
    grid = TorusGrid(1, 64, 1.0)
    cfg = SchemeConfig(grid=grid, t_end=0.2, store_times=[0.1, 0.2])
    spec = eikonal_coupled.spec
    for _ in range(3):
        a = rng.uniform(0.02, 0.1)
        shift = rng.uniform(0.05, 0.3)
        lo = InitialData(m=2, n=1,
                         phi=lambda i, x, a=a: a * np.sin(2 * np.pi * x[0]))
        hi = InitialData(m=2, n=1,
                         phi=lambda i, x, a=a, s=shift:
                         a * np.sin(2 * np.pi * x[0]) + s)
        ulo = solve_cauchy_monotonized(spec, lo, 0.25, 1.5, cfg)
        uhi = solve_cauchy_monotonized(spec, hi, 0.25, 1.5, cfg)
        assert np.all(uhi.values - ulo.values >= -1e-10)


def test_frozen_coupling_grid_must_match(linear2):
    grid = TorusGrid(1, 64, 1.0)
    other = TorusGrid(1, 128, 1.0)
    cfg = SchemeConfig(grid=grid, t_end=0.1)
    frozen = solve_cauchy(linear2.spec, linear2.data, 0.25,
                          SchemeConfig(grid=other, t_end=0.1))
    with pytest.raises(PreconditionError, match="solve grid"):
        solve_cauchy(linear2.spec, linear2.data, 0.25, cfg,
                     frozen_coupling=frozen)


def test_stationary_guards():
    spec = _free_spec()
    cfg = StationaryConfig(grid=TorusGrid(1, 32, 1.0))
    with pytest.raises(PreconditionError, match="lam > theta"):
        solve_stationary(spec, None, 0.0, cfg)


def test_stationary_coupled_needs_dominating_lam(eikonal_coupled):
    cfg = StationaryConfig(grid=TorusGrid(1, 64, 1.0))
    with pytest.raises(PreconditionError, match="lam > theta"):
        solve_stationary(eikonal_coupled.spec, 0.25, 0.5, cfg)


def test_stationary_solves_discounted_equation():
    # lam u + p^2/2 - f(x) = 0 with f >= 0 small: residual check at nodes
    f_amp = 0.05
    spec = HamiltonianSpec(
        m=1, n=1,
        evaluate=lambda i, x, y, p, u, t=0.0:
        0.5 * p[0] ** 2 - f_amp * (1.0 + np.sin(2 * np.pi * x[0])),
        lip_x=2 * np.pi * f_amp,
        coercivity_radius=lambda i, ub: 2.0,
        y_dependent=False,
    )
    lam = 1.0
    grid = TorusGrid(1, 128, 1.0)
    field = solve_stationary(spec, None, lam, StationaryConfig(grid=grid))
    u = field.values[0, 0]
    x = grid.nodes()
    grad = (np.roll(u, -1) - np.roll(u, 1)) / (2 * grid.h)
    resid = lam * u + spec.evaluate(0, x, x, grad[None], u[None])
    # central residual of the converged LF steady state is O(h)
    assert np.max(np.abs(resid)) < 0.05
    assert np.all(u >= -1e-9)  # f >= 0 forces u >= 0 by comparison with 0
    assert np.max(u) <= 2 * f_amp / lam + 1e-9


def test_scheme_error_estimate_shrinks_under_refinement():
    spec = _free_spec()
    data = _cos_data()
    coarse = scheme_error_estimate(
        spec, data, None, SchemeConfig(grid=TorusGrid(1, 32, 1.0), t_end=0.3))
    fine = scheme_error_estimate(
        spec, data, None, SchemeConfig(grid=TorusGrid(1, 128, 1.0), t_end=0.3))
    assert fine < coarse
    assert fine > 0
