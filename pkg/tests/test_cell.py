import numpy as np
import pytest

import oracles
from hjhomog.cell import CellConfig, EffectiveCache, build_cache, effective_hamiltonian
from hjhomog.errors import OutOfBoxError, PreconditionError
from hjhomog.model import HamiltonianSpec
from hjhomog.problems import tent_potential

ZERO2 = np.zeros(1)


def _bare_tent_spec():
    # H = p^2/2 - V(y): the one case with a semi-analytic effective value
    return HamiltonianSpec(
        m=1,
        n=1,
        evaluate=lambda i, x, y, p, u, t=0.0: 0.5 * p[0] ** 2 - tent_potential(y[0]),
        coercivity_radius=lambda i, ub: np.sqrt(2 * (1 + ub)) + 1.0,
        name="bare-tent",
    )


@pytest.fixture(scope="module")
def tent_spec():
    return _bare_tent_spec()


def test_cellconfig_validation():
    with pytest.raises(PreconditionError, match="method"):
        CellConfig(method="galerkin")
    with pytest.raises(PreconditionError, match="y_grid"):
        CellConfig(y_grid=255)
    with pytest.raises(PreconditionError, match="delta"):
        CellConfig(delta=0.0)


def test_matches_quadrature_oracle(tent_spec):
    for p, want in ((1.5, oracles.hbar_tent(1.5)), (2.2, oracles.hbar_tent(2.2))):
        got = effective_hamiltonian(tent_spec, 0, 0.0, p, ZERO2)
        assert got == pytest.approx(want, abs=5e-3)


def test_flat_piece_and_evenness(tent_spec):
    # |p| below the critical slope: Hbar = 0; and V even makes Hbar even
    inside = effective_hamiltonian(tent_spec, 0, 0.0, 0.6, ZERO2)
    assert abs(inside) < 2e-3
    plus = effective_hamiltonian(tent_spec, 0, 0.0, 1.7, ZERO2)
    minus = effective_hamiltonian(tent_spec, 0, 0.0, -1.7, ZERO2)
    assert plus == pytest.approx(minus, abs=1e-8)


def test_kink_neighborhood_converges(tent_spec):
    # the Godunov branch tie at the flat-piece edge is the hard regime for
    # the Newton solve; both sides must still come back finite and ordered
    lo = effective_hamiltonian(tent_spec, 0, 0.0, oracles.P_STAR - 0.01, ZERO2)
    hi = effective_hamiltonian(tent_spec, 0, 0.0, oracles.P_STAR + 0.01, ZERO2)
    assert np.isfinite(lo) and np.isfinite(hi)
    assert -1e-3 < lo <= hi + 1e-9
    assert hi < 0.05


def test_constant_source_shifts_effective_value(tent_spec):
    shifted = HamiltonianSpec(
        m=1,
        n=1,
        evaluate=lambda i, x, y, p, u, t=0.0:
        tent_spec.evaluate(i, x, y, p, u, t) + 0.3,
        coercivity_radius=tent_spec.coercivity_radius,
    )
    base = effective_hamiltonian(tent_spec, 0, 0.0, 1.6, ZERO2)
    got = effective_hamiltonian(shifted, 0, 0.0, 1.6, ZERO2)
    assert got == pytest.approx(base + 0.3, abs=1e-6)


def test_discount_and_large_time_agree(tent_spec):
    cfg = CellConfig(method="both")  # raises AgreementError on disagreement
    val = effective_hamiltonian(tent_spec, 0, 0.0, 1.8, ZERO2, cfg)
    assert val == pytest.approx(oracles.hbar_tent(1.8), abs=5e-3)


def test_effective_spec_shortcut():
    flat = HamiltonianSpec(
        m=1, n=1,
        evaluate=lambda i, x, y, p, u, t=0.0: p[0] ** 2 + u[0],
        y_dependent=False,
    )
    # no fast variable: the "cell problem" is evaluation at y = 0
    assert effective_hamiltonian(flat, 0, 0.0, 1.5, np.array([0.25])) == pytest.approx(2.5)


def test_build_cache_guards(eikonal_coupled, eikonal_plain):
    with pytest.raises(PreconditionError, match="c_halfwidth"):
        build_cache(eikonal_coupled.spec, p_count=5)
    with pytest.raises(PreconditionError, match="p_count"):
        build_cache(eikonal_plain.spec, p_count=4)


@pytest.fixture(scope="module")
def small_cache(eikonal_plain):
    # coarse lattice + coarse y-grid: structure checks do not need the
    # production resolution
    return build_cache(eikonal_plain.spec, CellConfig(y_grid=128),
                       p_halfwidth=2.0, x_count=5, p_count=17)


def test_cache_exact_on_nodes(small_cache, eikonal_plain):
    spec = eikonal_plain.spec
    cfg = CellConfig(y_grid=128)
    for x, p in ((small_cache.x_nodes[1], small_cache.p_nodes[3]),
                 (small_cache.x_nodes[3], small_cache.p_nodes[12])):
        direct = effective_hamiltonian(spec, 0, x, p, ZERO2, cfg)
        assert small_cache.evaluate(0, x, p, ZERO2) == pytest.approx(direct, abs=1e-9)


def test_cache_interpolates_between_nodes(small_cache, eikonal_plain):
    x = 0.5 * (small_cache.x_nodes[1] + small_cache.x_nodes[2])
    p = 1.9
    direct = effective_hamiltonian(eikonal_plain.spec, 0, x, p, ZERO2,
                                   CellConfig(y_grid=128))
    assert small_cache.evaluate(0, x, p, ZERO2) == pytest.approx(direct, abs=3e-2)


def test_cache_periodic_wrap(small_cache):
    left = small_cache.evaluate(0, 0.0, 1.3, ZERO2)
    right = small_cache.evaluate(0, 1.0, 1.3, ZERO2)
    assert left == pytest.approx(right, abs=1e-12)


def test_cache_refuses_extrapolation(small_cache):
    with pytest.raises(OutOfBoxError):
        small_cache.evaluate(0, 0.0, 2.5, ZERO2)


def test_cache_convexity_and_x_lipschitz(small_cache, eikonal_plain):
    vals = small_cache.values[0, :, :, 0]  # (nx, np)
    mid = 0.5 * (vals[:, :-2] + vals[:, 2:]) - vals[:, 1:-1]
    assert mid.min() >= -1e-2  # midpoint convexity slack in p
    dx = small_cache.x_nodes[1] - small_cache.x_nodes[0]
    slope = np.abs(np.diff(vals[:, :], axis=0)) / dx
    assert slope.max() <= eikonal_plain.spec.lip_x + 0.05


def test_cache_coupling_lipschitz(linear2):
    cache = build_cache(linear2.spec, CellConfig(y_grid=128),
                        p_halfwidth=1.8, c_halfwidth=1.0,
                        x_count=3, p_count=9, c_count=7)
    assert cache.c_mode == "diff"
    vals = cache.values  # (m, nx, np, nc)
    dc = cache.c_nodes[1] - cache.c_nodes[0]
    # d = c1 - c2 moves the pair (d/2, -d/2): per unit d that is a coupling
    # perturbation of sup-norm d/2, so the theta bound reads theta/2 + slack
    slope = np.abs(np.diff(vals, axis=3)) / dc
    assert slope.max() <= linear2.spec.theta / 2 + 0.05


def test_cache_roundtrip(tmp_path, small_cache):
    path = tmp_path / "cache.npz"
    small_cache.save(path)
    back = EffectiveCache.load(path)
    assert np.array_equal(back.values, small_cache.values)
    assert np.array_equal(back.p_nodes, small_cache.p_nodes)
    assert back.c_mode == small_cache.c_mode
    assert back.evaluate(0, 0.37, 1.21, ZERO2) == pytest.approx(
        small_cache.evaluate(0, 0.37, 1.21, ZERO2), abs=1e-12)


def test_as_effective_spec(small_cache, eikonal_plain):
    eff = small_cache.as_effective_spec(eikonal_plain.spec)
    assert not eff.y_dependent
    x = np.array([[0.4]])
    p = np.array([[1.1]])
    u = np.zeros((1, 1))
    want = small_cache.evaluate(0, 0.4, 1.1, ZERO2)
    assert eff.evaluate(0, x, x, p, u)[0] == pytest.approx(want, abs=1e-12)


def test_conjugate_matches_direct_maximization(small_cache):
    v = 0.8
    pk = small_cache.p_nodes
    hk = np.array([small_cache.evaluate(0, 0.2, p, ZERO2) for p in pk])
    want = np.max(pk * v - hk)
    got = small_cache.conjugate(0, np.array([v]), x=0.2)[0]
    assert got == pytest.approx(want, abs=1e-12)


def test_2d_cell_needs_large_time():
    spec2 = HamiltonianSpec(
        m=1, n=2,
        evaluate=lambda i, x, y, p, u, t=0.0:
        0.5 * (p[0] ** 2 + p[1] ** 2) - tent_potential(y[0]),
        coercivity_radius=lambda i, ub: 3.0,
    )
    with pytest.raises(PreconditionError, match="large_time"):
        effective_hamiltonian(spec2, 0, (0.0, 0.0), (1.0, 0.0), ZERO2,
                              CellConfig(method="discount"))
