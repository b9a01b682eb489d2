import numpy as np
import pytest

from hjhomog.errors import PreconditionError
from hjhomog.problems import (
    bump_potential,
    get_problem,
    load_problem_config,
    tent_potential,
    validate_problem,
)


def test_potentials_periodic_and_normalized(rng):
    y = rng.uniform(-3, 3, size=200)
    for V in (tent_potential, bump_potential):
        assert np.allclose(V(y), V(y + 1.0), atol=1e-12)
        assert np.all(V(y) >= 0)
    assert tent_potential(np.array([0.0]))[0] == 1.0
    assert tent_potential(np.array([0.5]))[0] == 0.0
    # plateau: the sharpness construction needs V >= 1 on [-1/3, 1/3]
    ys = np.linspace(-1 / 3, 1 / 3, 101)
    assert np.all(tent_potential(ys) >= 1.0 - 1e-12)


def test_registry_and_unknown_name():
    with pytest.raises(PreconditionError, match="unknown problem"):
        get_problem("does-not-exist")


def test_unknown_override_rejected():
    with pytest.raises(PreconditionError, match="unknown problem overrides"):
        get_problem("eikonal-1d", coupling="none", wavelength=3)


def test_bad_coupling_value_rejected():
    with pytest.raises(PreconditionError):
        get_problem("eikonal-1d", coupling="cubic")


def test_theta_metadata_matches_coupling():
    assert get_problem("eikonal-1d", coupling="none").spec.theta == 0.0
    assert get_problem("eikonal-1d", coupling="sin").spec.theta == 1.0
    assert get_problem("example11", coupling="zero").spec.theta == 0.0
    # zero-row-sum matrix with off-diagonal b: max row sum of |B| is 2b
    assert get_problem("linear-coupling-2sys", b=0.3).spec.theta == pytest.approx(0.6)


def test_builtins_validate():
    for name in ("eikonal-1d", "example11", "linear-coupling-2sys"):
        validate_problem(get_problem(name))  # raises on metadata lies


def test_lagrangian_closed_forms_agree_with_numeric(rng):
    # built-ins ship closed-form conjugates; spot-check one against the
    # numeric transform route
    from hjhomog.model import LagrangianEvaluator, legendre_transform

    prob = get_problem("eikonal-1d", coupling="none")
    numeric = LagrangianEvaluator(prob.spec, p_search_radius=5.0)
    x = rng.uniform(0, 1, size=(1, 1))
    y = rng.uniform(0, 1, size=(1, 1))
    u = np.zeros((1, 1))
    for v in rng.uniform(-2, 2, size=8):
        closed = prob.lagrangian.evaluate(0, x, y, np.array([[v]]), u)[0]
        num = legendre_transform(numeric, 0, x, y, np.array([[v]]), u)[0]
        assert closed == pytest.approx(num, abs=5e-6)


def test_load_problem_config_roundtrip(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(
        "[problem]\n"
        "name = linear-coupling-2sys\n"
        "b = 0.4        ; off-diagonal weight\n"
        "\n"
        "[rate]\n"
        "t_end = 0.5\n"
        "eps_list = 0.1,0.05\n"
    )
    problem, rest = load_problem_config(cfg)
    assert problem.name == "linear-coupling-2sys"
    assert problem.spec.theta == pytest.approx(0.8)
    assert rest["rate"]["t_end"] == 0.5  # coerced to float


def test_load_problem_config_requires_problem_section(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("[rate]\nt_end = 1\n")
    with pytest.raises(PreconditionError):
        load_problem_config(cfg)


def test_example11_effective_hamiltonian_vanishes_at_rest():
    # the construction hinges on Hbar_i(x, 0, 0) = 0: component 1 has no
    # potential and H(0) = 0; component 0's flat piece covers p = 0
    from hjhomog.cell import CellConfig, effective_hamiltonian

    spec = get_problem("example11", coupling="zero").spec
    for i in range(2):
        got = effective_hamiltonian(spec, i, 0.0, 0.0, np.zeros(2), CellConfig())
        assert abs(got) < 1e-4
