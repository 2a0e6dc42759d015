import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conbandit.model import (
    BanditInstance,
    ExplorationScenario,
    FeasiblePolytope,
    Problem,
    RewardFamily,
    VertexPolicy,
    check_allocation,
    dump_problem,
    load_problem,
    projection_onto_domain,
    validate_instance,
)
from conbandit.polytope import solve_optimal_policy

G1 = RewardFamily.gaussian(1.0)


def test_family_invariants():
    with pytest.raises(ValueError):
        RewardFamily.gaussian(0.0)
    with pytest.raises(ValueError):
        RewardFamily.gaussian(-1.0)
    assert RewardFamily.bernoulli().sigma is None
    lo, hi = RewardFamily.bernoulli().default_domain()
    assert 0 < lo < hi < 1


def test_validate_two_arm_bai_is_valid():
    assert validate_instance(BanditInstance([1.0, 0.0], G1), FeasiblePolytope(2)) == []


def test_validate_reports_tie():
    report = validate_instance(BanditInstance([1.0, 1.0], G1), FeasiblePolytope(2))
    assert "optimum not unique" in report


def test_validate_reports_infeasible_region():
    # pi_1 <= 0.2 and pi_1 >= 0.5
    poly = FeasiblePolytope(2, [[1, 0], [-1, 0]], [0.2, -0.5])
    assert not poly.is_feasible
    report = validate_instance(BanditInstance([1.0, 0.0], G1), poly)
    assert "infeasible region" in report


def test_validate_reports_means_outside_domain():
    inst = BanditInstance([0.5, 1.5], G1, (0.0, 1.0))
    assert "means outside domain" in validate_instance(inst, FeasiblePolytope(2))


def test_bernoulli_domain_must_be_open():
    inst = BanditInstance([0.5, 0.2], RewardFamily.bernoulli(), (0.0, 1.0))
    assert any("Bernoulli" in r for r in validate_instance(inst, FeasiblePolytope(2)))


def test_rows_are_normalised_and_laid_out():
    poly = FeasiblePolytope(3, [[3, 4, 0]], [5.0])
    B, c = np.asarray(poly.B), np.asarray(poly.c)
    assert np.allclose(np.linalg.norm(B, axis=1), 1.0)
    assert np.allclose(B[0], np.ones(3) / np.sqrt(3)) and np.allclose(B[1], -B[0])
    assert np.allclose(B[2:5], -np.eye(3))
    assert np.allclose(B[5], [0.6, 0.8, 0.0]) and c[5] == pytest.approx(1.0)
    assert poly.eq_rows == (0,) and poly.shadow_rows == (1,)


def test_duplicate_rows_are_dropped():
    poly = FeasiblePolytope(2, [[1, 0], [2, 0]], [0.5, 1.0])
    assert poly.n_rows == 5


def test_feasibility_tolerance():
    poly = FeasiblePolytope(2, [[1, 0]], [0.5])
    assert poly.contains([0.5 + 5e-10, 0.5 - 5e-10])
    assert not poly.contains([0.5 + 1e-6, 0.5 - 1e-6])


def test_vertex_basis_invariant():
    poly = FeasiblePolytope(3, [[1, 1, 0]], [0.5])
    v = solve_optimal_policy([1.0, 0.5, 0.2], poly)
    assert v.check(poly) == []
    assert v.residual(poly) <= 1e-9
    bad = VertexPolicy(v.pi, (0, 2, 3))
    assert bad.check(poly)


def test_vertex_snaps_negative_zero():
    v = VertexPolicy([-0.0, 1.0, 1e-17], (0, 2, 4))
    assert np.all(np.signbit(v.pi) == False)  # noqa: E712


def test_check_allocation():
    poly = FeasiblePolytope(2, [[1, 0]], [0.3])
    assert check_allocation([0.5, 0.5], poly, ExplorationScenario.END_OF_TIME) == []
    assert check_allocation([0.5, 0.5], poly, ExplorationScenario.ANYTIME)
    assert check_allocation([0.3, 0.6], poly, "end_of_time")


@pytest.mark.parametrize("raw,domain,expected", [
    ([1.5, -0.2], (0, 1), [1.0, 0.0]),
    ([0.3, 0.7], (0, 1), [0.3, 0.7]),
    ([0.5, 2.0, -3.0], (-1, 1), [0.5, 1.0, -1.0]),
])
def test_projection_onto_domain(raw, domain, expected):
    assert projection_onto_domain(raw, domain).tolist() == expected


@given(st.lists(st.floats(-10, 10), min_size=2, max_size=8), st.floats(-5, 0), st.floats(0.1, 5))
def test_projection_onto_domain_idempotent(raw, lo, width):
    dom = (lo, lo + width)
    once = projection_onto_domain(raw, dom)
    assert np.array_equal(projection_onto_domain(once, dom), once)
    assert np.all((once >= dom[0]) & (once <= dom[1]))


def test_problem_json_roundtrip(tmp_path):
    inst = BanditInstance([1.0, 0.5, 0.2], RewardFamily.gaussian(2.0))
    poly = FeasiblePolytope(3, [[1, 1, 0]], [0.5])
    prob = Problem(inst, poly, ExplorationScenario.END_OF_TIME)
    path = tmp_path / "p.json"
    dump_problem(prob, path)
    doc = json.loads(path.read_text())
    assert doc["family"] == {"kind": "gaussian", "sigma": 2.0}
    assert doc["domain"] == [None, None]
    assert doc["scenario"] == "end_of_time"
    back = load_problem(path)
    assert np.array_equal(back.instance.means, inst.means)
    assert np.array_equal(back.polytope.B, poly.B)
    assert back.scenario is ExplorationScenario.END_OF_TIME


def test_values_are_immutable():
    inst = BanditInstance([1.0, 0.0], G1)
    with pytest.raises(ValueError):
        inst.means[0] = 3.0
