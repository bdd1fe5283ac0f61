import numpy as np
import pytest

from sosorbit import sdp
from sosorbit.sdp import SdpProblem, SdpTolerances


def problem_shift():
    # maximize y s.t. 1x1 block [1 - y] >= 0
    eqs = [({0: np.array([[1.0]])}, {0: 1.0}, 1.0)]
    return SdpProblem.from_equalities([1], 1, eqs, np.array([1.0]))


def problem_offdiag():
    # maximize y s.t. [[1, y], [y, 1]] >= 0
    eqs = [
        ({0: np.array([[1.0, 0.0], [0.0, 0.0]])}, {}, 1.0),
        ({0: np.array([[0.0, 0.0], [0.0, 1.0]])}, {}, 1.0),
        ({0: np.array([[0.0, 1.0], [1.0, 0.0]])}, {0: -2.0}, 0.0),
    ]
    return SdpProblem.from_equalities([2], 1, eqs, np.array([1.0]))


def problem_trace():
    # maximize Q12 s.t. Q >= 0, <I, Q> = 2; encoded via a free variable t = Q12
    a12 = np.array([[0.0, 1.0], [1.0, 0.0]])
    eqs = [
        ({0: np.eye(2)}, {}, 2.0),
        ({0: a12}, {0: -2.0}, 0.0),
    ]
    return SdpProblem.from_equalities([2], 1, eqs, np.array([1.0]))


def test_shift_example():
    sol = sdp.solve(problem_shift())
    assert sol.status == sdp.STATUS_OPTIMAL
    assert sol.objective_value == pytest.approx(1.0, abs=1e-7)


def test_offdiag_example():
    prob = problem_offdiag()
    sol = sdp.solve(prob)
    assert sol.status == sdp.STATUS_OPTIMAL
    assert sol.objective_value == pytest.approx(1.0, abs=1e-7)
    report = sdp.check_solution(prob, sol)
    assert report["max_equality_residual"] <= 1e-8
    assert min(report["min_eigenvalue_per_block"]) >= -1e-9


def test_trace_example():
    sol = sdp.solve(problem_trace())
    assert sol.status == sdp.STATUS_OPTIMAL
    assert sol.objective_value == pytest.approx(1.0, abs=1e-7)
    q = sol.blocks[0]
    np.testing.assert_allclose(q, np.ones((2, 2)), atol=1e-6)


def test_weak_duality_along_iterates():
    sol = sdp.solve(problem_trace())
    for rec in sol.iterations:
        # min-form primal obj >= dual obj - gap slack on every iterate
        assert rec["primal_obj"] <= rec["dual_obj"] + abs(rec["gap"]) + 1e-12


def test_determinism():
    a = sdp.solve(problem_trace())
    b = sdp.solve(problem_trace())
    np.testing.assert_array_equal(a.y, b.y)
    np.testing.assert_array_equal(a.blocks[0], b.blocks[0])


def test_check_solution_perturbation_linearity():
    prob = problem_trace()
    sol = sdp.solve(prob)
    base = sdp.check_solution(prob, sol)["equality_residuals"].copy()
    for delta in (1e-4, 2e-4):
        pert = sol.blocks[0].copy()
        pert[0, 0] += delta
        sol2 = sdp.SdpSolution(
            status=sol.status, y=sol.y, blocks=[pert],
            objective_value=sol.objective_value, primal_residual=0.0,
            dual_residual=0.0, duality_gap=0.0, min_eigenvalue_per_block=[])
        res = sdp.check_solution(prob, sol2)["equality_residuals"]
        # the trace constraint sees exactly +delta
        assert res[0] - base[0] == pytest.approx(delta, rel=1e-9)


def test_exact_feasible_point_zero_residual():
    prob = problem_trace()
    sol = sdp.SdpSolution(
        status="optimal", y=np.array([1.0]), blocks=[np.ones((2, 2))],
        objective_value=1.0, primal_residual=0.0, dual_residual=0.0,
        duality_gap=0.0, min_eigenvalue_per_block=[])
    report = sdp.check_solution(prob, sol)
    assert report["max_equality_residual"] == 0.0


def test_infeasible_with_ray():
    # q >= 0 with q = -1 has no feasible point
    prob = SdpProblem.from_equalities(
        [1], 0, [({0: np.array([[1.0]])}, {}, -1.0)], np.zeros(0))
    sol = sdp.solve(prob)
    assert sol.status == sdp.STATUS_INFEASIBLE
    assert sol.certificate is not None
    ray = sol.certificate["ray"]
    assert prob.rhs @ ray == pytest.approx(1.0)
    assert sol.certificate["eig_residual"] <= 1e-8


def test_zero_row_rejected_on_load():
    with pytest.raises(ValueError):
        SdpProblem.from_equalities(
            [1], 0, [({}, {}, 2.0)], np.zeros(0))


def test_gram_limit_enforced():
    prob = problem_shift()
    with pytest.raises(ValueError):
        sdp.solve(prob, SdpTolerances(gram_limit=0))


def test_sdpa_round_trip(tmp_path):
    prob = problem_trace()
    path = tmp_path / "prob.dat-s"
    sdp.write_sdpa(prob, path)
    back = sdp.read_sdpa(path)
    assert back.block_dims == prob.block_dims
    assert back.nfree == prob.nfree
    np.testing.assert_array_equal(back.rhs, prob.rhs)
    np.testing.assert_array_equal(back.objective, prob.objective)
    for a, b in zip(prob.a_blocks, back.a_blocks):
        assert (a != b).nnz == 0
    assert (prob.free_rows != back.free_rows).nnz == 0
    # bit-exact re-export
    path2 = tmp_path / "prob2.dat-s"
    sdp.write_sdpa(back, path2)
    assert path.read_text() == path2.read_text()


def test_sdpa_field_ordering(tmp_path):
    prob = problem_shift()
    path = tmp_path / "p.dat-s"
    sdp.write_sdpa(prob, path)
    lines = [l for l in path.read_text().splitlines() if not l.startswith('"')]
    assert lines[0] == "1"          # constraints
    assert lines[1] == "2"          # PSD block + free diagonal block
    assert lines[2] == "1 -2"
    assert lines[3] == "1"          # rhs
    # entry lines are "<constraint> <block> <row> <col> <value>"
    assert all(len(l.split()) == 5 for l in lines[4:])


def test_solution_json_import(tmp_path):
    import json

    prob = problem_trace()
    path = tmp_path / "sol.json"
    payload = {"y": [1.0], "blocks": [[[1.0, 1.0], [1.0, 1.0]]]}
    path.write_text(json.dumps(payload))
    sol = sdp.read_solution_json(path, prob)
    assert sol.objective_value == pytest.approx(1.0)
    assert sol.primal_residual <= 1e-12
