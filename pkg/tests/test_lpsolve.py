import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lp_cases import CASES, build
from oracles import vertex_optimum
from rpsae.lpsolve import (LinearProgram, LPBuilder, SolverOptions, dual_objective, export_mps, read_names,
                           solve, solve_mps_external, solve_parallel)

SIMPLEX = SolverOptions(backend="simplex")
HIGHS = SolverOptions(backend="highs")


@pytest.mark.parametrize("case", CASES, ids=[c[0] for c in CASES])
@pytest.mark.parametrize("opts", [SIMPLEX, HIGHS], ids=["simplex", "highs"])
def test_tiny_lp_matches_vertex_enumeration(case, opts):
    _, c, A_ub, b_ub, A_eq, b_eq, lb, ub = case
    lp = build(c, A_ub, b_ub, A_eq, b_eq, lb, ub)
    expected, _ = vertex_optimum(c, A_ub, b_ub, A_eq, b_eq, lb, ub)
    res = solve(lp, opts)
    assert res.optimal
    assert abs(res.objective - expected) <= 1e-7
    assert lp.residuals(res.x).max(initial=0) <= 1e-7
    assert abs(res.objective - lp.objective_value(res.x)) <= 1e-9 * max(1, abs(res.objective))


def test_one_variable_lp():
    b = LPBuilder()
    x = b.add_var("x", cost=1.0)
    b.add_row({x: 1.0}, ">=", 1.0, "c")
    res = solve(b.build(), SIMPLEX)
    assert res.optimal and res.x[0] == pytest.approx(1.0) and res.objective == pytest.approx(1.0)


def test_hand_lp():
    res = solve(build([1, 1], [[-1, -1]], [-2], [[1, -1]], [0]), SIMPLEX)
    np.testing.assert_allclose(res.x, [1, 1], atol=1e-9)
    assert res.objective == pytest.approx(2.0)


@pytest.mark.parametrize("opts", [SIMPLEX, HIGHS], ids=["simplex", "highs"])
def test_infeasible(opts):
    b = LPBuilder()
    x = b.add_var("x")
    b.add_row({x: 1}, ">=", 1, "lo")
    b.add_row({x: 1}, "<=", 0, "hi")
    assert solve(b.build(), opts).status == "infeasible"


@pytest.mark.parametrize("opts", [SIMPLEX, HIGHS], ids=["simplex", "highs"])
def test_unbounded(opts):
    b = LPBuilder()
    x = b.add_var("x", cost=-1.0)
    y = b.add_var("y")
    b.add_row({x: 1, y: -1}, "<=", 1, "r")
    assert solve(b.build(), opts).status == "unbounded"


def test_iteration_limit_reports_iterate():
    lp = build(*CASES[7][1:])
    res = solve(lp, SolverOptions(backend="simplex", max_iterations=1))
    assert res.status == "iteration_limit"
    assert res.x is not None and res.x.shape == (6,)


def test_bland_rule_same_optimum():
    for _, *case in CASES:
        lp = build(*case)
        a, b = solve(lp, SIMPLEX), solve(lp, SolverOptions(backend="simplex", bland=True))
        assert a.objective == pytest.approx(b.objective, abs=1e-9)


@pytest.mark.parametrize("case", CASES, ids=[c[0] for c in CASES])
def test_weak_duality(case):
    lp = build(*case[1:])
    res = solve(lp, SIMPLEX)
    assert dual_objective(lp, res) == pytest.approx(res.objective, rel=1e-6, abs=1e-9)


def test_scaling_invariance():
    for _, *case in CASES:
        lp = build(*case)
        a, b = solve(lp, SIMPLEX), solve(lp.scaled(7.5), SIMPLEX)
        np.testing.assert_allclose(a.x, b.x, atol=1e-9)
        assert b.objective == pytest.approx(7.5 * a.objective, abs=1e-9)


def test_determinism():
    lp = build(*CASES[7][1:])
    a, b = solve(lp, SIMPLEX), solve(lp, SIMPLEX)
    assert a.status == b.status and a.objective == b.objective
    assert a.x.tobytes() == b.x.tobytes()


def test_parallel_positional():
    lps = [build(*c[1:]) for c in CASES]
    bad = LPBuilder()
    x = bad.add_var("x")
    bad.add_row({x: 1}, ">=", 2, "lo")
    bad.add_row({x: 1}, "<=", 1, "hi")
    lps.insert(3, bad.build())
    par = solve_parallel(lps, SIMPLEX, threads=4)
    seq = [solve(lp, SIMPLEX) for lp in lps]
    assert [r.status for r in par] == [r.status for r in seq]
    assert par[3].status == "infeasible"
    for a, b in zip(par, seq):
        if a.optimal:
            assert a.objective == b.objective
            assert a.x.tobytes() == b.x.tobytes()


def test_parallel_copies():
    lp = build(*CASES[3][1:])
    res = solve_parallel([lp] * 52, HIGHS, threads=8)
    ref = solve(lp, HIGHS)
    assert len(res) == 52
    assert all(r.objective == ref.objective and np.array_equal(r.x, ref.x) for r in res)


def test_parallel_error_slot():
    lp = build(*CASES[0][1:])
    res = solve_parallel([lp, "not an lp", lp], SIMPLEX)
    assert [r.status for r in res] == ["optimal", "error", "optimal"]


@pytest.mark.parametrize("case", CASES, ids=[c[0] for c in CASES])
def test_mps_roundtrip_external(tmp_path, case):
    lp = build(*case[1:], c0=1.5)
    path = export_mps(lp, tmp_path / "m.mps")
    ext = solve_mps_external(path)
    emb = solve(lp, SIMPLEX)
    assert ext.optimal
    assert ext.objective == pytest.approx(emb.objective, rel=1e-6, abs=1e-9)


def test_mps_one_variable_structure(tmp_path):
    b = LPBuilder()
    x = b.add_var("a_rather_long_variable_name", cost=1.0)
    b.add_row({x: 1.0}, ">=", 1.0, "lower_bound_row")
    path = export_mps(b.build(), tmp_path / "one.mps")
    text = path.read_text().splitlines()
    sections = [ln for ln in text if ln and not ln.startswith(" ")]
    body = {s: [] for s in sections}
    cur = None
    for ln in text:
        if ln and not ln.startswith(" "):
            cur = ln
        elif cur:
            body[cur].append(ln.split())
    assert len([r for r in body["ROWS"] if r[0] != "N"]) == 1
    assert len({r[0] for r in body["COLUMNS"]}) == 1
    names = read_names(path)
    assert "a_rather_long_variable_name" in names.values()
    assert all(len(k) <= 8 for k in names)


def test_mps_empty_lp(tmp_path):
    lp = LinearProgram(np.zeros(0), np.zeros((0, 0)), [], [], np.zeros(0), np.zeros(0), [], [])
    path = export_mps(lp, tmp_path / "empty.mps")
    assert path.read_text().strip().endswith("ENDATA")
    res = solve(lp, SIMPLEX)
    assert res.optimal and res.objective == 0.0


def test_builder_rejects_duplicate_names():
    b = LPBuilder()
    b.add_var("x")
    b.add_var("x")
    with pytest.raises(ValueError):
        b.build()


def test_nonfinite_coefficients_rejected():
    with pytest.raises(ValueError):
        LinearProgram([math.nan], np.zeros((0, 1)), [], [], [0.0], [1.0], ["x"], [])


@st.composite
def random_lp(draw):
    n = draw(st.integers(1, 4))
    m = draw(st.integers(1, 4))
    coef = st.integers(-5, 5)
    c = [draw(coef) for _ in range(n)]
    A = [[draw(coef) for _ in range(n)] for _ in range(m)]
    b = [draw(st.integers(-6, 10)) for _ in range(m)]
    ub = [draw(st.integers(1, 6)) for _ in range(n)]
    return c, A, b, ub


@given(random_lp())
@settings(max_examples=150, deadline=None)
def test_random_lps_against_enumeration(args):
    c, A, b, ub = args
    lp = build(c, A, b, [], [], None, ub)
    expected, _ = vertex_optimum(c, A, b, [], [], None, ub)
    res = solve(lp, SIMPLEX)
    if expected is None:
        assert res.status == "infeasible"
    else:
        assert res.optimal
        assert abs(res.objective - expected) <= 1e-7
        assert dual_objective(lp, res) == pytest.approx(res.objective, abs=1e-7)
        assert solve(lp, HIGHS).objective == pytest.approx(expected, abs=1e-7)
