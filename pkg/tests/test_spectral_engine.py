from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import scenario_run
from oracles import rank_mod
from procoh.cli_reporting import load_scenario
from procoh.cyclic_cohomology import E2Algebra
from procoh.fp_linalg import FpMatrix
from procoh.spectral_engine import (
    BudgetExceeded,
    Differential,
    InconsistencyError,
    WindowError,
    Window,
    apply_differentials,
    assemble_e2,
    check_v_periodicity,
    derivation_space,
    detect_free_and_lift,
    e_infinity,
    enumerate_branches,
    finiteness_columns,
    finiteness_constraint_solve,
    leibniz_violations,
    presentation_of_e2,
    shift,
    square_zero_violations,
    stable_page,
    zero_differential,
)


def dims(page, cells=None):
    cells = cells if cells is not None else page.cells()
    return {c: page.dim(c) for c in cells}


def test_window_rules():
    w = Window(10, 4)
    assert w.determinate((10, 0)) and not w.determinate((10, 1)) and w.determinate((6, 3))
    assert w.settled((8, 1)) and not w.settled((7, 2)) and w.settled((6, 2))
    with pytest.raises(WindowError):
        Window(-1, 2)
    with pytest.raises(WindowError):
        Window(10**4, 4)


def test_kernel_rank_zero_page_is_cohomology_of_cyclic_group():
    alg = E2Algebra(FpMatrix(np.zeros((0, 0)), 5))
    page = assemble_e2(alg, Window(8, 0))
    assert all(page.dim((n, 0)) == 1 for n in range(9))
    ring = presentation_of_e2(page).ring
    assert [(g.name, g.degree, g.parity) for g in ring.generators] == [("u", 1, "exterior"), ("v", 2, "polynomial")]
    assert list(ring.relations) == []


def test_e2_corner_p3(gl2_p3):
    e2 = gl2_p3.e2
    assert {c: e2.dim(c) for c in itertools.product(range(3), range(5))} == {
        (0, 0): 1, (1, 0): 1, (2, 0): 1,
        (0, 1): 2, (1, 1): 1, (2, 1): 1,
        (0, 2): 2, (1, 2): 0, (2, 2): 0,
        (0, 3): 2, (1, 3): 1, (2, 3): 1,
        (0, 4): 1, (1, 4): 1, (2, 4): 1,
    }


def test_extraspecial_corner_one_dimensional(extraspecial):
    e2 = extraspecial.e2
    assert all(e2.dim((n, m)) == 1 for n in range(7) for m in range(3))


def test_e2_presentation_p3(gl2_p3):
    pres = gl2_p3.e2_presentation
    assert pres.certified
    assert [(g.name, g.degree) for g in pres.ring.generators] == [
        ("u", 1), ("y1", 1), ("y2", 1), ("v", 2), ("y3", 2), ("y4", 3)]
    assert len(pres.ring.relations) == 7


def test_stable_page_without_generators_is_full():
    sc = load_scenario("gl2", 3)
    e2 = assemble_e2(sc.algebra(), sc.window, sc.naming)
    assert dims(stable_page(e2, [])) == dims(e2)


def test_stable_page_p3_free(gl2_p3):
    chk = detect_free_and_lift(gl2_p3.stable)
    assert chk.free
    assert sorted((g.name, g.cell) for g in chk.generators) == sorted(
        [("y1", (0, 1)), ("y4", (0, 3)), ("uv", (3, 0)), ("v^2", (4, 0))])


@pytest.mark.parametrize("fixture", ["gl2_p3", "gl2_p5"])
def test_stable_page_closed_under_products(fixture, request):
    stable = request.getfixturevalue(fixture).stable
    alg = stable.algebra
    cells = [c for c in stable.cells() if stable.dim(c)]
    for c1, c2 in itertools.combinations_with_replacement(cells, 2):
        c = (c1[0] + c2[0], c1[1] + c2[1])
        if not stable.window.contains(c):
            continue
        for x in stable.basis(c1):
            for y in stable.basis(c2):
                rep = alg.product_rep(c1[0], c1[1], x, c2[0], c2[1], y)
                assert stable.Z[c].contains(rep), (c1, c2)


def test_periodicity(gl2_p3, gl2_p5):
    rep = check_v_periodicity(gl2_p5.stable, 4)
    assert rep["ok"] and rep["period"] == 8
    for n in range(1, 9):
        for m in range(5):
            assert gl2_p5.stable.dim((n, m)) == gl2_p5.stable.dim((n + 8, m))
    # on the ambient p = 3 page multiplication by v is already periodic
    assert check_v_periodicity(gl2_p3.e2, 1)["ok"]
    with pytest.raises(WindowError):
        check_v_periodicity(gl2_p5.stable, 20)


def test_zero_differential_is_identity(gl2_p3):
    page = gl2_p3.stable
    nxt = apply_differentials(page, zero_differential(page))
    assert nxt.r == 3 and dims(nxt) == dims(page)


def test_square_nonzero_raises():
    alg = E2Algebra(FpMatrix(np.zeros((0, 0)), 3))
    page = assemble_e2(alg, Window(4, 0))
    page = page.derived(page.Z, page.B, 1, "E1")
    # a fake d_1 on row 0 with d∘d ≠ 0: (0,0) -> (1,0) -> (2,0)
    bad = Differential(1, 3, {(0, 0): np.array([[1]]), (1, 0): np.array([[1]])})
    with pytest.raises(InconsistencyError):
        apply_differentials(page, bad)


def test_rank_balance_after_differentials(gl2_p5):
    """dim E_{r+1} = dim E_r - rank(out) - rank(in), cell by cell, on one branch."""
    branch = gl2_p5.family.branches[(1, 0)][0]
    for page, diff, nxt in zip(branch.pages, branch.differentials, branch.pages[1:]):
        r, p = diff.r, page.p
        for c in page.cells():
            if not page.determinate(c):
                continue
            out = diff.maps.get(c)
            src = (c[0] - r, c[1] + r - 1)
            inc = diff.maps.get(src) if src[0] >= 0 else None
            r_out = rank_mod(out.tolist(), p) if out is not None and out.size else 0
            r_in = rank_mod(inc.tolist(), p) if inc is not None and inc.size else 0
            assert nxt.dim(c) == page.dim(c) - r_out - r_in, c


def test_solver_refuses_with_torsion(gl2_p3):
    with pytest.raises(ValueError):
        finiteness_constraint_solve(gl2_p3.stable, no_p_torsion=False)


def test_solver_window_too_small():
    sc = load_scenario("gl2", 5, window=12)
    e2 = assemble_e2(sc.algebra(), sc.window, sc.naming)
    with pytest.raises(WindowError):
        finiteness_constraint_solve(e2, True)


def test_budget_exceeded(gl2_p5):
    with pytest.raises(BudgetExceeded):
        enumerate_branches(gl2_p5.stable, 5, [], budget=3)


@pytest.mark.parametrize("fixture", ["gl2_p5", "gl2_p7"])
def test_differential_family(fixture, request):
    res = request.getfixturevalue(fixture)
    fam, p = res.family, res.scenario.p
    assert fam.param_names == ["alpha", "beta"]
    assert fam.constraint == "alpha ≠ 0"
    assert fam.generator_values["y4"] == "alpha vy3 + beta vy1y2"
    assert sorted(fam.branches) == [(a, b) for a in range(1, p) for b in range(p)]
    k = f"v^{p - 3}"
    for g in ("y1", "vy2", "vy3", f"uv^{p - 2}", f"v^{p - 1}"):
        assert fam.generator_values[g] == "0"
    assert fam.generator_values[f"1/2 u{k}y1 + u{k}ybar2"] == f"-1/2 alpha uv^{p - 2}"


@pytest.mark.parametrize("fixture", ["gl2_p5", "gl2_p7"])
def test_every_branch_satisfies_leibniz_and_square_zero(fixture, request):
    fam = request.getfixturevalue(fixture).family
    count = 0
    for branches in fam.branches.values():
        for b in branches:
            for page, diff in zip(b.pages, b.differentials):
                assert leibniz_violations(page, diff) == []
                assert square_zero_violations(page, diff) == []
                count += 1
    assert count >= len(fam.branches)


@settings(max_examples=25, deadline=None)
@given(st.data())
def test_random_derivations_satisfy_leibniz(data):
    res = scenario_run("gl2", 5)
    page = res.stable
    space = derivation_space(page, 2)
    coeffs = data.draw(st.lists(st.integers(0, 4), min_size=space.dim, max_size=space.dim))
    diff = space.instance(coeffs)
    assert leibniz_violations(page, diff) == []


def test_alpha_one_beta_zero_kills_columns(gl2_p5):
    final = gl2_p5.family.branches[(1, 0)][0].final
    assert final.r == 4 or all(not d.is_zero() for d in gl2_p5.family.branches[(1, 0)][0].differentials[:2])
    w = final.window
    for c in w.cells():
        if c[0] in (5, 7, 8, 10) and w.settled(c):
            assert final.dim(c) == 0, c
    assert finiteness_columns(5, 20) == [5, 7, 8, 10, 13, 15, 16, 18]


@pytest.mark.parametrize("fixture", ["gl2_p5", "gl2_p7"])
def test_e_infinity_sample_independent(fixture, request):
    res = request.getfixturevalue(fixture)
    rep = e_infinity(res.stable, res.family, [(1, 0), (1, 1), (2, 3)])
    assert rep.independent and len(rep.samples) == 3
    chk = detect_free_and_lift(rep.page)
    assert chk.free
    assert sorted((g.name, g.cell) for g in chk.generators) == [("vy2", (2, 1)), ("y1", (0, 1))]
    with pytest.raises(ValueError):
        e_infinity(res.stable, res.family, [(0, 1)])


def test_p3_einf_equals_stable(gl2_p3):
    einf = gl2_p3.einf.page
    for c in einf.cells():
        if einf.determinate(c):
            assert einf.dim(c) == gl2_p3.stable.dim(c)


def test_lifts(gl2_p3, gl2_p5):
    r3 = gl2_p3.einf_check.ring
    assert sorted((g.name, g.degree, g.parity) for g in r3.generators) == [
        ("X", 4, "polynomial"), ("Z1", 1, "exterior"), ("Z2", 3, "exterior"), ("Z3", 3, "exterior")]
    r5 = gl2_p5.einf_check.ring
    assert sorted((g.name, g.degree) for g in r5.generators) == [("Z1", 1), ("Z2", 3)]


def test_extraspecial_page_not_free(extraspecial):
    chk = detect_free_and_lift(extraspecial.einf.page)
    assert not chk.free and chk.first_failure is not None
    assert "not free" in chk.report()


def test_extraspecial_odd_products_nonzero(extraspecial):
    """u·Y' and Y'·Y' are nonzero on E2 (diagonal-approximation sums C(p+1,3), Σ j^2)."""
    e2 = extraspecial.e2
    (c_u, u), (c_Y, Y) = e2.class_vector("y'"), e2.class_vector("Y'")
    assert e2.product(c_u, u, c_Y, Y).any()
    assert e2.product(c_Y, Y, c_Y, Y).any()


def test_page_json_roundtrip(gl2_p3):
    import json

    doc = json.loads(gl2_p3.e2.to_json())
    assert doc["cells"]["0,3"] == ["y4", "y1y3"]
    assert gl2_p3.e2.to_json() == gl2_p3.e2.to_json()


def test_shift():
    assert shift((3, 2), 2) == (5, 1)
