from __future__ import annotations

import itertools

import numpy as np
import pytest

from conftest import h1_action_matrix
from procoh.cli_reporting import load_scenario
from procoh.exterior_algebra import AlgebraEndomorphism, parse_element
from procoh.fp_linalg import FpMatrix, fixed_space
from procoh.fusion_actions import (
    KERNEL_ONLY,
    WHOLE_GROUP,
    DomainError,
    FusionGenerator,
    NormalizerError,
    compose_actions,
    h1_action,
    page_endomorphism,
    quotient_scalar,
    row0_stable,
)
from procoh.padic_groups import ExtensionDatum, PrecisionMatrix

NAMES = ["y11", "y12", "y21", "y22"]


def ext(p):
    return ExtensionDatum(p, "congruence", h=PrecisionMatrix([[1, 1], [0, 1]], p, 3))


def gen(name, rows, p, domain=WHOLE_GROUP):
    return FusionGenerator(name, domain, matrix=PrecisionMatrix(rows, p, 3))


def el(text, p):
    return parse_element(text, NAMES, p)


def test_identity_and_h():
    e = ext(3)
    assert h1_action(gen("1", [[1, 0], [0, 1]], 3), e).is_identity()
    assert h1_action(gen("h", [[1, 1], [0, 1]], 3), e) == h1_action_matrix(3)


@pytest.mark.parametrize("p", [3, 5, 7])
def test_g_t_on_named_classes(p):
    for t in range(1, p):
        f = AlgebraEndomorphism(h1_action(gen("g_t", [[t, 0], [0, 1]], p), ext(p)))
        for text, factor in (("y11 + y22", 1), ("y21", t), ("y11y21", t), ("y11y12y21 - y12y21y22", 1)):
            assert f(el(text, p)) == factor * el(text, p)


@pytest.mark.parametrize("p", [3, 5, 7])
def test_quotient_scalars(p):
    e = ext(p)
    assert quotient_scalar(gen("h", [[1, 1], [0, 1]], p), e) == 1
    for t in range(1, p):
        assert quotient_scalar(gen("g_t", [[t, 0], [0, 1]], p), e) == pow(t, -1, p)
        assert quotient_scalar(gen("g_z", [[1, 0], [0, t]], p), e) == t
    with pytest.raises(NormalizerError):
        quotient_scalar(gen("w", [[0, 1], [1, 0]], p), e)
    with pytest.raises(DomainError):
        quotient_scalar(gen("g1", [[1, 1], [0, 1]], p, KERNEL_ONLY), e)


def test_g_t_at_p3_scales_u_by_2():
    assert quotient_scalar(gen("g_t", [[2, 0], [0, 1]], 3), ext(3)) == 2


def test_identity_page_endomorphism():
    alg = load_scenario("gl2", 5).algebra()
    act = page_endomorphism(gen("1", [[1, 0], [0, 1]], 5), ext(5))
    for n, m in itertools.product(range(4), range(5)):
        for rep in alg.cell(n, m).reps:
            assert np.array_equal(act.apply_class(alg, n, m, rep), alg.reduce(n, m, rep))


def test_kernel_only_off_row_zero():
    alg = load_scenario("gl2", 3).algebra()
    act = page_endomorphism(gen("g1", [[1, 1], [0, 1]], 3, KERNEL_ONLY), ext(3))
    with pytest.raises(DomainError):
        act.apply(alg, 1, 1, alg.cell(1, 1).reps[0])


@pytest.mark.parametrize("p", [5, 7])
def test_overlined_class_actions(p):
    alg = load_scenario("gl2", p).algebra()
    inv2 = pow(2, -1, p)
    for t in range(2, p):
        act = page_endomorphism(gen("g_t", [[t, 0], [0, 1]], p), ext(p))
        ti = pow(t, -1, p)
        for n in (1, 3):
            img = act.apply_class(alg, n, 1, el("y12 - y11", p).to_vector(1))
            # coefficient part (t^-1 - 1)/2 y1 + t^-1 ybar2, times the twist of u v^k
            coeff = (ti - 1) * inv2 * el("y11 + y22", p) + ti * el("y12 - y11", p)
            twist = pow(ti, (n + 1) // 2, p)
            assert np.array_equal(img, alg.reduce(n, 1, twist * coeff.to_vector(1)))
    for z in range(2, p):
        act = page_endomorphism(gen("g_z", [[1, 0], [0, z]], p), ext(p))
        for n in (1, 3):
            img = act.apply_class(alg, n, 3, el("y11y12y21 - y11y12y22", p).to_vector(3))
            coeff = (1 - z) * inv2 * el("y11y12y21 - y12y21y22", p) + z * el("y11y12y21 - y11y12y22", p)
            twist = pow(z, (n + 1) // 2, p)
            assert np.array_equal(img, alg.reduce(n, 3, twist * coeff.to_vector(3)))


@pytest.mark.parametrize("p", [5, 7])
def test_remaining_overlined_actions(p):
    alg = load_scenario("gl2", p).algebra()
    inv2 = pow(2, -1, p)
    y1, yb2 = el("y11 + y22", p), el("y12 - y11", p)
    y4, yb13 = el("y11y12y21 - y12y21y22", p), el("y11y12y21 - y11y12y22", p)
    yb3, yb12 = el("y12y22 - y12y21", p), el("y12y22 - y12y21 - y11y12", p)
    for a in range(2, p):
        ai = pow(a, -1, p)
        g_t = page_endomorphism(gen("g_t", [[a, 0], [0, 1]], p), ext(p))
        g_z = page_endomorphism(gen("g_z", [[1, 0], [0, a]], p), ext(p))
        cases = [
            (g_t, 3, yb13, (1 - ai) * inv2 * y4 + ai * yb13, ai),
            (g_t, 2, yb3, ai * yb3, ai),
            (g_t, 2, yb12, ai * yb12, ai),
            (g_z, 1, yb2, (a - 1) * inv2 * y1 + a * yb2, a),
            (g_z, 2, yb3, a * yb3, a),
            (g_z, 2, yb12, a * yb12, a),
        ]
        for act, m, src, coeff, twist in cases:
            img = act.apply_class(alg, 1, m, src.to_vector(m))
            assert np.array_equal(img, alg.reduce(1, m, twist * coeff.to_vector(m)))


@pytest.mark.parametrize("p", [3, 5])
def test_row0_stable(p):
    sc = load_scenario("gl2", p)
    alg = sc.algebra()
    acts = [page_endomorphism(g, sc.extension) for g in sc.fusion if g.domain == KERNEL_ONLY]
    none = row0_stable(alg, [])
    assert all(none[m] == alg.cocycles(0, m) for m in range(5))
    stable = row0_stable(alg, acts)
    assert [stable[m].dim for m in range(5)] == [1, 1, 0, 1, 1]
    for m, text in ((1, "y11 + y22"), (3, "y11y12y21 - y12y21y22"), (4, "y11y12y21y22")):
        assert stable[m].contains(el(text, p).to_vector(m))


@pytest.mark.parametrize("p", [3, 5])
def test_page_endomorphism_multiplicative(p):
    sc = load_scenario("gl2", p)
    alg = sc.algebra()
    acts = [page_endomorphism(g, sc.extension) for g in sc.fusion if g.domain == WHOLE_GROUP]
    cells = [(n, m) for n in range(3) for m in range(5)]
    for act in acts:
        for (n1, m1), (n2, m2) in itertools.product(cells, repeat=2):
            if m1 + m2 > 4:
                continue
            for x in alg.cell(n1, m1).reps:
                for y in alg.cell(n2, m2).reps:
                    lhs = act.apply_class(alg, n1 + n2, m1 + m2, alg.product_rep(n1, m1, x, n2, m2, y))
                    fx, fy = act.apply(alg, n1, m1, x), act.apply(alg, n2, m2, y)
                    rhs = alg.reduce(n1 + n2, m1 + m2, alg.product_rep(n1, m1, fx, n2, m2, fy))
                    assert np.array_equal(lhs, rhs)


def test_composition():
    p = 5
    e = ext(p)
    a, b = gen("g_t", [[2, 0], [0, 1]], p), gen("g_z", [[1, 0], [0, 3]], p)
    ab = gen("ab", [[2, 0], [0, 3]], p)
    comp = compose_actions(page_endomorphism(a, e), page_endomorphism(b, e))
    direct = page_endomorphism(ab, e)
    assert comp.scalar % p == direct.scalar
    for m in range(5):
        assert comp.matrix(m) == direct.matrix(m)


def test_inverse_closed_sets_have_same_fixed_space():
    p = 5
    e = ext(p)
    gens = [gen("g_t", [[2, 0], [0, 1]], p), gen("g_z", [[1, 0], [0, 2]], p)]
    inv = [gen(g.name + "^-1", g.matrix.inverse().tolist(), p) for g in gens]
    for m in range(5):
        fwd = [page_endomorphism(g, e).matrix(m) for g in gens + inv]
        bwd = [page_endomorphism(g, e).matrix(m) for g in inv + gens]
        dim = fwd[0].rows
        assert fixed_space(fwd, dim, p) == fixed_space(bwd, dim, p)
        assert fixed_space(fwd, dim, p) == fixed_space([page_endomorphism(g, e).matrix(m) for g in gens], dim, p)


def test_explicit_h1_generators_for_abelian_kernels():
    e = ExtensionDatum(3, "abelian", h1_matrix=FpMatrix([[1, 1], [0, 1]], 3))
    g = FusionGenerator("k", WHOLE_GROUP, h1_matrix=FpMatrix([[2, 0], [0, 2]], 3), scalar=2)
    assert h1_action(g, e) == FpMatrix([[2, 0], [0, 2]], 3)
    assert quotient_scalar(g, e) == 2
    with pytest.raises(ValueError):
        FusionGenerator("bad", "somewhere", h1_matrix=FpMatrix.identity(2, 3))
