from __future__ import annotations

from math import comb

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import h1_action_matrix
from oracles import naive_exterior_power, naive_wedge
from procoh.cyclic_cohomology import CyclicModule, jordan_type
from procoh.exterior_algebra import (
    ExtElement,
    NamedClass,
    grade_basis,
    grade_matrix,
    induced_endomorphism,
    name_table,
    parse_element,
    render_element,
    wedge,
)
from procoh.fp_linalg import DimensionMismatch, FpMatrix, ModulusMismatch

NAMES = ["y11", "y12", "y21", "y22"]


def el(text, p=3):
    return parse_element(text, NAMES, p)


def test_wedge_trivial_examples():
    e1, e2 = ExtElement.generator(0, 4, 5), ExtElement.generator(1, 4, 5)
    assert wedge(e1, e1).is_zero()
    assert wedge(e2, e1) == -wedge(e1, e2)


@pytest.mark.parametrize("p", [3, 5, 7])
def test_y1_wedge_y4(p):
    y1 = el("y11 + y22", p)
    y4 = el("y11y12y21 - y12y21y22", p)
    top = ExtElement(4, p, {(0, 1, 2, 3): 1})
    oracle = naive_wedge(y1.terms, y4.terms, p)
    assert wedge(y1, y4).terms == oracle
    assert wedge(y1, y4) == -2 * top
    if p == 3:
        assert wedge(y1, y4) == top


def test_wedge_errors():
    with pytest.raises(ModulusMismatch):
        wedge(ExtElement.one(2, 3), ExtElement.one(2, 5))
    with pytest.raises(DimensionMismatch):
        wedge(ExtElement.one(2, 3), ExtElement.one(3, 3))


def test_identity_endomorphism():
    endo = induced_endomorphism(FpMatrix.identity(4, 5))
    for m in range(5):
        assert grade_matrix(endo, m).is_identity()


def test_h_action_examples_p3():
    endo = induced_endomorphism(h1_action_matrix(3))
    assert grade_matrix(endo, 0) == FpMatrix.identity(1, 3)
    assert grade_matrix(endo, 1) == h1_action_matrix(3)
    y3 = el("y11y21")
    assert endo(y3) == wedge(el("y11 - y21"), el("y21")) == y3
    assert grade_matrix(endo, 4).is_identity()
    assert jordan_type(CyclicModule(grade_matrix(endo, 2))).blocks == (3, 3)


def test_grade_dimensions_and_top_determinant():
    lin = FpMatrix([[2, 1, 0], [0, 1, 1], [1, 0, 3]], 5)
    endo = induced_endomorphism(lin)
    for m in range(4):
        assert grade_matrix(endo, m).rows == comb(3, m) == len(grade_basis(3, m))
    det = round(np.linalg.det(lin.a.astype(float))) % 5
    assert grade_matrix(endo, 3).tolist() == [[det]]


def test_render_parse_roundtrip():
    for text in ["y11y12y21 - y12y21y22", "-y11 + y12", "y11 + y22", "-y21", "0"]:
        x = el(text, 7)
        assert render_element(x, NAMES) == text
        assert parse_element(render_element(x, NAMES), NAMES, 7) == x
    assert el("1/2y11", 5) == 3 * el("y11", 5)
    with pytest.raises(ValueError):
        el("y33")


def test_named_classes():
    table = name_table([("y1", "y11 + y22"), ("y2", "y21")], NAMES, 3)
    assert isinstance(table["y1"], NamedClass)
    assert table["y1"].render(NAMES) == "y1 = y11 + y22"
    with pytest.raises(ValueError):
        name_table([("y1", "y11"), ("y1", "y22")], NAMES, 3)


@st.composite
def elements(draw, d=4, p=5):
    keys = [k for m in range(d + 1) for k in grade_basis(d, m)]
    coeffs = draw(st.lists(st.integers(0, p - 1), min_size=len(keys), max_size=len(keys)))
    return ExtElement(d, p, dict(zip(keys, coeffs)))


@st.composite
def homogeneous(draw, d=4, p=5):
    m = draw(st.integers(0, d))
    keys = grade_basis(d, m)
    coeffs = draw(st.lists(st.integers(0, p - 1), min_size=len(keys), max_size=len(keys)))
    return ExtElement(d, p, dict(zip(keys, coeffs))), m


@st.composite
def linear_maps(draw, d=4, p=5):
    entries = draw(st.lists(st.integers(0, p - 1), min_size=d * d, max_size=d * d))
    return FpMatrix(np.array(entries).reshape(d, d), p)


@settings(max_examples=500, deadline=None)
@given(linear_maps(), elements(), elements())
def test_endomorphism_multiplicative(lin, a, b):
    f = induced_endomorphism(lin)
    assert f(wedge(a, b)) == wedge(f(a), f(b))


@settings(max_examples=100, deadline=None)
@given(elements(), elements(), elements())
def test_wedge_associative_and_matches_oracle(a, b, c):
    assert wedge(wedge(a, b), c) == wedge(a, wedge(b, c))
    assert wedge(a, b).terms == naive_wedge(a.terms, b.terms, 5)


@settings(max_examples=100, deadline=None)
@given(homogeneous(), homogeneous())
def test_graded_commutative(x, y):
    (a, m), (b, k) = x, y
    assert wedge(a, b) == (-1) ** (m * k) * wedge(b, a)


@settings(max_examples=50, deadline=None)
@given(linear_maps(), linear_maps(), st.integers(0, 4))
def test_grade_matrix_composition(f, g, m):
    F, G = induced_endomorphism(f), induced_endomorphism(g)
    assert grade_matrix(F.compose(G), m) == grade_matrix(F, m) @ grade_matrix(G, m)
    assert np.array_equal(grade_matrix(F, m).a, naive_exterior_power(f.a, m, 5) % 5)
