from __future__ import annotations

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import h1_action_matrix
from oracles import bar_cohomology_dim, cup11_class_matches, inverse_mod, powers, rank_mod
from procoh.cli_reporting import load_scenario
from procoh.cyclic_cohomology import (
    CyclicModule,
    E2Algebra,
    OrderError,
    class_representatives,
    cohomology_dim,
    direct_sum,
    e2_product,
    jordan_block,
    jordan_type,
    norm_operator,
    twist_scaling,
)
from procoh.exterior_algebra import AlgebraEndomorphism, parse_element, wedge_vectors
from procoh.fp_linalg import FpMatrix, FpScalar

NAMES = ["y11", "y12", "y21", "y22"]


def periodic_oracle(sigma, p: int, n: int) -> int:
    """dim H^n from the 2-periodic complex, ranks by plain elimination."""
    pw = powers(sigma, p)
    dim = len(pw[0])
    t = (pw[1] - np.eye(dim, dtype=np.int64)) % p
    nm = sum(pw) % p
    rt, rn = rank_mod(t.tolist(), p), rank_mod(nm.tolist(), p)
    if n == 0:
        return dim - rt
    if n % 2:
        return dim - rn - rt
    return dim - rt - rn


@st.composite
def random_modules(draw, max_dim=8, primes=(3, 5, 7)):
    p = draw(st.sampled_from(primes))
    blocks = []
    while True:
        left = max_dim - sum(blocks)
        if left == 0 or (blocks and draw(st.booleans())):
            break
        blocks.append(draw(st.integers(1, min(p, left))))
    n = sum(blocks)
    j = np.zeros((n, n), dtype=np.int64)
    at = 0
    for b in blocks:
        j[at : at + b, at : at + b] = np.eye(b, dtype=np.int64) + np.eye(b, b, 1, dtype=np.int64)
        at += b
    while True:
        entries = draw(st.lists(st.integers(0, p - 1), min_size=n * n, max_size=n * n))
        P = np.array(entries, dtype=np.int64).reshape(n, n)
        if rank_mod(P.tolist(), p) == n:
            break
        P = (P + np.eye(n, dtype=np.int64)) % p
        if rank_mod(P.tolist(), p) == n:
            break
    sigma = (P @ j @ inverse_mod(P.tolist(), p)) % p
    return CyclicModule(FpMatrix(sigma, p)), tuple(sorted(blocks, reverse=True))


@settings(max_examples=200, deadline=None)
@given(random_modules())
def test_cohomology_dim_matches_periodic_oracle(data):
    module, blocks = data
    for n in range(5):
        assert cohomology_dim(module, n) == periodic_oracle(module.sigma.a, module.p, n)
    assert jordan_type(module).blocks == blocks


@settings(max_examples=25, deadline=None)
@given(random_modules(max_dim=3, primes=(3,)))
def test_cohomology_dim_matches_bar_complex(data):
    module, _ = data
    for n in range(3):
        assert cohomology_dim(module, n) == bar_cohomology_dim(module.sigma.a, 3, n)


@pytest.mark.parametrize("p", [3, 5, 7])
def test_jordan_block_tables(p):
    assert [cohomology_dim(jordan_block(1, p), n) for n in range(6)] == [1] * 6
    expected = [1, 0, 0, 0, 0, 0] if p == 3 else [1] * 6
    assert [cohomology_dim(jordan_block(3, p), n) for n in range(6)] == expected
    for k in range(1, p):
        assert [cohomology_dim(jordan_block(k, p), n) for n in range(6)] == [1] * 6
    assert [cohomology_dim(jordan_block(p, p), n) for n in range(6)] == [1, 0, 0, 0, 0, 0]


def test_norm_examples():
    assert norm_operator(jordan_block(1, 5)).is_zero()
    assert rank_mod(norm_operator(jordan_block(5, 5)).tolist(), 5) == 1
    j3 = jordan_block(3, 3)
    assert norm_operator(j3) == j3.t @ j3.t


@pytest.mark.parametrize("p", [3, 5, 7])
def test_norm_kills_sigma_minus_one(p):
    module = direct_sum(jordan_block(2, p), jordan_block(3, p), jordan_block(1, p))
    assert (module.t @ module.norm).is_zero() and (module.norm @ module.t).is_zero()


def test_jordan_types_of_exterior_powers():
    sigma = AlgebraEndomorphism(h1_action_matrix(3))
    types = [jordan_type(CyclicModule(sigma.grade_matrix(m))).blocks for m in range(5)]
    assert types == [(1,), (3, 1), (3, 3), (3, 1), (1,)]
    assert jordan_type(CyclicModule(FpMatrix.identity(3, 5))).blocks == (1, 1, 1)


def test_order_violation():
    with pytest.raises(OrderError):
        CyclicModule(FpMatrix([[2, 0], [0, 1]], 5))
    with pytest.raises(ValueError):
        cohomology_dim(jordan_block(2, 3), -1)


def test_class_representatives():
    assert class_representatives(CyclicModule(FpMatrix(np.zeros((0, 0)), 3)), 2) == []
    alg = E2Algebra(h1_action_matrix(5))
    y1 = parse_element("y11 + y22", NAMES, 5).to_vector(1)
    y4 = parse_element("y11y12y21 - y12y21y22", NAMES, 5).to_vector(3)
    for m, rep in ((1, y1), (3, y4)):
        q = alg.cell(2, m)
        assert q.space.contains(rep) and not q.sub.contains(rep)
        assert q.space.contains(class_representatives(alg.module(m), 2)[0].vector)
    # J^1 summand of Λ^1: the even-degree class of y1 is fixed by σ and not a norm
    ybar2 = parse_element("y12 - y11", NAMES, 5).to_vector(1)
    q = alg.cell(1, 1)
    assert q.space.contains(ybar2) and not q.sub.contains(ybar2)


def test_twist_scaling():
    for p in (3, 5, 7):
        for n in range(6):
            assert twist_scaling(FpScalar(1, p), n) == FpScalar(1, p)
    s = FpScalar(3, 7)
    assert [twist_scaling(s, n) for n in (1, 2, 3)] == [s, s, s * s]
    t_inv = FpScalar(2, 3).inverse()
    assert twist_scaling(t_inv, 4) == FpScalar(1, 3)
    with pytest.raises(ZeroDivisionError):
        twist_scaling(FpScalar(0, 5), 1)


def test_u_squared_is_zero():
    for p in (3, 5, 7):
        alg = E2Algebra(h1_action_matrix(p))
        u = alg.make_class(1, 0, [1])
        assert e2_product(u, u, alg).is_zero()


def _basis_classes(alg, n_max=3):
    out = []
    for n in range(n_max + 1):
        for m in range(alg.d + 1):
            for rep in alg.cell(n, m).reps:
                out.append(alg.make_class(n, m, rep))
    return out


@pytest.mark.parametrize("p", [3, 5])
def test_e2_graded_commutative_and_associative(p):
    alg = E2Algebra(h1_action_matrix(p))
    classes = _basis_classes(alg, 2)
    for a, b in itertools.product(classes, repeat=2):
        ab, ba = alg.product(a, b), alg.product(b, a)
        sign = (-1) ** ((a.n + a.m) * (b.n + b.m))
        assert np.array_equal(ab.vector, (sign * ba.vector) % p)
    small = [c for c in classes if c.n <= 1]
    for a, b, c in itertools.product(small, repeat=3):
        lhs = alg.product(alg.product(a, b), c)
        rhs = alg.product(a, alg.product(b, c))
        assert np.array_equal(lhs.vector, rhs.vector)


@pytest.mark.parametrize("name,p", [("gl2", 3), ("gl2", 5), ("extraspecial3", None)])
def test_odd_products_match_inhomogeneous_cup(name, p):
    """H^1 x H^1 -> H^2 against the bar-complex cup product f(s) · s g(t).

    The bar cup differs from the bigraded convention by the Koszul sign
    (-1)^(n1 m2) = (-1)^m2.
    """
    alg = load_scenario(name, p).algebra()
    p, d = alg.p, alg.d
    nonzero = 0
    for a in range(d + 1):
        for b in range(d + 1 - a):
            for x in alg.cell(1, a).reps:
                for y in alg.cell(1, b).reps:
                    z = alg.product_rep(1, a, x, 1, b, y)
                    nonzero += bool(alg.reduce(2, a + b, z).any())
                    assert cup11_class_matches(
                        x, alg.module(a).sigma.a, y, alg.module(b).sigma.a,
                        lambda s, t, a=a, b=b: wedge_vectors(s, a, t, b, d, p),
                        z, alg.module(a + b).sigma.a, p, (-1) ** b,
                    )
    assert nonzero > 0 or p == 3
