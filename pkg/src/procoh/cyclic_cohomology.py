"""Cohomology of Z/p with coefficients in finite F_p[Z/p]-modules.

Everything is computed from the 2-periodic free resolution

    ... -> F --N--> F --(σ-1)--> F --N--> F --(σ-1)--> F -> F_p

so a degree-n cochain is just a module element.  Even cocycles live in
ker(σ-1), odd cocycles in ker N; coboundaries are im N (even n > 0) and
im(σ-1) (odd n).

:class:`E2Algebra` packages the case that matters for the spectral sequence:
coefficients in an exterior algebra Λ(V) on which the generator acts by an
algebra automorphism, with the cup product from the standard diagonal
approximation of the resolution.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .exterior_algebra import AlgebraEndomorphism, ExtElement, grade_basis, wedge_table
from .fp_linalg import (
    DimensionMismatch,
    FpMatrix,
    FpScalar,
    ModulusMismatch,
    Quotient,
    Subspace,
    check_odd_prime,
    image,
    kernel_basis,
    rank,
)


class OrderError(ValueError):
    """The module action does not have order dividing p."""


class CyclicModule:
    """A finite F_p[Z/p]-module given by the action ``sigma`` of a generator."""

    def __init__(self, sigma: FpMatrix):
        if sigma.rows != sigma.cols:
            raise DimensionMismatch("sigma must be square")
        check_odd_prime(sigma.p)
        self.sigma = sigma
        self.p = sigma.p
        self.dim = sigma.rows
        if not (sigma ** self.p).is_identity():
            raise OrderError("sigma^p is not the identity")

    @cached_property
    def t(self) -> FpMatrix:
        """The nilpotent part σ - 1."""
        return self.sigma - FpMatrix.identity(self.dim, self.p)

    @cached_property
    def norm(self) -> FpMatrix:
        total = FpMatrix.zeros(self.dim, self.dim, self.p)
        power = FpMatrix.identity(self.dim, self.p)
        for _ in range(self.p):
            total = total + power
            power = power @ self.sigma
        return total

    def __repr__(self):
        return f"CyclicModule(dim={self.dim}, p={self.p})"


def jordan_block(k: int, p: int) -> CyclicModule:
    """J^k: a single unipotent Jordan block of size k ≤ p."""
    if not 0 <= k <= p:
        raise ValueError(f"block size {k} outside 0..{p}")
    a = np.eye(k, dtype=np.int64) + np.eye(k, k, 1, dtype=np.int64)
    return CyclicModule(FpMatrix(a.reshape(k, k), p))


def direct_sum(*modules: CyclicModule) -> CyclicModule:
    p = modules[0].p
    n = sum(m.dim for m in modules)
    a = np.zeros((n, n), dtype=np.int64)
    at = 0
    for m in modules:
        if m.p != p:
            raise ModulusMismatch("summands over different fields")
        a[at : at + m.dim, at : at + m.dim] = m.sigma.a
        at += m.dim
    return CyclicModule(FpMatrix(a.reshape(n, n), p))


def norm_operator(module: CyclicModule) -> FpMatrix:
    """N = 1 + σ + ... + σ^(p-1)."""
    return module.norm


def _check_degree(n: int):
    if n < 0:
        raise ValueError(f"cohomological degree must be non-negative, got {n}")


def cocycles(module: CyclicModule, n: int) -> Subspace:
    _check_degree(n)
    return kernel_basis(module.norm if n % 2 else module.t)


def coboundaries(module: CyclicModule, n: int) -> Subspace:
    _check_degree(n)
    if n == 0:
        return Subspace.zero(module.dim, module.p)
    return image(module.t if n % 2 else module.norm)


def cohomology(module: CyclicModule, n: int) -> Quotient:
    return Quotient(cocycles(module, n), coboundaries(module, n))


def cohomology_dim(module: CyclicModule, n: int) -> int:
    _check_degree(n)
    if n == 0:
        return module.dim - rank(module.t)
    if n % 2:
        return (module.dim - rank(module.norm)) - rank(module.t)
    return (module.dim - rank(module.t)) - rank(module.norm)


@dataclass(frozen=True)
class JordanType:
    """Multiset of Jordan block sizes, largest first."""

    blocks: tuple[int, ...]

    @property
    def dim(self) -> int:
        return sum(self.blocks)

    def as_multiset(self) -> dict[int, int]:
        out: dict[int, int] = {}
        for b in self.blocks:
            out[b] = out.get(b, 0) + 1
        return out

    def __str__(self):
        return " ⊕ ".join(f"J^{b}" for b in self.blocks) or "0"


def jordan_type(module: CyclicModule) -> JordanType:
    """Block sizes recovered from the ranks of (σ-1)^j."""
    p = module.p
    ranks = [module.dim]
    power = FpMatrix.identity(module.dim, p)
    for _ in range(p + 1):
        power = power @ module.t
        ranks.append(rank(power))
    if ranks[p] != 0:
        raise OrderError("σ - 1 is not nilpotent of order ≤ p")
    # at_least[j] = number of blocks of size >= j
    at_least = [ranks[j - 1] - ranks[j] for j in range(1, p + 2)]
    blocks: list[int] = []
    for size in range(p, 0, -1):
        count = at_least[size - 1] - (at_least[size] if size < len(at_least) else 0)
        blocks.extend([size] * count)
    return JordanType(tuple(blocks))


@dataclass(frozen=True)
class CohClass:
    """A class in H^n(Z/p; M) (or in E_2^{n,m}) held by a canonical cocycle."""

    n: int
    rep: tuple[int, ...]
    p: int
    m: int = 0

    @property
    def parity(self) -> str:
        return "odd" if self.n % 2 else "even"

    @property
    def vector(self) -> np.ndarray:
        return np.array(self.rep, dtype=np.int64)

    def is_zero(self) -> bool:
        return not any(self.rep)


def class_representatives(module: CyclicModule, n: int) -> list[CohClass]:
    """Canonical cocycles representing a basis of H^n(Z/p; M)."""
    q = cohomology(module, n)
    return [CohClass(n, tuple(int(c) for c in r), module.p) for r in q.reps]


def twist_scaling(s, n: int) -> FpScalar:
    """Factor by which h -> h^s multiplies the degree-n generator of H^*(Z/p; F_p).

    H^1 and H^2 both scale by s (the Bockstein commutes with the automorphism),
    so the degree-n class scales by s^ceil(n/2).
    """
    if not isinstance(s, FpScalar):
        raise TypeError("twist_scaling expects an FpScalar")
    if s.value == 0:
        raise ZeroDivisionError("scaling parameter must be a unit")
    _check_degree(n)
    return s ** ((n + 1) // 2)


def base_exponent(n: int) -> int:
    return (n + 1) // 2


class E2Algebra:
    """Bigraded algebra H^n(Z/p; Λ^m V) for a unipotent action on V.

    ``sigma_h1`` is the action of the chosen generator of Z/p on V, in the
    column convention of :class:`AlgebraEndomorphism`.

    Products follow the diagonal approximation of the periodic resolution:
    the representative is αβ unless both columns are odd, in which case it is
    Σ_{0≤i<j<p} σ^i(α) σ^j(β).  The result is multiplied by (-1)^(n·m'), which
    makes the product graded-commutative for the total degree and leaves
    products with a row-0 left factor unsigned.
    """

    def __init__(self, sigma_h1: FpMatrix):
        self.p = check_odd_prime(sigma_h1.p)
        self.d = sigma_h1.rows
        self.sigma = AlgebraEndomorphism(sigma_h1)
        self.modules = [CyclicModule(self.sigma.grade_matrix(m)) for m in range(self.d + 1)]
        self._cells: dict[tuple[int, int], Quotient] = {}
        self._powers: dict[int, np.ndarray] = {}

    def grade_dim(self, m: int) -> int:
        return len(grade_basis(self.d, m)) if 0 <= m <= self.d else 0

    def module(self, m: int) -> CyclicModule:
        return self.modules[m]

    @staticmethod
    def _period_key(n: int) -> int:
        return n if n <= 2 else 2 - n % 2

    def cocycles(self, n: int, m: int) -> Subspace:
        return self.cell(n, m).space

    def coboundaries(self, n: int, m: int) -> Subspace:
        return self.cell(n, m).sub

    def cell(self, n: int, m: int) -> Quotient:
        if not 0 <= m <= self.d or n < 0:
            raise DimensionMismatch(f"cell ({n},{m}) outside the first quadrant / kernel rank")
        key = (self._period_key(n), m)
        if key not in self._cells:
            self._cells[key] = cohomology(self.modules[m], key[0])
        return self._cells[key]

    def cell_dim(self, n: int, m: int) -> int:
        if n < 0 or not 0 <= m <= self.d:
            return 0
        return self.cell(n, m).dim

    def sigma_powers(self, m: int) -> np.ndarray:
        """Stack of σ^i on Λ^m for i = 0..p-1, shape (p, dim, dim)."""
        if m not in self._powers:
            g = self.modules[m].sigma.a
            mats = [np.eye(g.shape[0], dtype=np.int64)]
            for _ in range(self.p - 1):
                mats.append((g @ mats[-1]) % self.p)
            arr = np.array(mats, dtype=np.int64).reshape(self.p, g.shape[0], g.shape[0])
            arr.setflags(write=False)
            self._powers[m] = arr
        return self._powers[m]

    def product_rep(self, n1: int, m1: int, x, n2: int, m2: int, y) -> np.ndarray:
        """Cocycle representing the product of classes (n1, m1, x) and (n2, m2, y)."""
        p, d = self.p, self.d
        if m1 + m2 > d:
            return np.zeros(0, dtype=np.int64)
        x = np.asarray(x, dtype=np.int64)
        y = np.asarray(y, dtype=np.int64)
        table = wedge_table(d, m1, m2)
        if n1 % 2 and n2 % 2:
            xs = np.einsum("iab,b->ia", self.sigma_powers(m1), x) % p
            ys = np.einsum("iab,b->ia", self.sigma_powers(m2), y) % p
            # prefix[j] = Σ_{i<j} σ^i x
            prefix = np.cumsum(xs, axis=0) - xs
            out = np.einsum("ja,jb,abk->k", prefix % p, ys, table)
        else:
            out = np.einsum("a,b,abk->k", x, y, table)
        if (n1 * m2) % 2:
            out = -out
        return out % p

    def reduce(self, n: int, m: int, rep) -> np.ndarray:
        return self.cell(n, m).sub.reduce(rep)

    def product(self, a: CohClass, b: CohClass) -> CohClass:
        if a.p != self.p or b.p != self.p:
            raise ModulusMismatch("classes over a different field")
        n, m = a.n + b.n, a.m + b.m
        if m > self.d:
            return CohClass(n, (), self.p, m)
        rep = self.product_rep(a.n, a.m, a.vector, b.n, b.m, b.vector)
        return self.make_class(n, m, rep)

    def make_class(self, n: int, m: int, rep) -> CohClass:
        q = self.cell(n, m)
        rep = np.asarray(rep, dtype=np.int64) % self.p
        if not q.space.contains(rep):
            raise ValueError(f"vector is not a cocycle in E2^({n},{m})")
        return CohClass(n, tuple(int(c) for c in q.sub.reduce(rep)), self.p, m)

    def element_class(self, n: int, x: ExtElement) -> CohClass:
        m = x.grade if x.grade is not None else 0
        return self.make_class(n, m, x.to_vector(m))

    def coordinates(self, c: CohClass) -> np.ndarray:
        return self.cell(c.n, c.m).coordinates(c.vector)


def e2_product(a: CohClass, b: CohClass, algebra: E2Algebra) -> CohClass:
    """Product of two E_2 classes, reduced to the canonical representative."""
    return algebra.product(a, b)


def apply_compatible_pair(algebra: E2Algebra, n: int, m: int, rep, scalar: int, module_map: FpMatrix) -> np.ndarray:
    """Action of a pair (h -> h^s, φ) on a degree-(n, m) cochain: s^ceil(n/2) φ(rep)."""
    factor = pow(int(scalar), base_exponent(n), algebra.p)
    return (factor * (module_map @ np.asarray(rep, dtype=np.int64))) % algebra.p
