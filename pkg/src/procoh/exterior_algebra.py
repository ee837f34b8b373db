"""Exterior algebras Λ(V) over F_p on a finite set of degree-one generators.

Each grade Λ^m has the basis of strictly increasing index tuples in
lexicographic order.  Besides the sparse :class:`ExtElement` used for naming
and parsing, the module exposes dense per-grade vectors and cached product
tables, which is what the spectral-sequence code runs on.
"""

from __future__ import annotations

import re
from fractions import Fraction
from functools import lru_cache
from itertools import combinations
from dataclasses import dataclass
from math import comb

import numpy as np

from .fp_linalg import DimensionMismatch, FpMatrix, ModulusMismatch, check_odd_prime


def sort_sign(indices: tuple[int, ...]) -> tuple[int, tuple[int, ...]]:
    """Koszul sign and sorted tuple of a concatenation of generators (0 on a repeat)."""
    if len(set(indices)) != len(indices):
        return 0, ()
    inversions = sum(1 for i in range(len(indices)) for j in range(i + 1, len(indices)) if indices[i] > indices[j])
    return (-1) ** inversions, tuple(sorted(indices))


@lru_cache(maxsize=None)
def grade_basis(d: int, m: int) -> tuple[tuple[int, ...], ...]:
    if m < 0 or m > d:
        return ()
    return tuple(combinations(range(d), m))


@lru_cache(maxsize=None)
def _grade_index(d: int, m: int) -> dict[tuple[int, ...], int]:
    return {t: i for i, t in enumerate(grade_basis(d, m))}


@lru_cache(maxsize=None)
def wedge_table(d: int, a: int, b: int) -> np.ndarray:
    """Signs ``T[i, j, k]`` with ``basis_a[i] ∧ basis_b[j] = Σ_k T[i, j, k] basis_{a+b}[k]``."""
    ba, bb = grade_basis(d, a), grade_basis(d, b)
    target = _grade_index(d, a + b)
    table = np.zeros((len(ba), len(bb), max(len(target), 0)), dtype=np.int64)
    for i, s in enumerate(ba):
        for j, t in enumerate(bb):
            sign, merged = sort_sign(s + t)
            if sign:
                table[i, j, target[merged]] = sign
    table.setflags(write=False)
    return table


def wedge_vectors(x: np.ndarray, a: int, y: np.ndarray, b: int, d: int, p: int) -> np.ndarray:
    """Product of a grade-``a`` vector and a grade-``b`` vector, as a grade ``a+b`` vector."""
    if a + b > d:
        return np.zeros(0, dtype=np.int64)
    t = wedge_table(d, a, b)
    return np.einsum("i,j,ijk->k", x, y, t) % p


class ExtElement:
    """A (possibly mixed-grade) element of Λ(F_p^d), stored sparsely."""

    __slots__ = ("d", "p", "terms")

    def __init__(self, d: int, p: int, terms: dict[tuple[int, ...], int] | None = None):
        self.d = d
        self.p = p
        clean = {}
        for key, c in (terms or {}).items():
            key = tuple(key)
            sign, merged = sort_sign(key)
            if any(i < 0 or i >= d for i in key):
                raise DimensionMismatch(f"index out of range in {key} for d={d}")
            c = (sign * int(c)) % p
            if c:
                clean[merged] = (clean.get(merged, 0) + c) % p
        self.terms = {k: v for k, v in clean.items() if v}

    @classmethod
    def one(cls, d: int, p: int) -> ExtElement:
        return cls(d, p, {(): 1})

    @classmethod
    def generator(cls, i: int, d: int, p: int) -> ExtElement:
        return cls(d, p, {(i,): 1})

    @classmethod
    def from_vector(cls, vec, m: int, d: int, p: int) -> ExtElement:
        basis = grade_basis(d, m)
        return cls(d, p, {basis[i]: int(c) for i, c in enumerate(np.asarray(vec)) if int(c) % p})

    def _check(self, other: ExtElement):
        if self.p != other.p:
            raise ModulusMismatch(f"F_{self.p} vs F_{other.p}")
        if self.d != other.d:
            raise DimensionMismatch(f"algebras on {self.d} and {other.d} generators")

    @property
    def grades(self) -> set[int]:
        return {len(k) for k in self.terms}

    @property
    def grade(self) -> int | None:
        """The common grade, ``None`` for mixed or zero elements."""
        g = self.grades
        return g.pop() if len(g) == 1 else None

    def part(self, m: int) -> ExtElement:
        return ExtElement(self.d, self.p, {k: v for k, v in self.terms.items() if len(k) == m})

    def to_vector(self, m: int) -> np.ndarray:
        idx = _grade_index(self.d, m)
        v = np.zeros(len(idx), dtype=np.int64)
        for k, c in self.terms.items():
            if len(k) == m:
                v[idx[k]] = c
        return v

    def is_zero(self) -> bool:
        return not self.terms

    def __add__(self, other: ExtElement) -> ExtElement:
        self._check(other)
        t = dict(self.terms)
        for k, c in other.terms.items():
            t[k] = t.get(k, 0) + c
        return ExtElement(self.d, self.p, t)

    def __neg__(self) -> ExtElement:
        return ExtElement(self.d, self.p, {k: -c for k, c in self.terms.items()})

    def __sub__(self, other: ExtElement) -> ExtElement:
        return self + (-other)

    def __mul__(self, other):
        if isinstance(other, ExtElement):
            return wedge(self, other)
        return ExtElement(self.d, self.p, {k: c * int(other) for k, c in self.terms.items()})

    def __rmul__(self, scalar):
        return ExtElement(self.d, self.p, {k: c * int(scalar) for k, c in self.terms.items()})

    def __xor__(self, other: ExtElement) -> ExtElement:
        return wedge(self, other)

    def __eq__(self, other):
        if not isinstance(other, ExtElement):
            return NotImplemented
        return (self.d, self.p) == (other.d, other.p) and self.terms == other.terms

    def __hash__(self):
        return hash((self.d, self.p, tuple(sorted(self.terms.items()))))

    def render(self, names: list[str] | None = None) -> str:
        return render_element(self, names)

    def __repr__(self):
        return f"ExtElement({self.render()!r}, p={self.p})"


def wedge(a: ExtElement, b: ExtElement) -> ExtElement:
    """Graded-commutative product with the Koszul sign of sorting the concatenation."""
    a._check(b)
    out: dict[tuple[int, ...], int] = {}
    for s, c in a.terms.items():
        for t, e in b.terms.items():
            sign, merged = sort_sign(s + t)
            if sign:
                out[merged] = (out.get(merged, 0) + sign * c * e) % a.p
    return ExtElement(a.d, a.p, out)


class AlgebraEndomorphism:
    """The algebra map of Λ(F_p^d) extending a linear map on the degree-one part.

    The matrix acts on coefficient column vectors: generator ``j`` goes to
    ``Σ_i L[i, j] e_i``.
    """

    def __init__(self, linear: FpMatrix):
        if linear.rows != linear.cols:
            raise DimensionMismatch("degree-one map must be square")
        self.linear = linear
        self.d = linear.rows
        self.p = linear.p
        self._grades: dict[int, FpMatrix] = {}

    def grade_matrix(self, m: int) -> FpMatrix:
        if m not in self._grades:
            self._grades[m] = _exterior_power(self.linear, m)
        return self._grades[m]

    def apply(self, x: ExtElement) -> ExtElement:
        if (x.d, x.p) != (self.d, self.p):
            raise DimensionMismatch("element and endomorphism live in different algebras")
        out = ExtElement(self.d, self.p)
        for m in sorted(x.grades):
            vec = self.grade_matrix(m) @ x.to_vector(m)
            out = out + ExtElement.from_vector(vec, m, self.d, self.p)
        return out

    __call__ = apply

    def compose(self, other: AlgebraEndomorphism) -> AlgebraEndomorphism:
        return AlgebraEndomorphism(self.linear @ other.linear)


def induced_endomorphism(linear: FpMatrix) -> AlgebraEndomorphism:
    return AlgebraEndomorphism(linear)


def grade_matrix(endo: AlgebraEndomorphism, m: int) -> FpMatrix:
    if m < 0 or m > endo.d:
        raise DimensionMismatch(f"grade {m} outside 0..{endo.d}")
    return endo.grade_matrix(m)


def _exterior_power(linear: FpMatrix, m: int) -> FpMatrix:
    d, p = linear.rows, linear.p
    basis = grade_basis(d, m)
    if m == 0:
        return FpMatrix.identity(1, p)
    cols = []
    columns = [linear.a[:, j] for j in range(d)]
    for subset in basis:
        vec = columns[subset[0]]
        for k, j in enumerate(subset[1:], start=1):
            vec = wedge_vectors(vec, k, columns[j], 1, d, p)
        cols.append(vec)
    return FpMatrix(np.array(cols, dtype=np.int64).T.reshape(comb(d, m), comb(d, m)), p)


# --- text format -----------------------------------------------------------

def default_names(d: int) -> list[str]:
    return [f"e{i + 1}" for i in range(d)]


def balanced(c: int, p: int) -> int:
    c %= p
    return c - p if c > p // 2 else c


def render_element(x: ExtElement, names: list[str] | None = None) -> str:
    names = names or default_names(x.d)
    if not x.terms:
        return "0"
    pieces = []
    for key in sorted(x.terms, key=lambda k: (len(k), k)):
        c = balanced(x.terms[key], x.p)
        word = "".join(names[i] for i in key)
        if not word:
            body = str(abs(c))
        elif abs(c) == 1:
            body = word
        else:
            body = f"{abs(c)}{word}"
        pieces.append(("-" if c < 0 else "+", body))
    first_sign, first = pieces[0]
    text = ("-" if first_sign == "-" else "") + first
    for sign, body in pieces[1:]:
        text += f" {sign} {body}"
    return text


_TERM = re.compile(r"\s*([+-])?\s*([^+-]+)")


def parse_element(text: str, names: list[str], p: int) -> ExtElement:
    """Inverse of :func:`render_element`; also accepts ``a/b`` coefficients and ``*``."""
    check_odd_prime(p)
    d = len(names)
    by_length = sorted(range(d), key=lambda i: -len(names[i]))
    text = text.strip()
    out = ExtElement(d, p)
    if text == "0":
        return out
    pos = 0
    for match in _TERM.finditer(text):
        if match.start() != pos:
            raise ValueError(f"cannot parse {text!r}")
        pos = match.end()
        sign = -1 if match.group(1) == "-" else 1
        body = match.group(2).strip().replace("*", "")
        num = re.match(r"\d+(?:/\d+)?", body)
        coeff = Fraction(1)
        if num:
            coeff = Fraction(num.group(0))
            body = body[num.end():]
        word: list[int] = []
        while body:
            for i in by_length:
                if body.startswith(names[i]):
                    word.append(i)
                    body = body[len(names[i]):]
                    break
            else:
                raise ValueError(f"unknown generator in {text!r} at {body!r}")
        c = sign * coeff.numerator * pow(coeff.denominator, -1, p)
        out = out + ExtElement(d, p, {tuple(word): c})
    if pos != len(text):
        raise ValueError(f"cannot parse {text!r}")
    return out


@dataclass(frozen=True)
class NamedClass:
    """A named element of an exterior algebra, e.g. ``y4``."""

    name: str
    element: ExtElement

    def render(self, names: list[str] | None = None) -> str:
        return f"{self.name} = {render_element(self.element, names)}"


def name_table(entries, names: list[str], p: int) -> dict[str, NamedClass]:
    """Build a dictionary of named classes from ``(name, text)`` pairs.

    Raises ``ValueError`` on a repeated name.
    """
    table: dict[str, NamedClass] = {}
    for name, text in entries:
        if name in table:
            raise ValueError(f"duplicate class name {name!r}")
        el = text if isinstance(text, ExtElement) else parse_element(text, names, p)
        table[name] = NamedClass(name, el)
    return table
