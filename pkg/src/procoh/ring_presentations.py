"""Graded-commutative presentations over F_p, handled by truncated linear algebra.

A presentation is a list of homogeneous generators (polynomial or exterior)
and a list of homogeneous relations.  Graded-commutativity is implicit: odd
generators anticommute and square to zero, exterior generators of even
degree commute and square to zero.  Every question is answered degree by
degree up to a bound D using monomial bases, which is plenty for rings with a
handful of generators in degrees ≤ 8.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .exterior_algebra import balanced
from .fp_linalg import Subspace, check_odd_prime

POLYNOMIAL = "polynomial"
EXTERIOR = "exterior"

ISOMORPHIC = "isomorphic-to-D"
SERIES_ONLY = "series-equal-only"
DISTINCT = "distinct"

Monomial = tuple[int, ...]
Poly = dict[Monomial, int]

MONOMIAL_BUDGET = 200_000


class BudgetExceeded(RuntimeError):
    """A truncated computation would need more monomials than allowed."""


class NotApplicable(ValueError):
    """The presentation does not split as polynomial ⊗ finite."""


@dataclass(frozen=True)
class Generator:
    name: str
    degree: int
    parity: str = EXTERIOR
    bidegree: tuple[int, int] | None = None

    def __post_init__(self):
        if self.parity not in (POLYNOMIAL, EXTERIOR):
            raise ValueError(f"unknown parity {self.parity!r}")
        if self.degree < 1:
            raise ValueError("generators must have positive degree")
        if self.degree % 2 and self.parity == POLYNOMIAL:
            raise ValueError(f"{self.name}: odd generators are exterior in odd characteristic")

    @property
    def odd(self) -> bool:
        return self.degree % 2 == 1


class RingPresentation:
    """Generators, homogeneous relations and the assumptions they rest on."""

    def __init__(self, generators, relations=(), p: int = 3, provenance=(), name: str = ""):
        self.p = check_odd_prime(p)
        self.generators: list[Generator] = list(generators)
        names = [g.name for g in self.generators]
        if len(set(names)) != len(names):
            raise ValueError("duplicate generator names")
        self.relations: list[Poly] = [self._clean(r) for r in relations]
        self.relations = [r for r in self.relations if r]
        for r in self.relations:
            if len({self.degree(mono) for mono in r}) != 1:
                raise ValueError(f"relation {self.render(r)} is not homogeneous")
        self.provenance = list(provenance)
        self.name = name

    # -- monomial arithmetic -------------------------------------------------

    @property
    def ngens(self) -> int:
        return len(self.generators)

    def _clean(self, poly) -> Poly:
        out: Poly = {}
        for mono, c in poly.items():
            mono = tuple(mono)
            if len(mono) != self.ngens:
                raise ValueError("monomial has the wrong number of exponents")
            if not self.admissible(mono):
                continue
            c %= self.p
            if c:
                out[mono] = (out.get(mono, 0) + c) % self.p
        return {k: v for k, v in out.items() if v}

    def admissible(self, mono: Monomial) -> bool:
        return all(e <= 1 or g.parity == POLYNOMIAL for e, g in zip(mono, self.generators))

    def degree(self, mono: Monomial) -> int:
        return sum(e * g.degree for e, g in zip(mono, self.generators))

    def bidegree(self, mono: Monomial) -> tuple[int, int]:
        n = sum(e * g.bidegree[0] for e, g in zip(mono, self.generators))
        m = sum(e * g.bidegree[1] for e, g in zip(mono, self.generators))
        return n, m

    def generator_monomial(self, i: int) -> Monomial:
        return tuple(int(j == i) for j in range(self.ngens))

    def multiply_monomials(self, a: Monomial, b: Monomial) -> tuple[int, Monomial | None]:
        """Sign and product of two normally ordered monomials (sign 0 if it vanishes)."""
        merged = tuple(x + y for x, y in zip(a, b))
        if not self.admissible(merged):
            return 0, None
        # moving each odd factor of b leftwards past the odd factors of a with larger index
        swaps = 0
        odd_a_after = 0
        for i in range(self.ngens - 1, -1, -1):
            if self.generators[i].odd:
                swaps += b[i] * odd_a_after
                odd_a_after += a[i]
        return (-1 if swaps % 2 else 1), merged

    def multiply(self, x: Poly, y: Poly) -> Poly:
        out: Poly = {}
        for a, c in x.items():
            for b, e in y.items():
                sign, mono = self.multiply_monomials(a, b)
                if sign:
                    out[mono] = (out.get(mono, 0) + sign * c * e) % self.p
        return {k: v for k, v in out.items() if v}

    def monomials(self, degree: int) -> list[Monomial]:
        return _monomials(tuple((g.degree, g.parity == POLYNOMIAL) for g in self.generators), degree)

    def evaluate(self, mono: Monomial, images: list[Poly], target: RingPresentation) -> Poly:
        """Image of a monomial under generators ↦ images (normal order, left to right)."""
        out: Poly = {tuple([0] * target.ngens): 1}
        for i, e in enumerate(mono):
            for _ in range(e):
                out = target.multiply(out, images[i])
        return out

    # -- text format ---------------------------------------------------------

    def render_monomial(self, mono: Monomial) -> str:
        parts = []
        for g, e in zip(self.generators, mono):
            if e == 1:
                parts.append(g.name)
            elif e > 1:
                parts.append(f"{g.name}^{e}")
        return "".join(parts) or "1"

    def render(self, poly: Poly) -> str:
        if not poly:
            return "0"
        text = ""
        for mono in sorted(poly, key=lambda m: (self.degree(m), tuple(-e for e in m))):
            c = balanced(poly[mono], self.p)
            word = self.render_monomial(mono)
            body = word if abs(c) == 1 else f"{abs(c)}{word}"
            if not text:
                text = ("-" if c < 0 else "") + body
            else:
                text += (" - " if c < 0 else " + ") + body
        return text

    def parse(self, text: str) -> Poly:
        return parse_polynomial(text, self)

    def to_text(self) -> str:
        lines = [f"ring {self.name or 'R'} p={self.p}"]
        for g in self.generators:
            extra = f" ({g.bidegree[0]},{g.bidegree[1]})" if g.bidegree else ""
            lines.append(f"gen {g.name} {g.degree} {g.parity}{extra}")
        for r in self.relations:
            lines.append(f"rel {self.render(r)}")
        for tag in self.provenance:
            lines.append(f"provenance {tag}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> RingPresentation:
        name, p, gens, rels, prov = "", 3, [], [], []
        for raw in text.splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            head, _, rest = line.partition(" ")
            if head == "ring":
                m = re.match(r"(\S+)\s+p=(\d+)", rest)
                if not m:
                    raise ValueError(f"bad ring line {line!r}")
                name, p = m.group(1), int(m.group(2))
            elif head == "gen":
                m = re.match(r"(\S+)\s+(\d+)\s+(\w+)(?:\s+\((\d+),(\d+)\))?$", rest)
                if not m:
                    raise ValueError(f"bad generator line {line!r}")
                bideg = (int(m.group(4)), int(m.group(5))) if m.group(4) else None
                gens.append(Generator(m.group(1), int(m.group(2)), m.group(3), bideg))
            elif head == "rel":
                rels.append(rest)
            elif head == "provenance":
                prov.append(rest)
            else:
                raise ValueError(f"unknown line {line!r}")
        shell = cls(gens, (), p, prov, name)
        return cls(gens, [parse_polynomial(t, shell) for t in rels], p, prov, name)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "p": self.p,
            "generators": [
                {"name": g.name, "degree": g.degree, "parity": g.parity, **({"bidegree": list(g.bidegree)} if g.bidegree else {})}
                for g in self.generators
            ],
            "relations": [self.render(r) for r in self.relations],
            "provenance": list(self.provenance),
        }

    def __repr__(self):
        return f"RingPresentation({self.name!r}, gens={[g.name for g in self.generators]}, relations={len(self.relations)})"


@lru_cache(maxsize=None)
def _monomials(gens: tuple[tuple[int, bool], ...], degree: int) -> list[Monomial]:
    out: list[Monomial] = []

    def rec(i: int, left: int, acc: list[int]):
        if i == len(gens):
            if left == 0:
                out.append(tuple(acc))
            return
        deg, poly = gens[i]
        top = left // deg if poly else min(1, left // deg)
        for e in range(top, -1, -1):
            acc.append(e)
            rec(i + 1, left - e * deg, acc)
            acc.pop()
            if len(out) > MONOMIAL_BUDGET:
                raise BudgetExceeded(f"more than {MONOMIAL_BUDGET} monomials in degree {degree}")

    rec(0, degree, [])
    return out


def parse_polynomial(text: str, pres: RingPresentation) -> Poly:
    """Parse e.g. "yY' - y'Y" or "1/2 uy4 + x^2" against the generator names."""
    names = [g.name for g in pres.generators]
    order = sorted(range(len(names)), key=lambda i: -len(names[i]))
    text = text.strip()
    if text == "0":
        return {}
    poly: Poly = {}
    for sign_txt, body in re.findall(r"([+-]?)\s*([^+-]+)", text):
        body = body.strip().replace("*", "").replace(" ", "")
        coeff = Fraction(1)
        num = re.match(r"\d+(?:/\d+)?", body)
        if num:
            coeff = Fraction(num.group(0))
            body = body[num.end():]
        mono = [0] * len(names)
        while body:
            for i in order:
                if body.startswith(names[i]):
                    body = body[len(names[i]):]
                    e = 1
                    pw = re.match(r"\^(\d+)", body)
                    if pw:
                        e = int(pw.group(1))
                        body = body[pw.end():]
                    mono[i] += e
                    break
            else:
                raise ValueError(f"unknown generator at {body!r} in {text!r}")
        c = coeff.numerator * pow(coeff.denominator, -1, pres.p)
        if sign_txt == "-":
            c = -c
        key = tuple(mono)
        poly[key] = (poly.get(key, 0) + c) % pres.p
    return {k: v for k, v in poly.items() if v}


class TruncatedRing:
    """Degree pieces 0..D of a presentation as quotients of monomial spaces."""

    def __init__(self, pres: RingPresentation, D: int):
        self.pres = pres
        self.D = D
        self.p = pres.p
        self.monos = [pres.monomials(k) for k in range(D + 1)]
        self.index = [{m: i for i, m in enumerate(ms)} for ms in self.monos]
        self.ideal = [self._ideal(k) for k in range(D + 1)]

    def _ideal(self, k: int) -> Subspace:
        pres = self.pres
        n = len(self.monos[k])
        vecs = []
        for rel in pres.relations:
            dr = pres.degree(next(iter(rel)))
            if dr > k:
                continue
            for mono in pres.monomials(k - dr):
                prod = pres.multiply({mono: 1}, rel)
                if prod:
                    vecs.append(self.vector(prod, k))
        return Subspace(vecs, n, self.p)

    def vector(self, poly: Poly, k: int) -> np.ndarray:
        v = np.zeros(len(self.monos[k]), dtype=np.int64)
        for mono, c in poly.items():
            if self.pres.degree(mono) != k:
                raise ValueError("polynomial is not homogeneous of the requested degree")
            v[self.index[k][mono]] = c
        return v % self.p

    def reduce(self, poly: Poly, k: int) -> np.ndarray:
        return self.ideal[k].reduce(self.vector(poly, k))

    def is_zero(self, poly: Poly) -> bool:
        if not poly:
            return True
        k = self.pres.degree(next(iter(poly)))
        if k > self.D:
            return True
        return not self.reduce(poly, k).any()

    def dims(self) -> list[int]:
        return [len(self.monos[k]) - self.ideal[k].dim for k in range(self.D + 1)]

    def basis(self, k: int) -> list[Poly]:
        """Monomials not in the span of the ideal's pivots: a basis of the degree-k piece."""
        pivots = set(self.ideal[k].pivots)
        return [{m: 1} for i, m in enumerate(self.monos[k]) if i not in pivots]


def poincare_series(pres: RingPresentation, D: int) -> list[int]:
    return TruncatedRing(pres, D).dims()


def free_series(pres: RingPresentation, D: int) -> list[int]:
    """Closed form Π(1 + t^d) Π(1 - t^e)^-1 for the generators alone, truncated."""
    series = [1] + [0] * D
    for g in pres.generators:
        if g.parity == EXTERIOR:
            series = [series[k] + (series[k - g.degree] if k >= g.degree else 0) for k in range(D + 1)]
        else:
            out = list(series)
            for k in range(g.degree, D + 1):
                out[k] += out[k - g.degree]
            series = out
    return series


@dataclass
class Comparison:
    verdict: str
    series_a: list[int]
    series_b: list[int]
    assignment: dict[str, str] = field(default_factory=dict)

    def __bool__(self):
        return self.verdict == ISOMORPHIC


def truncated_equal(a: RingPresentation, b: RingPresentation, D: int, max_candidates: int = 100) -> Comparison:
    """Compare two presentations up to degree D.

    ``isomorphic-to-D`` comes with an explicit assignment of a's generators
    to elements of b that satisfies a's relations and is onto in every
    degree ≤ D; together with equal series this is an isomorphism of the
    truncations.  A failed search only downgrades to ``series-equal-only``.
    """
    if a.p != b.p:
        sa, sb = poincare_series(a, D), poincare_series(b, D)
        return Comparison(DISTINCT, sa, sb)
    ta, tb = TruncatedRing(a, D), TruncatedRing(b, D)
    sa, sb = ta.dims(), tb.dims()
    if sa != sb:
        return Comparison(DISTINCT, sa, sb)
    p = a.p

    def candidates(deg: int) -> list[Poly]:
        if deg > D:
            return [{}]
        out: list[Poly] = []
        seen = set()

        def push(poly):
            key = tuple(tb.reduce(poly, deg)) if poly else ()
            if poly and key not in seen and any(key):
                seen.add(key)
                out.append(poly)

        for j, g in enumerate(b.generators):
            if g.degree == deg:
                for c in range(1, p):
                    push({b.generator_monomial(j): c})
        basis = tb.basis(deg)
        for coeffs in itertools.product(range(p), repeat=len(basis)):
            if len(out) >= max_candidates:
                break
            poly: Poly = {}
            for c, mono in zip(coeffs, basis):
                if c:
                    (m,) = mono
                    poly[m] = c
            push(poly)
        return out

    def ordered(g) -> list[Poly]:
        # try the same-named generator of b first; identical presentations then resolve at once
        out = candidates(g.degree)
        for j, h in enumerate(b.generators):
            if h.name == g.name and h.degree == g.degree:
                same = {b.generator_monomial(j): 1}
                out = [same] + [c for c in out if c != same]
        return out

    cand = [ordered(g) for g in a.generators]
    relations = [(rel, {i for mono in rel for i, e in enumerate(mono) if e}) for rel in a.relations]
    images: list[Poly | None] = [None] * a.ngens

    def rel_ok(upto: int) -> bool:
        for rel, support in relations:
            if max(support, default=-1) != upto:
                continue
            total: Poly = {}
            for mono, c in rel.items():
                img = a.evaluate(mono, images, b)
                for k, v in img.items():
                    total[k] = (total.get(k, 0) + c * v) % p
            total = {k: v for k, v in total.items() if v}
            if not tb.is_zero(total):
                return False
        return True

    def onto() -> bool:
        for k in range(1, D + 1):
            if sb[k] == 0:
                continue
            vecs = []
            for mono in a.monomials(k):
                img = a.evaluate(mono, images, b)
                if img:
                    vecs.append(tb.reduce(img, k))
            have = Subspace(vecs, len(tb.monos[k]), p) + tb.ideal[k] if vecs else tb.ideal[k]
            if have.dim - tb.ideal[k].dim != sb[k]:
                return False
        return True

    def search(i: int) -> bool:
        if i == a.ngens:
            return onto()
        for img in cand[i]:
            images[i] = img
            if rel_ok(i) and search(i + 1):
                return True
        images[i] = None
        return False

    if search(0):
        assignment = {g.name: b.render(img) if img else "0" for g, img in zip(a.generators, images)}
        return Comparison(ISOMORPHIC, sa, sb, assignment)
    return Comparison(SERIES_ONLY, sa, sb)


@dataclass
class DualityReport:
    polynomial_degrees: dict[str, int]
    top_degree: int
    palindromic: bool
    finite_series: list[int]


def split_presentation(pres: RingPresentation) -> tuple[list[Generator], RingPresentation]:
    """Separate polynomial generators that occur in no relation."""
    used = {i for rel in pres.relations for mono in rel for i, e in enumerate(mono) if e}
    free = [i for i, g in enumerate(pres.generators) if g.parity == POLYNOMIAL and i not in used]
    keep = [i for i in range(pres.ngens) if i not in free]
    if any(pres.generators[i].parity == POLYNOMIAL for i in keep):
        raise NotApplicable("a polynomial generator occurs in a relation; no structural splitting")
    rels = [{tuple(mono[i] for i in keep): c for mono, c in rel.items()} for rel in pres.relations]
    finite = RingPresentation([pres.generators[i] for i in keep], rels, pres.p, pres.provenance, pres.name + "/poly")
    return [pres.generators[i] for i in free], finite


def duality_degrees(pres: RingPresentation) -> DualityReport:
    """Top degree and palindromicity of the finite tensor factor."""
    poly, finite = split_presentation(pres)
    bound = sum(g.degree for g in finite.generators)
    series = poincare_series(finite, bound)
    top = max((k for k, d in enumerate(series) if d), default=0)
    series = series[: top + 1]
    return DualityReport({g.name: g.degree for g in poly}, top, series == series[::-1], series)
