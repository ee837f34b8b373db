"""Pages of the Lyndon-Hochschild-Serre spectral sequence for Z/p-extensions.

Every cell of every page is stored as a subquotient Z/B of the cochain space
Λ^m H^1 of the kernel, with E_2-coboundaries ⊆ B ⊆ Z ⊆ E_2-cocycles.  Stable
sub-pages, later pages and differentials all live in these coordinates, so
products can always be computed on cochain representatives with the E_2 cup
product and then read off in the current subquotient.

A cell (n, m) of a page truncated at column N is *determinate* when all
differentials into and out of it stay inside the window, i.e. m = 0 or
n + m + 1 ≤ N.  Only determinate cells are ever constrained or asserted.
A cell is *settled* when moreover every differential leaving it lands in a
determinate cell (m ≤ 1 or n + m + 2 ≤ N); only settled cells are read off
an E_∞ page.
"""

from __future__ import annotations

import itertools
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .cyclic_cohomology import E2Algebra
from .exterior_algebra import ExtElement, default_names, render_element
from .fp_linalg import ContainmentError, FpMatrix, Quotient, Subspace, inverse, kernel_basis
from .fusion_actions import KERNEL_ONLY, PageAction
from .ring_presentations import EXTERIOR, POLYNOMIAL, Generator, RingPresentation

Cell = tuple[int, int]

MAX_WINDOW_CELLS = 5000
DEFAULT_BUDGET = 200_000


class WindowError(ValueError):
    """The requested window is unsupported or too small for the operation."""


class InconsistencyError(ValueError):
    """A proposed differential does not square to zero."""


class BudgetExceeded(RuntimeError):
    pass


class InfeasibleError(ValueError):
    """No differential assignment satisfies the constraints."""


def enumeration_budget() -> int:
    raw = os.environ.get("PROCOH_BUDGET")
    return int(raw) if raw else DEFAULT_BUDGET


@dataclass(frozen=True)
class Window:
    n_max: int
    m_max: int
    settled_only: bool = False

    def __post_init__(self):
        if self.n_max < 0 or self.m_max < 0:
            raise WindowError("window bounds must be non-negative")
        if (self.n_max + 1) * (self.m_max + 1) > MAX_WINDOW_CELLS:
            raise WindowError(f"window {self.n_max}x{self.m_max} exceeds {MAX_WINDOW_CELLS} cells")

    def contains(self, c: Cell) -> bool:
        return 0 <= c[0] <= self.n_max and 0 <= c[1] <= self.m_max

    def determinate(self, c: Cell) -> bool:
        n, m = c
        ok = self.contains(c) and (m == 0 or n + m + 1 <= self.n_max)
        return ok and (not self.settled_only or self.settled(c))

    def settled(self, c: Cell) -> bool:
        n, m = c
        return self.contains(c) and (m <= 1 or n + m + 2 <= self.n_max) and (m == 0 or n + m + 1 <= self.n_max)

    def final(self) -> Window:
        return Window(self.n_max, self.m_max, True)

    def cells(self):
        return [(n, m) for n in range(self.n_max + 1) for m in range(self.m_max + 1)]


def default_window(p: int, d: int) -> Window:
    return Window(4 * (p - 1) + 4, d)


# --- names -----------------------------------------------------------------

def render_coefficient(c: int, p: int) -> str:
    """"" for 1, "-" for -1, "1/2" style for ±1/2, balanced integers otherwise."""
    c %= p
    half = pow(2, -1, p)
    if c == 1:
        return ""
    if c == p - 1:
        return "-"
    if c == half:
        return "1/2 "
    if c == p - half:
        return "-1/2 "
    b = c - p if c > p // 2 else c
    return f"{b} "


def render_combination(terms, p: int) -> str:
    text = ""
    for c, name in terms:
        c %= p
        if not c:
            continue
        coeff = render_coefficient(c, p)
        neg = coeff.startswith("-")
        body = coeff.lstrip("-") + name
        if not text:
            text = ("-" if neg else "") + body
        else:
            text += (" - " if neg else " + ") + body
    return text or "0"


@dataclass
class Naming:
    """Scenario renaming table: templates like "u{v}ybar2" with cochain reps.

    ``{v}`` is replaced by the power of the periodicity class appropriate to
    the column (nothing, "v", "v^2", ...).  Even and odd columns have separate
    tables keyed by the row m.
    """

    kernel_names: list[str]
    even: dict[int, list[tuple[str, ExtElement]]] = field(default_factory=dict)
    odd: dict[int, list[tuple[str, ExtElement]]] = field(default_factory=dict)
    v_name: str = "v"
    even_base: str = "{v}"
    odd_base: str = "u{v}"

    def v_power(self, k: int) -> str:
        if k == 0:
            return ""
        return self.v_name if k == 1 else f"{self.v_name}^{k}"

    def label(self, template: str, n: int) -> str:
        return template.replace("{v}", self.v_power(n // 2)) or "1"

    def candidates(self, n: int, m: int) -> list[tuple[str, np.ndarray]]:
        table = self.odd if n % 2 else self.even
        return [(self.label(t, n), el.to_vector(m)) for t, el in table.get(m, [])]

    def fallback(self, n: int, m: int, vec, d: int, p: int) -> str:
        base = self.label(self.odd_base if n % 2 else self.even_base, n)
        body = render_element(ExtElement.from_vector(vec, m, d, p), self.kernel_names)
        if m == 0:
            return base
        return f"{'' if base == '1' else base}[{body}]"


class NamedBasis:
    """A basis of a subquotient with names, and coordinates with respect to it."""

    def __init__(self, quotient: Quotient, names: list[str], vectors: list[np.ndarray]):
        self.quotient = quotient
        self.names = names
        self.vectors = vectors
        self.p = quotient.p
        if names:
            change = np.array([quotient.coordinates(v) for v in vectors], dtype=np.int64)
            self._inv = inverse(FpMatrix(change, self.p)).a
        else:
            self._inv = np.zeros((0, 0), dtype=np.int64)

    def coordinates(self, vec) -> np.ndarray:
        """Coordinates of a cocycle in the named basis."""
        if not self.names:
            return np.zeros(0, dtype=np.int64)
        return (self.quotient.coordinates(vec) @ self._inv) % self.p

    def from_canonical(self, coords) -> np.ndarray:
        if not self.names:
            return np.zeros(0, dtype=np.int64)
        return (np.asarray(coords, dtype=np.int64) @ self._inv) % self.p

    def render(self, vec) -> str:
        coords = self.coordinates(vec)
        return render_combination(zip((int(c) for c in coords), self.names), self.p)


# --- pages -----------------------------------------------------------------

class Page:
    """An E_r page truncated to a window, cells stored as subquotients Z/B."""

    def __init__(self, algebra: E2Algebra, window: Window, Z: dict, B: dict, r: int = 2, naming: Naming | None = None,
                 label: str = "E2", ambient: Page | None = None):
        if window.m_max > algebra.d:
            window = Window(window.n_max, algebra.d)
        self.algebra = algebra
        self.window = window
        self.p = algebra.p
        self.Z = Z
        self.B = B
        self.r = r
        self.naming = naming
        self.label = label
        self.ambient = ambient if ambient is not None else self
        self._quot: dict[Cell, Quotient] = {}
        self._tensors: dict[tuple[Cell, Cell], np.ndarray] = {}
        self._named: dict[Cell, NamedBasis] = {}

    # -- cells

    def cells(self) -> list[Cell]:
        return [c for c in self.window.cells() if self.dim(c) > 0]

    def quotient(self, c: Cell) -> Quotient:
        if c not in self._quot:
            self._quot[c] = Quotient(self.Z[c], self.B[c])
        return self._quot[c]

    def dim(self, c: Cell) -> int:
        if c not in self.Z:
            return 0
        return self.quotient(c).dim

    def basis(self, c: Cell) -> np.ndarray:
        return self.quotient(c).reps

    def coords(self, c: Cell, vec) -> np.ndarray:
        return self.quotient(c).coordinates(vec)

    def lift(self, c: Cell, coords) -> np.ndarray:
        return self.quotient(c).lift(coords)

    def determinate(self, c: Cell) -> bool:
        return self.window.determinate(c)

    def dims(self) -> dict[Cell, int]:
        return {c: self.dim(c) for c in self.window.cells()}

    def contains_class(self, c: Cell, vec) -> bool:
        return c in self.Z and self.Z[c].contains(vec)

    def derived(self, Z: dict, B: dict, r: int, label: str) -> Page:
        return Page(self.algebra, self.window, Z, B, r, self.naming, label, self.ambient)

    # -- products

    def product_vec(self, c1: Cell, x, c2: Cell, y) -> np.ndarray | None:
        """Cochain representative of x·y, or None when the product cell is outside the window."""
        c = (c1[0] + c2[0], c1[1] + c2[1])
        if c[1] > self.algebra.d:
            return np.zeros(0, dtype=np.int64)
        if not self.window.contains(c):
            return None
        return self.algebra.product_rep(c1[0], c1[1], x, c2[0], c2[1], y)

    def product(self, c1: Cell, x, c2: Cell, y) -> np.ndarray:
        """Product of page classes given by coordinates, as coordinates in the product cell."""
        c = (c1[0] + c2[0], c1[1] + c2[1])
        if self.dim(c) == 0:
            return np.zeros(0, dtype=np.int64)
        return np.einsum("i,j,ijk->k", np.asarray(x), np.asarray(y), self.mult_tensor(c1, c2)) % self.p

    def mult_tensor(self, c1: Cell, c2: Cell) -> np.ndarray:
        """T[i, j, k]: coordinate k of (basis_i of c1)·(basis_j of c2)."""
        key = (c1, c2)
        if key not in self._tensors:
            c = (c1[0] + c2[0], c1[1] + c2[1])
            d1, d2, d12 = self.dim(c1), self.dim(c2), self.dim(c)
            t = np.zeros((d1, d2, d12), dtype=np.int64)
            if d1 and d2 and d12:
                for i, x in enumerate(self.basis(c1)):
                    for j, y in enumerate(self.basis(c2)):
                        vec = self.product_vec(c1, x, c2, y)
                        try:
                            t[i, j] = self.coords(c, vec)
                        except ContainmentError as exc:
                            raise InconsistencyError(f"product of cycles in {c1} and {c2} is not a cycle in {c}") from exc
            t.setflags(write=False)
            self._tensors[key] = t
        return self._tensors[key]

    # -- names

    def named_basis(self, c: Cell) -> NamedBasis:
        if c not in self._named:
            self._named[c] = self._build_named(c)
        return self._named[c]

    def _build_named(self, c: Cell) -> NamedBasis:
        q = self.quotient(c)
        n, m = c
        names, vecs = [], []
        span = q.sub
        if self.naming is not None:
            for name, vec in self.naming.candidates(n, m):
                if q.space.contains(vec) and not span.contains(vec):
                    names.append(name)
                    vecs.append(vec)
                    span = span + Subspace([vec], span.ambient_dim, self.p)
        for rep in q.reps:
            if not span.contains(rep):
                names.append(self._fallback_name(c, rep))
                vecs.append(rep)
                span = span + Subspace([rep], span.ambient_dim, self.p)
        return NamedBasis(q, names, vecs)

    def _fallback_name(self, c: Cell, rep) -> str:
        if self.ambient is not self and self.ambient.dim(c):
            return self.ambient.named_basis(c).render(rep)
        if self.naming is not None:
            return self.naming.fallback(c[0], c[1], rep, self.algebra.d, self.p)
        return f"[{render_element(ExtElement.from_vector(rep, c[1], self.algebra.d, self.p))}]@{c}"

    def names(self, c: Cell) -> list[str]:
        return self.named_basis(c).names if self.dim(c) else []

    def render_class(self, c: Cell, vec) -> str:
        """Name of a cocycle's class on this page, via the named basis."""
        return self.named_basis(c).render(vec)

    def render_coords(self, c: Cell, coords) -> str:
        nb = self.named_basis(c)
        return render_combination(zip((int(x) for x in nb.from_canonical(coords)), nb.names), self.p)

    def class_vector(self, name: str) -> tuple[Cell, np.ndarray]:
        """Find a named basis class anywhere on the page."""
        for c in self.cells():
            nb = self.named_basis(c)
            if name in nb.names:
                return c, nb.vectors[nb.names.index(name)]
        raise KeyError(name)

    # -- dumps

    def to_dict(self) -> dict:
        cells = {f"{n},{m}": self.names((n, m)) for (n, m) in self.cells()}
        indet = sorted(f"{n},{m}" for (n, m) in self.cells() if not self.determinate((n, m)))
        return {
            "page": self.label,
            "r": self.r,
            "p": self.p,
            "window": [self.window.n_max, self.window.m_max],
            "cells": cells,
            "indeterminate": indet,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, ensure_ascii=False)

    def to_text(self, n_max: int | None = None) -> str:
        n_max = self.window.n_max if n_max is None else min(n_max, self.window.n_max)
        lines = [f"{self.label} (r={self.r}, p={self.p}, window n<={self.window.n_max}, m<={self.window.m_max})"]
        for m in range(self.window.m_max, -1, -1):
            for n in range(n_max + 1):
                names = self.names((n, m))
                if names:
                    flag = "" if self.determinate((n, m)) else "  [window-indeterminate]"
                    lines.append(f"  ({n},{m}) dim {len(names)}: {', '.join(names)}{flag}")
        return "\n".join(lines) + "\n"


class StablePage(Page):
    """A page cut down to the classes fixed by a list of fusion actions."""

    def __init__(self, *args, actions: tuple = (), **kwargs):
        super().__init__(*args, **kwargs)
        self.actions = tuple(actions)


def assemble_e2(algebra: E2Algebra, window: Window | None = None, naming: Naming | None = None) -> Page:
    window = window or default_window(algebra.p, algebra.d)
    naming = naming or Naming(default_names(algebra.d))
    if window.m_max > algebra.d:
        window = Window(window.n_max, algebra.d)
    Z, B = {}, {}
    for c in window.cells():
        Z[c] = algebra.cocycles(*c)
        B[c] = algebra.coboundaries(*c)
    return Page(algebra, window, Z, B, 2, naming, "E2")


def stable_subspace(algebra: E2Algebra, c: Cell, Z: Subspace, B: Subspace, actions) -> Subspace:
    """Cocycles whose classes are fixed by every applicable action."""
    n, m = c
    blocks = []
    for a in actions:
        if a.domain == KERNEL_ONLY and n != 0:
            continue
        cols = [B.reduce(a.apply(algebra, n, m, z) - z) for z in Z.basis]
        if cols:
            blocks.append(np.array(cols, dtype=np.int64).T)
    if not blocks or Z.dim == 0:
        return Z
    ker = kernel_basis(FpMatrix(np.vstack(blocks), algebra.p))
    vecs = [(k @ Z.basis) % algebra.p for k in ker.basis]
    return Subspace(vecs, Z.ambient_dim, algebra.p) + B


def stable_page(page: Page, actions: list[PageAction]) -> StablePage:
    """Joint equalizer of the actions with the identity, cell by cell."""
    Z = {c: stable_subspace(page.algebra, c, page.Z[c], page.B[c], actions) for c in page.Z}
    return StablePage(page.algebra, page.window, Z, dict(page.B), page.r, page.naming, page.label + "^F", page,
                      actions=tuple(actions))


def check_v_periodicity(page: Page, period: int) -> dict:
    """Multiplication by v^period (class of 1 in column 2·period) between cells, for n ≥ 1.

    Returns per-cell results for all sources whose image column is in the
    window, plus an overall verdict.  Requires at least one full stride.
    """
    p, shift = page.p, 2 * period
    if page.window.n_max < 1 + shift:
        raise WindowError("window too small to test periodicity")
    one = np.ones(1, dtype=np.int64)
    results = {}
    ok = True
    for (n, m) in page.window.cells():
        if n < 1 or n + shift > page.window.n_max:
            continue
        src, dst = (n, m), (n + shift, m)
        ds, dt = page.dim(src), page.dim(dst)
        if ds == 0 and dt == 0:
            continue
        if ds:
            images = [page.coords(dst, page.algebra.product_rep(n, m, x, shift, 0, one)) if dt else np.zeros(0) for x in page.basis(src)]
            injective = dt > 0 and _rank_mod(np.array(images, dtype=np.int64), p) == ds
        else:
            injective = True
        good = injective and ds == dt
        results[f"{n},{m}"] = {"source_dim": ds, "target_dim": dt, "injective": bool(injective), "ok": bool(good)}
        ok = ok and good
    return {"period": shift, "ok": ok, "cells": results}


def _rank_mod(a: np.ndarray, p: int) -> int:
    from .fp_linalg import rank

    if a.size == 0:
        return 0
    return rank(FpMatrix(a, p))


# --- differentials ---------------------------------------------------------

def shift(c: Cell, r: int) -> Cell:
    return (c[0] + r, c[1] - r + 1)


@dataclass
class Differential:
    """d_r as matrices in page coordinates, keyed by source cell."""

    r: int
    p: int
    maps: dict[Cell, np.ndarray] = field(default_factory=dict)

    def is_zero(self) -> bool:
        return all(not (m % self.p).any() for m in self.maps.values())

    def apply(self, page: Page, c: Cell, coords) -> np.ndarray:
        if c not in self.maps:
            return np.zeros(page.dim(shift(c, self.r)), dtype=np.int64)
        return (self.maps[c] @ np.asarray(coords, dtype=np.int64)) % self.p

    def describe(self, page: Page) -> dict[str, str]:
        out = {}
        for c, mat in sorted(self.maps.items()):
            t = shift(c, self.r)
            for j, name in enumerate(page.names(c)):
                coords = page.named_basis(c).vectors[j]
                img = self.apply(page, c, page.coords(c, coords))
                if img.any():
                    out[name] = page.render_coords(t, img)
        return out


def zero_differential(page: Page) -> Differential:
    return Differential(page.r, page.p, {})


def apply_differentials(page: Page, diff: Differential) -> Page:
    """E_{r+1} = ker d_r / im d_r, cell by cell."""
    if diff.r != page.r:
        raise ValueError(f"page E_{page.r} cannot take d_{diff.r}")
    p, r = page.p, page.r
    for c, mat in diff.maps.items():
        t = shift(c, r)
        if mat.shape != (page.dim(t), page.dim(c)):
            raise ValueError(f"d_{r} on {c} has shape {mat.shape}")
        nxt = diff.maps.get(t)
        if nxt is not None and ((nxt @ mat) % p).any():
            raise InconsistencyError(f"d_{r} ∘ d_{r} ≠ 0 starting at cell {c}")
    Z, B = dict(page.Z), dict(page.B)
    for c, mat in diff.maps.items():
        if not (mat % p).any():
            continue
        t = shift(c, r)
        ker = kernel_basis(FpMatrix(mat, p))
        lifts = [page.lift(c, k) for k in ker.basis]
        Z[c] = Subspace(lifts, page.Z[c].ambient_dim, p) + page.B[c] if lifts else page.B[c]
        ims = [page.lift(t, col) for col in (mat % p).T]
        B[t] = B[t] + Subspace(ims, page.B[t].ambient_dim, p)
    label = f"E{r + 1}" + ("^F" if isinstance(page, StablePage) else "")
    out = page.derived(Z, B, r + 1, label)
    if isinstance(page, StablePage):
        out.__class__ = StablePage
        out.actions = page.actions
    return out


@dataclass
class DerivationSpace:
    """Linear space of derivations of bidegree (r, 1-r) on the determinate window."""

    r: int
    p: int
    layout: list[tuple[Cell, Cell, int, int, int]]
    basis: np.ndarray

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    @property
    def n_unknowns(self) -> int:
        return sum(rows * cols for _, _, _, rows, cols in self.layout)

    def instance(self, coeffs) -> Differential:
        coeffs = np.asarray(coeffs, dtype=np.int64)
        vec = (coeffs @ self.basis) % self.p if self.dim else np.zeros(self.n_unknowns, dtype=np.int64)
        maps = {}
        for src, _, off, rows, cols in self.layout:
            maps[src] = vec[off : off + rows * cols].reshape(rows, cols)
        return Differential(self.r, self.p, maps)


def _layout(page: Page, r: int):
    layout, off = [], 0
    index = {}
    for c in page.cells():
        t = shift(c, r)
        if t[1] < 0 or not page.determinate(t):
            continue
        rows, cols = page.dim(t), page.dim(c)
        if rows and cols:
            index[c] = (off, rows, cols)
            layout.append((c, t, off, rows, cols))
            off += rows * cols
    return layout, index, off


def derivation_space(page: Page, r: int | None = None, vanish: list[tuple[Cell, np.ndarray]] = ()) -> DerivationSpace:
    """All d_r satisfying the Leibniz rule on every product landing in the determinate window.

    ``vanish`` lists (cell, coordinates) of classes with d_r forced to zero.
    """
    r = page.r if r is None else r
    p = page.p
    layout, index, total = _layout(page, r)
    if total == 0:
        return DerivationSpace(r, p, layout, np.zeros((0, 0), dtype=np.int64))
    rows: list[np.ndarray] = []

    def unknown(c: Cell, i: int, j: int) -> int:
        off, _, cols = index[c]
        return off + i * cols + j

    cells = page.cells()
    for a, c1 in enumerate(cells):
        if c1 == (0, 0):
            continue
        for c2 in cells[a:]:
            c = (c1[0] + c2[0], c1[1] + c2[1])
            t = shift(c, r)
            if c[1] > page.algebra.d or t[1] < 0 or not page.determinate(t) or page.dim(t) == 0:
                continue
            P = page.mult_tensor(c1, c2)
            t1, t2 = shift(c1, r), shift(c2, r)
            Q1 = page.mult_tensor(t1, c2) if c1 in index else None
            Q2 = page.mult_tensor(c1, t2) if c2 in index else None
            sign = -1 if (c1[0] + c1[1]) % 2 else 1
            d1, d2, dt = page.dim(c1), page.dim(c2), page.dim(t)
            for i in range(d1):
                for j in range(d2):
                    for k in range(dt):
                        row = np.zeros(total, dtype=np.int64)
                        if c in index:
                            for e in range(P.shape[2]):
                                row[unknown(c, k, e)] += P[i, j, e]
                        if Q1 is not None:
                            for b in range(Q1.shape[0]):
                                row[unknown(c1, b, i)] -= Q1[b, j, k]
                        if Q2 is not None:
                            for b in range(Q2.shape[1]):
                                row[unknown(c2, b, j)] -= sign * Q2[i, b, k]
                        row %= p
                        if row.any():
                            rows.append(row)
    for c, coords in vanish:
        if c not in index:
            continue
        off, nrows, cols = index[c]
        for k in range(nrows):
            row = np.zeros(total, dtype=np.int64)
            for j in range(cols):
                row[off + k * cols + j] = coords[j]
            rows.append(row % p)
    if rows:
        sol = kernel_basis(FpMatrix(np.array(rows, dtype=np.int64), p))
        basis = sol.basis
    else:
        basis = np.eye(total, dtype=np.int64)
    return DerivationSpace(r, p, layout, np.array(basis, dtype=np.int64).reshape(-1, total))


def leibniz_violations(page: Page, diff: Differential) -> list[tuple[Cell, Cell]]:
    """Pairs of determinate cells on which d(xy) ≠ d(x)y ± x d(y)."""
    p, r = page.p, diff.r
    bad = []
    cells = page.cells()
    for c1 in cells:
        for c2 in cells:
            c = (c1[0] + c2[0], c1[1] + c2[1])
            t = shift(c, r)
            if c[1] > page.algebra.d or t[1] < 0 or not page.determinate(t) or page.dim(t) == 0:
                continue
            sign = -1 if (c1[0] + c1[1]) % 2 else 1
            for i in range(page.dim(c1)):
                for j in range(page.dim(c2)):
                    x = np.eye(page.dim(c1), dtype=np.int64)[i]
                    y = np.eye(page.dim(c2), dtype=np.int64)[j]
                    lhs = diff.apply(page, c, page.product(c1, x, c2, y)) if page.dim(c) else np.zeros(page.dim(t), dtype=np.int64)
                    dx = diff.apply(page, c1, x)
                    dy = diff.apply(page, c2, y)
                    t1, t2 = shift(c1, r), shift(c2, r)
                    rhs = np.zeros(page.dim(t), dtype=np.int64)
                    if page.dim(t1) and t1[1] >= 0:
                        rhs = rhs + page.product(t1, dx, c2, y)
                    if page.dim(t2) and t2[1] >= 0:
                        rhs = rhs + sign * page.product(c1, x, t2, dy)
                    if ((lhs - rhs) % p).any():
                        bad.append((c1, c2))
    return bad


def square_zero_violations(page: Page, diff: Differential) -> list[Cell]:
    bad = []
    for c, mat in diff.maps.items():
        nxt = diff.maps.get(shift(c, diff.r))
        if nxt is not None and ((nxt @ mat) % page.p).any():
            bad.append(c)
    return bad


# --- generators and presentations ----------------------------------------

@dataclass
class PageGenerator:
    name: str
    cell: Cell
    vector: np.ndarray

    @property
    def total(self) -> int:
        return self.cell[0] + self.cell[1]


def _cell_order(cells):
    return sorted(cells, key=lambda c: (c[0] + c[1], -c[0], c))


def decomposables(page: Page, c: Cell) -> Subspace:
    """Span (in cochain coordinates, modulo B) of products of two positive-degree classes."""
    q = page.quotient(c)
    vecs = []
    for c1 in page.cells():
        if c1 == (0, 0):
            continue
        c2 = (c[0] - c1[0], c[1] - c1[1])
        if c2 == (0, 0) or c2[0] < 0 or c2[1] < 0 or page.dim(c2) == 0:
            continue
        T = page.mult_tensor(c1, c2)
        for i in range(T.shape[0]):
            for j in range(T.shape[1]):
                if T[i, j].any():
                    vecs.append(page.lift(c, T[i, j]))
    return Subspace(vecs, q.space.ambient_dim, page.p) + q.sub


def algebra_generators(page: Page, cells=None) -> list[PageGenerator]:
    """A minimal generating set inside the window, preferring named classes."""
    gens = []
    for c in _cell_order(cells if cells is not None else page.cells()):
        if c == (0, 0) or page.dim(c) == 0:
            continue
        span = decomposables(page, c)
        nb = page.named_basis(c)
        for name, vec in zip(nb.names, nb.vectors):
            if not span.contains(vec):
                gens.append(PageGenerator(name, c, np.asarray(vec)))
                span = span + Subspace([vec], span.ambient_dim, page.p)
    return gens


def _gen_parity(page: Page, g: PageGenerator) -> str:
    if g.total % 2:
        return EXTERIOR
    c2 = (2 * g.cell[0], 2 * g.cell[1])
    if c2[1] > page.algebra.d:
        return EXTERIOR
    if not page.window.contains(c2):
        return POLYNOMIAL
    sq = page.algebra.product_rep(*g.cell, g.vector, *g.cell, g.vector)
    return POLYNOMIAL if page.dim(c2) and page.coords(c2, sq).any() else EXTERIOR


class _Evaluator:
    """Values of generator monomials on a page (cochain vectors)."""

    def __init__(self, page: Page, pres: RingPresentation, gens: list[PageGenerator]):
        self.page, self.pres, self.gens = page, pres, gens
        self.cache: dict = {}

    def value(self, mono) -> tuple[Cell, np.ndarray | None]:
        """Cell and cochain of the ordered product; None if outside the window."""
        if mono in self.cache:
            return self.cache[mono]
        last = max(i for i, e in enumerate(mono) if e)
        rest = list(mono)
        rest[last] -= 1
        rest = tuple(rest)
        g = self.gens[last]
        if not any(rest):
            out = (g.cell, np.asarray(g.vector))
        else:
            c1, x = self.value(rest)
            c = (c1[0] + g.cell[0], c1[1] + g.cell[1])
            if x is None or c[1] > self.page.algebra.d:
                out = (c, None if x is None else np.zeros(0, dtype=np.int64))
            elif not self.page.window.contains(c):
                out = (c, None)
            else:
                out = (c, self.page.algebra.product_rep(c1[0], c1[1], x, g.cell[0], g.cell[1], g.vector))
        self.cache[mono] = out
        return out

    def coords(self, mono) -> np.ndarray | None:
        c, x = self.value(mono)
        if x is None:
            return None
        if x.size == 0 or self.page.dim(c) == 0:
            return np.zeros(self.page.dim(c) if x.size else 0, dtype=np.int64)
        return self.page.coords(c, x)


@dataclass
class PagePresentation:
    ring: RingPresentation
    generators: list[PageGenerator]
    certified: bool
    n_checked: int
    m_checked: int


def presentation_of_page(page: Page, n_max: int | None = None, gens: list[PageGenerator] | None = None) -> PagePresentation:
    """Bigraded presentation: generators plus minimal relations found in the window.

    Relations are searched in columns ≤ n_max (default: the whole window) and
    in rows up to the kernel rank plus the largest generator row, so that
    products pushed beyond the top row are recorded too.  ``certified`` says
    that the window covers two generator strides beyond every relation found.
    """
    d = page.algebra.d
    n_max = page.window.n_max if n_max is None else min(n_max, page.window.n_max)
    gens = gens if gens is not None else algebra_generators(page)
    ring_gens = [Generator(g.name, g.total, _gen_parity(page, g), g.cell) for g in gens]
    pres = RingPresentation(ring_gens, (), page.p, (), page.label)
    ev = _Evaluator(page, pres, gens)
    m_top = d + max((g.cell[1] for g in gens), default=0)
    relations: list[dict] = []
    max_rel_n = 0
    top_degree = n_max + m_top
    by_bideg: dict[Cell, list] = {}
    for k in range(1, top_degree + 1):
        for mono in pres.monomials(k):
            c = pres.bidegree(mono)
            if c[0] <= n_max and c[1] <= m_top:
                by_bideg.setdefault(c, []).append(mono)
    for c in _cell_order(by_bideg):
        monos = by_bideg[c]
        if len(monos) == 0:
            continue
        values = [ev.coords(mo) for mo in monos]
        if any(v is None for v in values):
            continue
        dim_c = page.dim(c) if c[1] <= d else 0
        # kernel of the evaluation map on the span of these monomials
        if dim_c:
            mat = np.array(values, dtype=np.int64).T
        else:
            mat = np.zeros((1, len(monos)), dtype=np.int64)
        ker = kernel_basis(FpMatrix(mat, page.p))
        if ker.dim == 0:
            continue
        index = {mo: i for i, mo in enumerate(monos)}
        implied = []
        for rel in relations:
            rc = pres.bidegree(next(iter(rel)))
            dc = (c[0] - rc[0], c[1] - rc[1])
            if dc[0] < 0 or dc[1] < 0:
                continue
            for mo in pres.monomials(sum(dc)):
                if pres.bidegree(mo) != dc:
                    continue
                prod = pres.multiply({mo: 1}, rel)
                if prod:
                    v = np.zeros(len(monos), dtype=np.int64)
                    for key, coef in prod.items():
                        v[index[key]] = coef
                    implied.append(v % page.p)
        span = Subspace(implied, len(monos), page.p)
        for vec in ker.basis:
            if not span.contains(vec):
                relations.append({monos[i]: int(x) for i, x in enumerate(vec) if x})
                span = span + Subspace([vec], len(monos), page.p)
                max_rel_n = max(max_rel_n, c[0])
    pres.relations = [pres._clean(r) for r in relations]
    gen_n = max((g.cell[0] for g in gens), default=0)
    certified = n_max >= max_rel_n + 2 * max(gen_n, 1)
    return PagePresentation(pres, gens, certified, n_max, m_top)


def presentation_of_e2(page: Page, n_max: int | None = None) -> PagePresentation:
    """Presentation of the E_2 algebra, relations searched in columns ≤ n_max (default 6)."""
    if n_max is None:
        n_max = min(page.window.n_max, 6)
    if page.window.n_max < 4:
        raise WindowError("need at least columns 0..4 for an E_2 presentation")
    return presentation_of_page(page, n_max)


# --- free detection and lifting ------------------------------------------

@dataclass
class FreeCheck:
    free: bool
    generators: list[PageGenerator]
    first_failure: Cell | None
    expected: dict[Cell, int]
    actual: dict[Cell, int]
    ring: RingPresentation | None = None

    def report(self) -> str:
        if self.free:
            return "free on " + ", ".join(f"{g.name} {g.cell}" for g in self.generators)
        c = self.first_failure
        return f"not free: bidegree {c} has dimension {self.actual.get(c, 0)}, a free algebra would have {self.expected.get(c, 0)}"


def free_dims(gens: list[PageGenerator], window: Window, odd_exterior=True) -> dict[Cell, int]:
    """Cell dimensions of the free bigraded graded-commutative algebra on gens."""
    dims = {(0, 0): 1}
    for g in gens:
        new: dict[Cell, int] = {}
        top = 1 if g.total % 2 else None
        for c, d in dims.items():
            k = 0
            while True:
                cc = (c[0] + k * g.cell[0], c[1] + k * g.cell[1])
                if cc[0] > window.n_max or cc[1] > window.m_max or (top is not None and k > top):
                    break
                new[cc] = new.get(cc, 0) + d
                k += 1
                if g.cell == (0, 0):
                    break
        dims = new
    return dims


def detect_free_and_lift(page: Page, exterior_names: str = "Z", polynomial_name: str = "X") -> FreeCheck:
    """Is the page free graded-commutative on its minimal generators (determinate cells)?"""
    cells = [c for c in page.window.cells() if page.determinate(c)]
    gens = algebra_generators(page, [c for c in cells if page.dim(c)])
    expected = free_dims(gens, page.window)
    actual = {c: page.dim(c) for c in cells}
    failure = None
    for c in _cell_order(cells):
        if expected.get(c, 0) != actual[c]:
            failure = c
            break
    check = FreeCheck(failure is None, gens, failure, {c: expected.get(c, 0) for c in cells}, actual)
    if check.free:
        ordered = sorted(gens, key=lambda g: (g.total % 2 == 0, g.total, -g.cell[0]))
        ring_gens, ext_i, pol_i = [], 0, 0
        polys = [g for g in ordered if g.total % 2 == 0]
        for g in ordered:
            if g.total % 2:
                ext_i += 1
                name = f"{exterior_names}{ext_i}"
                ring_gens.append(Generator(name, g.total, EXTERIOR))
            else:
                pol_i += 1
                name = polynomial_name if len(polys) == 1 else f"{polynomial_name}{pol_i}"
                ring_gens.append(Generator(name, g.total, POLYNOMIAL))
        check.ring = RingPresentation(ring_gens, (), page.p, (), "lift")
    return check


# --- finiteness-driven constraint solving ----------------------------------

def finiteness_columns(p: int, n_max: int) -> list[int]:
    """Columns 2p-5, 2p-3, 2p-2, 2p shifted by multiples of 2(p-1), up to n_max."""
    out = set()
    for base in (2 * p - 5, 2 * p - 3, 2 * p - 2, 2 * p):
        n = base
        while n <= n_max:
            out.add(n)
            n += 2 * (p - 1)
    return sorted(out)


def must_vanish_cells(page: Page, columns) -> list[Cell]:
    """Determinate cells in ``columns`` whose outgoing differentials all land in determinate cells."""
    cols = set(columns)
    w = page.window

    return [c for c in w.cells() if c[0] in cols and w.settled(c)]


def _can_still_change(page: Page, c: Cell, r_last: int) -> bool:
    """Could some d_s with s ≥ page.r still hit or leave cell c?"""
    for s in range(page.r, r_last + 1):
        t = shift(c, s)
        if t[1] >= 0 and page.window.contains(t) and page.dim(t):
            return True
        src = (c[0] - s, c[1] + s - 1)
        if src[0] >= 0 and page.window.contains(src) and page.dim(src):
            return True
    return False


@dataclass
class Branch:
    """One complete choice of differentials d_2, ..., d_R and the resulting pages."""

    coefficients: list[tuple[int, ...]]
    differentials: list[Differential]
    pages: list[Page]

    @property
    def final(self) -> Page:
        return self.pages[-1]


@dataclass
class SolverStats:
    nodes: int = 0
    pruned: int = 0
    inconsistent: int = 0


def enumerate_branches(page: Page, r_last: int, vanish_cells: list[Cell], budget: int | None = None,
                       fixed: dict[int, tuple[int, ...]] | None = None, vanish_classes=None,
                       stats: SolverStats | None = None) -> list[Branch]:
    """Depth-first enumeration of all d_r (r = page.r .. r_last) over F_p.

    Each d_r ranges over the derivation space of the current page; d_r ∘ d_r
    must vanish; a branch is discarded as soon as a cell that must vanish is
    nonzero and no later differential can reach it.  ``fixed`` pins the
    coefficients of chosen pages, ``vanish_classes`` maps r to classes whose
    d_r is assumed zero.
    """
    budget = enumeration_budget() if budget is None else budget
    stats = stats if stats is not None else SolverStats()
    fixed = fixed or {}
    vanish_classes = vanish_classes or {}
    p = page.p

    def dead(pg: Page) -> bool:
        return any(pg.dim(c) and not _can_still_change(pg, c, r_last) for c in vanish_cells)

    def rec(pg: Page, coeffs, diffs, pages) -> list[Branch]:
        if pg.r > r_last:
            if any(pg.dim(c) for c in vanish_cells):
                stats.pruned += 1
                return []
            return [Branch(list(coeffs), list(diffs), list(pages))]
        space = derivation_space(pg, pg.r, vanish_classes.get(pg.r, []))
        if pg.r in fixed:
            choices = [tuple(fixed[pg.r])]
            if len(choices[0]) != space.dim:
                raise ValueError(f"d_{pg.r} needs {space.dim} coefficients")
        else:
            if p ** space.dim > budget:
                raise BudgetExceeded(f"d_{pg.r} has a {space.dim}-dimensional solution space; p^{space.dim} exceeds the budget {budget}")
            choices = list(itertools.product(range(p), repeat=space.dim))
        out = []
        for co in choices:
            stats.nodes += 1
            if stats.nodes > budget:
                raise BudgetExceeded(f"enumeration visited more than {budget} nodes")
            diff = space.instance(co)
            try:
                nxt = apply_differentials(pg, diff)
            except InconsistencyError:
                stats.inconsistent += 1
                continue
            if dead(nxt):
                stats.pruned += 1
                continue
            out.extend(rec(nxt, coeffs + [co], diffs + [diff], pages + [nxt]))
        return out

    return rec(page, [], [], [page])


def _linear_form(coeffs, names, p) -> str:
    return render_combination(zip((int(c) for c in coeffs), names), p)


@dataclass
class DifferentialFamily:
    """Solutions of the constraint problem, organised by the d_2 parameters."""

    p: int
    space: DerivationSpace
    param_names: list[str]
    to_space: np.ndarray          # params (row) @ to_space = coefficients in the space basis
    allowed: list[tuple[int, ...]]
    branches: dict[tuple[int, ...], list[Branch]]
    lead: str | None
    generator_values: dict[str, str]
    constraint: str
    forced_later: bool
    stats: SolverStats
    later: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "page": 2,
            "parameters": self.param_names,
            "constraint": self.constraint,
            "d2": self.generator_values,
            "allowed_count": len(self.allowed),
            "later_pages_forced": self.forced_later,
            "later": {str(r): v for r, v in self.later.items()},
        }

    def describe(self) -> str:
        lines = [f"parameters: {', '.join(self.param_names) or '(none)'} in F_{self.p}"]
        for g, val in self.generator_values.items():
            lines.append(f"  d2({g}) = {val}")
        lines.append(f"constraint: {self.constraint}")
        if self.forced_later:
            lines.append("later differentials: unique completion for every allowed parameter")
        for r, info in self.later.items():
            if not info["nonzero"]:
                lines.append(f"  d{r} = 0")
            elif info["zero_allowed"]:
                lines.append(f"  d{r}: {info['choices']} completions, zero allowed")
            else:
                lines.append(f"  d{r}: nonzero, {info['choices']} completions per parameter")
        return "\n".join(lines)


def _excluded_description(allowed: set, names: list[str], p: int) -> str:
    k = len(names)
    everything = set(itertools.product(range(p), repeat=k))
    excluded = everything - allowed
    if not excluded:
        return "none"
    if not allowed:
        return "infeasible"
    # is the excluded set a linear subspace?  Then describe it by its annihilator.
    ex = np.array(sorted(excluded), dtype=np.int64).reshape(-1, k)
    sub = Subspace(ex, k, p)
    if p ** sub.dim == len(excluded) and all(sub.contains(v) for v in ex):
        ann = kernel_basis(FpMatrix(sub.basis.reshape(-1, k), p)) if sub.dim else Subspace.full(k, p)
        forms = [_linear_form(f, names, p) for f in ann.basis]
        if len(forms) == 1:
            return f"{forms[0]} ≠ 0"
        return f"({', '.join(forms)}) ≠ ({', '.join('0' for _ in forms)})"
    return "allowed: " + "; ".join(str(a) for a in sorted(allowed))


GREEK = ["alpha", "beta", "gamma", "delta", "epsilon", "zeta", "eta", "theta"]


def finiteness_constraint_solve(stable: Page, no_p_torsion: bool = True, budget: int | None = None,
                                lead: str | None = None) -> DifferentialFamily:
    """All differential systems compatible with a finite abutment.

    Enumerates d_2, d_3, ... on the stable page, keeping those for which every
    determinate cell in the columns 2p-5, 2p-3, 2p-2, 2p (mod 2(p-1)) dies.
    The d_2 solution space is reparametrised, when possible, by the
    coefficients of d_2 on the ``lead`` generator in its named target basis.
    """
    if not no_p_torsion:
        raise ValueError("finiteness of the abutment is not available: the scenario has p-torsion")
    p = stable.p
    if stable.window.n_max < 2 * p + 2 * (p - 1):
        raise WindowError("window must contain at least two periods of the finiteness columns")
    r_last = stable.window.m_max + 1
    vanish = must_vanish_cells(stable, finiteness_columns(p, stable.window.n_max))
    stats = SolverStats()
    branches = enumerate_branches(stable, r_last, vanish, budget, stats=stats)
    if not branches:
        raise InfeasibleError("no differential system kills the finiteness columns")
    space = derivation_space(stable, 2)
    gens = algebra_generators(stable)
    allowed_vecs = np.array(sorted({tuple(b.coefficients[0]) for b in branches}), dtype=np.int64).reshape(-1, space.dim)
    hull = Subspace(allowed_vecs, space.dim, p) if space.dim else None
    names = [f"c{i + 1}" for i in range(space.dim)]
    to_space = np.eye(space.dim, dtype=np.int64)
    lead_name = None
    for g in gens:
        if lead is not None and g.name != lead:
            continue
        t = shift(g.cell, 2)
        if t[1] < 0 or not stable.dim(t) or hull is None or hull.dim == 0:
            continue
        x = stable.coords(g.cell, g.vector)
        nb = stable.named_basis(t)
        # lead coordinates of each hull basis vector
        phi = np.array([nb.from_canonical(space.instance(h).apply(stable, g.cell, x)) for h in hull.basis],
                       dtype=np.int64).reshape(hull.dim, -1)
        if phi.shape[1] == hull.dim and _rank_mod(phi, p) == hull.dim:
            to_space = (inverse(FpMatrix(phi, p)).a @ hull.basis) % p
            names = GREEK[: hull.dim]
            lead_name = g.name
            break
    k = to_space.shape[0]
    row_space = Subspace(to_space, space.dim, p) if k else None
    if k:
        change = inverse(FpMatrix(np.array([row_space.coordinates(r) for r in to_space], dtype=np.int64).reshape(k, k), p)).a
    grouped: dict[tuple[int, ...], list[Branch]] = {}
    for b in branches:
        co = np.array(b.coefficients[0], dtype=np.int64)
        params = tuple(int(x) for x in (row_space.coordinates(co) @ change) % p) if k else ()
        grouped.setdefault(params, []).append(b)
    allowed = sorted(grouped)
    values = {}
    for g in gens:
        t = shift(g.cell, 2)
        if t[1] < 0 or not stable.dim(t):
            values[g.name] = "0"
            continue
        x = stable.coords(g.cell, g.vector)
        nb = stable.named_basis(t)
        per_param = []
        for e in np.eye(k, dtype=np.int64):
            co = (e @ to_space) % p
            per_param.append(nb.from_canonical(space.instance(co).apply(stable, g.cell, x)))
        mat = np.array(per_param, dtype=np.int64).reshape(k, -1)
        terms = []
        for j, tname in enumerate(nb.names):
            form = _linear_form(mat[:, j], names, p) if k else "0"
            if form != "0":
                terms.append(f"{tname}" if form == "" else (f"({form}) {tname}" if (" + " in form or " - " in form[1:]) else f"{form} {tname}"))
        values[g.name] = " + ".join(terms) if terms else "0"
    forced = all(len(v) == 1 for v in grouped.values())
    later = {}
    for r in range(3, r_last + 1):
        i = r - 2
        counts, zero_ok, nonzero = [], False, False
        for bs in grouped.values():
            seen = set()
            for b in bs:
                d = b.differentials[i]
                key = tuple(sorted((c, m.tobytes()) for c, m in d.maps.items()))
                seen.add(key)
                if d.is_zero():
                    zero_ok = True
                else:
                    nonzero = True
            counts.append(len(seen))
        later[r] = {"choices": max(counts), "zero_allowed": zero_ok, "nonzero": nonzero}
    constraint = _excluded_description(set(allowed), names, p)
    return DifferentialFamily(p, space, names, to_space, allowed, grouped, lead_name, values, constraint, forced, stats, later)


@dataclass
class InfinityReport:
    page: Page
    samples: list[tuple[int, ...]]
    independent: bool
    dims: dict[tuple[int, ...], dict[Cell, int]]


def e_infinity(stable: Page, family: DifferentialFamily | None = None, samples=None, collapse: bool = False) -> InfinityReport:
    """Run the family's differentials to the end of the window for several samples."""
    if family is None or collapse:
        final = stable.derived(stable.Z, stable.B, stable.window.m_max + 2, "Einf" + ("^F" if isinstance(stable, StablePage) else ""))
        final.window = final.window.final()
        return InfinityReport(final, [()], True, {(): {c: final.dim(c) for c in final.cells() if final.determinate(c)}})
    if not family.allowed:
        raise InfeasibleError("empty family")
    chosen = list(samples) if samples is not None else family.allowed[:3]
    dims = {}
    pages = {}
    for s in chosen:
        s = tuple(int(x) % family.p for x in s)
        if s not in family.branches:
            raise ValueError(f"sample {s} violates the constraint {family.constraint}")
        final = family.branches[s][0].final
        final.window = final.window.final()
        pages[s] = final
        dims[s] = {c: final.dim(c) for c in final.window.cells() if final.determinate(c) and final.dim(c)}
    ref = next(iter(dims.values()))
    independent = all(v == ref for v in dims.values())
    page = pages[chosen and tuple(int(x) % family.p for x in chosen[0])]
    page.label = "Einf^F"
    return InfinityReport(page, list(pages), independent, dims)
