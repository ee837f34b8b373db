"""Dense exact linear algebra over the prime field F_p.

Matrices are thin wrappers around read-only ``int64`` numpy arrays that carry
their modulus.  Subspaces are stored in reduced row echelon form, which makes
them canonical: two equal subspaces always have bit-identical bases.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


class ModulusMismatch(ValueError):
    """Raised when objects over different prime fields are combined."""


class DimensionMismatch(ValueError):
    pass


class ContainmentError(ValueError):
    pass


def is_prime(n: int) -> bool:
    if n < 2:
        return False
    i = 2
    while i * i <= n:
        if n % i == 0:
            return False
        i += 1
    return True


def check_odd_prime(p: int) -> int:
    p = int(p)
    if p == 2 or not is_prime(p):
        raise ValueError(f"modulus must be an odd prime, got {p}")
    return p


def _same_modulus(a: int, b: int) -> int:
    if a != b:
        raise ModulusMismatch(f"F_{a} and F_{b} objects cannot be combined")
    return a


@dataclass(frozen=True)
class FpScalar:
    """An element of F_p."""

    value: int
    p: int

    def __post_init__(self):
        object.__setattr__(self, "value", int(self.value) % self.p)

    def _coerce(self, other) -> int:
        if isinstance(other, FpScalar):
            _same_modulus(self.p, other.p)
            return other.value
        return int(other)

    def __add__(self, other):
        return FpScalar(self.value + self._coerce(other), self.p)

    __radd__ = __add__

    def __sub__(self, other):
        return FpScalar(self.value - self._coerce(other), self.p)

    def __rsub__(self, other):
        return FpScalar(self._coerce(other) - self.value, self.p)

    def __mul__(self, other):
        return FpScalar(self.value * self._coerce(other), self.p)

    __rmul__ = __mul__

    def __neg__(self):
        return FpScalar(-self.value, self.p)

    def __pow__(self, k: int):
        if k < 0:
            return self.inverse() ** (-k)
        return FpScalar(pow(self.value, k, self.p), self.p)

    def inverse(self) -> FpScalar:
        if self.value == 0:
            raise ZeroDivisionError(f"0 has no inverse in F_{self.p}")
        return FpScalar(pow(self.value, -1, self.p), self.p)

    def __truediv__(self, other):
        o = other if isinstance(other, FpScalar) else FpScalar(other, self.p)
        return self * o.inverse()

    def __eq__(self, other):
        if isinstance(other, FpScalar):
            return self.p == other.p and self.value == other.value
        if isinstance(other, int):
            return self.value == other % self.p
        return NotImplemented

    def __hash__(self):
        return hash((self.value, self.p))

    def __int__(self):
        return self.value

    def __repr__(self):
        return f"{self.value} (mod {self.p})"


class FpMatrix:
    """An immutable dense matrix over F_p."""

    __slots__ = ("a", "p")

    def __init__(self, entries, p: int, shape: tuple[int, int] | None = None):
        arr = np.array(entries, dtype=np.int64)
        if shape is not None:
            arr = arr.reshape(shape)
        if arr.ndim == 1 and shape is None:
            arr = arr.reshape(1, -1) if arr.size else arr.reshape(0, 0)
        if arr.ndim != 2:
            raise DimensionMismatch(f"expected a 2-d array, got shape {arr.shape}")
        arr = arr % p
        arr.setflags(write=False)
        self.a = arr
        self.p = int(p)

    @classmethod
    def _wrap(cls, arr: np.ndarray, p: int) -> FpMatrix:
        m = cls.__new__(cls)
        arr = np.asarray(arr, dtype=np.int64) % p
        arr.setflags(write=False)
        m.a = arr
        m.p = p
        return m

    @classmethod
    def identity(cls, n: int, p: int) -> FpMatrix:
        return cls._wrap(np.eye(n, dtype=np.int64), p)

    @classmethod
    def zeros(cls, rows: int, cols: int, p: int) -> FpMatrix:
        return cls._wrap(np.zeros((rows, cols), dtype=np.int64), p)

    @property
    def rows(self) -> int:
        return self.a.shape[0]

    @property
    def cols(self) -> int:
        return self.a.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.a.shape

    @property
    def T(self) -> FpMatrix:
        return FpMatrix._wrap(self.a.T, self.p)

    def _other(self, other) -> np.ndarray:
        if isinstance(other, FpMatrix):
            _same_modulus(self.p, other.p)
            return other.a
        raise TypeError(f"cannot combine FpMatrix with {type(other).__name__}")

    def __add__(self, other):
        b = self._other(other)
        if b.shape != self.a.shape:
            raise DimensionMismatch(f"{self.shape} + {b.shape}")
        return FpMatrix._wrap(self.a + b, self.p)

    def __sub__(self, other):
        b = self._other(other)
        if b.shape != self.a.shape:
            raise DimensionMismatch(f"{self.shape} - {b.shape}")
        return FpMatrix._wrap(self.a - b, self.p)

    def __neg__(self):
        return FpMatrix._wrap(-self.a, self.p)

    def __mul__(self, scalar):
        if isinstance(scalar, FpScalar):
            _same_modulus(self.p, scalar.p)
            scalar = scalar.value
        return FpMatrix._wrap(self.a * int(scalar), self.p)

    __rmul__ = __mul__

    def __matmul__(self, other):
        if isinstance(other, np.ndarray):
            return (self.a @ (other % self.p)) % self.p
        b = self._other(other)
        if self.cols != b.shape[0]:
            raise DimensionMismatch(f"{self.shape} @ {b.shape}")
        return FpMatrix._wrap(self.a @ b, self.p)

    def __pow__(self, k: int) -> FpMatrix:
        if self.rows != self.cols:
            raise DimensionMismatch("power of a non-square matrix")
        if k < 0:
            return inverse(self) ** (-k)
        result = FpMatrix.identity(self.rows, self.p)
        base = self
        while k:
            if k & 1:
                result = result @ base
            base = base @ base
            k >>= 1
        return result

    def __eq__(self, other):
        if not isinstance(other, FpMatrix):
            return NotImplemented
        return self.p == other.p and self.a.shape == other.a.shape and bool(np.array_equal(self.a, other.a))

    def __hash__(self):
        return hash((self.p, self.a.shape, self.a.tobytes()))

    def tolist(self) -> list[list[int]]:
        return self.a.tolist()

    def column(self, j: int) -> np.ndarray:
        return self.a[:, j].copy()

    def is_identity(self) -> bool:
        return self.rows == self.cols and bool(np.array_equal(self.a, np.eye(self.rows, dtype=np.int64)))

    def is_zero(self) -> bool:
        return not self.a.any()

    def __repr__(self):
        return f"FpMatrix({self.a.tolist()}, p={self.p})"


def _rref_array(a: np.ndarray, p: int) -> tuple[np.ndarray, list[int]]:
    a = np.array(a, dtype=np.int64) % p
    nrows, ncols = a.shape
    pivots: list[int] = []
    r = 0
    for c in range(ncols):
        if r == nrows:
            break
        nz = np.flatnonzero(a[r:, c])
        if nz.size == 0:
            continue
        i = r + int(nz[0])
        if i != r:
            a[[r, i]] = a[[i, r]]
        inv = pow(int(a[r, c]), -1, p)
        a[r] = (a[r] * inv) % p
        col = a[:, c].copy()
        col[r] = 0
        hit = np.flatnonzero(col)
        if hit.size:
            a[hit] = (a[hit] - np.outer(col[hit], a[r])) % p
        pivots.append(c)
        r += 1
    return a, pivots


def rref(m: FpMatrix) -> tuple[FpMatrix, list[int], int]:
    """Reduced row echelon form, pivot columns and rank."""
    a, pivots = _rref_array(m.a, m.p)
    return FpMatrix._wrap(a, m.p), pivots, len(pivots)


def rank(m: FpMatrix) -> int:
    return len(_rref_array(m.a, m.p)[1])


def inverse(m: FpMatrix) -> FpMatrix:
    n = m.rows
    if n != m.cols:
        raise DimensionMismatch("inverse of a non-square matrix")
    aug = np.hstack([m.a, np.eye(n, dtype=np.int64)])
    r, pivots = _rref_array(aug, m.p)
    if pivots[:n] != list(range(n)):
        raise ZeroDivisionError("matrix is singular")
    return FpMatrix._wrap(r[:, n:], m.p)


class Subspace:
    """A subspace of F_p^n held as its canonical (reduced echelon) basis."""

    __slots__ = ("ambient_dim", "p", "basis", "pivots")

    def __init__(self, vectors, ambient_dim: int, p: int):
        arr = np.array(vectors, dtype=np.int64).reshape(-1, ambient_dim) if len(vectors) else np.zeros((0, ambient_dim), dtype=np.int64)
        r, pivots = _rref_array(arr, p)
        basis = r[: len(pivots)]
        basis.setflags(write=False)
        self.ambient_dim = int(ambient_dim)
        self.p = int(p)
        self.basis = basis
        self.pivots = tuple(pivots)

    @classmethod
    def zero(cls, n: int, p: int) -> Subspace:
        return cls([], n, p)

    @classmethod
    def full(cls, n: int, p: int) -> Subspace:
        return cls(np.eye(n, dtype=np.int64), n, p)

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    def vectors(self) -> list[np.ndarray]:
        return [row.copy() for row in self.basis]

    def reduce(self, v) -> np.ndarray:
        """Canonical representative of ``v`` modulo this subspace."""
        v = np.array(v, dtype=np.int64) % self.p
        for row, c in zip(self.basis, self.pivots):
            if v[c]:
                v = (v - v[c] * row) % self.p
        return v

    def contains(self, v) -> bool:
        return not self.reduce(v).any()

    def coordinates(self, v) -> np.ndarray:
        """Coordinates of ``v`` in the echelon basis; ``v`` must lie in the span."""
        v = np.array(v, dtype=np.int64) % self.p
        coords = v[list(self.pivots)]
        if ((coords @ self.basis - v) % self.p).any():
            raise ContainmentError("vector is not in the subspace")
        return coords

    def is_subspace_of(self, other: Subspace) -> bool:
        _same_modulus(self.p, other.p)
        return all(other.contains(v) for v in self.basis)

    def __add__(self, other: Subspace) -> Subspace:
        _same_modulus(self.p, other.p)
        if self.ambient_dim != other.ambient_dim:
            raise DimensionMismatch("ambient dimensions differ")
        return Subspace(np.vstack([self.basis, other.basis]), self.ambient_dim, self.p)

    def __eq__(self, other):
        if not isinstance(other, Subspace):
            return NotImplemented
        return (self.p, self.ambient_dim, self.pivots) == (other.p, other.ambient_dim, other.pivots) and bool(
            np.array_equal(self.basis, other.basis)
        )

    def __hash__(self):
        return hash((self.p, self.ambient_dim, self.basis.tobytes()))

    def __repr__(self):
        return f"Subspace(dim={self.dim}, ambient={self.ambient_dim}, p={self.p}, basis={self.basis.tolist()})"


def kernel_basis(m: FpMatrix) -> Subspace:
    """The null space {v : m v = 0}."""
    r, pivots = _rref_array(m.a, m.p)
    n = m.cols
    free = [c for c in range(n) if c not in set(pivots)]
    vecs = []
    for f in free:
        v = np.zeros(n, dtype=np.int64)
        v[f] = 1
        for i, c in enumerate(pivots):
            v[c] = -r[i, f]
        vecs.append(v % m.p)
    return Subspace(vecs, n, m.p)


def image(m: FpMatrix) -> Subspace:
    """Column space of ``m``."""
    return Subspace(m.a.T, m.rows, m.p)


def equalizer(maps: Sequence[tuple[FpMatrix, FpMatrix]], dim: int | None = None, p: int | None = None) -> Subspace:
    """The subspace on which every pair of maps agrees.

    With an empty list the whole space is returned, in which case ``dim`` and
    ``p`` must be supplied.
    """
    if not maps:
        if dim is None or p is None:
            raise DimensionMismatch("dim and p are required for an empty map list")
        return Subspace.full(dim, p)
    a0 = maps[0][0]
    n, mod = a0.cols, a0.p
    if dim is not None and dim != n:
        raise DimensionMismatch(f"maps act on dimension {n}, expected {dim}")
    blocks = []
    for a, b in maps:
        _same_modulus(mod, a.p)
        _same_modulus(mod, b.p)
        if a.cols != n or b.cols != n or a.rows != b.rows:
            raise DimensionMismatch(f"incompatible pair {a.shape}, {b.shape}")
        blocks.append((a - b).a)
    return kernel_basis(FpMatrix._wrap(np.vstack(blocks), mod))


def fixed_space(ops: Iterable[FpMatrix], dim: int, p: int) -> Subspace:
    ops = list(ops)
    return equalizer([(op, FpMatrix.identity(dim, p)) for op in ops], dim, p)


def intersect(subspaces: Sequence[Subspace]) -> Subspace:
    if not subspaces:
        raise DimensionMismatch("intersection of an empty family")
    n, p = subspaces[0].ambient_dim, subspaces[0].p
    for s in subspaces:
        _same_modulus(p, s.p)
        if s.ambient_dim != n:
            raise DimensionMismatch("ambient dimensions differ")
    result = subspaces[0]
    for s in subspaces[1:]:
        # v in result ∩ s  <=>  v = x·B_result and v is annihilated by s's complement test
        if result.dim == 0:
            break
        comb = np.vstack([result.basis, s.basis]).T  # n × (k1 + k2)
        ker = kernel_basis(FpMatrix._wrap(comb, p))
        k1 = result.dim
        vecs = [(c[:k1] @ result.basis) % p for c in ker.basis]
        result = Subspace(vecs, n, p)
    return result


def quotient_reps(space: Subspace, sub: Subspace) -> list[np.ndarray]:
    """Canonical coset representatives completing ``sub`` to ``space``."""
    _same_modulus(space.p, sub.p)
    if not sub.is_subspace_of(space):
        raise ContainmentError("sub is not contained in space")
    reduced = [sub.reduce(v) for v in space.basis]
    return Subspace(reduced, space.ambient_dim, space.p).vectors() if reduced else []


class Quotient:
    """The quotient space ``space / sub`` with a canonical basis of coset representatives."""

    def __init__(self, space: Subspace, sub: Subspace):
        self.space = space
        self.sub = sub
        self.p = space.p
        self.reps_space = Subspace(quotient_reps(space, sub), space.ambient_dim, space.p)

    @property
    def dim(self) -> int:
        return self.reps_space.dim

    @property
    def reps(self) -> np.ndarray:
        return self.reps_space.basis

    def coordinates(self, v) -> np.ndarray:
        """Coordinates of the coset of ``v`` (which must lie in ``space``)."""
        w = self.sub.reduce(v)
        return self.reps_space.coordinates(w)

    def lift(self, coords) -> np.ndarray:
        coords = np.asarray(coords, dtype=np.int64)
        if self.dim == 0:
            return np.zeros(self.space.ambient_dim, dtype=np.int64)
        return (coords @ self.reps) % self.p
