"""Square matrices over Z/p^m standing in for elements of GL_n(Z_p).

The congruence kernels K_i = {x ≡ 1 mod p^i} have abelian layers
K_i/K_{i+1} ≅ M_n(F_p) via 1 + p^i a ↦ a mod p, and more generally
K_i/K_j ≅ (Z/p^{j-i})^{n²} as long as j ≤ 2i.  Conjugation actions on these
layers are computed by honest conjugation at the stored precision.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fp_linalg import DimensionMismatch, FpMatrix, check_odd_prime


class PrecisionError(ValueError):
    """The stored p-adic precision is too small for the requested layer."""


class NotInvertible(ValueError):
    pass


class PrecisionMatrix:
    """An n×n matrix with entries in Z/p^m."""

    __slots__ = ("a", "p", "m")

    def __init__(self, entries, p: int, m: int):
        check_odd_prime(p)
        if m < 1:
            raise PrecisionError("precision exponent must be at least 1")
        a = np.array(entries, dtype=object)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DimensionMismatch(f"expected a square matrix, got shape {a.shape}")
        mod = p**m
        self.a = np.vectorize(lambda x: int(x) % mod, otypes=[object])(a) if a.size else a
        self.p = p
        self.m = m

    @property
    def n(self) -> int:
        return self.a.shape[0]

    @property
    def modulus(self) -> int:
        return self.p**self.m

    @classmethod
    def identity(cls, n: int, p: int, m: int) -> PrecisionMatrix:
        return cls(np.eye(n, dtype=np.int64), p, m)

    def _check(self, other: PrecisionMatrix):
        if (self.p, self.m, self.n) != (other.p, other.m, other.n):
            raise DimensionMismatch("matrices with different prime, precision or size")

    def __matmul__(self, other: PrecisionMatrix) -> PrecisionMatrix:
        self._check(other)
        return PrecisionMatrix(self.a.dot(other.a), self.p, self.m)

    def __add__(self, other: PrecisionMatrix) -> PrecisionMatrix:
        self._check(other)
        return PrecisionMatrix(self.a + other.a, self.p, self.m)

    def __sub__(self, other: PrecisionMatrix) -> PrecisionMatrix:
        self._check(other)
        return PrecisionMatrix(self.a - other.a, self.p, self.m)

    def __pow__(self, k: int) -> PrecisionMatrix:
        if k < 0:
            return self.inverse() ** (-k)
        out = PrecisionMatrix.identity(self.n, self.p, self.m)
        base = self
        while k:
            if k & 1:
                out = out @ base
            base = base @ base
            k >>= 1
        return out

    def __eq__(self, other):
        if not isinstance(other, PrecisionMatrix):
            return NotImplemented
        return (self.p, self.m) == (other.p, other.m) and np.array_equal(self.a, other.a)

    def __hash__(self):
        return hash((self.p, self.m, tuple(int(x) for x in self.a.flat)))

    def __repr__(self):
        return f"PrecisionMatrix({self.tolist()}, p={self.p}, m={self.m})"

    def tolist(self) -> list[list[int]]:
        return [[int(x) for x in row] for row in self.a]

    def with_precision(self, m: int) -> PrecisionMatrix:
        """Reduce to a lower precision, or reinterpret residues at a higher one."""
        return PrecisionMatrix(self.a, self.p, m)

    def mod_p(self) -> FpMatrix:
        return FpMatrix(np.array(self.tolist(), dtype=np.int64).reshape(self.n, self.n), self.p)

    def is_invertible(self) -> bool:
        from .fp_linalg import rank

        return rank(self.mod_p()) == self.n

    def congruence_level(self) -> int:
        """Largest i ≤ m with self ≡ 1 mod p^i (0 if not ≡ 1 mod p)."""
        diff = self - PrecisionMatrix.identity(self.n, self.p, self.m)
        level = 0
        while level < self.m and all(int(x) % self.p ** (level + 1) == 0 for x in diff.a.flat):
            level += 1
        return level

    def inverse(self) -> PrecisionMatrix:
        """Gauss-Jordan over Z/p^m, pivoting on units."""
        n, mod = self.n, self.modulus
        aug = [[int(x) for x in row] + [int(i == j) for j in range(n)] for i, row in enumerate(self.a)]
        for col in range(n):
            pivot = next((r for r in range(col, n) if aug[r][col] % self.p), None)
            if pivot is None:
                raise NotInvertible("determinant is not a unit mod p")
            aug[col], aug[pivot] = aug[pivot], aug[col]
            inv = pow(aug[col][col], -1, mod)
            aug[col] = [(x * inv) % mod for x in aug[col]]
            for r in range(n):
                if r != col and aug[r][col]:
                    f = aug[r][col]
                    aug[r] = [(x - f * y) % mod for x, y in zip(aug[r], aug[col])]
        return PrecisionMatrix([row[n:] for row in aug], self.p, self.m)


@dataclass(frozen=True)
class LayerSpace:
    """K_level/K_{level+1} ≅ M_n(F_p), basis of matrix units E_11, E_12, ..., E_nn."""

    n: int
    level: int
    p: int

    def __post_init__(self):
        if self.level < 1:
            raise ValueError("layers start at level 1")
        check_odd_prime(self.p)

    @property
    def dim(self) -> int:
        return self.n * self.n

    def basis_labels(self) -> list[tuple[int, int]]:
        return [(i + 1, j + 1) for i in range(self.n) for j in range(self.n)]


def _require_unit(g: PrecisionMatrix):
    if not g.is_invertible():
        raise NotInvertible("conjugating matrix is not invertible mod p")


def _conjugation_on_layers(g: PrecisionMatrix, lo: int, hi: int) -> np.ndarray:
    """Integer matrix of a ↦ g a g⁻¹ on (1 + p^lo a) K_hi, coordinates mod p^(hi-lo)."""
    _require_unit(g)
    if hi > g.m:
        raise PrecisionError(f"need precision ≥ {hi}, matrix carries {g.m}")
    if not 1 <= lo < hi <= 2 * lo:
        raise ValueError(f"K_{lo}/K_{hi} is not an abelian layer quotient")
    n, p = g.n, g.p
    ginv = g.inverse()
    one = PrecisionMatrix.identity(n, p, g.m)
    width = p ** (hi - lo)
    out = np.zeros((n * n, n * n), dtype=np.int64)
    for col, (i, j) in enumerate((i, j) for i in range(n) for j in range(n)):
        unit = np.zeros((n, n), dtype=object)
        unit[i, j] = p**lo
        x = one + PrecisionMatrix(unit, p, g.m)
        y = (g @ x @ ginv) - one
        for row, (k, l) in enumerate((k, l) for k in range(n) for l in range(n)):
            entry = int(y.a[k, l])
            assert entry % p**lo == 0
            out[row, col] = (entry // p**lo) % width
    return out


def adjoint_on_layer(g: PrecisionMatrix, layer: LayerSpace) -> FpMatrix:
    """The F_p-linear map a ↦ g a g⁻¹ on K_i/K_{i+1}, in the matrix-unit basis."""
    if (g.n, g.p) != (layer.n, layer.p):
        raise DimensionMismatch("matrix and layer disagree on size or prime")
    if g.m < layer.level + 1:
        raise PrecisionError(f"layer {layer.level} needs precision ≥ {layer.level + 1}")
    arr = _conjugation_on_layers(g, layer.level, layer.level + 1)
    return FpMatrix(arr, g.p)


def layer_quotient_action(g: PrecisionMatrix, from_level: int, to_level: int) -> tuple[int, np.ndarray]:
    """Conjugation by g on K_from/K_to ≅ (Z/p^(to-from))^(n²).

    Returns the modulus p^(to-from) and the integer action matrix in the
    matrix-unit basis (columns are images of basis vectors).
    """
    arr = _conjugation_on_layers(g, from_level, to_level)
    return g.p ** (to_level - from_level), arr


def permutation_check(action: np.ndarray, modulus: int, vectors: list, fixed: list) -> dict:
    """Describe how ``action`` moves the given vectors (mod ``modulus``).

    Returns the index map i ↦ j with action·v_i = v_j, whether it is a single
    cycle, and whether every vector in ``fixed`` is fixed.
    """
    vs = [np.asarray(v, dtype=np.int64) % modulus for v in vectors]
    image = {}
    for i, v in enumerate(vs):
        w = (action @ v) % modulus
        image[i] = next((j for j, u in enumerate(vs) if np.array_equal(u, w)), None)
    cyclic = None not in image.values() and len(vs) > 0
    if cyclic:
        seen, i = set(), 0
        while i not in seen:
            seen.add(i)
            i = image[i]
        cyclic = len(seen) == len(vs) and len(vs) > 1
    fixes = all(np.array_equal((action @ np.asarray(f)) % modulus, np.asarray(f) % modulus) for f in fixed)
    return {"image": image, "cyclic": cyclic, "fixes": fixes}


@dataclass
class ExtensionDatum:
    """1 → K → S → Z/p → 1 with K uniform and the quotient generated by h.

    Two kinds are supported: ``congruence`` (K = K_1 in GL_n(Z_p) and h a
    matrix of order p mod p), and ``abelian`` (the H^1 action of h is given
    directly, as for kernels that are not congruence subgroups).
    """

    p: int
    kind: str
    n: int = 0
    h: PrecisionMatrix | None = None
    h1_matrix: FpMatrix | None = None
    level: int = 1

    def __post_init__(self):
        check_odd_prime(self.p)
        if self.kind == "congruence":
            if self.h is None:
                raise ValueError("congruence extension needs the matrix h")
            self.n = self.h.n
            hp = self.h.with_precision(1)
            if hp.congruence_level() >= 1:
                raise ValueError("h must have order p in S/K_1, but h ≡ 1 mod p")
            if (hp ** self.p).congruence_level() < 1:
                raise ValueError("h^p is not in K_1")
        elif self.kind == "abelian":
            if self.h1_matrix is None:
                raise ValueError("abelian extension needs an explicit H^1 action")
            if self.h1_matrix.p != self.p:
                raise ValueError("H^1 action over the wrong field")
            if not (self.h1_matrix ** self.p).is_identity():
                raise ValueError("H^1 action does not have order dividing p")
        else:
            raise ValueError(f"unknown extension kind {self.kind!r}")

    @property
    def kernel_rank(self) -> int:
        if self.kind == "congruence":
            return self.n * self.n
        return self.h1_matrix.rows

    def layer(self) -> LayerSpace:
        return LayerSpace(self.n, self.level, self.p)
