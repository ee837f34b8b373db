"""Fusion generators and the stability conditions they impose on E_2.

Convention.  A generator g acts on cohomology by pullback along the
conjugation x ↦ g⁻¹xg.  On H^1 of a congruence kernel this is the
contragredient of the adjoint action a ↦ gag⁻¹, and on the quotient Z/p it
sends the base classes u, v to s·u, s·v where g⁻¹hg ≡ h^s mod K_1.  With this
choice the action of h itself on H^1(K_1) is the familiar
y11 ↦ y11 - y21, ..., y22 ↦ y21 + y22, and diag(t, 1) scales u by t⁻¹.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cyclic_cohomology import E2Algebra, apply_compatible_pair
from .exterior_algebra import AlgebraEndomorphism
from .fp_linalg import FpMatrix, FpScalar, Subspace, fixed_space, intersect, inverse
from .padic_groups import ExtensionDatum, PrecisionMatrix, adjoint_on_layer

WHOLE_GROUP = "whole_group"
KERNEL_ONLY = "kernel_only"


class ConventionError(ValueError):
    """The computed actions do not reproduce the anchor equations."""


class NormalizerError(ValueError):
    """A whole-group generator does not normalize the extension."""


class DomainError(ValueError):
    """A kernel-only generator was asked to act off row 0."""


@dataclass(frozen=True)
class FusionGenerator:
    name: str
    domain: str
    matrix: PrecisionMatrix | None = None
    h1_matrix: FpMatrix | None = None
    scalar: int | None = None

    def __post_init__(self):
        if self.domain not in (WHOLE_GROUP, KERNEL_ONLY):
            raise ValueError(f"unknown domain {self.domain!r}")
        if self.matrix is None and self.h1_matrix is None:
            raise ValueError(f"generator {self.name} needs a matrix or an explicit H^1 action")
        if self.domain == KERNEL_ONLY and self.scalar is not None:
            raise ValueError("kernel-only generators carry no quotient scalar")


def h1_action(g: FusionGenerator, ext: ExtensionDatum) -> FpMatrix:
    """Matrix of g on H^1 of the kernel (columns = images of the dual basis)."""
    if g.h1_matrix is not None:
        if g.h1_matrix.shape != (ext.kernel_rank, ext.kernel_rank):
            raise ValueError(f"{g.name}: H^1 action has the wrong size")
        return g.h1_matrix
    if ext.kind != "congruence":
        raise ValueError(f"{g.name}: abelian kernels need an explicit H^1 action")
    adj = adjoint_on_layer(g.matrix, ext.layer())
    return inverse(adj).T


def quotient_scalar(g: FusionGenerator, ext: ExtensionDatum) -> int:
    """The factor s by which g scales u, i.e. g⁻¹hg ≡ h^s modulo K_1."""
    if g.domain != WHOLE_GROUP:
        raise DomainError(f"{g.name} acts on the kernel only")
    if g.scalar is not None:
        return g.scalar % ext.p
    if ext.kind != "congruence":
        raise ValueError(f"{g.name}: abelian extensions need an explicit quotient scalar")
    p = ext.p
    gm = g.matrix.with_precision(1)
    h = ext.h.with_precision(1)
    conj = gm.inverse() @ h @ gm
    for s in range(1, p):
        if (conj @ (h ** s).inverse()).congruence_level() >= 1:
            return s
    raise NormalizerError(f"{g.name} does not normalize <h>K_1")


@dataclass(frozen=True)
class PageAction:
    """A compatible pair (h -> h^s, φ) acting on E_2 cells."""

    name: str
    domain: str
    scalar: int | None
    endo: AlgebraEndomorphism

    def matrix(self, m: int) -> FpMatrix:
        return self.endo.grade_matrix(m)

    def apply(self, algebra: E2Algebra, n: int, m: int, rep) -> np.ndarray:
        if self.domain == KERNEL_ONLY:
            if n != 0:
                raise DomainError(f"{self.name} is only defined on row n = 0")
            return self.endo.grade_matrix(m) @ np.asarray(rep, dtype=np.int64)
        return apply_compatible_pair(algebra, n, m, rep, self.scalar, self.endo.grade_matrix(m))

    def apply_class(self, algebra: E2Algebra, n: int, m: int, rep) -> np.ndarray:
        """Apply and reduce to the canonical representative of the class."""
        return algebra.reduce(n, m, self.apply(algebra, n, m, rep))


def page_endomorphism(g: FusionGenerator, ext: ExtensionDatum) -> PageAction:
    scalar = quotient_scalar(g, ext) if g.domain == WHOLE_GROUP else None
    return PageAction(g.name, g.domain, scalar, AlgebraEndomorphism(h1_action(g, ext)))


def compose_actions(a: PageAction, b: PageAction) -> PageAction:
    """a ∘ b for whole-group actions."""
    if a.domain != WHOLE_GROUP or b.domain != WHOLE_GROUP:
        raise DomainError("composition is only defined for whole-group actions")
    return PageAction(f"{a.name}*{b.name}", WHOLE_GROUP, None if a.scalar is None else (a.scalar * b.scalar), a.endo.compose(b.endo))


def row0_stable(algebra: E2Algebra, actions: list[PageAction]) -> dict[int, Subspace]:
    """For each m, the part of E_2^{0,m} = (Λ^m)^σ fixed by all kernel actions."""
    out = {}
    for m in range(algebra.d + 1):
        z = algebra.cocycles(0, m)
        ops = [a.matrix(m) for a in actions]
        fixed = fixed_space(ops, algebra.grade_dim(m), algebra.p) if ops else Subspace.full(algebra.grade_dim(m), algebra.p)
        out[m] = intersect([z, fixed])
    return out


def check_anchors(ext: ExtensionDatum) -> None:
    """Validate the action convention on GL_2 extensions with h = (1 1; 0 1).

    Anchors: h acts on H^1(K_1) by y11 ↦ y11 - y21, y12 ↦ y11 + y12 - y21 - y22,
    y21 ↦ y21, y22 ↦ y21 + y22; and diag(2, 1) scales u by 2⁻¹.
    """
    if ext.kind != "congruence" or ext.n != 2:
        return
    p = ext.p
    if ext.h.with_precision(1) != PrecisionMatrix([[1, 1], [0, 1]], p, 1):
        return
    expected = FpMatrix(np.array([[1, 0, -1, 0], [1, 1, -1, -1], [0, 0, 1, 0], [0, 0, 1, 1]]).T, p)
    h_gen = FusionGenerator("h", WHOLE_GROUP, matrix=ext.h)
    if h1_action(h_gen, ext) != expected:
        raise ConventionError("h does not act on H^1(K_1) by the anchor matrix")
    g_t = FusionGenerator("g_t", WHOLE_GROUP, matrix=PrecisionMatrix([[2, 0], [0, 1]], p, ext.h.m))
    if FpScalar(quotient_scalar(g_t, ext), p) != FpScalar(2, p).inverse():
        raise ConventionError("diag(2, 1) does not scale u by 2^-1")
