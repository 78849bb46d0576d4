"""Sections of the state space and their quotient machinery.

A section is a closed convex set of states that equals the intersection of
its own real-linear span ``J`` with the state space.  The section object
carries ``J``, the annihilator ``Kperp`` (the operators trace-orthogonal to
every element of the section), and a maximal-support *witness* state used
by the convex-geometry layer for compactness bounds.

Probability-class bookkeeping happens in the quotient of the Hermitian
space by ``Kperp``; the canonical representative of a class is its
orthogonal projection onto ``J`` under the trace inner product, which makes
class equality an operator comparison.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from . import linalg as la
from .config import tolerances
from .errors import (DimensionMismatch, EmptySection, InvalidCompression,
                     NotAState)
from .linalg import HermSubspace, TensorShape


@dataclass
class Section:
    """K = J intersected with the states; immutable after construction."""

    dim: int
    J: HermSubspace
    Kperp: HermSubspace
    witness: np.ndarray
    shape: Optional[TensorShape] = None
    kind: str = "custom"
    meta: dict[str, Any] = field(default_factory=dict)

    def project(self, a) -> np.ndarray:
        return self.J.project(a)

    def witness_full_rank(self) -> bool:
        return la.projection_rank(la.support(self.witness)) == self.dim

    def check(self, rtol: float | None = None) -> None:
        """Assert the structural invariants (used by tests and the CLI)."""
        tol = tolerances.num_rtol if rtol is None else rtol
        assert self.J.dim + self.Kperp.dim == self.dim ** 2
        assert self.J.contains(self.witness, rtol=1e-8)
        assert abs(np.trace(self.witness).real - 1.0) <= 1e-8
        assert la.min_eig(self.witness) >= -tol * max(1.0, la.spectral_norm(self.witness))
        if self.Kperp.dim:
            overlaps = self.Kperp.vecs @ la.vectorize(self.witness)
            assert float(np.max(np.abs(overlaps))) <= 1e-8

    def __repr__(self) -> str:  # pragma: no cover
        return (f"<Section kind={self.kind!r} dim={self.dim} "
                f"dim(J)={self.J.dim} dim(Kperp)={self.Kperp.dim}>")


@dataclass
class QuotientElement:
    """Equivalence class of a Hermitian operator modulo Kperp."""

    representative: np.ndarray
    section: Section

    def equals(self, other: "QuotientElement", rtol: float | None = None) -> bool:
        return la.close(self.representative, other.representative, rtol=rtol)


# ---------------------------------------------------------------------------
# constructors
# ---------------------------------------------------------------------------

def full_state_space(d: int) -> Section:
    """The section consisting of all states: ordinary POVM territory."""
    if d < 1:
        raise DimensionMismatch("dimension must be >= 1")
    return Section(
        dim=d,
        J=HermSubspace.full(d),
        Kperp=HermSubspace.zero(d),
        witness=np.eye(d, dtype=np.complex128) / d,
        kind="full",
        meta={"d": d},
    )


def channel_section(d_in: int, d_out: int) -> Section:
    """Normalized Choi matrices of channels: states X on out (x) in with
    Tr_out X proportional to the input identity."""
    if d_in < 1 or d_out < 1:
        raise DimensionMismatch("dimensions must be >= 1")
    d = d_in * d_out
    eye_out = np.eye(d_out)
    kperp = HermSubspace.span(
        [la.tensor(eye_out, y) for y in la.traceless_hermitian_basis(d_in)], d)
    return Section(
        dim=d,
        J=kperp.orthocomplement(),
        Kperp=kperp,
        witness=np.eye(d, dtype=np.complex128) / d,
        shape=TensorShape(d_out, d_in),
        kind="channel",
        meta={"d_in": d_in, "d_out": d_out},
    )


def fixed_marginal_section(sigma: np.ndarray, d_K: int) -> Section:
    """States on K (x) H whose partial trace over the first factor is sigma.

    A singular sigma is handled by compressing the ambient space to
    I_K (x) s(sigma) first; the embedding isometry is kept in ``meta`` so
    corner results can be lifted back.
    """
    sig = la.herm_part(sigma)
    if abs(np.trace(sig).real - 1.0) > 1e-8 or la.min_eig(sig) < -1e-10 * max(
            1.0, la.spectral_norm(sig)):
        raise NotAState("sigma must be a density operator")
    d_H = sig.shape[0]
    q = la.support(sig)
    meta: dict[str, Any] = {"d_K": d_K, "sigma": sig}
    if la.projection_rank(q) < d_H:
        iso_H = la.corner_isometry(q)
        sig = la.compress_operator(sig, iso_H)
        meta["embedding"] = la.tensor(np.eye(d_K), iso_H)
        meta["sigma_corner"] = sig
        d_H = sig.shape[0]
    d = d_K * d_H
    eye_K = np.eye(d_K)
    sigma_perp = HermSubspace.span([sig], d_H).orthocomplement()
    kperp = HermSubspace.span(
        [la.tensor(eye_K, y) for y in sigma_perp.matrices()], d)
    return Section(
        dim=d,
        J=kperp.orthocomplement(),
        Kperp=kperp,
        witness=la.tensor(eye_K / d_K, sig),
        shape=TensorShape(d_K, d_H),
        kind="marginal",
        meta=meta,
    )


def custom_section(j_spanning: list[np.ndarray]) -> Section:
    """Section spanned by an explicit operator family.

    Admission criterion: the slice {x in J, Tr x = 1, x >= 0} must be
    nonempty; its maximal-support element becomes the witness.
    """
    from . import psdgeo

    J = HermSubspace.span(j_spanning)
    d = J.ambient
    traces = J.vecs @ la.vectorize(np.eye(d))
    tnorm = float(np.linalg.norm(traces))
    if tnorm <= 1e-12:
        raise EmptySection("J contains no element of nonzero trace")
    base = la.devectorize(J.vecs.T @ (traces / tnorm ** 2), d)
    unit_id = la.vectorize(np.eye(d))
    unit_id /= np.linalg.norm(unit_id)
    directions = HermSubspace(
        d, la._orthonormal_rows(J.vecs - np.outer(J.vecs @ unit_id, unit_id),
                                tolerances.rank_rtol))
    cert = psdgeo.max_support_element(
        psdgeo.Spectrahedron(base=base, directions=directions), allow_infeasible=True)
    if cert is None:
        raise EmptySection("no PSD trace-one element in J")
    witness = la.herm_part(cert.achieving_point)
    witness = witness / np.trace(witness).real
    return Section(
        dim=d,
        J=J,
        Kperp=J.orthocomplement(),
        witness=witness,
        kind="custom",
        meta={},
    )


# ---------------------------------------------------------------------------
# quotient machinery
# ---------------------------------------------------------------------------

def quotient(section: Section, a) -> QuotientElement:
    """Canonical class representative: orthogonal projection onto J."""
    m = la.as_operator(a)
    if m.shape[0] != section.dim:
        raise DimensionMismatch(
            f"operator dim {m.shape[0]} != section dim {section.dim}")
    return QuotientElement(section.project(m), section)


def positive_representative(section: Section, a) -> Optional[np.ndarray]:
    """A PSD member of the class of ``a``, or None when the class meets the
    PSD cone nowhere."""
    from . import psdgeo

    rep = section.project(a)
    return psdgeo.feasible_point(rep, section.Kperp)


def compress_section(section: Section, p: np.ndarray) -> Section:
    """Restrict the section to the corner algebra of a dominating projection."""
    w = section.witness
    resid = (np.eye(section.dim) - p) @ w
    if np.linalg.norm(resid) > 1e-8 * max(1.0, np.linalg.norm(w)):
        raise InvalidCompression("projection does not dominate the witness support")
    iso = la.corner_isometry(p)
    r = iso.shape[1]
    if r == section.dim:
        return section
    J = section.J.compress(p)
    meta = dict(section.meta)
    meta["embedding"] = meta.get("embedding", np.eye(section.dim)) @ iso
    return Section(
        dim=r,
        J=J,
        Kperp=J.orthocomplement(),
        witness=la.compress_operator(w, iso),
        shape=None,
        kind=section.kind if section.kind == "full" else "corner",
        meta=meta,
    )
