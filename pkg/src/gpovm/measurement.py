"""Generalized POVMs, induced measurements, and extremality certification.

A generalized POVM is a finite family of PSD operators whose sum lies in
I + Kperp for a section; the induced measurement is the family of quotient
classes.  Extremality is decided by pure linear algebra once supports are
known:

* a family is extremal among generalized POVMs iff no nonzero family of
  Hermitian perturbations supported on the element supports sums into the
  annihilator;
* the induced *measurement* is extremal iff every such perturbation family
  supported on the element K-supports that sums into the annihilator is
  blockwise inside the annihilator.

Negative verdicts ship explicit perturbed families that average back to the
input, built on the maximal-support class representatives so both signs stay
PSD.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import linalg as la
from . import psdgeo
from .config import tolerances
from .errors import (CrossCheckDisagreement, DimensionMismatch, NotInSection,
                     SectionMismatch)
from .psdgeo import SupportCertificate, Verdict
from .sections import QuotientElement, Section, quotient

_KERNEL_RTOL = 1e-7  # singular-value threshold for rank decisions, relative


@dataclass
class GeneralizedPOVM:
    """Outcome-indexed PSD family with sum in I + Kperp."""

    section: Section
    elements: list[np.ndarray]
    outcomes: list[str]
    _ksupports: Optional[list[SupportCertificate]] = field(
        default=None, repr=False, compare=False)

    @property
    def n_outcomes(self) -> int:
        return len(self.elements)

    def __post_init__(self):
        if len(self.outcomes) != len(self.elements):
            raise DimensionMismatch("one outcome label per element required")
        for m in self.elements:
            if m.shape[0] != self.section.dim:
                raise DimensionMismatch("element dimension differs from section")


def gpovm(section: Section, elements: Sequence[np.ndarray],
          outcomes: Optional[Sequence[str]] = None) -> GeneralizedPOVM:
    """Convenience constructor with default outcome labels."""
    elements = [la.herm_part(m) for m in elements]
    if outcomes is None:
        outcomes = [str(i) for i in range(len(elements))]
    return GeneralizedPOVM(section=section, elements=list(elements),
                           outcomes=list(outcomes))


@dataclass
class GeneralizedMeasurement:
    """Equivalence class of generalized POVMs: the induced measurement."""

    section: Section
    outcomes: list[str]
    classes: list[QuotientElement]
    ksupports: Optional[list[SupportCertificate]] = None


@dataclass
class Decomposition:
    """M = Lambda o chi_c with c the element sum and p its support.

    ``lam`` is an ordinary POVM on the corner algebra (its elements sum to
    the corner identity); ``pushed_section`` is the image section there;
    ``iso`` embeds the corner back into the ambient space.
    """

    c: np.ndarray
    p: np.ndarray
    lam: list[np.ndarray]
    pushed_section: Section
    iso: np.ndarray
    sqrt_c: np.ndarray


# ---------------------------------------------------------------------------
# validation / application / equivalence
# ---------------------------------------------------------------------------

def validate(M: GeneralizedPOVM) -> Verdict:
    """Check PSD elements and the sum constraint; margins carry the numbers."""
    scale = max([la.spectral_norm(m) for m in M.elements] + [1.0])
    min_eigs = [la.min_eig(m) for m in M.elements]
    total = sum(M.elements)
    defect_op = M.section.project(total - np.eye(M.section.dim))
    defect = float(np.linalg.norm(defect_op))
    tol = 1e-8 * scale
    ok = min(min_eigs) >= -tol and defect <= tol
    return Verdict(bool(ok), margins={
        "min_eigenvalue": float(min(min_eigs)),
        "sum_class_defect": defect,
    }, reason="" if ok else "element negativity or sum constraint violated")


def apply_measurement(M: GeneralizedPOVM, rho: np.ndarray) -> np.ndarray:
    """Outcome probabilities on a state of the section."""
    rho = la.as_operator(rho)
    sec = M.section
    scale = max(la.spectral_norm(rho), 1.0)
    if (not sec.J.contains(rho, rtol=1e-8)
            or la.min_eig(rho) < -1e-8 * scale
            or abs(np.trace(rho).real - 1.0) > 1e-8):
        raise NotInSection("state is not in the section")
    p = np.array([float(np.real(np.trace(m @ rho))) for m in M.elements])
    return p


def measurement_of(M: GeneralizedPOVM) -> GeneralizedMeasurement:
    return GeneralizedMeasurement(
        section=M.section,
        outcomes=list(M.outcomes),
        classes=[quotient(M.section, m) for m in M.elements],
        ksupports=M._ksupports,
    )


def equivalent(M: GeneralizedPOVM, N: GeneralizedPOVM,
               rtol: float | None = None) -> bool:
    """Same measurement: all quotient representatives agree."""
    if M.section.dim != N.section.dim or not M.section.J.same_as(N.section.J):
        raise SectionMismatch("gPOVMs live on different sections")
    if M.n_outcomes != N.n_outcomes:
        return False
    return all(
        la.close(M.section.project(a), N.section.project(b), rtol=rtol)
        for a, b in zip(M.elements, N.elements))


def k_support_family(M: GeneralizedPOVM) -> list[SupportCertificate]:
    """K-supports of all elements, cached on the family."""
    if M._ksupports is None:
        M._ksupports = [psdgeo.k_support(M.section, m) for m in M.elements]
    return M._ksupports


# ---------------------------------------------------------------------------
# extremality engines
# ---------------------------------------------------------------------------

def _corner_lifts(projections: Sequence[np.ndarray], d: int):
    """Per-outcome orthonormal bases of A^h_{p_u}, vectorized in ambient
    coordinates; blocks with zero support contribute no columns."""
    lifts = []
    for p in projections:
        iso = la.corner_isometry(p)
        r = iso.shape[1]
        if r == 0:
            lifts.append(np.empty((0, d * d)))
            continue
        mats = np.stack([la.expand_operator(e, iso)
                         for e in la.hermitian_basis(r)])
        lifts.append(la.vectorize_stack(mats))
    return lifts


def _sum_into_annihilator_kernel(section: Section,
                                 projections: Sequence[np.ndarray]):
    """Null space of (D_u) -> proj_J(sum_u D_u) over the product of support
    corners; returns (kernel rows, per-block slices, margins)."""
    d = section.dim
    lifts = _corner_lifts(projections, d)
    widths = [l.shape[0] for l in lifts]
    total = sum(widths)
    if total == 0:
        return np.empty((0, 0)), [], {"min_singular_value": np.inf}
    phi = np.hstack([section.J.vecs @ l.T for l in lifts])
    _, sv, vt = np.linalg.svd(phi, full_matrices=True)
    thr = max(sv[0] if sv.size else 0.0, 1.0) * _KERNEL_RTOL
    rank = int(np.sum(sv > thr))
    kernel = vt[rank:]
    margins = {
        "min_singular_value": float(sv[-1]) if sv.size else 0.0,
        "kernel_dim": float(kernel.shape[0]),
        "sv_threshold": float(thr),
    }
    slices = []
    at = 0
    for width in widths:
        slices.append(slice(at, at + width))
        at += width
    return kernel, slices, margins


def _blocks_from_vector(vec, slices, projections, d):
    """Split a concatenated corner-coordinate vector into ambient matrices."""
    out = []
    for sl, p in zip(slices, projections):
        coords = vec[sl]
        iso = la.corner_isometry(p)
        r = iso.shape[1]
        if r == 0:
            out.append(np.zeros((d, d), dtype=np.complex128))
            continue
        out.append(la.herm_part(
            la.expand_operator(la.devectorize(coords, r), iso)))
    return out


def _max_symmetric_step(bases: Sequence[np.ndarray],
                        directions: Sequence[np.ndarray]) -> float:
    """Largest eps with base_u +- eps * D_u PSD for all u, then halved."""
    eps = np.inf
    for b, dmat in zip(bases, directions):
        if np.linalg.norm(dmat) < 1e-14:
            continue
        rt = la.pinv_sqrt(b)
        denom = la.spectral_norm(rt @ dmat @ rt)
        if denom > 0:
            eps = min(eps, 1.0 / denom)
    return 0.5 * eps if np.isfinite(eps) else 1.0


def _perturbed_pair(M: GeneralizedPOVM, bases, directions, eps):
    plus = gpovm(M.section, [b + eps * d for b, d in zip(bases, directions)],
                 M.outcomes)
    minus = gpovm(M.section, [b - eps * d for b, d in zip(bases, directions)],
                  M.outcomes)
    return plus, minus


def is_extremal_gpovm(M: GeneralizedPOVM) -> Verdict:
    """Extremality of the operator family among generalized POVMs.

    Fails exactly when a nonzero perturbation family supported on the
    element supports sums into the annihilator; the witness is such a family
    together with symmetric perturbed gPOVMs averaging to M.
    """
    d = M.section.dim
    supports = [la.support(m) for m in M.elements]
    kernel, slices, margins = _sum_into_annihilator_kernel(M.section, supports)
    if kernel.shape[0] == 0:
        return Verdict(True, margins=margins)
    # prefer a kernel direction visible at the measurement level
    vec = kernel[0]
    if M.section.Kperp.dim:
        best_score = -1.0
        for row in kernel:
            blocks = _blocks_from_vector(row, slices, supports, d)
            score = sum(
                float(np.linalg.norm(b - M.section.Kperp.project(b))) ** 2
                for b in blocks)
            if score > best_score:
                best_score, vec = score, row
    directions = _blocks_from_vector(vec, slices, supports, d)
    eps = _max_symmetric_step(M.elements, directions)
    plus, minus = _perturbed_pair(M, M.elements, directions, eps)
    return Verdict(False, witness={
        "directions": directions, "epsilon": eps, "plus": plus, "minus": minus,
    }, margins=margins, reason="perturbation family on supports found")


def is_extremal_measurement(M: GeneralizedPOVM) -> Verdict:
    """Extremality of the induced measurement.

    Perturbation families now live on the K-supports, and families lying
    blockwise in the annihilator are invisible; the measurement is extremal
    iff every family summing into the annihilator is invisible.  Negative
    verdicts ship inequivalent gPOVMs built on the maximal-support class
    representatives.
    """
    d = M.section.dim
    certs = k_support_family(M)
    ksups = [c.projection for c in certs]
    kernel, slices, margins = _sum_into_annihilator_kernel(M.section, ksups)
    if kernel.shape[0] == 0:
        return Verdict(True, margins=margins)
    # W: blockwise-annihilator subspace (Kperp members living inside each
    # K-support corner), expressed in corner coordinates
    corner_blocks = []
    for p in ksups:
        r = la.projection_rank(p)
        if r == 0 or M.section.Kperp.dim == 0:
            corner_blocks.append(None)
            continue
        inter = M.section.Kperp.intersect(psdgeo._corner_subspace(p))
        corner_blocks.append(inter.compress(p) if inter.dim else None)
    widths = [sl.stop - sl.start for sl in slices]
    total = sum(widths)
    pw = np.zeros((total, total))
    for sl, blk in zip(slices, corner_blocks):
        if blk is None or blk.dim == 0:
            continue
        pw[sl, sl] = blk.vecs.T @ blk.vecs
    resid = kernel - kernel @ pw
    if resid.size:
        uu, sv, vvt = np.linalg.svd(resid)
        top = float(sv[0])
    else:  # pragma: no cover
        top = 0.0
    thr = _KERNEL_RTOL * max(1.0, float(np.linalg.norm(kernel)))
    margins = {**margins, "escape_singular_value": top, "escape_threshold": thr}
    if top <= thr:
        return Verdict(True, margins=margins)
    vec = uu[:, 0] @ kernel
    directions = _blocks_from_vector(vec, slices, ksups, d)
    bases = [c.achieving_point for c in certs]
    eps = _max_symmetric_step(bases, directions)
    plus, minus = _perturbed_pair(M, bases, directions, eps)
    return Verdict(False, witness={
        "directions": directions, "epsilon": eps, "plus": plus, "minus": minus,
    }, margins=margins, reason="measurement-level perturbation found")


def supports_weakly_independent(projections: Sequence[np.ndarray]) -> Verdict:
    """Whether D_u on the given supports with sum 0 forces every D_u = 0.

    This is the ordinary-POVM specialization of the extremality criterion.
    """
    d = projections[0].shape[0]
    lifts = _corner_lifts(projections, d)
    total = sum(l.shape[0] for l in lifts)
    if total == 0:
        return Verdict(True, margins={"kernel_dim": 0.0})
    phi = np.hstack([l.T for l in lifts])
    sv = np.linalg.svd(phi, compute_uv=False)
    thr = max(sv[0], 1.0) * _KERNEL_RTOL
    kernel_dim = phi.shape[1] - int(np.sum(sv > thr))
    return Verdict(kernel_dim == 0, margins={
        "kernel_dim": float(kernel_dim),
        "min_singular_value": float(sv[-1]) if phi.shape[1] <= sv.size else 0.0,
    })


def dimension_bound(M: GeneralizedPOVM) -> Verdict:
    """Necessary condition for measurement extremality: the compressed spans
    of J over the K-supports cannot jointly exceed dim J."""
    certs = k_support_family(M)
    lhs = 0
    for cert in certs:
        if cert.rank == 0:
            continue
        lhs += M.section.J.compress(cert.projection).dim
    rhs = M.section.J.dim
    return Verdict(lhs <= rhs, margins={
        "sum_corner_dims": float(lhs), "dim_J": float(rhs)})


# ---------------------------------------------------------------------------
# decomposition route
# ---------------------------------------------------------------------------

def decompose(M: GeneralizedPOVM) -> Decomposition:
    """Write M as an ordinary POVM after the congruence by the element sum."""
    sec = M.section
    c = la.herm_part(sum(M.elements))
    p = la.support(c)
    iso = la.corner_isometry(p)
    rt = la.pinv_sqrt(c)
    sq = la.sqrt_psd(c)
    lam = [la.compress_operator(rt @ m @ rt, iso) for m in M.elements]
    pushed_mats = [la.compress_operator(sq @ b @ sq, iso)
                   for b in sec.J.matrices()]
    J_c = la.HermSubspace.span(pushed_mats, iso.shape[1])
    w = la.compress_operator(sq @ sec.witness @ sq, iso)
    w = la.herm_part(w / np.real(np.trace(w)))
    pushed = Section(
        dim=iso.shape[1], J=J_c, Kperp=J_c.orthocomplement(), witness=w,
        kind="pushforward", meta={"embedding": iso})
    return Decomposition(c=c, p=p, lam=lam, pushed_section=pushed, iso=iso,
                         sqrt_c=sq)


def _lambda_povm(dec: Decomposition, M: GeneralizedPOVM) -> GeneralizedPOVM:
    return gpovm(dec.pushed_section, dec.lam, M.outcomes)


def extremal_gpovm_via_decomposition(M: GeneralizedPOVM,
                                     cross_check: bool = False) -> Verdict:
    """Extremality of M decided through the implementing POVM.

    The family is extremal iff the implementing POVM is extremal with
    respect to the pushed section on the support corner.
    """
    dec = decompose(M)
    verdict = is_extremal_gpovm(_lambda_povm(dec, M))
    out = Verdict(verdict.decision, witness={"decomposition": dec,
                                             "inner": verdict},
                  margins=verdict.margins, reason=verdict.reason)
    if cross_check:
        direct = is_extremal_gpovm(M)
        if bool(direct.decision) != bool(verdict.decision):
            raise CrossCheckDisagreement(
                f"gPOVM extremality: direct={direct.decision} "
                f"decomposition={verdict.decision}")
    return out


def extremal_measurement_via_decomposition(M: GeneralizedPOVM,
                                           cross_check: bool = False
                                           ) -> Verdict:
    """Measurement extremality through the implementing POVM.

    Only applicable when the support of the element sum carries every
    element K-support; otherwise the verdict is inconclusive (None).
    """
    dec = decompose(M)
    certs = k_support_family(M)
    join = la.projection_join([c.projection for c in certs])
    gap = la.projection_rank(join) - la.projection_rank(dec.p)
    if gap > 0 or not la.close(join, dec.p, rtol=1e-7):
        return Verdict(None, margins={"join_rank_minus_p_rank": float(gap)},
                       reason="element-sum support below the join of K-supports")
    verdict = is_extremal_measurement(_lambda_povm(dec, M))
    out = Verdict(verdict.decision, witness={"decomposition": dec,
                                             "inner": verdict},
                  margins=verdict.margins, reason=verdict.reason)
    if cross_check:
        direct = is_extremal_measurement(M)
        if bool(direct.decision) != bool(verdict.decision):
            raise CrossCheckDisagreement(
                f"measurement extremality: direct={direct.decision} "
                f"decomposition={verdict.decision}")
    return out
