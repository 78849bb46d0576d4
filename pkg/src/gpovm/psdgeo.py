"""Convex geometry of affine slices of the PSD cone.

The one numerical primitive is a damped-Newton log-det barrier solver over
the coordinates of an affine family ``X(w) = base + sum_i w_i B_i``.  A tiny
spectral shift ``eps * I`` keeps the barrier domain open even when the slice
has empty interior, so the same code path handles degenerate classes.  Two
facts make the results certifiable:

* barrier stationarity yields a dual element ``Y = P + (1/t)(X + eps I)^{-1}``
  that majorizes the objective matrix; correcting for its residual component
  along the directions gives a valid upper bound on the linear optimum no
  matter how degenerate the slice is;
* the largest support reached inside a class ``a + Kperp`` is certified from
  the *outside* by a positive element of the section cone living on the
  complementary corner -- when the two supports tile the identity the
  support search is provably finished, and that element doubles as an
  explicit separating functional bounding the escape residual.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional, TYPE_CHECKING

import numpy as np

from . import linalg as la
from .config import logger, tolerances
from .errors import Infeasible, NotPositive

if TYPE_CHECKING:  # pragma: no cover
    from .sections import Section

_LADDER_FACTOR = 5.0
_NEWTON_MAX = 60
_W_CAP = 1e8


@dataclass
class Verdict:
    """Outcome of a certification check.

    ``decision`` is True/False, or None when a check is inconclusive.
    ``witness`` carries whatever object validates the decision independently;
    ``margins`` holds the decisive numerical quantities.
    """

    decision: Optional[bool]
    witness: Any = None
    margins: dict[str, float] = field(default_factory=dict)
    reason: str = ""

    def __bool__(self) -> bool:
        return bool(self.decision)


@dataclass
class Spectrahedron:
    """C = {base + x : x in directions, base + x >= 0}."""

    base: np.ndarray
    directions: la.HermSubspace
    feasible: Optional[np.ndarray] = None
    trace_bound: Optional[float] = None

    def __post_init__(self):
        self.base = la.herm_part(self.base)
        if self.base.shape[0] != self.directions.ambient:
            raise la.DimensionMismatch("base and directions live on different spaces")

    @property
    def dim(self) -> int:
        return self.base.shape[0]

    @classmethod
    def from_class(cls, section: "Section", a: np.ndarray) -> "Spectrahedron":
        """The positive part of the class a + Kperp."""
        base = la.herm_part(a)
        bound = None
        rho = section.witness
        lam_min = la.min_eig(rho)
        if lam_min > 1e-12:
            bound = float(np.real(np.trace(rho @ base))) / lam_min
        return cls(base=base, directions=section.Kperp, trace_bound=bound)

    @classmethod
    def trace_slice(cls, subspace: la.HermSubspace) -> Optional["Spectrahedron"]:
        """{x in subspace : Tr x = 1, x >= 0}; None when every element of the
        subspace is traceless (then 0 is its only PSD candidate)."""
        d = subspace.ambient
        tvec = la.vectorize(np.eye(d))
        coeffs = subspace.vecs @ tvec
        nrm2 = float(coeffs @ coeffs)
        if nrm2 <= 1e-20:
            return None
        base = la.devectorize(subspace.vecs.T @ (coeffs / nrm2), d)
        unit = tvec / np.linalg.norm(tvec)
        rows = subspace.vecs - np.outer(subspace.vecs @ unit, unit)
        dirs = la.HermSubspace(d, la._orthonormal_rows(rows, tolerances.rank_rtol))
        return cls(base=base, directions=dirs, trace_bound=1.0)


@dataclass
class SupportCertificate:
    """Largest support reached in a spectrahedron, with audit data.

    ``residual`` upper-bounds max Tr((I - s) X) over the set; ``outer``
    (when present) is a PSD element of the section cone whose support is
    exactly I - s, the object making the bound rigorous.
    """

    projection: np.ndarray
    achieving_point: np.ndarray
    residual: float
    outer: Optional[np.ndarray] = None
    iterations: int = 0
    margins: dict[str, float] = field(default_factory=dict)

    @property
    def rank(self) -> int:
        return la.projection_rank(self.projection)


@dataclass
class LinearOptimum:
    """Result of max_linear: certified upper bound plus achieving point."""

    value: float
    maximizer: np.ndarray
    primal: float
    gap: float
    margins: dict[str, float] = field(default_factory=dict)

    def __iter__(self):
        return iter((self.value, self.maximizer))


# ---------------------------------------------------------------------------
# barrier core
# ---------------------------------------------------------------------------

def _point(base, mats, w):
    if mats.shape[0] == 0:
        return base.copy()
    return base + np.tensordot(w, mats, axes=(0, 0))


def _newton(base, mats, c, t, eps, w0, max_iter=_NEWTON_MAX):
    """Maximize t*<c,w> + logdet(X(w) + eps I) by damped Newton.

    Returns (w, X, lam, U, grad).  Assumes w0 lies in the barrier domain;
    the Hessian solve is eigenvalue-floored so steps stay ascent directions
    even under the extreme conditioning of nearly-degenerate slices.
    """
    d = base.shape[0]
    eye = np.eye(d)
    w = np.asarray(w0, dtype=np.float64).copy()

    def domain_eval(wv):
        X = _point(base, mats, wv)
        lam, U = np.linalg.eigh(X + eps * eye)
        if lam[0] <= 0.0:
            return X, lam, U, -np.inf
        return X, lam, U, t * float(c @ wv) + float(np.sum(np.log(lam)))

    X, lam, U, f = domain_eval(w)
    if not np.isfinite(f):
        raise Infeasible("newton started outside the barrier domain")
    for _ in range(max_iter):
        Bt = np.einsum("ak,iab,bl->ikl", np.conj(U), mats, U, optimize=True)
        inv_lam = 1.0 / lam
        grad = t * c + np.real(np.einsum("ikk,k->i", Bt, inv_lam))
        sq = np.sqrt(inv_lam)
        T = Bt * sq[None, :, None] * sq[None, None, :]
        H = np.real(np.einsum("ikl,jkl->ij", T, np.conj(T), optimize=True))
        hl, hv = np.linalg.eigh(H)
        floor = max(hl[-1] if hl.size else 1.0, 1.0) * 1e-14
        step = hv @ ((hv.T @ grad) / np.maximum(hl, floor))
        decrement = float(grad @ step)
        if decrement <= 2e-13 * (1.0 + abs(f)):
            break
        alpha = 1.0
        improved = False
        for _bt in range(70):
            w_new = w + alpha * step
            X2, lam2, U2, f2 = domain_eval(w_new)
            if f2 > f + 0.25 * alpha * decrement:
                w, X, lam, U, f = w_new, X2, lam2, U2, f2
                improved = True
                break
            alpha *= 0.5
        if not improved:
            break
        if np.linalg.norm(w) > _W_CAP:
            raise Infeasible("spectrahedron appears unbounded; compress the "
                             "section to the support of its witness first")
    Bt = np.einsum("ak,iab,bl->ikl", np.conj(U), mats, U, optimize=True)
    grad = t * c + np.real(np.einsum("ikk,k->i", Bt, 1.0 / lam))
    return w, X, lam, U, grad


def _initial_domain_point(C: Spectrahedron, eps: float) -> np.ndarray:
    """A coordinate vector w inside the eps-relaxed barrier domain."""
    d = C.dim
    base, mats = C.base, C.directions.matrices()
    m = C.directions.dim
    if C.feasible is not None:
        w0 = C.directions.vecs @ (la.vectorize(C.feasible) - la.vectorize(base))
        if la.min_eig(_point(base, mats, w0)) > -0.9 * eps:
            return w0
    w0 = np.zeros(m)
    if la.min_eig(base) > -0.9 * eps:
        return w0
    # slack phase: drive down s with X(w) + (s/sqrt d) I in the cone
    scale = max(la.spectral_norm(base), 1.0)
    eye_dir = np.eye(d)[None, :, :] / np.sqrt(d)
    slack_mats = np.concatenate([mats, eye_dir]) if m else eye_dir
    c = np.zeros(m + 1)
    c[m] = -1.0
    s0 = (-la.min_eig(base) + 0.5 * scale) * np.sqrt(d)
    wx = np.concatenate([w0, [s0]])
    t = 1.0 / scale
    slack = s0 / np.sqrt(d)
    for _ in range(60):
        wx, X, lam, U, grad = _newton(base, slack_mats, c, t, eps, wx,
                                      max_iter=25)
        slack = wx[m] / np.sqrt(d)
        w_found = wx[:m]
        if slack < 0.5 * eps and \
                la.min_eig(_point(base, mats, w_found)) > -0.9 * eps:
            return w_found
        if slack - (d + 1) / t > 3.0 * eps:
            break  # certified: the least achievable slack is positive
        if (d + 1) / t < 0.05 * eps:
            break
        t *= _LADDER_FACTOR
    raise Infeasible(f"no PSD point found (best slack {slack:.3e})")


def analytic_center(C: Spectrahedron, eps: float,
                    w0: Optional[np.ndarray] = None):
    """Center of the eps-relaxed set; returns (w, X, lam, U)."""
    mats = C.directions.matrices()
    if w0 is None:
        w0 = _initial_domain_point(C, eps)
    if C.directions.dim == 0:
        X = C.base.copy()
        lam, U = np.linalg.eigh(X + eps * np.eye(C.dim))
        if lam[0] <= 0:
            raise Infeasible("base point is not PSD and there are no directions")
        return np.zeros(0), X, lam, U
    c = np.zeros(C.directions.dim)
    w, X, lam, U, _ = _newton(C.base, mats, c, 0.0, eps, w0)
    return w, X, lam, U


def feasible_point(base, directions: la.HermSubspace,
                   rtol: float | None = None) -> Optional[np.ndarray]:
    """Some PSD point of base + directions, or None when there is none.

    The point satisfies the affine constraint exactly and is PSD within the
    relative rank tolerance.
    """
    base = la.herm_part(base)
    scale = max(la.spectral_norm(base), 1.0)
    rtol = tolerances.rank_rtol if rtol is None else rtol
    if la.min_eig(base) >= -rtol * scale:
        return base
    C = Spectrahedron(base=base, directions=directions)
    eps = 1e-10 * scale
    try:
        w = _initial_domain_point(C, eps)
    except Infeasible:
        return None
    X = _point(base, directions.matrices(), w)
    if la.min_eig(X) < -max(rtol * scale, eps):
        return None
    # phase-0 points can drift far out on unbounded families; pull back to a
    # minimal-trace member, which is also the canonical boundary-near choice
    C.feasible = X
    try:
        opt = max_linear(C, -np.eye(C.dim), tol=1e-6 * scale)
    except Infeasible:  # pragma: no cover
        return X
    if la.min_eig(opt.maximizer) >= -max(rtol * scale, 2.0 * eps):
        return opt.maximizer
    return X


# ---------------------------------------------------------------------------
# linear optimization
# ---------------------------------------------------------------------------

def _reach(C: Spectrahedron, X: np.ndarray, scale: float) -> float:
    """Bound on the Frobenius distance from base to any feasible point."""
    if C.trace_bound is not None:
        return abs(C.trace_bound) + float(np.linalg.norm(C.base))
    return 10.0 * (float(np.linalg.norm(X - C.base)) + scale)


def _projected_dual_bound(C: Spectrahedron, P, inv_t, reach: float) -> float:
    """Upper bound from Y = P + Z projected exactly onto the constraint
    orthocomplement; the strict positivity of the barrier slack Z absorbs the
    projection defect, any leftover is charged against the reach bound."""
    Y = P + inv_t
    coords = C.directions.vecs @ la.vectorize(Y)
    resid = float(np.linalg.norm(coords))
    y_proj = Y - la.devectorize(C.directions.vecs.T @ coords, C.dim)
    slack_min = float(np.linalg.eigvalsh(la.herm_part(inv_t))[0])
    deficit = max(0.0, resid - max(slack_min, 0.0))
    return float(np.real(np.trace(y_proj @ C.base))) + deficit * reach


def _complementarity_polish(C: Spectrahedron, P, X, inv_t, scale: float,
                            reach: float) -> Optional[float]:
    """Certified bound from a dual element supported on the complement of the
    primal optimizer's support (complementary slackness).

    Finds Delta on the complementary corner with P + Delta orthogonal to the
    directions; every violation (linear residual, negative part of Delta) is
    charged explicitly, so the returned value is a valid upper bound or None.
    """
    d = C.dim
    lam, u = np.linalg.eigh(la.herm_part(X))
    best: Optional[float] = None
    # candidate supports: cut at the largest relative eigenvalue gaps, plus
    # the plain tolerance cut and the full-rank hypothesis
    floors = np.maximum(lam, 1e-14 * scale)
    ratios = floors[1:] / floors[:-1]
    cuts = [int(k) + 1 for k in np.argsort(ratios)[::-1][:3] if ratios[k] > 10.0]
    cuts.append(int(np.sum(lam <= tolerances.support_decision_tol * scale)))
    if lam[0] > 1e-9 * scale:
        cuts.append(0)
    seen: set[int] = set()
    for cut in cuts:
        if cut in seen:
            continue
        seen.add(cut)
        active = u[:, :cut]
        r = active.shape[1]
        if r == 0:
            # full-rank optimizer: objective must be constant on C
            resid = float(np.linalg.norm(C.directions.vecs @ la.vectorize(P)))
            if resid * reach < 1e-12 * scale:
                return float(np.real(np.trace(P @ C.base)))
            continue
        corner = np.stack([active @ e @ la.dagger(active)
                           for e in la.hermitian_basis(r)])
        A = C.directions.vecs @ la.vectorize_stack(corner).T
        rhs = -(C.directions.vecs @ la.vectorize(P))
        sol, *_ = np.linalg.lstsq(A, rhs, rcond=None)
        lin_resid = float(np.linalg.norm(A @ sol - rhs))
        delta = np.tensordot(sol, corner, axes=(0, 0))
        neg = max(0.0, -float(np.linalg.eigvalsh(la.herm_part(delta))[0]))
        tb = abs(C.trace_bound) if C.trace_bound is not None else reach
        bound = (float(np.real(np.trace((P + delta) @ C.base)))
                 + lin_resid * reach + neg * tb)
        if best is None or bound < best:
            best = bound
    return best


def _face_restricted_primal(C: Spectrahedron, P, X, scale: float, tol: float,
                            depth: int) -> Optional[tuple[float, np.ndarray]]:
    """Re-solve on the face spanned by the optimizer's support.

    Pinning X(w) to the detected support corner is a linear constraint; the
    pinned family compresses to a strictly smaller spectrahedron whose
    optimum is a feasible point of C, sharpening the primal side after the
    barrier stops at the conditioning cliff.
    """
    d = C.dim
    lam, u = np.linalg.eigh(la.herm_part(X))
    genuine = lam > max(1e-5 * scale, 1e3 * lam[0] if lam[0] > 0 else 0.0)
    r = int(np.sum(genuine))
    if r == 0 or r == d:
        return None
    iso = np.ascontiguousarray(u[:, genuine])
    kill = np.ascontiguousarray(u[:, ~genuine])
    mats = C.directions.matrices()
    # rows of the pinning system: (I - s) X(w) = 0 in the eigenbasis
    def offblocks(M):
        return np.concatenate([(la.dagger(kill) @ M @ iso).ravel(),
                               (la.dagger(kill) @ M @ kill).ravel()])
    A = np.stack([offblocks(B) for B in mats], axis=1)
    rhs = -offblocks(C.base)
    A_r = np.vstack([A.real, A.imag])
    rhs_r = np.concatenate([rhs.real, rhs.imag])
    sol, *_ = np.linalg.lstsq(A_r, rhs_r, rcond=None)
    if np.linalg.norm(A_r @ sol - rhs_r) > 1e-8 * scale:
        return None
    _, sv, vt = np.linalg.svd(A_r, full_matrices=True)
    rank = int(np.sum(sv > max(sv[0], 1.0) * 1e-10)) if sv.size else 0
    null = vt[rank:]
    X_pin = _point(C.base, mats, sol)
    base_c = la.compress_operator(X_pin, iso)
    if null.shape[0] == 0:
        if la.min_eig(base_c) < -1e-8 * scale:
            return None
        return float(np.real(np.trace(P @ X_pin))), X_pin
    dirs_c = la.HermSubspace.span(
        [la.compress_operator(np.tensordot(z, mats, axes=(0, 0)), iso)
         for z in null], r)
    sub = Spectrahedron(base=base_c, directions=dirs_c,
                        trace_bound=C.trace_bound)
    try:
        inner = max_linear(sub, la.compress_operator(P, iso), tol=tol,
                           _depth=depth + 1)
    except Infeasible:
        return None
    lifted = la.herm_part(iso @ inner.maximizer @ la.dagger(iso))
    # express the lifted point exactly in the original affine family
    w_lift = C.directions.vecs @ (la.vectorize(lifted) - la.vectorize(C.base))
    cand = _point(C.base, mats, w_lift)
    if la.min_eig(cand) < -1e-7 * scale:
        return None
    return float(np.real(np.trace(P @ cand))), cand


def max_linear(C: Spectrahedron, P, tol: float | None = None,
               _depth: int = 0) -> LinearOptimum:
    """Maximize Tr(P X) over C with a certified duality gap.

    ``value`` is a rigorous upper bound on the maximum; ``maximizer`` is a
    feasible point matching it up to ``gap``.  Raises :class:`Infeasible`
    when C is empty.
    """
    tol = tolerances.sdp_tol if tol is None else tol
    P = la.herm_part(P)
    d = C.dim
    mats = C.directions.matrices()
    m = C.directions.dim
    scale = max(la.spectral_norm(C.base), la.spectral_norm(P), 1.0)
    eps = 1e-11 * scale
    if C.feasible is not None:
        # widen the shift so a tolerance-PSD feasible point sits in the domain
        neg = max(0.0, -la.min_eig(C.feasible))
        eps = min(max(eps, 2.0 * neg), 1e-9 * scale)

    if m == 0:
        if la.min_eig(C.base) < -tolerances.rank_rtol * scale:
            raise Infeasible("base point is not PSD and there are no directions")
        v = float(np.real(np.trace(P @ C.base)))
        return LinearOptimum(value=v, maximizer=C.base.copy(), primal=v, gap=0.0)

    w = _initial_domain_point(C, eps)
    c = C.directions.vecs @ la.vectorize(P)
    X0 = _point(C.base, mats, w)
    v0 = abs(float(np.real(np.trace(P @ X0)))) + la.spectral_norm(P) * scale + 1.0
    t = d / v0
    t_max = 4.0 * d / tol
    first = True
    best: Optional[LinearOptimum] = None
    while True:
        w, X, lam, U, grad = _newton(C.base, mats, c, t, eps, w,
                                     max_iter=(_NEWTON_MAX if first else 20))
        first = False
        primal = float(np.real(np.trace(P @ X)))
        inv_t = la.herm_part((U * (1.0 / lam)) @ la.dagger(U)) / t
        reach = _reach(C, X, scale)
        upper = _projected_dual_bound(C, P, inv_t, reach)
        cand = LinearOptimum(
            value=upper, maximizer=X, primal=primal, gap=upper - primal,
            margins={"t": t, "bound_certified": float(C.trace_bound is not None)})
        if best is None or cand.gap < best.gap:
            best = cand
        if cand.gap <= tol:
            break
        # below this the Newton systems hit the float64 conditioning cliff;
        # complementarity polishing takes over from there
        if t >= t_max or lam[0] < 3e-7 * scale:
            polish = _complementarity_polish(C, P, X, inv_t, scale, reach)
            if polish is not None and polish < best.value:
                best = LinearOptimum(
                    value=polish, maximizer=best.maximizer,
                    primal=best.primal, gap=polish - best.primal,
                    margins={**best.margins, "polished": 1.0})
            if best.gap > tol and _depth < 4:
                sharp = _face_restricted_primal(C, P, X, scale, tol, _depth)
                if sharp is not None and sharp[0] > best.primal:
                    best = LinearOptimum(
                        value=max(best.value, sharp[0]), maximizer=sharp[1],
                        primal=sharp[0], gap=max(best.value, sharp[0]) - sharp[0],
                        margins={**best.margins, "face_refined": 1.0})
            if best.gap > tol:
                logger.debug("max_linear gap %.3e above tol at t=%.3e",
                             best.gap, t)
            break
        t *= _LADDER_FACTOR
    return best


# ---------------------------------------------------------------------------
# maximal supports, K-supports, P_K membership
# ---------------------------------------------------------------------------

def _coarse_support(x, scale: float) -> np.ndarray:
    """Support at the post-optimization threshold (absorbs solver error)."""
    thr = tolerances.support_decision_tol * max(scale, 1e-30)
    w, u = np.linalg.eigh(la.herm_part(x))
    cols = u[:, w > thr]
    return la.herm_part(cols @ la.dagger(cols))


def _corner_subspace(p: np.ndarray) -> la.HermSubspace:
    """A^h_p = {x : x = p x p} as a subspace of the ambient Hermitians."""
    d = p.shape[0]
    iso = la.corner_isometry(p)
    r = iso.shape[1]
    if r == 0:
        return la.HermSubspace.zero(d)
    corner = np.stack([la.expand_operator(e, iso) for e in la.hermitian_basis(r)])
    return la.HermSubspace(d, la.vectorize_stack(corner))


def max_support_element(C: Spectrahedron, residual_tol: float | None = None,
                        allow_infeasible: bool = False
                        ) -> Optional[SupportCertificate]:
    """Element of C with the largest support.

    Detection by analytic centering (the center of a convex set carries the
    maximal support), growth by escape maximization with midpoint averaging,
    certification by the escape problem's dual bound.  With
    ``allow_infeasible`` an empty C yields None instead of raising.
    """
    residual_tol = tolerances.sdp_tol if residual_tol is None else residual_tol
    d = C.dim
    scale = max(la.spectral_norm(C.base), 1.0)
    eps = 1e-10 * scale
    try:
        _, X, lam, _ = analytic_center(C, eps)
    except Infeasible:
        if allow_infeasible:
            return None
        raise
    b = X
    s = _coarse_support(b, scale)
    iterations = 1
    eye = np.eye(d)
    while iterations <= d + 2:
        if la.projection_rank(s) == d:
            return SupportCertificate(projection=s, achieving_point=b,
                                      residual=0.0, iterations=iterations)
        opt = max_linear(C, eye - s, tol=residual_tol)
        if opt.value <= residual_tol:
            return SupportCertificate(
                projection=s, achieving_point=b, residual=max(opt.value, 0.0),
                iterations=iterations, margins=dict(opt.margins))
        if opt.primal > tolerances.support_decision_tol * scale:
            b = 0.5 * (b + opt.maximizer)
            s = _coarse_support(b, scale)
            iterations += 1
            continue
        logger.warning("support residual not certified below tolerance "
                       "(bound %.3e)", opt.value)
        return SupportCertificate(
            projection=s, achieving_point=b, residual=max(opt.value, 0.0),
            iterations=iterations, margins={**opt.margins, "uncertified": 1.0})
    raise RuntimeError("support growth failed to terminate")  # pragma: no cover


def _slice_orthogonal_to(section: "Section", s: np.ndarray
                         ) -> Optional[tuple[Spectrahedron, np.ndarray]]:
    """Corner spectrahedron of {x in J : Tr x = 1, s x s = 0, x >= 0}.

    Positive operators annihilated by s are exactly the PSD elements of the
    complementary corner, so the problem is assembled there.  Returns the
    corner slice and the embedding isometry, or None when the linear part is
    trivial.
    """
    d = section.dim
    p = la.herm_part(np.eye(d) - s)
    r = la.projection_rank(p)
    if r == 0:
        return None
    iso = la.corner_isometry(p)
    fixed = section.J.intersect(_corner_subspace(p))
    if fixed.dim == 0:
        return None
    corner_mats = np.einsum("ai,kab,bj->kij", np.conj(iso), fixed.matrices(), iso)
    corner_sub = la.HermSubspace(r, la._orthonormal_rows(
        la.vectorize_stack(corner_mats), tolerances.rank_rtol))
    slab = Spectrahedron.trace_slice(corner_sub)
    if slab is None:
        return None
    return slab, iso


def _outer_certificate(section: "Section", s_hat: np.ndarray
                       ) -> Optional[tuple[np.ndarray, float, float]]:
    """Positive element of the section cone supported exactly on I - s_hat.

    Returns (outer, lam_min, j_violation) where ``outer`` is exactly PSD
    with full rank on the complementary corner, ``lam_min`` its smallest
    positive eigenvalue and ``j_violation`` the norm of its leakage out of
    the section span (both feed the escape residual).  None when no such
    element is found, i.e. the sandwich does not close at s_hat.
    """
    d = section.dim
    r_needed = d - la.projection_rank(s_hat)
    if r_needed == 0:
        return np.zeros((d, d), dtype=np.complex128), 1.0, 0.0
    made = _slice_orthogonal_to(section, s_hat)
    if made is None:
        return None
    slab, iso = made
    eps_c = 1e-12 * max(la.spectral_norm(slab.base), 1.0)
    try:
        _, Xc, _, _ = analytic_center(slab, eps_c)
    except Infeasible:
        return None
    wc, uc = np.linalg.eigh(la.herm_part(Xc))
    if wc[0] <= -100.0 * eps_c or np.sum(wc > 100.0 * eps_c) < Xc.shape[0]:
        return None  # corner center singular: slice support below I - s_hat
    clipped = (uc * np.clip(wc, 0.0, None)) @ la.dagger(uc)
    outer = la.herm_part(la.expand_operator(clipped, iso))
    lam_min = float(np.min(wc[wc > 0.0])) if np.any(wc > 0.0) else 0.0
    if lam_min <= 0.0:
        return None
    leak = la.vectorize(outer)
    if section.Kperp.dim:
        j_violation = float(np.linalg.norm(section.Kperp.vecs @ leak))
    else:
        j_violation = 0.0
    return outer, lam_min, j_violation


def k_support(section: "Section", a, residual_tol: float | None = None
              ) -> SupportCertificate:
    """Largest support among PSD members of the class a + Kperp.

    The certificate carries the achieving class member, a rigorous residual
    bound on escape mass outside the support, and the outer element whose
    support tiles the complement.
    """
    residual_tol = tolerances.sdp_tol if residual_tol is None else residual_tol
    a = la.herm_part(a)
    scale = max(la.spectral_norm(a), 1.0)
    if la.min_eig(a) < -tolerances.rank_rtol * scale:
        raise NotPositive("k_support requires a PSD input")
    d = section.dim
    C = Spectrahedron.from_class(section, a)
    C.feasible = a
    eps = 1e-10 * scale
    _, b, _, _ = analytic_center(C, eps)
    s_hat = _coarse_support(b, scale)
    eye = np.eye(d)
    iterations = 1
    reach = (abs(C.trace_bound) if C.trace_bound is not None
             else float(np.linalg.norm(b))) + float(np.linalg.norm(a)) + 1.0
    while iterations <= d + 3:
        if la.projection_rank(s_hat) == d:
            return SupportCertificate(projection=s_hat, achieving_point=b,
                                      residual=0.0, iterations=iterations)
        closed = _outer_certificate(section, s_hat)
        if closed is not None:
            outer, lam_min, j_violation = closed
            residual = (max(float(np.real(np.trace(outer @ a))), 0.0)
                        + j_violation * reach) / lam_min
            if residual <= max(residual_tol, 1e3 * eps / lam_min):
                return SupportCertificate(
                    projection=s_hat, achieving_point=b, residual=residual,
                    outer=outer, iterations=iterations,
                    margins={"outer_lambda_min": lam_min,
                             "outer_leak": j_violation})
            # outer exists but sees class mass outside s_hat: support too small
        opt = max_linear(C, eye - s_hat, tol=residual_tol)
        if opt.primal > tolerances.support_decision_tol * scale:
            b = 0.5 * (b + opt.maximizer)
            s_hat = _coarse_support(b, scale)
            iterations += 1
            continue
        if opt.value <= residual_tol:
            return SupportCertificate(
                projection=s_hat, achieving_point=b,
                residual=max(opt.value, 0.0), iterations=iterations,
                margins=dict(opt.margins))
        logger.warning("k_support sandwich failed to close; residual bound %.3e",
                       opt.value)
        return SupportCertificate(
            projection=s_hat, achieving_point=b, residual=max(opt.value, 0.0),
            iterations=iterations, margins={**opt.margins, "uncertified": 1.0})
    raise RuntimeError("k-support growth failed to terminate")  # pragma: no cover


def is_in_PK(section: "Section", p, rtol: float | None = None) -> Verdict:
    """Whether p = I - s(b) for some positive element b of the section cone.

    Equivalently, whether the K-support of p (as a PSD operator) is p
    itself.  The witness of a positive verdict is the element b, which has
    support exactly I - p.
    """
    p = la.herm_part(p)
    if not la.is_projection(p, rtol=1e-7):
        raise NotPositive("is_in_PK expects a projection")
    cert = k_support(section, p)
    grew = cert.rank - la.projection_rank(p)
    decision = grew == 0 and la.close(cert.projection, p, rtol=1e-7)
    witness = cert.outer if decision else cert.achieving_point
    return Verdict(
        decision=bool(decision),
        witness=witness,
        margins={"ksupport_rank_gap": float(grew), "residual": cert.residual},
        reason="support-stable" if decision else "class support exceeds p",
    )


def projection_meet(ps) -> np.ndarray:
    """Projection onto the intersection of the ranges."""
    mats = [la.as_operator(q) for q in ps]
    if not mats:
        raise ValueError("need at least one projection")
    d = mats[0].shape[0]
    stacked = np.vstack([np.eye(d) - q for q in mats])
    _, sv, vh = np.linalg.svd(stacked)
    tol = max(sv[0], 1.0) * 1e-9 if sv.size else 1e-9
    null = vh[np.sum(sv > tol):].conj().T
    return la.herm_part(null @ la.dagger(null))


def class_is_extreme_point(section: "Section", a) -> Verdict:
    """Whether a is an extreme point of the positive part of its class.

    Holds iff no Kperp direction lives inside the support corner of a; a
    negative verdict ships such a direction together with a step size
    keeping both perturbations PSD.
    """
    a = la.herm_part(a)
    scale = max(la.spectral_norm(a), 1.0)
    if la.min_eig(a) < -tolerances.rank_rtol * scale:
        raise NotPositive("expected a PSD operator")
    s = la.support(a)
    inter = section.Kperp.intersect(_corner_subspace(s))
    if inter.dim == 0:
        corner_dim = section.J.compress(s).dim if la.projection_rank(s) else 0
        return Verdict(True, margins={
            "corner_class_dim": 0.0, "dim_sJs": float(corner_dim)})
    z = inter.matrices()[0]
    rt = la.pinv_sqrt(a)
    denom = la.spectral_norm(rt @ z @ rt)
    epsilon = 0.5 / denom if denom > 0 else 1.0
    return Verdict(False, witness={"direction": z, "epsilon": epsilon},
                   margins={"corner_class_dim": float(inter.dim)})


def _amplify_class_difference(a, b, scale: float) -> np.ndarray:
    """Push b away from a along their class difference while staying PSD."""
    delta = la.herm_part(b - a)
    if np.linalg.norm(delta) < 1e-14:
        return b
    tol = tolerances.rank_rtol * max(scale, 1.0)
    hi = 1.0
    for _ in range(40):
        if la.min_eig(a + 2.0 * hi * delta) < -tol:
            break
        hi *= 2.0
    lo, hi = 0.0, 2.0 * hi
    for _ in range(50):
        mid = 0.5 * (lo + hi)
        if la.min_eig(a + mid * delta) >= -tol:
            lo = mid
        else:
            hi = mid
    # b = a + delta is itself PSD, so lo >= 1; stay inside the boundary
    return la.herm_part(a + max(1.0, 0.95 * lo) * delta)


def class_is_singleton(section: "Section", a) -> Verdict:
    """Whether a is the unique PSD element of its class.

    Conjunction of support stability of s(a) and extremality inside the
    class; a negative verdict ships a second PSD class member, pushed to a
    clear Frobenius separation from a.
    """
    a = la.herm_part(a)
    scale = max(la.spectral_norm(a), 1.0)
    extreme = class_is_extreme_point(section, a)
    if not extreme.decision:
        z = extreme.witness["direction"]
        eps = extreme.witness["epsilon"]
        other = _amplify_class_difference(a, a + eps * z, scale)
        return Verdict(False, witness={"second_member": other},
                       margins={"frobenius_gap": float(np.linalg.norm(other - a)),
                                **extreme.margins},
                       reason="not an extreme point of its class")
    s = la.support(a)
    cert = k_support(section, a)
    if cert.rank > la.projection_rank(s):
        other = _amplify_class_difference(a, cert.achieving_point, scale)
        return Verdict(False, witness={"second_member": other},
                       margins={"frobenius_gap": float(np.linalg.norm(other - a)),
                                "ksupport_rank": float(cert.rank)},
                       reason="class support exceeds s(a)")
    return Verdict(True, witness={"certificate": cert},
                   margins={"residual": cert.residual, **extreme.margins})
