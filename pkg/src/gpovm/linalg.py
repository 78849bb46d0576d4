"""Dense Hermitian linear algebra: tensor products, partial traces, supports,
spectral calculus, and real-linear subspaces of Hermitian matrices.

Conventions fixed here and relied on by the rest of the package:

* Operators are plain ``numpy`` arrays of ``complex128``, validated at API
  boundaries rather than wrapped in a class.
* Tensor products put the *output* (K/B) factor first; flattening is
  row-major, so ``tensor(a, b)[i*db+k, j*db+l] = a[i,j] * b[k,l]``.
* The real vectorization of a d x d Hermitian matrix is the length-d^2
  vector ``[x_00, ..., x_(d-1)(d-1),
  sqrt2*Re x_01, sqrt2*Im x_01, sqrt2*Re x_02, ...]`` with the off-diagonal
  pairs enumerated row-major over i < j.  This map is an isometry between
  the trace inner product and the Euclidean dot product.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

from .config import logger, tolerances
from .errors import DimensionMismatch, NotPositive

_SQRT2 = np.sqrt(2.0)


# ---------------------------------------------------------------------------
# basic operator helpers
# ---------------------------------------------------------------------------

def as_operator(x) -> np.ndarray:
    """Coerce to a square complex128 matrix."""
    m = np.asarray(x, dtype=np.complex128)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"expected a square matrix, got shape {m.shape}")
    return m


def dagger(x: np.ndarray) -> np.ndarray:
    return np.conj(x.T)


def herm_part(x) -> np.ndarray:
    """Hermitian part (x + x^dag)/2; used to sanitize round-off."""
    m = as_operator(x)
    return 0.5 * (m + dagger(m))


def is_hermitian(x, rtol: float | None = None) -> bool:
    m = as_operator(x)
    tol = (tolerances.num_rtol if rtol is None else rtol)
    scale = max(np.linalg.norm(m), 1.0)
    return bool(np.linalg.norm(m - dagger(m)) <= tol * scale)


def frob_norm(x: np.ndarray) -> float:
    return float(np.linalg.norm(x))


def spectral_norm(x: np.ndarray) -> float:
    m = as_operator(x)
    if m.size == 0:
        return 0.0
    return float(np.linalg.norm(m, 2))


def close(x: np.ndarray, y: np.ndarray, rtol: float | None = None) -> bool:
    """Operator equality: Frobenius distance below the relative threshold."""
    tol = tolerances.num_rtol if rtol is None else rtol
    scale = max(np.linalg.norm(x), np.linalg.norm(y), 1.0)
    return bool(np.linalg.norm(np.asarray(x) - np.asarray(y)) <= tol * scale)


def tensor(*factors) -> np.ndarray:
    """Kronecker product of the given operators, first factor outermost."""
    out = as_operator(factors[0])
    for f in factors[1:]:
        out = np.kron(out, as_operator(f))
    return out


@dataclass(frozen=True)
class TensorShape:
    """Bipartite factorization d_out (x) d_in, output factor first."""

    d_out: int
    d_in: int

    @property
    def total(self) -> int:
        return self.d_out * self.d_in

    def check(self, x: np.ndarray) -> None:
        if x.shape[0] != self.total:
            raise DimensionMismatch(
                f"operator dim {x.shape[0]} != {self.d_out}*{self.d_in}")


def partial_trace(x, shape: TensorShape, side: str = "first") -> np.ndarray:
    """Trace out one tensor factor.

    ``side='first'`` removes the output (K/B) factor, leaving an operator on
    the input space; ``side='second'`` removes the input factor.
    """
    m = as_operator(x)
    shape.check(m)
    m4 = m.reshape(shape.d_out, shape.d_in, shape.d_out, shape.d_in)
    if side == "first":
        return np.einsum("abac->bc", m4)
    if side == "second":
        return np.einsum("abcb->ac", m4)
    raise ValueError(f"side must be 'first' or 'second', got {side!r}")


# ---------------------------------------------------------------------------
# spectral calculus
# ---------------------------------------------------------------------------

def eigh(x: np.ndarray):
    return np.linalg.eigh(herm_part(x))


def _rank_threshold(eigvals: np.ndarray, rtol: float) -> float:
    scale = float(np.max(np.abs(eigvals))) if eigvals.size else 0.0
    return rtol * scale


def support(x, rtol: float | None = None) -> np.ndarray:
    """Projection onto the support (range) of a PSD operator.

    Eigenvalues above ``rtol * ||x||`` count toward the support; an
    eigenvalue below ``-rtol * ||x||`` raises :class:`NotPositive`.
    """
    m = as_operator(x)
    rtol = tolerances.rank_rtol if rtol is None else rtol
    w, u = eigh(m)
    thr = _rank_threshold(w, rtol)
    if w.size and w[0] < -thr:
        raise NotPositive(f"negative eigenvalue {w[0]:.3e} beyond threshold {thr:.3e}")
    if thr > 0:
        near = (np.abs(w) > 0.1 * thr) & (np.abs(w) < 10.0 * thr)
        if np.any(near):
            gap = np.min(np.abs(np.abs(w[near]) - thr))
            logger.warning("rank decision near threshold: gap %.3e at threshold %.3e",
                           gap, thr)
    cols = u[:, w > thr]
    return herm_part(cols @ dagger(cols))


def projection_rank(p: np.ndarray) -> int:
    return int(round(float(np.real(np.trace(p)))))


def is_projection(p, rtol: float | None = None) -> bool:
    m = as_operator(p)
    tol = tolerances.num_rtol if rtol is None else rtol
    scale = max(np.linalg.norm(m), 1.0)
    return bool(
        np.linalg.norm(m - dagger(m)) <= tol * scale
        and np.linalg.norm(m @ m - m) <= tol * scale
    )


def _psd_eig(x, rtol: float | None):
    m = as_operator(x)
    rtol = tolerances.rank_rtol if rtol is None else rtol
    w, u = eigh(m)
    thr = _rank_threshold(w, rtol)
    if w.size and w[0] < -thr:
        raise NotPositive(f"negative eigenvalue {w[0]:.3e} beyond threshold {thr:.3e}")
    return w, u, thr


def sqrt_psd(x, rtol: float | None = None) -> np.ndarray:
    """PSD square root (kernel eigenvalues clipped to zero)."""
    w, u, _ = _psd_eig(x, rtol)
    return herm_part((u * np.sqrt(np.clip(w, 0.0, None))) @ dagger(u))


def pinv_sqrt(x, rtol: float | None = None) -> np.ndarray:
    """Inverse square root on the support; vanishes on the kernel."""
    w, u, thr = _psd_eig(x, rtol)
    inv = np.where(w > thr, 1.0 / np.sqrt(np.where(w > thr, w, 1.0)), 0.0)
    return herm_part((u * inv) @ dagger(u))


def min_eig(x) -> float:
    return float(np.linalg.eigvalsh(herm_part(x))[0])


# ---------------------------------------------------------------------------
# real vectorization of the Hermitian space
# ---------------------------------------------------------------------------

@lru_cache(maxsize=64)
def _triu_indices(d: int):
    iu = np.triu_indices(d, k=1)
    return iu[0].copy(), iu[1].copy()


def vectorize(x) -> np.ndarray:
    """Isometric real coordinates of a Hermitian matrix (see module docstring)."""
    m = as_operator(x)
    d = m.shape[0]
    rows, cols = _triu_indices(d)
    out = np.empty(d * d, dtype=np.float64)
    out[:d] = np.real(np.diagonal(m))
    off = m[rows, cols]
    out[d::2] = _SQRT2 * np.real(off)
    out[d + 1::2] = _SQRT2 * np.imag(off)
    return out


def devectorize(v, d: int | None = None) -> np.ndarray:
    """Inverse of :func:`vectorize`."""
    vec = np.asarray(v, dtype=np.float64).ravel()
    if d is None:
        d = int(round(np.sqrt(vec.size)))
    if d * d != vec.size:
        raise DimensionMismatch(f"vector length {vec.size} is not a square")
    rows, cols = _triu_indices(d)
    m = np.zeros((d, d), dtype=np.complex128)
    np.fill_diagonal(m, vec[:d])
    off = (vec[d::2] + 1j * vec[d + 1::2]) / _SQRT2
    m[rows, cols] = off
    m[cols, rows] = np.conj(off)
    return m


def vectorize_stack(mats: np.ndarray) -> np.ndarray:
    """Vectorize a (k, d, d) stack into a (k, d^2) real matrix."""
    mats = np.asarray(mats, dtype=np.complex128)
    k, d, _ = mats.shape
    rows, cols = _triu_indices(d)
    out = np.empty((k, d * d), dtype=np.float64)
    out[:, :d] = np.real(mats[:, np.arange(d), np.arange(d)])
    off = mats[:, rows, cols]
    out[:, d::2] = _SQRT2 * np.real(off)
    out[:, d + 1::2] = _SQRT2 * np.imag(off)
    return out


def devectorize_stack(vecs: np.ndarray, d: int) -> np.ndarray:
    vecs = np.atleast_2d(np.asarray(vecs, dtype=np.float64))
    k = vecs.shape[0]
    rows, cols = _triu_indices(d)
    mats = np.zeros((k, d, d), dtype=np.complex128)
    mats[:, np.arange(d), np.arange(d)] = vecs[:, :d]
    off = (vecs[:, d::2] + 1j * vecs[:, d + 1::2]) / _SQRT2
    mats[:, rows, cols] = off
    mats[:, cols, rows] = np.conj(off)
    return mats


def hermitian_basis(d: int) -> list[np.ndarray]:
    """Orthonormal Hermitian basis mapped to the standard coordinate vectors."""
    return [devectorize(row, d) for row in np.eye(d * d)]


def traceless_hermitian_basis(d: int) -> list[np.ndarray]:
    """Orthonormal basis of the traceless Hermitian subspace (dim d^2 - 1)."""
    shifted = [b - np.trace(b) / d * np.eye(d) for b in hermitian_basis(d)]
    sub = HermSubspace.span(shifted, d)
    assert sub.dim == d * d - 1
    return list(sub.matrices())


# ---------------------------------------------------------------------------
# subspaces of the Hermitian space
# ---------------------------------------------------------------------------

def _orthonormal_rows(rows: np.ndarray, rtol: float) -> np.ndarray:
    """Rank-revealing orthonormalization of the row space."""
    if rows.size == 0:
        return rows.reshape(0, rows.shape[-1] if rows.ndim == 2 else 0)
    _, s, vt = np.linalg.svd(rows, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.empty((0, rows.shape[1]))
    keep = s > rtol * s[0]
    return vt[keep]


class HermSubspace:
    """A real-linear subspace of d x d Hermitian matrices.

    Stored as an orthonormal (under the trace inner product) stack of real
    coordinate vectors; immutable after construction.
    """

    __slots__ = ("ambient", "vecs", "_mats")

    def __init__(self, ambient: int, vecs: np.ndarray):
        self.ambient = int(ambient)
        v = np.atleast_2d(np.asarray(vecs, dtype=np.float64))
        if v.size == 0:
            v = v.reshape(0, self.ambient ** 2)
        if v.shape[1] != self.ambient ** 2:
            raise DimensionMismatch(
                f"coordinate length {v.shape[1]} != {self.ambient}^2")
        self.vecs = v
        self._mats = None

    # -- constructors -------------------------------------------------------

    @classmethod
    def span(cls, mats: Iterable[np.ndarray], ambient: int | None = None,
             rtol: float | None = None) -> "HermSubspace":
        mats = [herm_part(m) for m in mats]
        if ambient is None:
            if not mats:
                raise DimensionMismatch("empty span needs an explicit ambient dim")
            ambient = mats[0].shape[0]
        if not mats:
            return cls.zero(ambient)
        rows = vectorize_stack(np.stack(mats))
        rtol = tolerances.rank_rtol if rtol is None else rtol
        return cls(ambient, _orthonormal_rows(rows, rtol))

    @classmethod
    def zero(cls, ambient: int) -> "HermSubspace":
        return cls(ambient, np.empty((0, ambient ** 2)))

    @classmethod
    def full(cls, ambient: int) -> "HermSubspace":
        return cls(ambient, np.eye(ambient ** 2))

    # -- basic queries -------------------------------------------------------

    @property
    def dim(self) -> int:
        return self.vecs.shape[0]

    def matrices(self) -> np.ndarray:
        """Basis as a (dim, d, d) complex stack."""
        if self._mats is None:
            self._mats = devectorize_stack(self.vecs, self.ambient)
        return self._mats

    def project(self, x) -> np.ndarray:
        """Orthogonal projection of a Hermitian operator onto the subspace."""
        v = vectorize(x)
        return devectorize(self.vecs.T @ (self.vecs @ v), self.ambient)

    def project_vec(self, v: np.ndarray) -> np.ndarray:
        return self.vecs.T @ (self.vecs @ v)

    def contains(self, x, rtol: float | None = None) -> bool:
        tol = tolerances.num_rtol if rtol is None else rtol
        v = vectorize(x)
        resid = v - self.project_vec(v)
        return bool(np.linalg.norm(resid) <= tol * max(np.linalg.norm(v), 1.0))

    # -- lattice operations --------------------------------------------------

    def orthocomplement(self) -> "HermSubspace":
        D = self.ambient ** 2
        if self.dim == 0:
            return HermSubspace(self.ambient, np.eye(D))
        _, s, vt = np.linalg.svd(self.vecs, full_matrices=True)
        return HermSubspace(self.ambient, vt[self.dim:])

    def add(self, other: "HermSubspace") -> "HermSubspace":
        self._check_compatible(other)
        rows = np.vstack([self.vecs, other.vecs])
        return HermSubspace(self.ambient, _orthonormal_rows(rows, tolerances.rank_rtol))

    def intersect(self, other: "HermSubspace") -> "HermSubspace":
        self._check_compatible(other)
        return self.orthocomplement().add(other.orthocomplement()).orthocomplement()

    def compress(self, p: np.ndarray, rtol: float | None = None) -> "HermSubspace":
        """The subspace {p x p : x in V} expressed on the corner (rank(p) dims)."""
        iso = corner_isometry(p)
        r = iso.shape[1]
        if self.dim == 0:
            return HermSubspace.zero(r)
        comp = np.einsum("ai,kab,bj->kij", np.conj(iso), self.matrices(), iso)
        return HermSubspace.span(list(comp), r, rtol=rtol)

    def same_as(self, other: "HermSubspace", rtol: float | None = None) -> bool:
        if self.ambient != other.ambient or self.dim != other.dim:
            return False
        tol = tolerances.num_rtol if rtol is None else rtol
        pa = self.vecs.T @ self.vecs
        pb = other.vecs.T @ other.vecs
        return bool(np.linalg.norm(pa - pb) <= tol * max(1.0, self.dim))

    def _check_compatible(self, other: "HermSubspace") -> None:
        if self.ambient != other.ambient:
            raise DimensionMismatch(
                f"ambient dims differ: {self.ambient} vs {other.ambient}")

    def __repr__(self) -> str:  # pragma: no cover
        return f"<HermSubspace dim {self.dim} of {self.ambient}x{self.ambient} Hermitians>"


def corner_isometry(p: np.ndarray, rtol: float | None = None) -> np.ndarray:
    """Isometry V with V V^dag = p and V^dag V = I_rank(p); columns ordered
    deterministically by the eigendecomposition of p."""
    m = as_operator(p)
    w, u = eigh(m)
    cols = u[:, w > 0.5]
    return np.ascontiguousarray(cols)


def compress_operator(x: np.ndarray, iso: np.ndarray) -> np.ndarray:
    """Corner compression V^dag x V for an isometry from :func:`corner_isometry`."""
    return dagger(iso) @ as_operator(x) @ iso


def expand_operator(x: np.ndarray, iso: np.ndarray) -> np.ndarray:
    """Embed a corner operator back into the ambient space."""
    return iso @ as_operator(x) @ dagger(iso)


def projection_join(ps: Sequence[np.ndarray], rtol: float = 1e-9) -> np.ndarray:
    """Projection onto the sum of the ranges."""
    mats = [as_operator(p) for p in ps]
    if not mats:
        raise ValueError("need at least one projection")
    stacked = np.hstack(mats)
    u, s, _ = np.linalg.svd(stacked, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros_like(mats[0])
    cols = u[:, s > rtol * s[0]]
    return herm_part(cols @ dagger(cols))
