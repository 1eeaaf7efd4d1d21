"""Dense complex linear-algebra kernels: labelled tensors, contraction,
truncated SVD, Hermitian eigensolves, small matrix exponentials and Krylov
propagators.

Everything here is physics-agnostic. Tensors carry ordered, named legs and
store their data row-major over the declared leg order, so every reshape is
an explicit permute+fuse and results are reproducible bit-for-bit for a
fixed thread count.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg


class KrylovError(RuntimeError):
    """Krylov iteration failed to reach the requested tolerance."""


# ---------------------------------------------------------------------------
# Labelled dense tensors
# ---------------------------------------------------------------------------


@dataclass
class DenseTensor:
    """Multi-leg complex array with named legs.

    Parameters
    ----------
    data : ndarray
        Complex array; ``data.shape`` must match the leg dimensions in order.
    labels : sequence of str
        One unique label per leg.
    """

    data: np.ndarray
    labels: tuple[str, ...]

    def __init__(self, data: np.ndarray, labels: Sequence[str]):
        data = np.asarray(data, dtype=np.complex128)
        labels = tuple(labels)
        if data.ndim != len(labels):
            raise ValueError(
                f"{data.ndim} axes but {len(labels)} labels: {labels}")
        if len(set(labels)) != len(labels):
            raise ValueError(f"leg labels not unique: {labels}")
        self.data = data
        self.labels = labels

    @property
    def legs(self) -> list[tuple[str, int]]:
        return list(zip(self.labels, self.data.shape))

    def axis(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise KeyError(f"no leg labelled {label!r} in {self.labels}") from None

    def dim(self, label: str) -> int:
        return self.data.shape[self.axis(label)]

    def conj(self) -> "DenseTensor":
        return DenseTensor(self.data.conj(), self.labels)

    def relabel(self, mapping: dict[str, str]) -> "DenseTensor":
        return DenseTensor(self.data, tuple(mapping.get(l, l) for l in self.labels))

    def transpose(self, labels: Sequence[str]) -> "DenseTensor":
        """Reorder legs into the given label order (explicit permute)."""
        perm = [self.axis(l) for l in labels]
        return DenseTensor(self.data.transpose(perm), tuple(labels))

    def to_matrix(self, row_labels: Sequence[str]) -> np.ndarray:
        """Permute+fuse into a matrix with ``row_labels`` fused as rows."""
        row_labels = list(row_labels)
        col_labels = [l for l in self.labels if l not in row_labels]
        t = self.transpose(row_labels + col_labels)
        nrow = int(np.prod([t.data.shape[i] for i in range(len(row_labels))], initial=1))
        return t.data.reshape(nrow, -1)

    def norm(self) -> float:
        return float(np.linalg.norm(self.data))


def contract(a: DenseTensor, b: DenseTensor,
             pairs: Sequence[tuple[str, str]]) -> DenseTensor:
    """Contract two tensors over the given ``(label_a, label_b)`` leg pairs.

    The result carries the uncontracted legs of ``a`` followed by those of
    ``b``; values are sums over the paired indices.
    """
    ax_a = [a.axis(la) for la, _ in pairs]
    ax_b = [b.axis(lb) for _, lb in pairs]
    for (la, lb), ia, ib in zip(pairs, ax_a, ax_b):
        if a.data.shape[ia] != b.data.shape[ib]:
            raise ValueError(
                f"dimension mismatch: {la!r} has {a.data.shape[ia]}, "
                f"{lb!r} has {b.data.shape[ib]}")
    out = np.tensordot(a.data, b.data, axes=(ax_a, ax_b))
    keep_a = [l for i, l in enumerate(a.labels) if i not in ax_a]
    keep_b = [l for i, l in enumerate(b.labels) if i not in ax_b]
    clash = set(keep_a) & set(keep_b)
    if clash:
        raise ValueError(f"result would carry duplicate labels {sorted(clash)}")
    return DenseTensor(out, tuple(keep_a + keep_b))


# ---------------------------------------------------------------------------
# SVD with truncation
# ---------------------------------------------------------------------------


@dataclass
class SvdResult:
    """Truncated SVD ``t = left * diag(s) * right`` over a leg bipartition."""

    left_isometry: DenseTensor
    singular_values: np.ndarray
    right_isometry: DenseTensor
    discarded_weight: float


def _svd_stable(mat: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """SVD falling back to the slower gesvd driver when gesdd fails."""
    try:
        return np.linalg.svd(mat, full_matrices=False)
    except np.linalg.LinAlgError:
        return scipy.linalg.svd(mat, full_matrices=False, lapack_driver="gesvd")


def svd_truncate(mat: np.ndarray, max_rank: int, cutoff: float,
                 drop_zeros: bool = True,
                 ) -> tuple[np.ndarray, np.ndarray, np.ndarray, float]:
    """Raw-matrix truncated SVD used by all tree operations.

    Keeps at most ``max_rank`` singular values; values whose squared weight
    fraction is not above ``cutoff`` are dropped (at least one is always
    kept). With ``drop_zeros=False`` and ``cutoff == 0`` exact-zero values
    are retained up to ``max_rank`` (used by compression so that
    deliberately padded, still-unpopulated directions survive).

    Returns ``(U, s, Vh, discarded_weight)``; phases are fixed so the
    largest-magnitude entry of each left singular vector is real positive.
    """
    if not np.all(np.isfinite(mat)):
        raise ValueError("non-finite values in SVD input")
    if max_rank < 1:
        raise ValueError(f"max_rank must be >= 1, got {max_rank}")
    u, s, vh = _svd_stable(mat)
    total = float(np.sum(s**2))
    if total == 0.0:
        keep = 1 if drop_zeros else min(max_rank, s.size)
        discarded = 0.0
    else:
        if cutoff <= 0 and not drop_zeros:
            above = s.size
        else:
            above = int(np.sum(s**2 / total > cutoff))
        keep = max(1, min(max_rank, above))
        discarded = float(np.sum(s[keep:] ** 2) / total)
    u, s, vh = u[:, :keep], s[:keep], vh[:keep, :]
    # Phase convention: largest-|u| entry of each left vector real positive.
    idx = np.argmax(np.abs(u), axis=0)
    ph = u[idx, np.arange(keep)]
    ph = np.where(np.abs(ph) > 0, ph / np.abs(np.where(np.abs(ph) > 0, ph, 1.0)), 1.0)
    u = u / ph[None, :]
    vh = vh * ph[:, None]
    return u, s, vh, discarded


def svd_exact(mat: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Full (rank = min(shape)) SVD with the same phase convention."""
    u, s, vh, _ = svd_truncate(mat, max_rank=min(mat.shape), cutoff=-1.0)
    return u, s, vh


def truncated_svd(t: DenseTensor, row_legs: Sequence[str], max_rank: int,
                  cutoff: float = 0.0, new_label: str = "s") -> SvdResult:
    """Truncated SVD of a tensor over the ``row_legs`` | rest bipartition.

    The kept rank is ``min(max_rank, #values above the relative squared
    cutoff, matrix rank)``; ``discarded_weight`` is the squared weight
    fraction of the dropped singular values.
    """
    row_legs = list(row_legs)
    if not row_legs or len(row_legs) >= len(t.labels):
        raise ValueError("row_legs must be a nonempty strict subset of the legs")
    if cutoff < 0:
        raise ValueError(f"cutoff must be >= 0, got {cutoff}")
    col_legs = [l for l in t.labels if l not in row_legs]
    mat = t.to_matrix(row_legs)
    u, s, vh, discarded = svd_truncate(mat, max_rank, cutoff)
    k = s.size
    row_dims = [t.dim(l) for l in row_legs]
    col_dims = [t.dim(l) for l in col_legs]
    left = DenseTensor(u.reshape(*row_dims, k), tuple(row_legs) + (new_label,))
    right = DenseTensor(vh.reshape(k, *col_dims), (new_label,) + tuple(col_legs))
    return SvdResult(left, s, right, discarded)


# ---------------------------------------------------------------------------
# Hermitian eigensolve / exponentials / norms
# ---------------------------------------------------------------------------


def _as_matrix(m) -> np.ndarray:
    if isinstance(m, DenseTensor):
        if m.data.ndim != 2:
            raise ValueError("expected a 2-leg tensor")
        return m.data
    return np.asarray(m, dtype=np.complex128)


def hermitian_eig(m, tol: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """Eigensystem of a Hermitian matrix, eigenvalues ascending.

    The input is symmetrized as ``(m + m†)/2``; deviations beyond ``tol``
    (relative to the matrix norm) raise.
    """
    a = _as_matrix(m)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    scale = max(1.0, float(np.linalg.norm(a)))
    dev = float(np.linalg.norm(a - a.conj().T))
    if dev > tol * scale:
        raise ValueError(f"matrix not Hermitian: |m - m†| = {dev:.3e}")
    w, v = np.linalg.eigh((a + a.conj().T) / 2)
    idx = np.argmax(np.abs(v), axis=0)
    ph = v[idx, np.arange(v.shape[1])]
    ph = np.where(np.abs(ph) > 0, ph / np.abs(np.where(np.abs(ph) > 0, ph, 1.0)), 1.0)
    return w, v / ph[None, :]


_MATRIX_EXP_MAX_DIM = 16


def matrix_exp(m) -> np.ndarray:
    """Matrix exponential for small dense matrices (dimension <= 16).

    Larger exponentials must go through the Krylov propagators.
    """
    a = _as_matrix(m)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if a.shape[0] > _MATRIX_EXP_MAX_DIM:
        raise ValueError(
            f"matrix_exp is limited to {_MATRIX_EXP_MAX_DIM}x{_MATRIX_EXP_MAX_DIM}; "
            "use krylov_expv for larger problems")
    if not np.all(np.isfinite(a)):
        raise ValueError("non-finite entries")
    return scipy.linalg.expm(a)


def trace_norm(m) -> float:
    """Sum of singular values (the Schatten 1-norm)."""
    a = _as_matrix(m)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("non-finite entries")
    return float(np.sum(scipy.linalg.svdvals(a)))


def trace_norm_hermitian(m) -> float:
    """Trace norm of a Hermitian matrix via its eigenvalues (half the cost)."""
    a = _as_matrix(m)
    return float(np.sum(np.abs(np.linalg.eigvalsh((a + a.conj().T) / 2))))


# ---------------------------------------------------------------------------
# Krylov propagators
# ---------------------------------------------------------------------------


@dataclass
class KrylovInfo:
    converged: bool
    iterations: int
    residual: float
    breakdown: bool = False


def krylov_expv(apply: Callable[[np.ndarray], np.ndarray], v: np.ndarray,
                tau: complex, tol: float = 1e-10, max_iters: int = 30,
                ) -> tuple[np.ndarray, KrylovInfo]:
    """Lanczos approximation of ``exp(tau*A) v`` for Hermitian ``A``.

    ``apply`` must implement a Hermitian linear map on flattened vectors of
    the same shape as ``v``. On happy breakdown the Krylov space is exact
    and the current result is returned with ``breakdown=True``. Exceeding
    ``max_iters`` without meeting ``tol`` raises :class:`KrylovError`.
    """
    shape = v.shape
    v = np.asarray(v, dtype=np.complex128).ravel()
    beta0 = np.linalg.norm(v)
    if beta0 == 0.0:
        raise ValueError("krylov_expv needs a nonzero start vector")
    n = v.size
    m_max = min(max_iters, n)
    V = np.empty((m_max + 1, n), dtype=np.complex128)
    V[0] = v / beta0
    alphas: list[float] = []
    betas: list[float] = []
    breakdown = False
    y = None
    resid = np.inf
    j = 0
    while j < m_max:
        w = apply(V[j].reshape(shape)).ravel()
        alpha = float(np.real(np.vdot(V[j], w)))
        w = w - alpha * V[j]
        if j > 0:
            w = w - betas[-1] * V[j - 1]
        # Full reorthogonalization: the spaces are tiny, stability is cheap.
        w = w - V[: j + 1].T @ (V[: j + 1].conj() @ w)
        alphas.append(alpha)
        beta = float(np.linalg.norm(w))
        j += 1
        T = np.diag(alphas).astype(np.complex128)
        if j > 1:
            off = np.array(betas)
            T += np.diag(off, 1) + np.diag(off, -1)
        eT = scipy.linalg.expm(tau * T)
        y = eT[:, 0] * beta0
        if beta <= 1e-14 * max(1.0, beta0):
            breakdown = True
            resid = 0.0
            break
        resid = abs(beta * y[-1])
        if resid <= tol * max(beta0, 1e-300):
            betas.append(beta)
            break
        betas.append(beta)
        V[j] = w / beta
    info = KrylovInfo(converged=resid <= tol * max(beta0, 1e-300) or breakdown,
                      iterations=j, residual=float(resid), breakdown=breakdown)
    if not info.converged:
        raise KrylovError(
            f"Lanczos did not converge in {max_iters} iterations "
            f"(residual {resid:.3e}, tol {tol:.3e})")
    out = (V[: len(y)].T @ y).reshape(shape)
    return out, info


def arnoldi_expv(apply: Callable[[np.ndarray], np.ndarray], v: np.ndarray,
                 tau: complex, tol: float = 1e-9, m: int = 30,
                 max_substeps: int = 10000) -> np.ndarray:
    """Adaptive-substep Arnoldi approximation of ``exp(tau*A) v``.

    For general (non-Hermitian) maps; used by the exact-propagation paths
    where the generator is a Liouvillian. Substeps are shrunk until the
    per-step error estimate meets ``tol`` (scaled by the substep fraction).
    """
    shape = v.shape
    v = np.asarray(v, dtype=np.complex128).ravel()
    n = v.size
    m = min(m, n)
    done = 0.0
    dt = 1.0
    steps = 0
    while done < 1.0 - 1e-15:
        dt = min(dt, 1.0 - done)
        beta = np.linalg.norm(v)
        if beta == 0.0:
            break
        V = np.empty((m + 1, n), dtype=np.complex128)
        H = np.zeros((m + 1, m), dtype=np.complex128)
        V[0] = v / beta
        k = m
        happy = False
        for j in range(m):
            w = apply(V[j].reshape(shape)).ravel()
            h = V[: j + 1].conj() @ w
            w = w - V[: j + 1].T @ h
            # one re-orthogonalization pass
            h2 = V[: j + 1].conj() @ w
            w = w - V[: j + 1].T @ h2
            H[: j + 1, j] = h + h2
            hn = np.linalg.norm(w)
            H[j + 1, j] = hn
            if hn <= 1e-14 * max(1.0, beta):
                k = j + 1
                happy = True
                break
            V[j + 1] = w / hn
        while True:
            Hk = H[:k, :k]
            eH = scipy.linalg.expm(tau * dt * Hk)
            y = eH[:, 0] * beta
            if happy:
                err = 0.0
            else:
                err = abs(H[k, k - 1] * tau * dt * y[-1])
            if err <= tol * max(beta, 1e-300) * max(dt, 1e-3) or dt <= 1e-12:
                break
            dt *= 0.5
            steps += 1
            if steps > max_substeps:
                raise KrylovError("arnoldi_expv: substep limit exceeded")
        v = V[:k].T @ y
        done += dt
        steps += 1
        if steps > max_substeps:
            raise KrylovError("arnoldi_expv: substep limit exceeded")
        if err <= 0.1 * tol * max(beta, 1e-300) * max(dt, 1e-3):
            dt *= 1.5
    return v.reshape(shape)
