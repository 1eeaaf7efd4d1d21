"""Ground-truth engine for small chains: the vectorized Liouvillian, exact
propagation, stationary states, and dense-matrix observables.

Dense superoperator matrices are built for up to 6 sites; 7 and 8 sites
use a matrix-free application acting directly on the 2^n x 2^n density
matrix. The vectorization convention matches :mod:`ttosim.channels`:
row-major stacking, ``vec(A rho B) = (A ⊗ B^T) vec(rho)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

from .channels import LindbladSpec
from .evolution import HamiltonianSpec
from .linalg import arnoldi_expv
from .models import PAULI_Y, PAULI_Z, S_MINUS, S_PLUS
from .observables import MeasurementRecord, _entropy

_DENSE_MAX_SITES = 6
_APPLY_MAX_SITES = 8


def embed_ops(ops: dict[int, np.ndarray], n_sites: int) -> scipy.sparse.spmatrix:
    """Sparse 2^n embedding of a product of single-site operators
    (1-based sites)."""
    out = scipy.sparse.identity(1, dtype=np.complex128, format="csr")
    for j in range(1, n_sites + 1):
        op = ops.get(j)
        blk = scipy.sparse.csr_matrix(op) if op is not None else \
            scipy.sparse.identity(2, dtype=np.complex128, format="csr")
        out = scipy.sparse.kron(out, blk, format="csr")
    return out


def hamiltonian_matrix(ham: HamiltonianSpec, sparse: bool = True):
    """Assembled Hamiltonian, sparse CSR or dense."""
    dim = 2**ham.n_sites
    h = scipy.sparse.csr_matrix((dim, dim), dtype=np.complex128)
    for t in ham.terms:
        h = h + t.coefficient * embed_ops(dict(zip(t.sites, t.operators)),
                                          ham.n_sites)
    return h if sparse else h.toarray()


@dataclass
class DenseLiouvillian:
    """Vectorized Lindblad generator with a dense-sparse matrix (<= 6
    sites) and/or a matrix-free apply closure (<= 8 sites)."""

    n_sites: int
    ham: HamiltonianSpec
    lind: LindbladSpec
    matrix: scipy.sparse.spmatrix | None
    apply: Callable[[np.ndarray], np.ndarray]
    _propagators: dict = None

    @property
    def dim(self) -> int:
        return 4**self.n_sites

    def propagator(self, dt: float) -> np.ndarray:
        """Dense exp(L dt); cached per dt (dim <= 1024 only)."""
        if self.dim > 1024:
            raise ValueError("dense propagator limited to 4^n <= 1024")
        if self._propagators is None:
            self._propagators = {}
        key = float(dt)
        if key not in self._propagators:
            self._propagators[key] = scipy.linalg.expm(self.matrix.toarray() * dt)
        return self._propagators[key]


def _local_left(op: np.ndarray, site0: int, rho: np.ndarray, n: int) -> np.ndarray:
    dim = 2**n
    a, b = 2**site0, 2 ** (n - site0 - 1)
    r = rho.reshape(a, 2, b * dim)
    out = np.tensordot(op, r, axes=(1, 1)).transpose(1, 0, 2)
    return out.reshape(dim, dim)


def _local_right(op: np.ndarray, site0: int, rho: np.ndarray, n: int) -> np.ndarray:
    dim = 2**n
    a, b = 2**site0, 2 ** (n - site0 - 1)
    r = rho.reshape(dim * a, 2, b)
    out = np.tensordot(r, op, axes=(1, 0)).transpose(0, 2, 1)
    return out.reshape(dim, dim)


def build_liouvillian(ham: HamiltonianSpec, lind: LindbladSpec) -> DenseLiouvillian:
    """Lindblad superoperator ``i(1 (x) conj(H) - H (x) 1) + gamma sum D``
    acting on row-major vectorized density matrices."""
    n = ham.n_sites
    if n > _APPLY_MAX_SITES:
        raise ValueError(f"exact oracle limited to {_APPLY_MAX_SITES} sites")
    lind.validate_sites(n)
    dim = 2**n
    h_dense = hamiltonian_matrix(ham, sparse=False)
    gamma = lind.rate
    jump_local = [(j - 1, np.asarray(op, dtype=np.complex128))
                  for j, ops in sorted(lind.sites.items()) for op in ops]
    jump_local = [(site0, op, op.conj().T @ op) for site0, op in jump_local]

    def apply(vec: np.ndarray) -> np.ndarray:
        rho = vec.reshape(dim, dim)
        out = 1j * (rho @ h_dense - h_dense @ rho)
        for site0, op, ldl in jump_local:
            t = _local_left(op, site0, rho, n)
            t = _local_right(op.conj().T, site0, t, n)
            t = t - 0.5 * _local_left(ldl, site0, rho, n)
            t = t - 0.5 * _local_right(ldl, site0, rho, n)
            out += gamma * t
        return out.reshape(vec.shape)

    matrix = None
    if n <= _DENSE_MAX_SITES:
        eye = scipy.sparse.identity(dim, dtype=np.complex128, format="csr")
        hs = scipy.sparse.csr_matrix(h_dense)
        mat = 1j * (scipy.sparse.kron(eye, hs.conj(), format="csr")
                    - scipy.sparse.kron(hs, eye, format="csr"))
        for site0, op, _ in jump_local:
            le = embed_ops({site0 + 1: op}, n)
            ldl_e = (le.conj().T @ le).tocsr()
            mat = mat + gamma * (
                scipy.sparse.kron(le, le.conj(), format="csr")
                - 0.5 * scipy.sparse.kron(ldl_e, eye, format="csr")
                - 0.5 * scipy.sparse.kron(eye, ldl_e.T, format="csr"))
        matrix = mat.tocsr()

        def apply(vec: np.ndarray) -> np.ndarray:  # noqa: F811 (sparse path)
            return matrix @ vec

    return DenseLiouvillian(n_sites=n, ham=ham, lind=lind,
                            matrix=matrix, apply=apply)


def _hermitize(rho: np.ndarray) -> np.ndarray:
    return (rho + rho.conj().T) / 2


def evolve_exact(liou: DenseLiouvillian, rho0: np.ndarray, t: float,
                 tol: float = 1e-10) -> np.ndarray:
    """exp(L t) applied to rho0: dense propagator for 4^n <= 1024,
    adaptive Arnoldi stepping above."""
    dim = 2**liou.n_sites
    rho0 = np.asarray(rho0, dtype=np.complex128)
    if rho0.shape != (dim, dim):
        raise ValueError(f"rho shape {rho0.shape} != ({dim}, {dim})")
    if t == 0:
        return rho0.copy()
    vec = rho0.reshape(-1)
    if liou.dim <= 1024:
        out = liou.propagator(t) @ vec
    else:
        out = arnoldi_expv(liou.apply, vec, t, tol=tol)
    return _hermitize(out.reshape(dim, dim))


def exact_trajectory(liou: DenseLiouvillian, rho0: np.ndarray,
                     times: Sequence[float], tol: float = 1e-10):
    """Yield (t, rho(t)) along increasing times, stepping incrementally."""
    dim = 2**liou.n_sites
    vec = np.asarray(rho0, dtype=np.complex128).reshape(-1)
    prev = 0.0
    for t in times:
        dt = t - prev
        if dt < 0:
            raise ValueError("times must be non-decreasing")
        if dt > 0:
            if liou.dim <= 1024:
                vec = liou.propagator(dt) @ vec
            else:
                vec = arnoldi_expv(liou.apply, vec, dt, tol=tol)
        prev = t
        yield t, _hermitize(vec.reshape(dim, dim))


def stationary_state(liou: DenseLiouvillian, tol: float = 1e-8,
                     guess: np.ndarray | None = None) -> np.ndarray:
    """Unique stationary density matrix with ``L vec(rho) = 0``.

    Small chains use the full spectrum, mid sizes ARPACK shift-invert on
    the sparse matrix, and 7-8 sites long-time Krylov propagation from the
    maximally mixed state (or ``guess``). A degenerate null space raises
    with the multiplicity.
    """
    n = liou.n_sites
    dim = 2**n

    def finish(vec: np.ndarray) -> np.ndarray:
        rho = _hermitize(vec.reshape(dim, dim))
        tr = np.trace(rho)
        if abs(tr) < 1e-12:
            raise ValueError("null vector has vanishing trace")
        rho = rho / tr
        wmin = float(np.linalg.eigvalsh(rho).min())
        if wmin < -1e-9:
            raise ValueError(f"stationary state not positive (min eig {wmin:.3e})")
        resid = float(np.linalg.norm(liou.apply(rho.reshape(-1))))
        if resid > tol:
            raise ValueError(f"stationary residual {resid:.3e} above {tol:.1e}")
        return rho

    if liou.dim <= 256:
        w, v = scipy.linalg.eig(liou.matrix.toarray())
        null = np.where(np.abs(w) < 1e-9)[0]
        if null.size == 0:
            raise ValueError("no null eigenvalue found")
        if null.size > 1:
            raise ValueError(f"degenerate null space (multiplicity {null.size})")
        return finish(v[:, null[0]])
    if liou.matrix is not None:
        k = 3
        w, v = scipy.sparse.linalg.eigs(liou.matrix.tocsc(), k=k, sigma=1e-6,
                                        which="LM")
        null = np.where(np.abs(w) < 1e-9)[0]
        if null.size == 0:
            raise ValueError("no null eigenvalue found near zero")
        if null.size > 1:
            raise ValueError(f"degenerate null space (multiplicity {null.size})")
        return finish(v[:, null[0]])
    # Matrix-free: relax toward the fixed point. The propagation tolerance
    # can stay loose (any approximate propagator still contracts onto the
    # NESS); only the final residual certifies the answer.
    if guess is not None:
        vec = np.asarray(guess, dtype=np.complex128).reshape(-1).copy()
    else:
        vec = (np.eye(dim, dtype=np.complex128) / dim).reshape(-1)
    t_step = 4.0
    for _ in range(400):
        resid = float(np.linalg.norm(liou.apply(vec)))
        if resid < tol:
            return finish(vec)
        step_tol = 1e-10 if resid < 30 * tol else 1e-6
        vec = arnoldi_expv(liou.apply, vec, t_step, tol=step_tol, m=40)
        vec /= np.abs(np.vdot(np.eye(dim).reshape(-1), vec))
        t_step = min(t_step * 1.4, 50.0)
    raise ValueError("stationary state iteration did not converge")


# ---------------------------------------------------------------------------
# Dense observables (comparison targets for the tree-side measurements)
# ---------------------------------------------------------------------------


def left_right_split(n_sites: int) -> tuple[int, int]:
    n_left = (n_sites + 1) // 2
    return n_left, n_sites - n_left


def dense_z_profile(rho: np.ndarray, n: int) -> np.ndarray:
    tr = np.trace(rho).real
    return np.array([
        (np.trace(embed_ops({j: PAULI_Z}, n) @ rho)).real / tr
        for j in range(1, n + 1)])


def dense_current_profile(rho: np.ndarray, n: int) -> np.ndarray:
    tr = np.trace(rho).real
    out = []
    for j in range(1, n):
        op = embed_ops({j: S_MINUS, j + 1: S_PLUS}, n)
        out.append(4.0 * (np.trace(op @ rho) / tr).imag)
    return np.array(out)


def dense_entropies(rho: np.ndarray, n: int) -> tuple[float, float, float]:
    n_l, n_r = left_right_split(n)
    dl, dr = 2**n_l, 2**n_r
    tr = np.trace(rho).real
    r4 = (rho / tr).reshape(dl, dr, dl, dr)
    rho_l = np.einsum("arbr->ab", r4)
    rho_r = np.einsum("xaxb->ab", r4)
    s_l = _entropy(np.linalg.eigvalsh(_hermitize(rho_l)))
    s_r = _entropy(np.linalg.eigvalsh(_hermitize(rho_r)))
    s_t = _entropy(np.linalg.eigvalsh(_hermitize(rho / tr)))
    return s_l, s_r, s_t


def dense_log_negativity(rho: np.ndarray, n: int) -> float:
    n_l, n_r = left_right_split(n)
    dl, dr = 2**n_l, 2**n_r
    tr = np.trace(rho).real
    r4 = (rho / tr).reshape(dl, dr, dl, dr)
    pt = r4.transpose(2, 1, 0, 3).reshape(dl * dr, dl * dr)
    w = np.linalg.eigvalsh(_hermitize(pt))
    return float(np.log(np.sum(np.abs(w))))


def dense_observables(rho: np.ndarray, t: float = 0.0) -> MeasurementRecord:
    """MeasurementRecord mirror computed from a dense density matrix."""
    dim = rho.shape[0]
    n = int(round(np.log2(dim)))
    if 2**n != dim:
        raise ValueError(f"dimension {dim} is not a power of two")
    if n > _APPLY_MAX_SITES:
        raise ValueError("dense observables limited to 8 sites")
    s_l, s_r, s_t = dense_entropies(rho, n)
    return MeasurementRecord(
        t=float(t),
        z=dense_z_profile(rho, n),
        current=dense_current_profile(rho, n),
        s_left=s_l, s_right=s_r, s_total=s_t,
        mutual_information=s_l + s_r - s_t,
        log_negativity=dense_log_negativity(rho, n),
        trace=float(np.trace(rho).real),
        max_chi=0, kraus_dim=0, cumulative_truncation=0.0)


def export_reference_trajectory(liou: DenseLiouvillian, rho0: np.ndarray,
                                times: Sequence[float], path) -> list:
    """Golden-file export: exact-oracle records in the simulation's CSV
    schema, for regression comparisons against tree-side runs."""
    from .recordsio import write_records
    records = [dense_observables(rho, t=t)
               for t, rho in exact_trajectory(liou, rho0, times)]
    write_records(path, records, liou.n_sites)
    return records


def two_qubit_eof(rho: np.ndarray) -> float:
    """Closed-form two-qubit entanglement of formation (concurrence based),
    in natural-log units."""
    if rho.shape != (4, 4):
        raise ValueError("two_qubit_eof needs a 4x4 density matrix")
    rho = _hermitize(rho) / np.trace(rho).real
    yy = np.kron(PAULI_Y, PAULI_Y)
    r = rho @ yy @ rho.conj() @ yy
    lam = np.sqrt(np.clip(np.real(np.linalg.eigvals(r)), 0.0, None))
    lam = np.sort(lam)[::-1]
    conc = max(0.0, lam[0] - lam[1] - lam[2] - lam[3])
    x = (1.0 + np.sqrt(max(0.0, 1.0 - conc**2))) / 2.0
    if x <= 0 or x >= 1:
        ent_bits = 0.0
    else:
        ent_bits = -x * np.log2(x) - (1 - x) * np.log2(1 - x)
    return float(ent_bits * np.log(2.0))


def schrodinger_trajectory(ham: HamiltonianSpec, psi0: np.ndarray,
                           times: Sequence[float]):
    """Exact closed-system evolution via one eigendecomposition."""
    h = hamiltonian_matrix(ham, sparse=False)
    w, v = np.linalg.eigh(_hermitize(h))
    c0 = v.conj().T @ np.asarray(psi0, dtype=np.complex128).ravel()
    for t in times:
        yield t, v @ (np.exp(-1j * w * t) * c0)
