"""Local dissipators, their Kraus decompositions, and the application of
the resulting channels to a tree tensor operator.

Vectorization convention (frozen throughout the package): row-major
stacking, ``vec(A rho B) = (A ⊗ B^T) vec(rho)``, i.e. ``vec`` is the
C-order flatten of the matrix. With that convention the superoperator of
the dissipative part of the master equation reads, per jump operator L,

    L ⊗ conj(L) - 1/2 (L†L ⊗ 1 + 1 ⊗ (L†L)^T).
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np

from .linalg import hermitian_eig, matrix_exp
from .tree import TTOState, compress, route_extra_to_root


@dataclass
class LindbladSpec:
    """Per-site jump operators with one global rate.

    ``sites`` maps 1-based site indices to lists of d x d jump operators;
    relative strengths (like drive asymmetries) go into the operators.
    """

    rate: float
    sites: dict[int, list[np.ndarray]] = field(default_factory=dict)

    def __post_init__(self):
        if self.rate < 0:
            raise ValueError(f"rate must be >= 0, got {self.rate}")
        self.sites = {
            int(j): [np.asarray(op, dtype=np.complex128) for op in ops]
            for j, ops in self.sites.items()
        }
        for j, ops in self.sites.items():
            if j < 1:
                raise ValueError(f"site index {j} must be >= 1")
            for op in ops:
                if not np.all(np.isfinite(op)):
                    raise ValueError(f"non-finite jump operator on site {j}")

    def validate_sites(self, n_sites: int) -> None:
        for j in self.sites:
            if j > n_sites:
                raise ValueError(f"jump operator on site {j} > chain length {n_sites}")


@dataclass
class KrausSet:
    """Kraus operators realizing one local channel exp(D_j * dt).

    The Choi eigenvalues are absorbed into the operators, ordered by
    descending weight, and the set is renormalized so that
    ``sum K†K = 1`` holds to machine precision.
    """

    site: int
    operators: list[np.ndarray]

    def completeness_defect(self) -> float:
        d = self.operators[0].shape[0]
        m = sum(k.conj().T @ k for k in self.operators)
        return float(np.linalg.norm(m - np.eye(d)))

    def as_tensor(self) -> np.ndarray:
        """Stack into a (kappa, d_out, d_in) channel tensor."""
        return np.stack(self.operators, axis=0)

    def apply_dense(self, rho: np.ndarray) -> np.ndarray:
        return sum(k @ rho @ k.conj().T for k in self.operators)


def build_dissipator(ops: list[np.ndarray], gamma: float) -> np.ndarray:
    """Superoperator of the dissipative generator for one site.

    Returns ``gamma * sum_a [L_a (x) conj(L_a) - (L_a†L_a (x) 1 +
    1 (x) (L_a†L_a)^T)/2]`` as a d^2 x d^2 matrix in the row-major
    vectorization convention.
    """
    if gamma < 0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    ops = [np.asarray(op, dtype=np.complex128) for op in ops]
    if not ops:
        return np.zeros((1, 1), dtype=np.complex128)
    d = ops[0].shape[0]
    if d > 4:
        raise ValueError("local dimension above 4 is not supported")
    eye = np.eye(d, dtype=np.complex128)
    out = np.zeros((d * d, d * d), dtype=np.complex128)
    for op in ops:
        if op.shape != (d, d):
            raise ValueError(f"jump operator shape {op.shape} != ({d}, {d})")
        ldl = op.conj().T @ op
        out += np.kron(op, op.conj())
        out -= 0.5 * (np.kron(ldl, eye) + np.kron(eye, ldl.T))
    return gamma * out


def kraus_from_channel(superop: np.ndarray, dt: float,
                       weight_cutoff: float = 1e-12, site: int = 0) -> KrausSet:
    """Kraus operators of ``exp(superop * dt)`` via its Choi eigensystem.

    The channel matrix is reshuffled into the Choi matrix, whose
    eigenvectors (reshaped) give the Kraus operators weighted by the square
    roots of the eigenvalues. Eigenvalues below ``weight_cutoff`` relative
    to the largest are dropped; negative ones beyond -1e-8 signal an
    invalid generator and raise.
    """
    if dt <= 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    superop = np.asarray(superop, dtype=np.complex128)
    d2 = superop.shape[0]
    d = int(round(np.sqrt(d2)))
    if d * d != d2 or superop.shape != (d2, d2):
        raise ValueError(f"superoperator shape {superop.shape} is not (d^2, d^2)")
    channel = matrix_exp(superop * dt)
    # (A (x) conj(A))_{(ab),(cd)} = A_ac conj(A)_bd; the Choi matrix groups
    # (ac) vs (bd), so eigenvectors are row-major vec'd Kraus operators.
    choi = channel.reshape(d, d, d, d).transpose(0, 2, 1, 3).reshape(d2, d2)
    w, v = hermitian_eig(choi, tol=1e-8)
    wmax = float(w[-1])
    if wmax <= 0:
        raise ValueError("channel has no positive Choi weight")
    if float(w[0]) < -1e-8:
        raise ValueError(f"Choi matrix not positive (min eigenvalue {w[0]:.3e}); "
                         "not a valid Lindblad generator")
    kraus = []
    for idx in range(d2 - 1, -1, -1):
        if w[idx] <= weight_cutoff * wmax:
            break
        kraus.append(np.sqrt(w[idx]) * v[:, idx].reshape(d, d))
    # Restore exact completeness after the cutoff.
    m = sum(k.conj().T @ k for k in kraus)
    mw, mv = np.linalg.eigh((m + m.conj().T) / 2)
    if np.any(mw <= 0):
        raise ValueError("channel completeness sum is singular")
    m_inv_sqrt = (mv / np.sqrt(mw)) @ mv.conj().T
    kraus = [k @ m_inv_sqrt for k in kraus]
    ks = KrausSet(site=site, operators=kraus)
    recon = sum(np.kron(k, k.conj()) for k in kraus)
    if np.linalg.norm(recon - channel) > 1e-10 * max(1.0, np.linalg.norm(channel)):
        raise ValueError("Kraus set does not reconstruct the channel")
    if ks.completeness_defect() > 1e-12:
        raise ValueError("Kraus completeness violated after renormalization")
    return ks


class _KrausCache:
    """Channels are time-independent, so each (site ops, gamma, dt) pair is
    decomposed exactly once per process."""

    def __init__(self):
        self._lock = threading.Lock()
        self._data: dict = {}

    def get(self, ops: list[np.ndarray], gamma: float, dt: float,
            weight_cutoff: float, site: int) -> KrausSet:
        key = (tuple(op.tobytes() for op in ops), ops[0].shape[0],
               float(gamma), float(dt), float(weight_cutoff))
        with self._lock:
            hit = self._data.get(key)
        if hit is None:
            hit = kraus_from_channel(build_dissipator(ops, gamma), dt,
                                     weight_cutoff, site=site)
            with self._lock:
                self._data[key] = hit
        return KrausSet(site=site, operators=hit.operators)


_KRAUS_CACHE = _KrausCache()


def attach_kraus(state: TTOState, site: int, kraus: KrausSet) -> TTOState:
    """Contract the stacked Kraus tensor into the physical leg of ``site``,
    leaving the channel leg as a trailing fourth axis on the owning node."""
    owner, ax = state.topo.site_owner[site - 1]
    state.install_gauge(owner)
    t = state.tensors[owner]
    kt = kraus.as_tensor()                       # (kappa, out, in)
    z = np.tensordot(t, kt, axes=(ax, 2))        # (..., kappa, out)
    z = np.moveaxis(z, -1, ax)                   # put out back in place
    state.tensors[owner] = z                     # channel leg is last
    state._bump(owner)
    return state


def apply_dissipative_step(state: TTOState, spec: LindbladSpec, dt: float,
                           chi_max: int, kraus_max: int, cutoff: float = 0.0,
                           weight_cutoff: float = 1e-12,
                           ) -> tuple[TTOState, float]:
    """Apply every local channel ``exp(D_j dt)`` for one Trotter step.

    Sites are processed in ascending order (disjoint local channels
    commute, so the order is a pure determinism choice); the channel leg is
    routed to the root and fused into the Kraus leg after each site, and a
    single compression runs after all sites.
    """
    spec.validate_sites(state.n_sites)
    if spec.rate == 0.0 or not spec.sites:
        return state, 0.0
    for site in sorted(spec.sites):
        ops = spec.sites[site]
        if not ops:
            continue
        kraus = _KRAUS_CACHE.get(ops, spec.rate, dt, weight_cutoff, site)
        attach_kraus(state, site, kraus)
        owner, _ = state.topo.site_owner[site - 1]
        route_extra_to_root(state, owner)
    return compress(state, chi_max, kraus_max, cutoff)
