import numpy as np
import pytest

from ttosim.linalg import svd_exact
from ttosim.tree import NODE, SITE, TTOState, topology


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def random_complex(rng, *shape):
    return rng.normal(size=shape) + 1j * rng.normal(size=shape)


def tto_from_dense(rho: np.ndarray, n: int) -> TTOState:
    """Exact TTO for a small dense density matrix (test bridge).

    Eigendecomposes rho into a purification (d^n x K) and tree-decomposes
    that matrix with exact SVDs; the result has the gauge center at the
    root and K = rank(rho).
    """
    dim = 2**n
    assert rho.shape == (dim, dim)
    w, v = np.linalg.eigh((rho + rho.conj().T) / 2)
    keep = w > 1e-14 * max(w.max(), 1.0)
    psi = v[:, keep] * np.sqrt(w[keep])          # (dim, K)
    topo = topology(n)
    tensors = [None] * topo.n_nodes

    def subtree_dim(child):
        kind, idx = child
        if kind == SITE:
            return 2
        if kind == NODE:
            lo, hi = topo.nodes[idx].site_range
            return 2 ** (hi - lo)
        return 1

    def decompose(node: int, block: np.ndarray) -> None:
        # block: (d_subtree, chi_parent) with orthonormal-spanning columns
        c1, c2 = topo.nodes[node].children
        d1, d2 = subtree_dim(c1), subtree_dim(c2)
        chi = block.shape[1]
        t = block.reshape(d1, d2, chi)
        if c1[0] == NODE:
            u, s, vh = svd_exact(t.reshape(d1, d2 * chi))
            keep = s > 1e-14 * max(s[0], 1e-300)
            u, s, vh = u[:, keep], s[keep], vh[keep]
            decompose(c1[1], u)
            t = (s[:, None] * vh).reshape(-1, d2, chi)
        k1 = t.shape[0]
        if c2[0] == NODE:
            m = t.transpose(1, 0, 2).reshape(d2, k1 * chi)
            u, s, vh = svd_exact(m)
            keep = s > 1e-14 * max(s[0], 1e-300)
            u, s, vh = u[:, keep], s[keep], vh[keep]
            decompose(c2[1], u)
            t = (s[:, None] * vh).reshape(-1, k1, chi).transpose(1, 0, 2)
        tensors[node] = np.ascontiguousarray(t)

    decompose(0, psi)
    return TTOState(n, tensors, gauge_center=0)


def tto_from_pure(psi: np.ndarray, n: int) -> TTOState:
    psi = np.asarray(psi, dtype=np.complex128).ravel()
    return tto_from_dense(np.outer(psi, psi.conj()), n)
