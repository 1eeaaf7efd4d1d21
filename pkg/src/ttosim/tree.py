"""Tree tensor operator state: a binary tree of isometries plus a root
tensor whose third leg (the Kraus leg) carries the statistical mixture.

One branch ``P`` of the operator is stored; the density operator it
represents is ``rho = P P†``, which is Hermitian and positive by
construction. Every tensor except the gauge center is an isometry toward
the center, so the trace, the ensemble probabilities and all bipartite
entanglement data across the root cut can be read off the root tensor.

Site indices are 1-based in the public API. Chains of any length >= 1 are
supported; sites are split into contiguous halves recursively (left half
gets the extra site when the count is odd), so for a power-of-two chain the
tree is the perfect binary tree and the root cut is the half-chain cut.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .linalg import svd_exact, svd_truncate

_CKPT_MAGIC = b"TTOSTAT1"
_CKPT_VERSION = 1

# A child slot of a tree node: an internal node, a physical site leg, or a
# trivial dimension-1 filler (only used by single-site chains).
NODE, SITE, TRIV = "node", "site", "triv"


@dataclass(frozen=True)
class TreeNode:
    children: tuple[tuple[str, int], tuple[str, int]]
    parent: int | None
    parent_axis: int | None       # which axis of the parent points here
    site_range: tuple[int, int]   # half-open 0-based range of sites below


class TreeTopology:
    """Static shape of the binary tree over ``n_sites`` physical legs."""

    def __init__(self, n_sites: int):
        if n_sites < 1:
            raise ValueError(f"need at least one site, got {n_sites}")
        self.n_sites = n_sites
        self.nodes: list[TreeNode] = []
        self.site_owner: list[tuple[int, int]] = [(-1, -1)] * n_sites
        self._build(n_sites)

    def _build(self, n: int) -> None:
        entries: list[dict] = []

        def alloc(lo: int, hi: int) -> tuple[str, int]:
            if hi - lo == 1:
                return (SITE, lo)
            idx = len(entries)
            entries.append({"range": (lo, hi)})
            mid = lo + (hi - lo + 1) // 2
            entries[idx]["children"] = (alloc(lo, mid), alloc(mid, hi))
            return (NODE, idx)

        if n == 1:
            entries.append({"range": (0, 1), "children": ((SITE, 0), (TRIV, 0))})
        else:
            alloc(0, n)
        parent = [None] * len(entries)
        parent_axis = [None] * len(entries)
        for i, e in enumerate(entries):
            for ax, (kind, idx) in enumerate(e["children"]):
                if kind == NODE:
                    parent[idx] = i
                    parent_axis[idx] = ax
                elif kind == SITE:
                    self.site_owner[idx] = (i, ax)
        self.nodes = [
            TreeNode(e["children"], parent[i], parent_axis[i], e["range"])
            for i, e in enumerate(entries)
        ]

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def child_sites(self, node: int, axis: int) -> tuple[int, int]:
        """Half-open 0-based site range hanging below ``(node, axis)``."""
        kind, idx = self.nodes[node].children[axis]
        if kind == SITE:
            return (idx, idx + 1)
        if kind == NODE:
            return self.nodes[idx].site_range
        return (0, 0)

    def path_to_root(self, node: int) -> list[int]:
        path = [node]
        while self.nodes[path[-1]].parent is not None:
            path.append(self.nodes[path[-1]].parent)
        return path

    def path(self, a: int, b: int) -> list[int]:
        """Node path from ``a`` to ``b`` inclusive."""
        pa, pb = self.path_to_root(a), self.path_to_root(b)
        sa, sb = set(pa), set(pb)
        lca = next(n for n in pa if n in sb)
        up = pa[: pa.index(lca) + 1]
        down = pb[: pb.index(lca)]
        return up + down[::-1]


_TOPO_CACHE: dict[int, TreeTopology] = {}


def topology(n_sites: int) -> TreeTopology:
    if n_sites not in _TOPO_CACHE:
        _TOPO_CACHE[n_sites] = TreeTopology(n_sites)
    return _TOPO_CACHE[n_sites]


def _qr_fixed(mat: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Economy QR with the diagonal of R made real non-negative."""
    q, r = np.linalg.qr(mat)
    d = np.diagonal(r)
    ph = np.where(np.abs(d) > 0, d / np.abs(np.where(np.abs(d) > 0, d, 1.0)), 1.0)
    return q * ph[None, :], r * ph.conj()[:, None]


class TTOState:
    """Mutable tree tensor operator (single-writer during mutation)."""

    def __init__(self, n_sites: int, tensors: list[np.ndarray],
                 gauge_center: int = 0, local_dim: int = 2,
                 cumulative_truncation: float = 0.0):
        self.n_sites = n_sites
        self.local_dim = local_dim
        self.topo = topology(n_sites)
        if len(tensors) != self.topo.n_nodes:
            raise ValueError("tensor count does not match tree topology")
        self.tensors = tensors
        self.gauge_center = gauge_center
        self.cumulative_truncation = cumulative_truncation
        self.versions = [0] * len(tensors)

    # -- bookkeeping ------------------------------------------------------

    def copy(self) -> "TTOState":
        s = TTOState(self.n_sites, [t.copy() for t in self.tensors],
                     self.gauge_center, self.local_dim,
                     self.cumulative_truncation)
        s.versions = list(self.versions)
        return s

    @property
    def kraus_dim(self) -> int:
        return self.tensors[0].shape[2]

    @property
    def max_link_dim(self) -> int:
        dims = [1]
        for i in range(1, self.topo.n_nodes):
            dims.append(self.tensors[i].shape[2])
        return max(dims)

    def trace(self) -> float:
        """Tr rho = squared Frobenius norm of the gauge-center tensor."""
        return float(np.linalg.norm(self.tensors[self.gauge_center]) ** 2)

    def _bump(self, node: int) -> None:
        self.versions[node] += 1

    def leg_dim(self, node: int, axis: int) -> int:
        return self.tensors[node].shape[axis]

    def axis_toward(self, node: int, other: int) -> int:
        """Axis of ``node`` pointing at adjacent node ``other``."""
        n = self.topo.nodes[node]
        if n.parent == other:
            return 2
        for ax, (kind, idx) in enumerate(n.children):
            if kind == NODE and idx == other:
                return ax
        raise ValueError(f"nodes {node} and {other} are not adjacent")

    # -- gauge ------------------------------------------------------------

    def isometry_defect(self, node: int) -> float:
        """Deviation of ``node`` from an isometry toward the gauge center."""
        if node == self.gauge_center:
            return 0.0
        nxt = self.topo.path(node, self.gauge_center)[1]
        ax = self.axis_toward(node, nxt)
        t = self.tensors[node]
        others = [a for a in range(t.ndim) if a != ax]
        m = np.tensordot(t.conj(), t, axes=(others, others))
        return float(np.linalg.norm(m - np.eye(m.shape[0])))

    def max_isometry_defect(self) -> float:
        return max(self.isometry_defect(n) for n in range(self.topo.n_nodes))

    def _move_gauge_one(self, target: int) -> None:
        """Move the gauge center across one tree edge via fixed-phase QR."""
        src = self.gauge_center
        ax = self.axis_toward(src, target)
        t = self.tensors[src]
        others = [a for a in range(t.ndim) if a != ax]
        perm = others + [ax]
        mat = t.transpose(perm).reshape(-1, t.shape[ax])
        q, r = _qr_fixed(mat)
        k = q.shape[1]
        q = q.reshape([t.shape[a] for a in others] + [k])
        inv = np.argsort(perm)
        self.tensors[src] = q.transpose(inv)
        tax = self.axis_toward(target, src)
        ty = np.tensordot(r, self.tensors[target], axes=(1, tax))
        self.tensors[target] = np.moveaxis(ty, 0, tax)
        self.gauge_center = target
        self._bump(src)
        self._bump(target)

    def install_gauge(self, target: int) -> "TTOState":
        """Make ``target`` the gauge center; the represented rho is unchanged."""
        if not 0 <= target < self.topo.n_nodes:
            raise ValueError(f"invalid node id {target}")
        for node in self.topo.path(self.gauge_center, target)[1:]:
            self._move_gauge_one(node)
        return self

    def canonicalize(self) -> "TTOState":
        """Gauge every tensor toward the root from scratch (for states
        assembled from arbitrary tensors; rho is unchanged)."""

        def up(node: int) -> None:
            for kind, idx in self.topo.nodes[node].children:
                if kind == NODE:
                    up(idx)
            if node != 0:
                self.gauge_center = node
                self._move_gauge_one(self.topo.nodes[node].parent)

        up(0)
        self.gauge_center = 0
        return self

    # -- dense bridge -----------------------------------------------------

    def branch_matrix(self) -> np.ndarray:
        """The purification branch as a (d^n x K) matrix (small chains only)."""
        if self.n_sites > 8:
            raise ValueError("dense reconstruction is limited to 8 sites")
        d = self.local_dim

        def block(child: tuple[str, int]) -> np.ndarray:
            kind, idx = child
            if kind == SITE:
                return np.eye(d, dtype=np.complex128)
            if kind == TRIV:
                return np.ones((1, 1), dtype=np.complex128)
            t = self.tensors[idx]
            b1, b2 = block(self.topo.nodes[idx].children[0]), \
                block(self.topo.nodes[idx].children[1])
            z = np.einsum("pa,qb,abc->pqc", b1, b2, t)
            return z.reshape(b1.shape[0] * b2.shape[0], t.shape[2])

        return block((NODE, 0))

    def to_dense(self) -> np.ndarray:
        """Dense rho = P P† (guarded against memory blow-up)."""
        p = self.branch_matrix()
        return p @ p.conj().T


def from_product_state(local_states: list[np.ndarray],
                       local_dim: int = 2) -> TTOState:
    """TTO for the pure product state of the given normalized local vectors."""
    n = len(local_states)
    vecs = [np.asarray(v, dtype=np.complex128).ravel() for v in local_states]
    for j, v in enumerate(vecs):
        if v.size != local_dim:
            raise ValueError(f"site {j + 1}: expected a {local_dim}-vector")
        if abs(np.linalg.norm(v) - 1.0) > 1e-12:
            raise ValueError(f"site {j + 1}: local state not normalized")
    topo = topology(n)

    def leg_vec(child: tuple[str, int]) -> np.ndarray:
        kind, idx = child
        if kind == SITE:
            return vecs[idx]
        return np.ones(1, dtype=np.complex128)

    tensors: list[np.ndarray] = []
    for node in topo.nodes:
        v1, v2 = leg_vec(node.children[0]), leg_vec(node.children[1])
        tensors.append(np.multiply.outer(v1, v2)[:, :, None])
    return TTOState(n, tensors, gauge_center=0, local_dim=local_dim)


def install_gauge(state: TTOState, target: int) -> TTOState:
    return state.install_gauge(target)


def contract_to_dense(state: TTOState) -> np.ndarray:
    return state.to_dense()


def canonical_ensemble(state: TTOState) -> tuple[np.ndarray, TTOState]:
    """Rotate the Kraus leg so the ensemble states are orthonormal.

    Returns the probabilities ``p_k`` (squared singular values of the root
    over the (links | Kraus) split, descending, summing to Tr rho) and the
    state with its root replaced accordingly.
    """
    state.install_gauge(0)
    r = state.tensors[0]
    cl, cr, k = r.shape
    u, s, _ = svd_exact(r.reshape(cl * cr, k))
    kept = min(cl * cr, k)
    state.tensors[0] = (u * s).reshape(cl, cr, kept)
    state._bump(0)
    return s**2, state


def route_extra_to_root(state: TTOState, node: int) -> TTOState:
    """Move a fourth (channel) leg on ``node`` up to the root and fuse it
    into the Kraus leg as the fast index.

    Every SVD on the way is exact: the rank is capped only by the matrix
    dimensions, so the represented rho (with the extra leg closed against
    its conjugate) is preserved. The gauge center ends at the root.
    """
    if state.tensors[node].ndim != 4:
        raise ValueError("node carries no extra leg to route")
    if state.gauge_center != node:
        raise ValueError("gauge center must sit on the node being routed")
    cur = node
    while cur != 0:
        n = state.topo.nodes[cur]
        p, pax = n.parent, n.parent_axis
        tx = state.tensors[cur]           # (a, b, parent, extra)
        tp = state.tensors[p]
        a, b, _, e = tx.shape
        z = np.tensordot(tx.transpose(0, 1, 3, 2), tp, axes=(3, pax))
        # z axes: (a, b, extra) + remaining parent axes in original order
        zm = z.reshape(a * b, -1)
        u, s, vh = svd_exact(zm)
        knew = s.size
        state.tensors[cur] = u.reshape(a, b, knew)
        w = (s[:, None] * vh).reshape((knew, e) + z.shape[3:])
        if pax == 0:
            w = w.transpose(0, 2, 3, 1)   # (knew, other, parent, extra)
        else:
            w = w.transpose(2, 0, 3, 1)   # (other, knew, parent, extra)
        state.tensors[p] = w
        state._bump(cur)
        state._bump(p)
        state.gauge_center = p
        cur = p
    r = state.tensors[0]                  # (c1, c2, K, extra)
    cl, cr, k, e = r.shape
    state.tensors[0] = r.reshape(cl, cr, k * e)
    state._bump(0)
    return state


def route_leg_to_root(state: TTOState, site: int) -> TTOState:
    """Public wrapper: route the channel leg attached at 1-based ``site``."""
    if not 1 <= site <= state.n_sites:
        raise ValueError(f"site {site} out of range")
    owner, _ = state.topo.site_owner[site - 1]
    return route_extra_to_root(state, owner)


def compress(state: TTOState, chi_max: int, kraus_max: int,
             cutoff: float = 0.0) -> tuple[TTOState, float]:
    """Truncate the Kraus dimension and every tree link down to the caps.

    Returns ``(state, step_truncation)`` where the truncation is the sum of
    relative discarded weights over all SVDs of this call. The trace is
    rescaled back to its pre-compression value afterwards; the rescale
    factor is observable as trace conservation and is never accumulated
    silently into observables.
    """
    if chi_max < 1 or kraus_max < 1:
        raise ValueError("caps must be >= 1")
    state.install_gauge(0)
    trace_before = state.trace()
    discarded = 0.0

    # Kraus leg first: SVD the root over (links | Kraus).
    r = state.tensors[0]
    cl, cr, k = r.shape
    u, s, _, disc = svd_truncate(r.reshape(cl * cr, k), kraus_max, cutoff,
                                 drop_zeros=False)
    discarded += disc
    state.tensors[0] = (u * s).reshape(cl, cr, s.size)
    state._bump(0)

    def truncate_below(node: int) -> None:
        nonlocal discarded
        for ax in (0, 1):
            kind, child = state.topo.nodes[node].children[ax]
            if kind != NODE:
                continue
            t = state.tensors[node]
            others = [a for a in range(3) if a != ax]
            perm = others + [ax]
            mat = t.transpose(perm).reshape(-1, t.shape[ax])
            u, s, vh, disc = svd_truncate(mat, chi_max, cutoff, drop_zeros=False)
            discarded += disc
            knew = s.size
            un = u.reshape([t.shape[a] for a in others] + [knew])
            state.tensors[node] = un.transpose(np.argsort(perm))
            sv = s[:, None] * vh
            tc = np.tensordot(sv, state.tensors[child], axes=(1, 2))
            state.tensors[child] = np.moveaxis(tc, 0, 2)
            state._bump(node)
            state._bump(child)
            state.gauge_center = child
            truncate_below(child)
            state._move_gauge_one(node)

    truncate_below(0)
    state.cumulative_truncation += discarded
    trace_after = state.trace()
    if trace_after > 0 and trace_before > 0:
        state.tensors[0] = state.tensors[0] * np.sqrt(trace_before / trace_after)
        state._bump(0)
    return state, discarded


def _complete_isometry(u: np.ndarray, k_new: int) -> np.ndarray:
    """Extend orthonormal columns ``u`` (m x k) to ``k_new`` columns by a
    deterministic orthonormal complement."""
    m, k = u.shape
    if k_new <= k:
        return u
    if k_new > m:
        raise ValueError(f"cannot extend {m}x{k} isometry to {k_new} columns")
    proj = np.eye(m, dtype=np.complex128) - u @ u.conj().T
    q, r, _ = scipy.linalg.qr(proj, pivoting=True, mode="economic")
    ranks = np.abs(np.diagonal(r))
    comp = q[:, ranks > 1e-12 * max(1.0, ranks.max())][:, : k_new - k]
    # one clean-up pass against u
    comp = comp - u @ (u.conj().T @ comp)
    comp, _ = np.linalg.qr(comp)
    return np.concatenate([u, comp], axis=1)


def pad_to_caps(state: TTOState, chi_max: int, kraus_max: int) -> TTOState:
    """Enlarge every tree link up to the run caps without changing rho.

    Isometries are extended by orthonormal complements and the parent slot
    is zero-padded, so the added directions carry no weight initially. The
    single-tensor sweeps are rank-preserving, so this padding is what makes
    the configured caps the actual variational space of a run (the channel
    leg routing grows only the links on the boundary-to-root paths).
    """
    state.install_gauge(0)
    n = state.n_sites
    kraus_bound = min(kraus_max, 2**n)

    def visit(node: int) -> None:
        for kind, idx in state.topo.nodes[node].children:
            if kind == NODE:
                visit(idx)
        if node == 0:
            return
        t = state.tensors[node]
        rows = t.shape[0] * t.shape[1]
        lo, hi = state.topo.nodes[node].site_range
        below = hi - lo
        target = min(chi_max, rows, 2 ** (n - below) * kraus_bound)
        chi = t.shape[2]
        if target <= chi:
            return
        u = _complete_isometry(t.reshape(rows, chi), target)
        state.tensors[node] = u.reshape(t.shape[0], t.shape[1], target)
        p = state.topo.nodes[node].parent
        pax = state.topo.nodes[node].parent_axis
        tp = state.tensors[p]
        pad = [(0, 0)] * 3
        pad[pax] = (0, target - chi)
        state.tensors[p] = np.pad(tp, pad)
        state._bump(node)
        state._bump(p)

    visit(0)
    return state


# ---------------------------------------------------------------------------
# Binary checkpoint format (bit-exact round trip)
# ---------------------------------------------------------------------------


def state_to_bytes(state: TTOState) -> bytes:
    out = [_CKPT_MAGIC,
           struct.pack("<IIIId", _CKPT_VERSION, state.n_sites, state.local_dim,
                       state.gauge_center, state.cumulative_truncation),
           struct.pack("<I", state.topo.n_nodes)]
    for t in state.tensors:
        out.append(struct.pack("<III", *t.shape))
        out.append(np.ascontiguousarray(t, dtype="<c16").tobytes())
    return b"".join(out)


def state_from_bytes(buf: bytes) -> TTOState:
    if buf[:8] != _CKPT_MAGIC:
        raise ValueError("not a TTO checkpoint (bad magic)")
    off = 8
    version, n_sites, local_dim, gauge, cum = struct.unpack_from("<IIIId", buf, off)
    off += struct.calcsize("<IIIId")
    if version != _CKPT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    (n_nodes,) = struct.unpack_from("<I", buf, off)
    off += 4
    topo = topology(n_sites)
    if n_nodes != topo.n_nodes:
        raise ValueError("checkpoint node count does not match topology")
    tensors = []
    for _ in range(n_nodes):
        shape = struct.unpack_from("<III", buf, off)
        off += 12
        count = int(np.prod(shape))
        t = np.frombuffer(buf, dtype="<c16", count=count, offset=off)
        off += count * 16
        tensors.append(t.reshape(shape).astype(np.complex128))
    return TTOState(n_sites, tensors, gauge, local_dim, cum)


def save_state(state: TTOState, path) -> None:
    with open(path, "wb") as fh:
        fh.write(state_to_bytes(state))


def load_state(path) -> TTOState:
    with open(path, "rb") as fh:
        return state_from_bytes(fh.read())
