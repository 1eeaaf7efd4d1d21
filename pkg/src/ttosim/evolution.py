"""Unitary evolution of the purification branch by single-tensor TDVP
sweeps, and the symmetric Trotter step combining them with the local
dissipative channels.

The sweep is the recursive projector-splitting integrator on the tree:
every node tensor is evolved forward by ``exp(-i tau H_eff)`` once and
every link tensor backward by ``exp(+i tau K_eff)`` once, in depth-first
post-order. Pairing a forward sweep of ``tau/2`` with the exactly reversed
sweep of ``tau/2`` gives the second-order unitary of one Trotter half.
Rank never grows here; rank growth enters exclusively through the Kraus
channel leg routing.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .channels import LindbladSpec, apply_dissipative_step
from .linalg import krylov_expv
from .tree import NODE, SITE, TTOState, _qr_fixed


@dataclass
class HamTerm:
    """One product term: ``coefficient * O_{j} [* O_{j+1}]``."""

    coefficient: float
    sites: tuple[int, ...]              # 1-based
    operators: list[np.ndarray]


@dataclass
class HamiltonianSpec:
    """Sum of 1- and 2-site (nearest-neighbor) product terms."""

    n_sites: int
    terms: list[HamTerm] = field(default_factory=list)

    def __post_init__(self):
        for t in self.terms:
            t.sites = tuple(int(j) for j in t.sites)
            t.operators = [np.asarray(op, dtype=np.complex128) for op in t.operators]
            if len(t.sites) not in (1, 2) or len(t.operators) != len(t.sites):
                raise ValueError("terms must pair 1 or 2 sites with operators")
            if any(not 1 <= j <= self.n_sites for j in t.sites):
                raise ValueError(f"term sites {t.sites} out of range")
            if len(t.sites) == 2 and t.sites[1] != t.sites[0] + 1:
                raise ValueError("two-site terms must act on adjacent sites")

    def to_dense(self) -> np.ndarray:
        """Full 2^n Hamiltonian (small chains; oracle and test bridge)."""
        if self.n_sites > 10:
            raise ValueError("dense Hamiltonian limited to 10 sites")
        d = 2
        dim = d**self.n_sites
        h = np.zeros((dim, dim), dtype=np.complex128)
        for t in self.terms:
            full = np.array([[t.coefficient]], dtype=np.complex128)
            ops = dict(zip(t.sites, t.operators))
            for j in range(1, self.n_sites + 1):
                full = np.kron(full, ops.get(j, np.eye(d)))
            h += full
        return h


def _apply_axis(x: np.ndarray, m: np.ndarray, ax: int) -> np.ndarray:
    return np.moveaxis(np.tensordot(m, x, axes=(1, ax)), 0, ax)


@dataclass
class _Projected:
    """Compiled projected generator at one node or link."""

    singles: list[tuple[int, np.ndarray]]
    products: list[tuple[float, list[tuple[int, np.ndarray]]]]

    def apply(self, x: np.ndarray) -> np.ndarray:
        y = np.zeros_like(x)
        for ax, m in self.singles:
            y += _apply_axis(x, m, ax)
        for coeff, factors in self.products:
            z = x
            for ax, m in factors:
                z = _apply_axis(z, m, ax)
            y += coeff * z
        return y


class EnvironmentCache:
    """Per-link, per-term operator blocks flowing toward the gauge center.

    Blocks are plain contractions of the tensors in their support with the
    term operators inserted, so they are gauge-independent; identity
    shortcuts (``None``) are used for term-free regions, which is valid
    whenever the gauge center lies outside that region (always true at the
    point of use). Validity is stamped with the sum of tensor versions in
    the support and recomputed on any mismatch.
    """

    def __init__(self, state: TTOState, ham: HamiltonianSpec):
        if ham.n_sites != state.n_sites:
            raise ValueError("Hamiltonian and state disagree on chain length")
        self.state = state
        self.ham = ham
        self.topo = state.topo
        self._down: dict = {}
        self._up: dict = {}
        self._term_sites = [frozenset(j - 1 for j in t.sites) for t in ham.terms]

    def _vsum_down(self, node: int) -> int:
        s = self.state.versions[node]
        for kind, idx in self.topo.nodes[node].children:
            if kind == NODE:
                s += self._vsum_down(idx)
        return s

    def _vsum_total(self) -> int:
        return self._vsum_down(0)

    def _site_op(self, term_idx: int, site0: int) -> np.ndarray:
        t = self.ham.terms[term_idx]
        for j, op in zip(t.sites, t.operators):
            if j - 1 == site0:
                return op
        raise KeyError(site0)

    def block_down(self, node: int, ax: int, term_idx: int) -> np.ndarray | None:
        """Operator block on leg ``(node, ax)`` from the subtree below it."""
        lo, hi = self.topo.child_sites(node, ax)
        tsites = self._term_sites[term_idx]
        if not any(lo <= j < hi for j in tsites):
            return None
        kind, idx = self.topo.nodes[node].children[ax]
        if kind == SITE:
            return self._site_op(term_idx, idx)
        key = (idx, term_idx)
        stamp = self._vsum_down(idx)
        hit = self._down.get(key)
        if hit is not None and hit[0] == stamp:
            return hit[1]
        t = self.state.tensors[idx]
        x = t
        for cax in (0, 1):
            b = self.block_down(idx, cax, term_idx)
            if b is not None:
                x = _apply_axis(x, b, cax)
        m = np.tensordot(t.conj(), x, axes=([0, 1], [0, 1]))
        self._down[key] = (stamp, m)
        return m

    def block_up(self, node: int, term_idx: int) -> np.ndarray | None:
        """Operator block on the parent leg of ``node`` from everything
        outside its subtree (identity on the root's Kraus leg)."""
        if node == 0:
            return None
        lo, hi = self.topo.nodes[node].site_range
        tsites = self._term_sites[term_idx]
        if all(lo <= j < hi for j in tsites):
            return None
        p = self.topo.nodes[node].parent
        pax = self.topo.nodes[node].parent_axis
        key = (node, term_idx)
        stamp = self._vsum_total() - self._vsum_down(node)
        hit = self._up.get(key)
        if hit is not None and hit[0] == stamp:
            return hit[1]
        t = self.state.tensors[p]
        x = t
        sib = self.block_down(p, 1 - pax, term_idx)
        if sib is not None:
            x = _apply_axis(x, sib, 1 - pax)
        up = self.block_up(p, term_idx)
        if up is not None:
            x = _apply_axis(x, up, 2)
        other = [a for a in range(3) if a != pax]
        m = np.tensordot(t.conj(), x, axes=(other, other))
        self._up[key] = (stamp, m)
        return m

    def node_projector(self, node: int) -> _Projected:
        """Projected Hamiltonian at ``node``: factors per leg direction
        (child legs 0/1, parent or Kraus leg 2)."""
        singles: dict[int, np.ndarray] = {}
        products = []
        for ti, term in enumerate(self.ham.terms):
            factors = []
            for ax in (0, 1):
                b = self.block_down(node, ax, ti)
                if b is not None:
                    factors.append((ax, b))
            b = self.block_up(node, ti)
            if b is not None:
                factors.append((2, b))
            if not factors:
                continue
            if len(factors) == 1:
                ax, m = factors[0]
                acc = singles.get(ax)
                singles[ax] = term.coefficient * m if acc is None else acc + term.coefficient * m
            else:
                products.append((term.coefficient, factors))
        return _Projected(sorted(singles.items()), products)

    def link_projector(self, child: int) -> _Projected:
        """Projected Hamiltonian on the link between ``child`` and its
        parent; link tensors carry axes (toward child, toward parent)."""
        p = self.topo.nodes[child].parent
        pax = self.topo.nodes[child].parent_axis
        singles: dict[int, np.ndarray] = {}
        products = []
        for ti, term in enumerate(self.ham.terms):
            factors = []
            b = self.block_down(p, pax, ti)
            if b is not None:
                factors.append((0, b))
            b = self.block_up(child, ti)
            if b is not None:
                factors.append((1, b))
            if not factors:
                continue
            if len(factors) == 1:
                ax, m = factors[0]
                acc = singles.get(ax)
                singles[ax] = term.coefficient * m if acc is None else acc + term.coefficient * m
            else:
                products.append((term.coefficient, factors))
        return _Projected(sorted(singles.items()), products)


def effective_apply(cache: EnvironmentCache, node: int, x: np.ndarray) -> np.ndarray:
    """Action of the Hamiltonian projected onto the tangent coordinates of
    ``node`` (Hermitian as a map; identity on the root's Kraus leg)."""
    return cache.node_projector(node).apply(x)


def _evolve_node(state: TTOState, cache: EnvironmentCache, node: int,
                 tau: float, tol: float, maxiter: int) -> None:
    proj = cache.node_projector(node)
    if not proj.singles and not proj.products:
        return
    out, _ = krylov_expv(proj.apply, state.tensors[node], -1j * tau,
                         tol=tol, max_iters=maxiter)
    state.tensors[node] = out
    state._bump(node)


def _evolve_link(cache: EnvironmentCache, child: int, c_mat: np.ndarray,
                 tau: float, tol: float, maxiter: int) -> np.ndarray:
    proj = cache.link_projector(child)
    if not proj.singles and not proj.products:
        return c_mat
    out, _ = krylov_expv(proj.apply, c_mat, +1j * tau, tol=tol, max_iters=maxiter)
    return out


def tdvp_half_sweep(state: TTOState, ham: HamiltonianSpec, tau: float,
                    reverse: bool = False, cache: EnvironmentCache | None = None,
                    krylov_tol: float = 1e-10, krylov_maxiter: int = 30,
                    ) -> TTOState:
    """One directional projector-splitting sweep evolving the branch by
    ``tau`` (each node forward, each link backward once).

    The ``reverse`` sweep is the exact adjoint ordering of the forward one;
    calling forward then reverse with ``tau/2`` each yields the
    second-order unitary step. Norm (= Tr rho) is preserved to the Krylov
    tolerance and no truncation occurs.
    """
    state.install_gauge(0)
    if cache is None or cache.state is not state or cache.ham is not ham:
        cache = EnvironmentCache(state, ham)
    topo = state.topo

    def fwd(node: int) -> None:
        for ax in (0, 1):
            kind, child = topo.nodes[node].children[ax]
            if kind != NODE:
                continue
            state._move_gauge_one(child)
            fwd(child)
            t = state.tensors[child]
            q, r = _qr_fixed(t.reshape(-1, t.shape[2]))
            state.tensors[child] = q.reshape(t.shape[0], t.shape[1], -1)
            state._bump(child)
            c = _evolve_link(cache, child, r, tau, krylov_tol, krylov_maxiter)
            tn = np.tensordot(c, state.tensors[node], axes=(1, ax))
            state.tensors[node] = np.moveaxis(tn, 0, ax)
            state._bump(node)
            state.gauge_center = node
        _evolve_node(state, cache, node, tau, krylov_tol, krylov_maxiter)

    def rev(node: int) -> None:
        _evolve_node(state, cache, node, tau, krylov_tol, krylov_maxiter)
        for ax in (1, 0):
            kind, child = topo.nodes[node].children[ax]
            if kind != NODE:
                continue
            t = state.tensors[node]
            others = [a for a in range(3) if a != ax]
            perm = others + [ax]
            q, r = _qr_fixed(t.transpose(perm).reshape(-1, t.shape[ax]))
            q = q.reshape([t.shape[a] for a in others] + [-1])
            state.tensors[node] = q.transpose(np.argsort(perm))
            state._bump(node)
            c = _evolve_link(cache, child, r.T, tau, krylov_tol, krylov_maxiter)
            state.tensors[child] = np.tensordot(state.tensors[child], c, axes=(2, 0))
            state._bump(child)
            state.gauge_center = child
            rev(child)
            state._move_gauge_one(node)

    if reverse:
        rev(0)
    else:
        fwd(0)
    return state


def tdvp_unitary(state: TTOState, ham: HamiltonianSpec, t: float,
                 cache: EnvironmentCache | None = None,
                 krylov_tol: float = 1e-10, krylov_maxiter: int = 30) -> TTOState:
    """Second-order unitary evolution by ``t``: forward sweep of ``t/2``
    paired with the reversed sweep of ``t/2``."""
    tdvp_half_sweep(state, ham, t / 2, reverse=False, cache=cache,
                    krylov_tol=krylov_tol, krylov_maxiter=krylov_maxiter)
    tdvp_half_sweep(state, ham, t / 2, reverse=True, cache=cache,
                    krylov_tol=krylov_tol, krylov_maxiter=krylov_maxiter)
    return state


@dataclass
class StepDiagnostics:
    step_truncation: float
    max_chi: int
    kraus_dim: int
    trace_drift: float


class TrotterStepper:
    """Drives the symmetric splitting U(dt/2) D(dt) U(dt/2) step by step.

    With ``merge_unitaries`` the trailing half-unitary of one step and the
    leading half-unitary of the next are executed as a single U(dt)
    whenever no measurement happens in between; ``step(close=True)`` (or
    :meth:`finish`) flushes the pending half so the state is physical.
    """

    def __init__(self, ham: HamiltonianSpec, lind: LindbladSpec, dt: float,
                 chi_max: int, kraus_max: int, cutoff: float = 0.0,
                 merge_unitaries: bool = True, krylov_tol: float = 1e-10,
                 krylov_maxiter: int = 30):
        if dt <= 0:
            raise ValueError(f"dt must be > 0, got {dt}")
        self.ham = ham
        self.lind = lind
        self.dt = dt
        self.chi_max = chi_max
        self.kraus_max = kraus_max
        self.cutoff = cutoff
        self.merge_unitaries = merge_unitaries
        self.krylov_tol = krylov_tol
        self.krylov_maxiter = krylov_maxiter
        self._half_open = False
        self._cache: EnvironmentCache | None = None

    def _unitary(self, state: TTOState, t: float) -> None:
        if self._cache is None or self._cache.state is not state:
            self._cache = EnvironmentCache(state, self.ham)
        tdvp_unitary(state, self.ham, t, cache=self._cache,
                     krylov_tol=self.krylov_tol, krylov_maxiter=self.krylov_maxiter)

    def step(self, state: TTOState, close: bool = False) -> StepDiagnostics:
        trace_in = state.trace()
        self._unitary(state, self.dt if self._half_open else self.dt / 2)
        self._half_open = False
        _, trunc = apply_dissipative_step(
            state, self.lind, self.dt, self.chi_max, self.kraus_max, self.cutoff)
        drift = state.trace() - trace_in
        if close or not self.merge_unitaries:
            self._unitary(state, self.dt / 2)
        else:
            self._half_open = True
        return StepDiagnostics(step_truncation=trunc,
                               max_chi=state.max_link_dim,
                               kraus_dim=state.kraus_dim,
                               trace_drift=float(drift))

    def finish(self, state: TTOState) -> None:
        if self._half_open:
            self._unitary(state, self.dt / 2)
            self._half_open = False


def trotter_step(state: TTOState, ham: HamiltonianSpec, lind: LindbladSpec,
                 dt: float, chi_max: int, kraus_max: int, cutoff: float = 0.0,
                 merge_unitaries: bool = False, krylov_tol: float = 1e-10,
                 krylov_maxiter: int = 30,
                 ) -> tuple[TTOState, StepDiagnostics]:
    """One symmetric Trotter step, closed so the returned state is physical.

    ``merge_unitaries`` only pays off across consecutive steps; sequences
    should hold a :class:`TrotterStepper`, which keeps the trailing
    half-unitary open between steps.
    """
    stepper = TrotterStepper(ham, lind, dt, chi_max, kraus_max, cutoff,
                             merge_unitaries=merge_unitaries,
                             krylov_tol=krylov_tol,
                             krylov_maxiter=krylov_maxiter)
    diag = stepper.step(state, close=True)
    return state, diag
