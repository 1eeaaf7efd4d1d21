"""Measured quantities on a tree tensor operator state.

Local and two-site expectations contract operator blocks up the tree;
entropies, mutual information, logarithmic negativity and the
entanglement-of-formation bound are read off the root tensor alone, since
with the gauge center at the root it carries the full entanglement data of
the left/right bipartition.

All entanglement quantities use natural logarithms and are evaluated on
the trace-normalized state; the raw trace is reported separately. None of
the functions mutates its input (states are re-gauged on a copy if
needed).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.optimize

from .linalg import svd_exact, trace_norm_hermitian
from .models import S_MINUS, S_PLUS, PAULI_Z
from .tree import NODE, SITE, TTOState


def _root_view(state: TTOState) -> TTOState:
    """State with the gauge center at the root, never mutating the input."""
    if state.gauge_center == 0:
        return state
    return state.copy().install_gauge(0)


def _apply_axis(x: np.ndarray, m: np.ndarray, ax: int) -> np.ndarray:
    return np.moveaxis(np.tensordot(m, x, axes=(1, ax)), 0, ax)


def expectation_product_ops(state: TTOState, ops: dict[int, np.ndarray]) -> complex:
    """Normalized expectation of a product of single-site operators,
    ``Tr(rho prod_j O_j) / Tr(rho)``. ``ops`` maps 1-based sites to 2x2
    matrices."""
    for j in ops:
        if not 1 <= j <= state.n_sites:
            raise ValueError(f"site {j} out of range")
    s = _root_view(state)
    sites0 = {j - 1: np.asarray(op, dtype=np.complex128) for j, op in ops.items()}
    topo = s.topo

    def block(child: tuple[str, int]) -> np.ndarray | None:
        kind, idx = child
        if kind == SITE:
            return sites0.get(idx)
        if kind != NODE:
            return None
        lo, hi = topo.nodes[idx].site_range
        if not any(lo <= j < hi for j in sites0):
            return None
        t = s.tensors[idx]
        x = t
        for ax in (0, 1):
            b = block(topo.nodes[idx].children[ax])
            if b is not None:
                x = _apply_axis(x, b, ax)
        return np.tensordot(t.conj(), x, axes=([0, 1], [0, 1]))

    r = s.tensors[0]
    x = r
    for ax in (0, 1):
        b = block(topo.nodes[0].children[ax])
        if b is not None:
            x = _apply_axis(x, b, ax)
    val = complex(np.einsum("abk,abk->", r.conj(), x))
    tr = float(np.linalg.norm(r) ** 2)
    if tr == 0:
        raise ValueError("state has zero trace")
    return val / tr


def local_expectation(state: TTOState, site: int, op: np.ndarray) -> complex:
    """Normalized single-site expectation ``<O_j>``."""
    return expectation_product_ops(state, {site: op})


def z_profile(state: TTOState) -> np.ndarray:
    return np.array([local_expectation(state, j, PAULI_Z).real
                     for j in range(1, state.n_sites + 1)])


def spin_current(state: TTOState, bond: int) -> float:
    """Spin current across bond (j, j+1): four times the imaginary part of
    the lowering/raising correlator ``<S_j^- S_{j+1}^+>``."""
    if not 1 <= bond <= state.n_sites - 1:
        raise ValueError(f"bond {bond} out of range")
    corr = expectation_product_ops(state, {bond: S_MINUS, bond + 1: S_PLUS})
    return 4.0 * corr.imag


def current_profile(state: TTOState) -> np.ndarray:
    return np.array([spin_current(state, j) for j in range(1, state.n_sites)])


def _entropy(spectrum: np.ndarray) -> float:
    w = np.clip(np.real(spectrum), 0.0, None)
    total = float(np.sum(w))
    if total <= 0:
        return 0.0
    p = w[w > 0] / total
    return float(-np.sum(p * np.log(p))) + 0.0


def entropies(state: TTOState) -> tuple[float, float, float]:
    """Von Neumann entropies (left half, right half, total system), read
    from the root tensor's reduced Gram matrices."""
    s = _root_view(state)
    r = s.tensors[0]
    g_total = np.tensordot(r.conj(), r, axes=([0, 1], [0, 1]))
    g_left = np.tensordot(r, r.conj(), axes=([1, 2], [1, 2]))
    g_right = np.tensordot(r, r.conj(), axes=([0, 2], [0, 2]))
    s_tot = _entropy(np.linalg.eigvalsh((g_total + g_total.conj().T) / 2))
    s_l = _entropy(np.linalg.eigvalsh((g_left + g_left.conj().T) / 2))
    s_r = _entropy(np.linalg.eigvalsh((g_right + g_right.conj().T) / 2))
    return s_l, s_r, s_tot


def mutual_information(state: TTOState) -> float:
    s_l, s_r, s_tot = entropies(state)
    return s_l + s_r - s_tot


def log_negativity(state: TTOState) -> float:
    """log of the trace norm of the partial transpose over the left half.

    The partial transpose acts in the effective orthonormal bases carried
    by the two root links; the branch isometries leave the spectrum
    untouched, so the small root-sized matrix suffices.
    """
    s = _root_view(state)
    r = s.tensors[0]
    cl, cr, _ = r.shape
    x = np.tensordot(r, r.conj(), axes=(2, 2))      # (l, r, l', r')
    tr = float(np.linalg.norm(r) ** 2)
    if tr == 0:
        raise ValueError("state has zero trace")
    y = x.transpose(2, 1, 0, 3).reshape(cl * cr, cl * cr) / tr
    return float(np.log(trace_norm_hermitian(y)))


def _pure_entanglement(col: np.ndarray, cl: int, cr: int) -> float:
    """Entanglement entropy of one (unnormalized) purification column."""
    sv = np.linalg.svd(col.reshape(cl, cr), compute_uv=False)
    return _entropy(sv**2)


def entanglement_of_formation(state: TTOState, restarts: int = 8,
                              tol: float = 1e-7, seed: int = 0,
                              kraus_cap: int = 64, max_sweeps: int = 60,
                              ) -> tuple[float, bool]:
    """Upper bound on the entanglement of formation across the center cut.

    Minimizes the ensemble-averaged pure-state entanglement over isometric
    mixings of the root's Kraus leg (which leave rho invariant) by
    coordinate descent over Givens rotations with random restarts. The
    ensemble is enlarged beyond the state's rank (optimal decompositions
    can need up to rank-squared members; two-qubit states need at most 4),
    so the mixings are genuinely isometric rather than square. The
    returned value is a valid upper bound regardless of convergence; for a
    pure state it equals the left-half entropy exactly.
    """
    s = _root_view(state)
    r = s.tensors[0]
    cl, cr, _ = r.shape
    m = r.reshape(cl * cr, -1)
    # Drop numerically empty ensemble members before optimizing.
    u, sv, _ = svd_exact(m)
    keep = sv > 1e-12 * (sv[0] if sv.size else 1.0)
    m = u[:, keep] * sv[keep]
    if m.shape[1] == 1:
        return entropies(s)[0], True
    k = min(max(2 * m.shape[1], 4), kraus_cap)
    if m.shape[1] > kraus_cap:
        raise ValueError(
            f"Kraus dimension {m.shape[1]} above optimization cap {kraus_cap}")
    if k > m.shape[1]:
        m = np.concatenate(
            [m, np.zeros((m.shape[0], k - m.shape[1]), dtype=m.dtype)], axis=1)
    total = float(np.sum(np.abs(m) ** 2))

    def objective_cols(cols: np.ndarray) -> np.ndarray:
        out = np.empty(cols.shape[1])
        for i in range(cols.shape[1]):
            q = float(np.sum(np.abs(cols[:, i]) ** 2)) / total
            out[i] = q * _pure_entanglement(cols[:, i], cl, cr)
        return out

    thetas = np.concatenate(([0.005, 0.02, 0.06],
                             np.linspace(0, np.pi / 2, 9, endpoint=False)[1:]))
    phis = np.linspace(0, 2 * np.pi, 12, endpoint=False)
    grid_t, grid_p = np.meshgrid(thetas, phis, indexing="ij")
    grid_t, grid_p = grid_t.ravel(), grid_p.ravel()
    grid_cos = np.cos(grid_t)
    grid_sin_e = np.sin(grid_t) * np.exp(1j * grid_p)

    def batched_pair_values(ci: np.ndarray, cj: np.ndarray) -> np.ndarray:
        ni = grid_cos[:, None] * ci[None, :] + grid_sin_e[:, None] * cj[None, :]
        nj = (-grid_sin_e.conj()[:, None] * ci[None, :]
              + grid_cos[:, None] * cj[None, :])
        out = np.zeros(grid_t.size)
        for block in (ni, nj):
            sv = np.linalg.svd(block.reshape(-1, cl, cr), compute_uv=False)
            w = sv**2
            tot = np.sum(w, axis=1)
            p = np.divide(w, tot[:, None], out=np.zeros_like(w),
                          where=tot[:, None] > 0)
            ent = -np.sum(np.where(p > 0, p * np.log(np.where(p > 0, p, 1.0)),
                                   0.0), axis=1)
            out += (tot / total) * ent
        return out

    rng = np.random.default_rng(seed)
    best = float("inf")
    converged = False
    for restart in range(max(1, restarts)):
        if restart == 0:
            cols = m.copy()
        else:
            g = rng.normal(size=(k, k)) + 1j * rng.normal(size=(k, k))
            w, _ = np.linalg.qr(g)
            cols = m @ w
        fvals = objective_cols(cols)
        hit_tol = False
        refine = False
        for _ in range(max_sweeps):
            improved = 0.0
            for i in range(k - 1):
                for j in range(i + 1, k):
                    ci, cj = cols[:, i], cols[:, j]
                    base = fvals[i] + fvals[j]

                    def pair_obj(p):
                        th, ph = p
                        e = np.exp(1j * ph)
                        ni = np.cos(th) * ci + np.sin(th) * e * cj
                        nj = -np.sin(th) * e.conj() * ci + np.cos(th) * cj
                        qi = float(np.sum(np.abs(ni) ** 2)) / total
                        qj = float(np.sum(np.abs(nj) ** 2)) / total
                        return (qi * _pure_entanglement(ni, cl, cr)
                                + qj * _pure_entanglement(nj, cl, cr))

                    vals = batched_pair_values(ci, cj)
                    gi = int(np.argmin(vals))
                    th, ph, fun = grid_t[gi], grid_p[gi], float(vals[gi])
                    if refine:
                        res = scipy.optimize.minimize(
                            pair_obj, (th, ph), method="Nelder-Mead",
                            options={"xatol": 1e-6, "fatol": 1e-11,
                                     "maxiter": 120})
                        if res.fun < fun:
                            (th, ph), fun = res.x, float(res.fun)
                    if fun < base - 1e-15:
                        e = np.exp(1j * ph)
                        ni = np.cos(th) * ci + np.sin(th) * e * cj
                        nj = -np.sin(th) * e.conj() * ci + np.cos(th) * cj
                        cols[:, i], cols[:, j] = ni, nj
                        fvals[i] = (np.sum(np.abs(ni) ** 2) / total
                                    * _pure_entanglement(ni, cl, cr))
                        fvals[j] = (np.sum(np.abs(nj) ** 2) / total
                                    * _pure_entanglement(nj, cl, cr))
                        improved += base - (fvals[i] + fvals[j])
            if improved < tol:
                if refine:
                    hit_tol = True
                    break
                refine = True    # coarse stage converged, switch to refined
        f = float(np.sum(fvals))
        if f < best:
            best = f
        converged = converged or hit_tol
    return best, converged


@dataclass
class MeasurementRecord:
    """One row of simulation output (times in 1/J, natural-log entropies)."""

    t: float
    z: np.ndarray                 # <Z_j>, length n
    current: np.ndarray           # <J_j>, length n-1
    s_left: float
    s_right: float
    s_total: float
    mutual_information: float
    log_negativity: float
    trace: float
    max_chi: int
    kraus_dim: int
    cumulative_truncation: float

    def validate(self, tol: float = 1e-10) -> None:
        gap = abs(self.mutual_information
                  - (self.s_left + self.s_right - self.s_total))
        if gap > tol:
            raise ValueError(f"mutual information inconsistent by {gap:.3e}")
        for name in ("s_left", "s_right", "s_total",
                     "mutual_information", "log_negativity"):
            if getattr(self, name) < -tol:
                raise ValueError(f"{name} negative: {getattr(self, name):.3e}")


def measure(state: TTOState, t: float,
            observables: set[str] | None = None) -> MeasurementRecord:
    """Full measurement record at time ``t``; ``observables`` restricts the
    computed set (others become NaN)."""
    want = observables if observables is not None else {
        "z", "current", "entropies", "negativity"}
    s = _root_view(state)
    n = s.n_sites
    nan = float("nan")
    z = z_profile(s) if "z" in want else np.full(n, nan)
    cur = current_profile(s) if "current" in want else np.full(max(n - 1, 0), nan)
    if "entropies" in want:
        s_l, s_r, s_tot = entropies(s)
        mi = s_l + s_r - s_tot
    else:
        s_l = s_r = s_tot = mi = nan
    neg = log_negativity(s) if "negativity" in want else nan
    return MeasurementRecord(
        t=float(t), z=z, current=cur, s_left=s_l, s_right=s_r, s_total=s_tot,
        mutual_information=mi, log_negativity=neg, trace=s.trace(),
        max_chi=s.max_link_dim, kraus_dim=s.kraus_dim,
        cumulative_truncation=s.cumulative_truncation)
