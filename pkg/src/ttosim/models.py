"""Boundary-driven XXZ chain: Hamiltonian terms, boundary jump operators,
and named initial product states.

Conventions (frozen): energies in units of the exchange coupling J, times
in 1/J; Pauli basis with spin-up first, so Z|down> = -|down>; raising and
lowering operators S^± = (X ± iY)/2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channels import LindbladSpec
from .evolution import HamiltonianSpec, HamTerm

ID2 = np.eye(2, dtype=np.complex128)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=np.complex128)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=np.complex128)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=np.complex128)
S_PLUS = np.array([[0, 1], [0, 0]], dtype=np.complex128)
S_MINUS = np.array([[0, 0], [1, 0]], dtype=np.complex128)

UP = np.array([1, 0], dtype=np.complex128)
DOWN = np.array([0, 1], dtype=np.complex128)


@dataclass
class XXZParams:
    """Chain length, couplings and drive of the boundary-driven XXZ setup."""

    n_sites: int
    coupling: float = 1.0     # J > 0, the energy unit
    anisotropy: float = 0.5   # Delta
    rate: float = 1.0         # gamma >= 0, in units of J
    drive: float = 1.0        # mu in [0, 1]

    def __post_init__(self):
        if self.n_sites < 1:
            raise ValueError(f"need at least one site, got {self.n_sites}")
        if self.coupling <= 0:
            raise ValueError(f"coupling J must be > 0, got {self.coupling}")
        if self.rate < 0:
            raise ValueError(f"rate gamma must be >= 0, got {self.rate}")
        if not 0.0 <= self.drive <= 1.0:
            raise ValueError(f"drive mu must lie in [0, 1], got {self.drive}")


def xxz_hamiltonian(p: XXZParams) -> HamiltonianSpec:
    """Open-boundary XXZ chain: J (XX + YY + Delta ZZ) on each bond."""
    if p.n_sites < 2:
        return HamiltonianSpec(p.n_sites, [])
    terms = []
    for j in range(1, p.n_sites):
        terms.append(HamTerm(p.coupling, (j, j + 1), [PAULI_X, PAULI_X]))
        terms.append(HamTerm(p.coupling, (j, j + 1), [PAULI_Y, PAULI_Y]))
        terms.append(HamTerm(p.coupling * p.anisotropy, (j, j + 1),
                             [PAULI_Z, PAULI_Z]))
    return HamiltonianSpec(p.n_sites, terms)


def boundary_drive(p: XXZParams) -> LindbladSpec:
    """Boundary baths pumping spin in on the left and out on the right.

    Jump operators sqrt(1+mu) S+ and sqrt(1-mu) S- on site 1, mirrored on
    site l; operators whose prefactor vanishes (mu = 1) are dropped.
    """
    up_w = np.sqrt(1.0 + p.drive)
    dn_w = np.sqrt(1.0 - p.drive)
    left = [up_w * S_PLUS]
    right = [up_w * S_MINUS]
    if p.drive < 1.0:
        left.append(dn_w * S_MINUS)
        right.append(dn_w * S_PLUS)
    if p.n_sites == 1:
        return LindbladSpec(rate=p.rate, sites={1: left + right})
    return LindbladSpec(rate=p.rate, sites={1: left, p.n_sites: right})


def initial_state(name_or_pattern, n_sites: int) -> list[np.ndarray]:
    """Local state vectors for a named pattern or explicit amplitudes.

    ``"Z-"`` is the fully polarized all-down state, ``"neel"`` alternates
    up/down starting with up; a sequence of per-site amplitude pairs is
    normalized site by site.
    """
    if isinstance(name_or_pattern, str):
        name = name_or_pattern.strip().lower()
        if name in ("z-", "down"):
            return [DOWN.copy() for _ in range(n_sites)]
        if name in ("z+", "up"):
            return [UP.copy() for _ in range(n_sites)]
        if name == "neel":
            return [(UP if j % 2 == 0 else DOWN).copy() for j in range(n_sites)]
        raise ValueError(f"unknown initial state {name_or_pattern!r}")
    vecs = [np.asarray(v, dtype=np.complex128).ravel() for v in name_or_pattern]
    if len(vecs) != n_sites:
        raise ValueError(f"pattern length {len(vecs)} != {n_sites} sites")
    out = []
    for j, v in enumerate(vecs):
        n = np.linalg.norm(v)
        if n == 0 or not np.all(np.isfinite(v)):
            raise ValueError(f"site {j + 1}: amplitudes not normalizable")
        out.append(v / n)
    return out
