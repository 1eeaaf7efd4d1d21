import numpy as np
import pytest

from ttosim.channels import LindbladSpec
from ttosim.evolution import HamiltonianSpec, HamTerm
from ttosim.models import (DOWN, UP, PAULI_X, PAULI_Y, PAULI_Z, S_MINUS,
                           S_PLUS, XXZParams, boundary_drive, initial_state,
                           xxz_hamiltonian)
from ttosim.oracle import (build_liouvillian, dense_observables, embed_ops,
                           evolve_exact, exact_trajectory,
                           schrodinger_trajectory, stationary_state,
                           two_qubit_eof)

from conftest import random_complex


def lindblad_rhs(ham_dense, spec, n, rho):
    """Equation-of-motion oracle evaluated term by term on the matrix."""
    out = 1j * (rho @ ham_dense - ham_dense @ rho)
    for site, ops in spec.sites.items():
        for op in ops:
            full = embed_ops({site: op}, n).toarray()
            ldl = full.conj().T @ full
            out += spec.rate * (full @ rho @ full.conj().T
                                - 0.5 * (ldl @ rho + rho @ ldl))
    return out


def random_density(rng, dim):
    a = random_complex(rng, dim, dim)
    rho = a @ a.conj().T
    return rho / np.trace(rho)


class TestBuildLiouvillian:
    def test_zero_generator(self):
        ham = HamiltonianSpec(2, [])
        liou = build_liouvillian(ham, LindbladSpec(1.0, {}))
        assert not np.any(liou.matrix.toarray())

    def test_single_qubit_damping_spectrum(self):
        ham = HamiltonianSpec(1, [])
        liou = build_liouvillian(ham, LindbladSpec(1.0, {1: [S_MINUS]}))
        w = np.sort(np.linalg.eigvals(liou.matrix.toarray()).real)
        np.testing.assert_allclose(w, [-1.0, -0.5, -0.5, 0.0], atol=1e-12)

    @pytest.mark.parametrize("n", [2, 3, 4])
    def test_action_matches_equation_of_motion(self, rng, n):
        p = XXZParams(n_sites=n, anisotropy=0.7, rate=1.3, drive=0.6)
        ham = xxz_hamiltonian(p)
        spec = boundary_drive(p)
        liou = build_liouvillian(ham, spec)
        h_dense = ham.to_dense()
        for _ in range(3):
            rho = random_density(rng, 2**n)
            got = (liou.matrix @ rho.reshape(-1)).reshape(2**n, 2**n)
            np.testing.assert_allclose(got, lindblad_rhs(h_dense, spec, n, rho),
                                       atol=1e-10)

    def test_matrix_free_path_matches_equation_of_motion(self, rng):
        # 7 sites exceeds the sparse-matrix cutoff, so apply() is the
        # matrix-free closure acting on the 2^n x 2^n density matrix.
        p = XXZParams(n_sites=7, anisotropy=0.5, rate=1.2, drive=1.0)
        ham = xxz_hamiltonian(p)
        spec = boundary_drive(p)
        liou = build_liouvillian(ham, spec)
        assert liou.matrix is None
        rho = random_density(rng, 128)
        got = liou.apply(rho.reshape(-1)).reshape(128, 128)
        np.testing.assert_allclose(
            got, lindblad_rhs(ham.to_dense(), spec, 7, rho), atol=1e-10)

    def test_trace_functional_left_null(self):
        p = XXZParams(n_sites=3, anisotropy=1.0, drive=1.0)
        liou = build_liouvillian(xxz_hamiltonian(p), boundary_drive(p))
        ident = np.eye(8, dtype=complex).reshape(-1)
        np.testing.assert_allclose(ident.conj() @ liou.matrix.toarray(), 0,
                                   atol=1e-10)

    def test_hermiticity_preserved(self, rng):
        p = XXZParams(n_sites=2, anisotropy=0.5)
        liou = build_liouvillian(xxz_hamiltonian(p), boundary_drive(p))
        rho = random_density(rng, 4)
        out = (liou.matrix @ rho.reshape(-1)).reshape(4, 4)
        np.testing.assert_allclose(out, out.conj().T, atol=1e-12)

    def test_spectrum_nonpositive_real_parts(self):
        for n in [1, 2, 3]:
            p = XXZParams(n_sites=n, anisotropy=0.5)
            liou = build_liouvillian(xxz_hamiltonian(p), boundary_drive(p))
            w = np.linalg.eigvals(liou.matrix.toarray())
            assert w.real.max() <= 1e-9
            assert np.min(np.abs(w)) <= 1e-9   # a zero mode exists


class TestEvolveExact:
    def test_time_zero_identity(self, rng):
        p = XXZParams(n_sites=2)
        liou = build_liouvillian(xxz_hamiltonian(p), boundary_drive(p))
        rho = random_density(rng, 4)
        np.testing.assert_array_equal(evolve_exact(liou, rho, 0.0), rho)

    def test_amplitude_damping_analytic(self):
        liou = build_liouvillian(HamiltonianSpec(1, []),
                                 LindbladSpec(1.0, {1: [S_MINUS]}))
        rho0 = np.outer(UP, UP.conj())
        for t in [0.5, 1.0, 3.0]:
            rho = evolve_exact(liou, rho0, t)
            z = np.trace(rho @ PAULI_Z).real
            np.testing.assert_allclose(z, 2 * np.exp(-t) - 1, atol=1e-9)

    def test_closed_xx_oscillation(self):
        ham = HamiltonianSpec(2, [
            HamTerm(1.0, (1, 2), [PAULI_X, PAULI_X]),
            HamTerm(1.0, (1, 2), [PAULI_Y, PAULI_Y])])
        liou = build_liouvillian(ham, LindbladSpec(0.0, {}))
        psi = np.kron(UP, DOWN)
        rho0 = np.outer(psi, psi.conj())
        z1 = embed_ops({1: PAULI_Z}, 2).toarray()
        for t in [0.1, 0.3, 0.7]:
            rho = evolve_exact(liou, rho0, t)
            np.testing.assert_allclose(np.trace(rho @ z1).real,
                                       np.cos(4 * t), atol=1e-8)

    def test_trace_and_positivity_long_time(self):
        p = XXZParams(n_sites=2, anisotropy=0.5)
        liou = build_liouvillian(xxz_hamiltonian(p), boundary_drive(p))
        rho = np.eye(4, dtype=complex) / 4
        out = evolve_exact(liou, rho, 100.0)
        np.testing.assert_allclose(np.trace(out).real, 1.0, atol=1e-9)
        assert np.linalg.eigvalsh(out).min() >= -1e-8

    def test_composition_property(self, rng):
        p = XXZParams(n_sites=2, anisotropy=1.5)
        liou = build_liouvillian(xxz_hamiltonian(p), boundary_drive(p))
        rho = random_density(rng, 4)
        ab = evolve_exact(liou, evolve_exact(liou, rho, 0.7), 1.1)
        once = evolve_exact(liou, rho, 1.8)
        np.testing.assert_allclose(ab, once, atol=1e-8)

    def test_krylov_path_matches_dense(self, rng):
        # 6 sites exceeds the dense-propagator cutoff; compare a 4-site
        # system forced through the Arnoldi path against the dense result.
        p = XXZParams(n_sites=4, anisotropy=0.5)
        liou = build_liouvillian(xxz_hamiltonian(p), boundary_drive(p))
        rho = random_density(rng, 16)
        dense = evolve_exact(liou, rho, 0.8)
        from ttosim.linalg import arnoldi_expv
        kry = arnoldi_expv(liou.apply, rho.reshape(-1), 0.8, tol=1e-11)
        np.testing.assert_allclose(kry.reshape(16, 16), dense, atol=1e-8)

    def test_trajectory_matches_single_shots(self, rng):
        p = XXZParams(n_sites=2, anisotropy=0.5)
        liou = build_liouvillian(xxz_hamiltonian(p), boundary_drive(p))
        rho = random_density(rng, 4)
        times = [0.0, 0.3, 0.6, 1.2]
        for t, rt in exact_trajectory(liou, rho, times):
            np.testing.assert_allclose(rt, evolve_exact(liou, rho, t),
                                       atol=1e-9)


class TestStationaryState:
    def test_single_site_pumped_full(self):
        liou = build_liouvillian(HamiltonianSpec(1, []),
                                 LindbladSpec(1.0, {1: [np.sqrt(2) * S_PLUS]}))
        rho = stationary_state(liou)
        np.testing.assert_allclose(rho, np.outer(UP, UP.conj()), atol=1e-9)

    def test_single_site_unpolarized(self):
        spec = LindbladSpec(1.0, {1: [S_PLUS, S_MINUS]})
        liou = build_liouvillian(HamiltonianSpec(1, []), spec)
        rho = stationary_state(liou)
        np.testing.assert_allclose(rho, np.eye(2) / 2, atol=1e-9)

    @pytest.mark.parametrize("n", [2, 4])
    def test_driven_xxz_uniform_current(self, n):
        p = XXZParams(n_sites=n, anisotropy=0.5, rate=1.0, drive=1.0)
        liou = build_liouvillian(xxz_hamiltonian(p), boundary_drive(p))
        rho = stationary_state(liou)
        rec = dense_observables(rho)
        np.testing.assert_allclose(liou.apply(rho.reshape(-1)), 0, atol=1e-8)
        # stationarity forces a site-independent current
        np.testing.assert_allclose(rec.current, rec.current[0], atol=1e-8)
        assert rec.current[0] > 0   # drive pushes magnetization rightward

    def test_degenerate_null_space_reported(self):
        # no dissipation at all: every density matrix commuting with H is
        # stationary, the null space is massively degenerate
        p = XXZParams(n_sites=2, anisotropy=0.5)
        liou = build_liouvillian(xxz_hamiltonian(p), LindbladSpec(0.0, {}))
        with pytest.raises(ValueError, match="multiplicity"):
            stationary_state(liou)


class TestDenseObservables:
    def test_maximally_mixed_two_sites(self):
        rec = dense_observables(np.eye(4, dtype=complex) / 4)
        np.testing.assert_allclose(rec.s_total, 2 * np.log(2), atol=1e-12)
        np.testing.assert_allclose(rec.mutual_information, 0.0, atol=1e-12)
        np.testing.assert_allclose(rec.log_negativity, 0.0, atol=1e-12)

    def test_bell_pair(self):
        bell = np.zeros(4, dtype=complex)
        bell[0] = bell[3] = 1 / np.sqrt(2)
        rec = dense_observables(np.outer(bell, bell.conj()))
        np.testing.assert_allclose(rec.log_negativity, np.log(2), atol=1e-12)
        np.testing.assert_allclose(rec.s_left, np.log(2), atol=1e-12)
        np.testing.assert_allclose(rec.mutual_information, 2 * np.log(2),
                                   atol=1e-12)
        np.testing.assert_allclose(rec.s_total, 0.0, atol=1e-10)

    def test_record_invariants(self, rng):
        rec = dense_observables(random_density(rng, 16))
        rec.validate()


class TestTwoQubitEof:
    def test_bell_pair_is_ln2(self):
        bell = np.zeros(4, dtype=complex)
        bell[0] = bell[3] = 1 / np.sqrt(2)
        np.testing.assert_allclose(two_qubit_eof(np.outer(bell, bell.conj())),
                                   np.log(2), atol=1e-12)

    def test_separable_is_zero(self, rng):
        rho = np.diag([0.4, 0.1, 0.3, 0.2]).astype(complex)
        assert two_qubit_eof(rho) == 0.0

    def test_werner_state_threshold(self):
        # Werner states are separable up to visibility 1/3
        bell = np.zeros(4, dtype=complex)
        bell[1] = 1 / np.sqrt(2)
        bell[2] = -1 / np.sqrt(2)
        proj = np.outer(bell, bell.conj())
        for vis, entangled in [(0.2, False), (0.8, True)]:
            rho = vis * proj + (1 - vis) * np.eye(4) / 4
            assert (two_qubit_eof(rho) > 1e-6) == entangled


class TestSchrodinger:
    def test_matches_liouvillian_closed_evolution(self, rng):
        p = XXZParams(n_sites=3, anisotropy=1.0)
        ham = xxz_hamiltonian(p)
        liou = build_liouvillian(ham, LindbladSpec(0.0, {}))
        vecs = initial_state("neel", 3)
        psi0 = np.array([1.0], dtype=complex)
        for v in vecs:
            psi0 = np.kron(psi0, v)
        for t, psi in schrodinger_trajectory(ham, psi0, [0.4, 0.9]):
            rho = evolve_exact(liou, np.outer(psi0, psi0.conj()), t)
            np.testing.assert_allclose(rho, np.outer(psi, psi.conj()),
                                       atol=1e-9)
