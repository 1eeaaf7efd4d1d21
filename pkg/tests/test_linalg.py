import itertools

import numpy as np
import pytest
import scipy.linalg

from ttosim.linalg import (DenseTensor, KrylovError, arnoldi_expv, contract,
                           hermitian_eig, krylov_expv, matrix_exp, trace_norm,
                           truncated_svd)
from ttosim.models import PAULI_X, PAULI_Z

from conftest import random_complex


def nested_loop_contract(a, labels_a, b, labels_b, pairs):
    """Brute-force contraction oracle: explicit sums over all indices."""
    ax_a = [labels_a.index(la) for la, _ in pairs]
    ax_b = [labels_b.index(lb) for _, lb in pairs]
    keep_a = [i for i in range(a.ndim) if i not in ax_a]
    keep_b = [i for i in range(b.ndim) if i not in ax_b]
    out_shape = [a.shape[i] for i in keep_a] + [b.shape[i] for i in keep_b]
    out = np.zeros(out_shape, dtype=complex)
    for idx_a in itertools.product(*[range(s) for s in a.shape]):
        for idx_b in itertools.product(*[range(s) for s in b.shape]):
            if any(idx_a[ia] != idx_b[ib] for ia, ib in zip(ax_a, ax_b)):
                continue
            pos = tuple(idx_a[i] for i in keep_a) + tuple(idx_b[i] for i in keep_b)
            out[pos] += a[idx_a] * b[idx_b]
    return out


class TestContract:
    def test_identity_on_vector(self):
        eye = DenseTensor(np.eye(2), ("a", "b"))
        vec = DenseTensor(np.array([1.0, 0.0]), ("b",))
        out = contract(eye, vec, [("b", "b")])
        assert out.labels == ("a",)
        np.testing.assert_allclose(out.data, [1, 0])

    def test_full_trace_xx(self):
        x1 = DenseTensor(PAULI_X, ("a", "b"))
        x2 = DenseTensor(PAULI_X, ("b", "a"))
        out = contract(x1, x2, [("a", "a"), ("b", "b")])
        assert out.data.shape == ()
        np.testing.assert_allclose(complex(out.data), 2.0, atol=1e-14)

    def test_random_three_leg_vs_nested_loops(self, rng):
        a = random_complex(rng, 2, 3, 4)
        b = random_complex(rng, 4, 3, 5)
        ta = DenseTensor(a, ("i", "j", "k"))
        tb = DenseTensor(b, ("k", "j", "m"))
        out = contract(ta, tb, [("k", "k"), ("j", "j")])
        expect = nested_loop_contract(a, ["i", "j", "k"], b, ["k", "j", "m"],
                                      [("k", "k"), ("j", "j")])
        assert out.labels == ("i", "m")
        np.testing.assert_allclose(out.data, expect, rtol=1e-12, atol=1e-12)

    def test_contract_with_identity_is_relabel(self, rng):
        a = random_complex(rng, 3, 5)
        ta = DenseTensor(a, ("p", "q"))
        eye = DenseTensor(np.eye(5), ("q", "r"))
        out = contract(ta, eye, [("q", "q")])
        np.testing.assert_array_equal(out.data, a)

    def test_dimension_mismatch(self):
        ta = DenseTensor(np.zeros((2, 3)), ("a", "b"))
        tb = DenseTensor(np.zeros((4,)), ("c",))
        with pytest.raises(ValueError, match="mismatch"):
            contract(ta, tb, [("b", "c")])

    def test_unknown_label(self):
        ta = DenseTensor(np.zeros((2,)), ("a",))
        with pytest.raises(KeyError):
            contract(ta, ta.relabel({"a": "b"}), [("x", "b")])

    def test_duplicate_labels_rejected(self):
        with pytest.raises(ValueError, match="unique"):
            DenseTensor(np.zeros((2, 2)), ("a", "a"))


class TestTruncatedSvd:
    def test_rank_one_outer_product(self):
        u = np.array([1.0, 0.0])
        v = np.array([0.0, 1.0, 0.0])
        t = DenseTensor(np.outer(u, v), ("a", "b"))
        res = truncated_svd(t, ["a"], max_rank=4)
        assert res.singular_values.shape == (1,)
        np.testing.assert_allclose(res.singular_values, [1.0], atol=1e-14)
        assert res.discarded_weight == 0.0

    def test_identity_truncated_to_rank_one(self):
        t = DenseTensor(np.eye(2), ("a", "b"))
        res = truncated_svd(t, ["a"], max_rank=1)
        np.testing.assert_allclose(res.singular_values, [1.0], atol=1e-14)
        assert abs(res.discarded_weight - 0.5) < 1e-14

    def test_random_full_rank_reconstructs(self, rng):
        mat = random_complex(rng, 8, 6)
        t = DenseTensor(mat, ("a", "b"))
        res = truncated_svd(t, ["a"], max_rank=6, cutoff=0.0)
        recon = (res.left_isometry.data
                 @ np.diag(res.singular_values)
                 @ res.right_isometry.data)
        np.testing.assert_allclose(recon, mat, rtol=1e-10, atol=1e-10)
        assert res.discarded_weight < 1e-28

    def test_isometry_conditions(self, rng):
        t = DenseTensor(random_complex(rng, 3, 4, 5), ("a", "b", "c"))
        res = truncated_svd(t, ["a", "c"], max_rank=3)
        u = res.left_isometry.to_matrix(["a", "c"])
        vh = res.right_isometry.to_matrix(["s"])
        np.testing.assert_allclose(u.conj().T @ u, np.eye(3), atol=1e-10)
        np.testing.assert_allclose(vh @ vh.conj().T, np.eye(3), atol=1e-10)
        assert np.all(np.diff(res.singular_values) <= 1e-15)
        assert np.all(res.singular_values >= 0)

    def test_discarded_weight_matches_error(self, rng):
        mat = random_complex(rng, 9, 9)
        t = DenseTensor(mat, ("a", "b"))
        res = truncated_svd(t, ["a"], max_rank=4)
        recon = (res.left_isometry.data
                 @ np.diag(res.singular_values)
                 @ res.right_isometry.data)
        err2 = np.linalg.norm(mat - recon) ** 2
        total = np.linalg.norm(mat) ** 2
        np.testing.assert_allclose(err2, res.discarded_weight * total,
                                   rtol=1e-10)

    def test_phase_determinism(self, rng):
        mat = random_complex(rng, 5, 5)
        t = DenseTensor(mat, ("a", "b"))
        r1 = truncated_svd(t, ["a"], max_rank=5)
        r2 = truncated_svd(t, ["a"], max_rank=5)
        np.testing.assert_array_equal(r1.left_isometry.data,
                                      r2.left_isometry.data)
        k = r1.singular_values.size
        u = r1.left_isometry.data
        idx = np.argmax(np.abs(u), axis=0)
        picked = u[idx, np.arange(k)]
        assert np.all(np.abs(picked.imag) < 1e-12)
        assert np.all(picked.real > 0)

    def test_bad_partition_rejected(self):
        t = DenseTensor(np.zeros((2, 2)), ("a", "b"))
        with pytest.raises(ValueError):
            truncated_svd(t, [], max_rank=1)
        with pytest.raises(ValueError):
            truncated_svd(t, ["a", "b"], max_rank=1)

    def test_nonfinite_rejected(self):
        t = DenseTensor(np.array([[np.inf, 0], [0, 1]]), ("a", "b"))
        with pytest.raises(ValueError, match="finite"):
            truncated_svd(t, ["a"], max_rank=2)


class TestHermitianEig:
    def test_pauli_z(self):
        w, _ = hermitian_eig(PAULI_Z)
        np.testing.assert_allclose(w, [-1, 1], atol=1e-14)

    def test_pauli_x_eigenvectors(self):
        w, v = hermitian_eig(PAULI_X)
        np.testing.assert_allclose(w, [-1, 1], atol=1e-14)
        for i, sign in enumerate([-1, 1]):
            vec = v[:, i]
            target = np.array([1, sign]) / np.sqrt(2)
            phase = vec[np.argmax(np.abs(vec))]
            phase /= abs(phase)
            np.testing.assert_allclose(vec / phase, target * np.sign(target[0]),
                                       atol=1e-12)

    def test_random_hermitian_reconstructs(self, rng):
        a = random_complex(rng, 6, 6)
        h = (a + a.conj().T) / 2
        w, v = hermitian_eig(h)
        np.testing.assert_allclose(v @ np.diag(w) @ v.conj().T, h,
                                   rtol=1e-10, atol=1e-10)
        np.testing.assert_allclose(v.conj().T @ v, np.eye(6), atol=1e-10)
        assert np.all(np.diff(w) >= -1e-14)

    def test_non_hermitian_rejected(self, rng):
        with pytest.raises(ValueError, match="Hermitian"):
            hermitian_eig(np.array([[0, 1], [0, 0]], dtype=complex))

    def test_non_square_rejected(self):
        with pytest.raises(ValueError, match="square"):
            hermitian_eig(np.zeros((2, 3)))


class TestMatrixExp:
    def test_zero(self):
        np.testing.assert_allclose(matrix_exp(np.zeros((3, 3))), np.eye(3),
                                   atol=1e-14)

    def test_exp_i_pi_x(self):
        np.testing.assert_allclose(matrix_exp(1j * np.pi * PAULI_X),
                                   -np.eye(2), atol=1e-13)

    def test_random_vs_taylor_oracle(self, rng):
        a = random_complex(rng, 4, 4)
        term = np.eye(4, dtype=complex)
        total = term.copy()
        for k in range(1, 200):
            term = term @ a / k
            total += term
        np.testing.assert_allclose(matrix_exp(a), total, rtol=1e-12, atol=1e-12)

    def test_inverse_property(self, rng):
        a = random_complex(rng, 8, 8)
        a *= 10.0 / np.linalg.norm(a, 2)
        prod = matrix_exp(a) @ matrix_exp(-a)
        np.testing.assert_allclose(prod, np.eye(8), atol=1e-10)

    def test_size_guard(self):
        with pytest.raises(ValueError, match="krylov"):
            matrix_exp(np.zeros((17, 17)))


class TestKrylovExpv:
    def test_single_qubit_phase(self):
        apply = lambda v: PAULI_Z @ v
        out, info = krylov_expv(apply, np.array([1.0, 0.0], dtype=complex),
                                -1j * np.pi / 2)
        np.testing.assert_allclose(out, [-1j, 0.0], atol=1e-10)
        assert info.converged

    def test_zero_map(self, rng):
        v = random_complex(rng, 7)
        out, info = krylov_expv(lambda x: np.zeros_like(x), v, -0.3j)
        np.testing.assert_allclose(out, v, atol=1e-13)
        assert info.breakdown

    def test_random_hermitian_vs_dense(self, rng):
        a = random_complex(rng, 16, 16)
        h = (a + a.conj().T) / 2
        v = random_complex(rng, 16)
        out, _ = krylov_expv(lambda x: h @ x, v, -0.1j, tol=1e-12)
        expect = scipy.linalg.expm(-0.1j * h) @ v
        np.testing.assert_allclose(out, expect, rtol=1e-10, atol=1e-10)

    def test_norm_preserved_imaginary_tau(self, rng):
        a = random_complex(rng, 24, 24)
        h = (a + a.conj().T) / 2
        v = random_complex(rng, 24)
        out, _ = krylov_expv(lambda x: h @ x, v, -0.05j, tol=1e-11)
        np.testing.assert_allclose(np.linalg.norm(out), np.linalg.norm(v),
                                   rtol=1e-9)

    def test_matrix_shaped_vectors(self, rng):
        h = np.diag([1.0, 2.0, 3.0, 4.0]).astype(complex)
        x = random_complex(rng, 2, 2)
        out, _ = krylov_expv(lambda m: (h @ m.reshape(-1)).reshape(2, 2),
                             x, -0.2j)
        expect = (scipy.linalg.expm(-0.2j * h) @ x.reshape(-1)).reshape(2, 2)
        np.testing.assert_allclose(out, expect, atol=1e-10)

    def test_max_iters_error(self, rng):
        a = random_complex(rng, 64, 64)
        h = (a + a.conj().T) / 2
        h *= 50.0 / np.linalg.norm(h, 2)
        v = random_complex(rng, 64)
        with pytest.raises(KrylovError, match="residual"):
            krylov_expv(lambda x: h @ x, v, -1j, tol=1e-12, max_iters=4)

    def test_zero_vector_rejected(self):
        with pytest.raises(ValueError, match="nonzero"):
            krylov_expv(lambda x: x, np.zeros(3, dtype=complex), 1.0)


class TestArnoldiExpv:
    def test_non_hermitian_vs_dense(self, rng):
        a = random_complex(rng, 20, 20)
        a *= 3.0 / np.linalg.norm(a, 2)
        v = random_complex(rng, 20)
        out = arnoldi_expv(lambda x: a @ x, v, 1.0, tol=1e-11)
        np.testing.assert_allclose(out, scipy.linalg.expm(a) @ v,
                                   rtol=1e-8, atol=1e-8)

    def test_long_time_decay(self, rng):
        gen = np.diag([0.0, -0.5, -1.0]).astype(complex)
        v = np.array([1.0, 1.0, 1.0], dtype=complex)
        out = arnoldi_expv(lambda x: gen @ x, v, 30.0, tol=1e-10)
        np.testing.assert_allclose(out, [1.0, np.exp(-15), np.exp(-30)],
                                   atol=1e-8)


class TestTraceNorm:
    def test_density_matrix(self, rng):
        a = random_complex(rng, 5, 5)
        rho = a @ a.conj().T
        rho /= np.trace(rho)
        np.testing.assert_allclose(trace_norm(rho), 1.0, rtol=1e-12)

    def test_pauli_x(self):
        np.testing.assert_allclose(trace_norm(PAULI_X), 2.0, rtol=1e-13)

    def test_bell_partial_transpose(self):
        bell = np.zeros(4, dtype=complex)
        bell[0] = bell[3] = 1 / np.sqrt(2)
        rho = np.outer(bell, bell.conj())
        pt = rho.reshape(2, 2, 2, 2).transpose(2, 1, 0, 3).reshape(4, 4)
        w = np.linalg.eigvalsh(pt)
        np.testing.assert_allclose(np.sort(w), [-0.5, 0.5, 0.5, 0.5],
                                   atol=1e-12)
        np.testing.assert_allclose(trace_norm(pt), 2.0, rtol=1e-12)
        assert trace_norm(pt) >= abs(np.trace(pt)) - 1e-12

    def test_unitary_invariance(self, rng):
        m = random_complex(rng, 6, 6)
        q1, _ = np.linalg.qr(random_complex(rng, 6, 6))
        q2, _ = np.linalg.qr(random_complex(rng, 6, 6))
        np.testing.assert_allclose(trace_norm(q1 @ m @ q2), trace_norm(m),
                                   rtol=1e-10)
