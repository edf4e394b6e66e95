import numpy as np
import pytest

from gedmrg import MatrixProductOperator, XxzParams
from gedmrg.errors import DenseLimitError
from gedmrg.mpo.mpo import (SZ, identity_mpo, mpo_add, mpo_apply, mpo_is_hermitian, mpo_scale,
                            mpo_tensor_product, mpo_to_dense, mpo_trace, product_density_mpo,
                            reduced_density_mpo, xxz_mpo)
from gedmrg.mps.mps import expectation, from_dense_state, overlap, product_mps, random_mps, to_dense
from gedmrg.oracle.oracle import (DenseState, exact_ground_state, reduced_density,
                                  xxz_dense_hamiltonian)


@pytest.fixture
def bell():
    return from_dense_state(np.array([0, 1, 1, 0]) / np.sqrt(2), 2, 2)


@pytest.fixture(scope="module")
def xxz_ground_8():
    _, ground = exact_ground_state(xxz_dense_hamiltonian(XxzParams(J=1.0, delta=0.5, h=0.0, N=8)))
    return ground, from_dense_state(ground.amplitudes, 2, 8)


def test_heisenberg_pair_spectrum():
    H = mpo_to_dense(xxz_mpo(XxzParams(J=1.0, delta=1.0, h=0.0, N=2)))
    np.testing.assert_allclose(np.linalg.eigvalsh(H), [-0.25, -0.25, -0.25, 0.75], atol=1e-14)
    assert np.allclose(H, H.conj().T)


def test_field_only_chain():
    H = mpo_to_dense(xxz_mpo(XxzParams(J=0.0, delta=0.7, h=1.0, N=4)))
    assert np.allclose(H, np.diag(np.diag(H)))
    assert abs(np.min(np.diag(H).real) + 4.0) < 1e-14


def test_xx_pair_ground_energy():
    H = mpo_to_dense(xxz_mpo(XxzParams(J=1.0, delta=0.0, h=0.0, N=2)))
    assert abs(np.linalg.eigvalsh(H)[0] + 0.5) < 1e-14


def test_xxz_mpo_matches_kronecker_construction():
    p = XxzParams(J=0.8, delta=-1.3, h=0.35, N=6)
    op = xxz_mpo(p)
    assert op.bond_dim == 5
    np.testing.assert_allclose(mpo_to_dense(op), xxz_dense_hamiltonian(p), atol=1e-13)


def test_xxz_params_validation():
    with pytest.raises(ValueError, match="N >= 2"):
        XxzParams(N=1)


def test_expectation_matches_dense():
    p = XxzParams(J=1.0, delta=0.4, h=0.2, N=6)
    psi = random_mps(6, 2, 4, seed=2)
    v = to_dense(psi)
    dense = np.vdot(v, xxz_dense_hamiltonian(p) @ v)
    assert abs(expectation(psi, xxz_mpo(p)) - dense) < 1e-10
    assert abs(expectation(psi, identity_mpo(6)) - 1.0) < 1e-12


def test_reduced_density_full_region_is_projector():
    psi = random_mps(5, 2, 4, seed=1)
    v = to_dense(psi)
    rho = mpo_to_dense(reduced_density_mpo(psi, range(5)))
    np.testing.assert_allclose(rho, np.outer(v, v.conj()), atol=1e-10)


def test_reduced_density_bell_marginal(bell):
    rho = mpo_to_dense(reduced_density_mpo(bell, [0]))
    np.testing.assert_allclose(rho, np.eye(2) / 2, atol=1e-12)


def test_reduced_density_matches_partial_trace(xxz_ground_8):
    ground, psi = xxz_ground_8
    region = [0, 1, 5, 6]
    op = reduced_density_mpo(psi, region)
    np.testing.assert_allclose(mpo_to_dense(op), reduced_density(ground, region), atol=1e-8)


@pytest.mark.parametrize("region", [[2], [0, 3], [1, 2, 6], [0, 4, 5, 7], list(range(8))])
def test_reduced_density_properties(region):
    psi = random_mps(8, 2, 3, seed=len(region))
    op = reduced_density_mpo(psi, region)
    rho = mpo_to_dense(op)
    assert abs(mpo_trace(op) - 1.0) < 1e-10
    assert mpo_is_hermitian(op)
    assert np.linalg.eigvalsh(rho)[0] >= -1e-10
    assert op.bond_dim <= psi.chi ** 2
    np.testing.assert_allclose(rho, reduced_density(DenseState.from_vector(to_dense(psi)), region), atol=1e-10)


def test_reduced_density_rejects_empty_region(bell):
    with pytest.raises(ValueError, match="nonempty"):
        reduced_density_mpo(bell, [])


def test_product_density_of_product_state():
    psi = product_mps([[1, 0], [1, 1], [0, 1], [1, 2]])
    sigma = mpo_to_dense(product_density_mpo(psi, [0, 1], [3]))
    rho = mpo_to_dense(reduced_density_mpo(psi, [0, 1, 3]))
    np.testing.assert_allclose(sigma, rho, atol=1e-10)


def test_product_density_of_bell_pair(bell):
    np.testing.assert_allclose(mpo_to_dense(product_density_mpo(bell, [0], [1])), np.eye(4) / 4, atol=1e-12)


def test_product_density_matches_kron(xxz_ground_8):
    ground, psi = xxz_ground_8
    sigma = mpo_to_dense(product_density_mpo(psi, [0, 1], [6, 7]))
    expected = np.kron(reduced_density(ground, [0, 1]), reduced_density(ground, [6, 7]))
    np.testing.assert_allclose(sigma, expected, atol=1e-8)


def test_product_density_rejects_bad_regions():
    psi = random_mps(6, 2, 2, seed=0)
    with pytest.raises(ValueError, match="overlap"):
        product_density_mpo(psi, [0, 1], [1, 2])
    with pytest.raises(ValueError, match="interleaved"):
        product_density_mpo(psi, [0, 3], [1, 4])


def test_kernel_of_sigma_annihilates_rho():
    rng = np.random.default_rng(0)
    for trial in range(10):
        psi = random_mps(7, 2, 4, seed=trial)
        a_size = int(rng.integers(1, 4))
        b_start = int(rng.integers(a_size, 6))
        region_a = list(range(a_size))
        region_b = list(range(b_start, 7))
        rho = mpo_to_dense(reduced_density_mpo(psi, region_a + region_b))
        sigma = mpo_to_dense(product_density_mpo(psi, region_a, region_b))
        w, V = np.linalg.eigh(sigma)
        kernel = V[:, w < 1e-12]
        if kernel.shape[1]:
            assert np.max(np.linalg.norm(rho @ kernel, axis=0)) < 1e-10


def test_mpo_apply_identity():
    psi = random_mps(6, 2, 4, seed=9)
    out, nrm = mpo_apply(identity_mpo(6), psi)
    assert abs(abs(overlap(out, psi)) - 1.0) < 1e-10
    assert abs(nrm - 1.0) < 1e-10


def test_mpo_apply_matches_dense():
    p = XxzParams(J=1.0, delta=0.3, h=0.1, N=6)
    psi = random_mps(6, 2, 3, seed=4)
    out, nrm = mpo_apply(xxz_mpo(p), psi)
    np.testing.assert_allclose(nrm * to_dense(out), xxz_dense_hamiltonian(p) @ to_dense(psi), atol=1e-10)


def test_mpo_apply_annihilating_operator():
    psi = product_mps([[1, 0], [1, 0]])
    raising = MatrixProductOperator.from_arrays([np.array([[0, 1], [0, 0]]).reshape(1, 2, 2, 1)] * 2)
    with pytest.raises(ValueError, match="annihilates"):
        mpo_apply(raising, psi)


def test_mpo_algebra():
    p = XxzParams(J=1.0, delta=0.5, h=0.0, N=4)
    h = xxz_mpo(p)
    dense = mpo_to_dense(h)
    np.testing.assert_allclose(mpo_to_dense(mpo_scale(h, -2.0)), -2.0 * dense, atol=1e-13)
    np.testing.assert_allclose(mpo_to_dense(mpo_add(h, identity_mpo(4))), dense + np.eye(16), atol=1e-13)
    assert abs(mpo_trace(identity_mpo(4)) - 16.0) < 1e-13
    product = mpo_tensor_product(identity_mpo(1), xxz_mpo(XxzParams(N=3, delta=0.5)))
    np.testing.assert_allclose(mpo_to_dense(product),
                               np.kron(np.eye(2), xxz_dense_hamiltonian(XxzParams(N=3, delta=0.5))), atol=1e-13)


def test_mpo_to_dense_limit():
    with pytest.raises(DenseLimitError):
        mpo_to_dense(identity_mpo(6), dense_limit=32)


def test_mpo_rejects_open_boundary_bond():
    with pytest.raises(ValueError, match="Boundary bonds"):
        MatrixProductOperator.from_arrays([np.zeros((2, 2, 2, 1))])


def test_sz_is_half_pauli():
    np.testing.assert_array_equal(2 * SZ, np.diag([1, -1]))
