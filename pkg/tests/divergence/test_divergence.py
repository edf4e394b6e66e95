import logging

import numpy as np
import pytest

from gedmrg import XxzParams
from gedmrg.config.config import DENSE_LIMIT_ENV, SweepConfig
from gedmrg.divergence.divergence import (DivergenceResult, Geometry, GeometryKind, max_divergence_edge,
                                          max_divergence_exact_mps, max_divergence_general,
                                          mutual_information_vn, regularized_inverse_sqrt_schmidt)
from gedmrg.dmrg.dmrg import dmrg_ground_state
from gedmrg.errors import DenseLimitError
from gedmrg.mpo.mpo import xxz_mpo
from gedmrg.mps.mps import canonicalize, from_dense_state, product_mps, random_mps, to_dense
from gedmrg.oracle.free_fermions import free_fermion_mi
from gedmrg.oracle.oracle import (DenseState, exact_ground_state, max_divergence_exact, mutual_information_exact,
                                  xxz_dense_hamiltonian)

BELL = np.array([0, 1, 1, 0]) / np.sqrt(2)


@pytest.fixture
def cfg():
    return SweepConfig(max_sweeps=20, energy_tol=1e-11, chi_max=16)


def ground_state(p):
    _, state = exact_ground_state(xxz_dense_hamiltonian(p))
    return from_dense_state(state.amplitudes, 2, p.N)


@pytest.fixture(scope="module")
def xx_8():
    return ground_state(XxzParams(J=1.0, delta=0.0, N=8))


@pytest.fixture(scope="module")
def xx_10():
    return ground_state(XxzParams(J=1.0, delta=0.0, N=10))


def test_aeb_geometry():
    geom = Geometry.aeb(10, 3)
    assert geom.kind is GeometryKind.AEB
    assert geom.region_a == (0, 1, 2)
    assert geom.region_b == (7, 8, 9)
    assert geom.union == (0, 1, 2, 7, 8, 9)


@pytest.mark.parametrize("n_sites, ns, region_a, region_b", [
    (10, 2, (2, 3), (6, 7)),
    (11, 2, (3, 4), (7, 8)),
    (7, 2, (1, 2), (4, 5)),
])
def test_eaebe_geometry(n_sites, ns, region_a, region_b):
    geom = Geometry.eaebe(n_sites, ns)
    assert geom.region_a == region_a
    assert geom.region_b == region_b


def test_custom_geometry_sorts_regions():
    geom = Geometry.custom(6, [1, 0], [5, 4])
    assert geom.region_a == (0, 1)
    assert geom.region_b == (4, 5)
    assert "custom" in str(geom)


@pytest.mark.parametrize("build", [
    lambda: Geometry.aeb(5, 3),
    lambda: Geometry.aeb(5, 0),
    lambda: Geometry.eaebe(6, 2),
    lambda: Geometry.custom(6, [0, 1], [1, 2]),
    lambda: Geometry.custom(6, [0], [6]),
    lambda: Geometry.custom(6, [], [2]),
])
def test_invalid_geometries(build):
    with pytest.raises(ValueError):
        build()


def test_regularized_inverse_sqrt_schmidt():
    np.testing.assert_allclose(regularized_inverse_sqrt_schmidt([0.6, 0.8], 0.64), [1.0, 1.0 / np.sqrt(1.28)])
    assert np.isinf(regularized_inverse_sqrt_schmidt([1.0, 0.0], 0.0)[1])
    np.testing.assert_allclose(regularized_inverse_sqrt_schmidt([1.0], 0.0), [1.0])
    np.testing.assert_allclose(regularized_inverse_sqrt_schmidt([2 ** -0.5] * 2, 0.0), [np.sqrt(2.0)] * 2)
    damped = regularized_inverse_sqrt_schmidt(np.sqrt([0.9, 0.1, 1e-16]), 1e-6)
    assert abs(damped[2] - 1e3) < 1e-3
    with pytest.raises(ValueError):
        regularized_inverse_sqrt_schmidt([-0.1], 1e-6)
    with pytest.raises(ValueError):
        regularized_inverse_sqrt_schmidt([0.5], -1.0)


def test_negative_divergence_is_logged(caplog):
    with caplog.at_level(logging.WARNING, logger="gedmrg.divergence.divergence"):
        DivergenceResult(d_infinity=-1.0, lam=np.exp(-1.0), method="edge", epsilon=1e-6, converged=True)
    assert "below" in caplog.text


def test_edge_bell_pair(cfg):
    epsilon = 1e-6
    result = max_divergence_edge(from_dense_state(BELL, 2, 2), 1, epsilon, cfg)
    assert abs(result.lam - 1.0 / (0.25 + epsilon)) < 1e-8
    assert abs(result.d_infinity - np.log(4.0)) < 1e-5
    assert result.method == "edge"


def test_edge_product_state(cfg):
    epsilon = 1e-6
    result = max_divergence_edge(product_mps([[1, 0], [1, 1], [0, 1], [2, 1]]), 2, epsilon, cfg)
    assert abs(result.lam - 1.0 / (1.0 + epsilon)) < 1e-10
    assert result.diagnostics["operator_bond_dim"] == 1


def test_gdmrg_bell_pair(cfg):
    result = max_divergence_general(from_dense_state(BELL, 2, 2), Geometry.aeb(2, 1), 1e-6, cfg)
    assert abs(result.d_infinity - np.log(4.0)) < 1e-5
    assert result.converged


def test_edge_matches_shift_regularized_oracle(xx_8, cfg):
    epsilon = 1e-5
    result = max_divergence_edge(xx_8, 2, epsilon, cfg)
    exact = max_divergence_exact_mps(xx_8, Geometry.aeb(8, 2), epsilon)
    assert result.converged
    assert abs(result.d_infinity - exact.d_infinity) < 1e-7


def test_gdmrg_matches_shift_regularized_oracle(xx_8, cfg):
    epsilon = 1e-4
    geom = Geometry.aeb(8, 2)
    result = max_divergence_general(xx_8, geom, epsilon, cfg)
    exact = max_divergence_exact_mps(xx_8, geom, epsilon)
    assert abs(result.d_infinity - exact.d_infinity) < 1e-6
    assert result.diagnostics["cg_mean_iterations"] > 0


def test_edge_and_gdmrg_agree_for_small_epsilon(xx_8, cfg):
    epsilon = 1e-6
    edge = max_divergence_edge(xx_8, 2, epsilon, cfg)
    general = max_divergence_general(xx_8, Geometry.aeb(8, 2), epsilon, cfg)
    exact = max_divergence_exact_mps(xx_8, Geometry.aeb(8, 2), epsilon)
    assert abs(edge.d_infinity - general.d_infinity) < 1e-4
    assert abs(edge.d_infinity - exact.d_infinity) < 1e-6


@pytest.mark.parametrize("n_sites, ns, seed", [(5, 1, 40), (6, 2, 41), (7, 3, 42), (9, 2, 43)])
def test_edge_matches_oracle_on_random_states(n_sites, ns, seed, cfg):
    psi = random_mps(n_sites, 2, 4, seed=seed)
    epsilon = 1e-6
    result = max_divergence_edge(psi, ns, epsilon, cfg)
    exact = max_divergence_exact_mps(psi, Geometry.aeb(n_sites, ns), epsilon)
    assert result.converged
    assert result.diagnostics["local_misses"] == 0
    assert abs(result.d_infinity - exact.d_infinity) < 1e-7


def test_gdmrg_eaebe_matches_oracle(xx_10, cfg):
    geom = Geometry.eaebe(10, 2)
    epsilon = 1e-4
    result = max_divergence_general(xx_10, geom, epsilon, cfg)
    exact = max_divergence_exact_mps(xx_10, geom, epsilon)
    assert abs(result.d_infinity - exact.d_infinity) < 1e-6
    assert not result.diagnostics["regularization_dominated"]


def test_gdmrg_swapped_regions(cfg):
    psi = random_mps(6, 2, 3, seed=21)
    geom = Geometry.custom(6, [4, 5], [0, 1])
    result = max_divergence_general(psi, geom, 1e-4, cfg)
    exact = max_divergence_exact_mps(psi, geom, 1e-4)
    assert abs(result.d_infinity - exact.d_infinity) < 1e-6


def test_gdmrg_rejects_interleaved_regions():
    psi = random_mps(6, 2, 2, seed=22)
    with pytest.raises(ValueError, match="Interleaved"):
        max_divergence_general(psi, Geometry.custom(6, [0, 3], [1, 4]), 1e-4)


def test_gdmrg_rejects_chain_mismatch():
    psi = random_mps(6, 2, 2, seed=23)
    with pytest.raises(ValueError, match="Geometry"):
        max_divergence_general(psi, Geometry.aeb(8, 2), 1e-4)


def test_edge_rejects_bad_arguments():
    psi = random_mps(4, 2, 2, seed=24)
    with pytest.raises(ValueError):
        max_divergence_edge(psi, 3, 1e-6)
    with pytest.raises(ValueError):
        max_divergence_edge(psi, 1, -1e-6)


def test_edge_operator_bond_limit(xx_8):
    with pytest.raises(ValueError, match="exceeds"):
        max_divergence_edge(xx_8, 2, 1e-6, max_operator_bond=1)


def test_exact_mps_matches_dense_oracle(xx_8):
    v = DenseState.from_vector(np.asarray(exact_ground_state(xxz_dense_hamiltonian(
        XxzParams(J=1.0, delta=0.0, N=8)))[1].amplitudes))
    expected = max_divergence_exact(v, [0, 1], [6, 7], 1e-6)
    assert abs(max_divergence_exact_mps(xx_8, Geometry.aeb(8, 2), 1e-6).d_infinity - expected) < 1e-10


def test_mutual_information_matches_oracle(xx_10):
    geom = Geometry.eaebe(10, 2)
    v = DenseState.from_vector(to_dense(xx_10))
    expected = mutual_information_exact(v, geom.region_a, geom.region_b)
    assert abs(mutual_information_vn(xx_10, geom) - expected) < 1e-8


def test_mutual_information_free_fermion_route(xx_10, monkeypatch):
    geom = Geometry.aeb(10, 3)
    params = XxzParams(J=1.0, delta=0.0, N=10)
    monkeypatch.setenv(DENSE_LIMIT_ENV, "16")
    assert abs(mutual_information_vn(xx_10, geom, params) - free_fermion_mi(10, geom.region_a, geom.region_b)) < 1e-12
    with pytest.raises(DenseLimitError):
        mutual_information_vn(xx_10, geom, XxzParams(J=1.0, delta=0.5, N=10))
    with pytest.raises(DenseLimitError):
        mutual_information_vn(xx_10, geom)


def test_divergence_dominates_mutual_information(xx_10):
    geom = Geometry.aeb(10, 2)
    assert max_divergence_exact_mps(xx_10, geom, 1e-12).d_infinity >= mutual_information_vn(xx_10, geom) - 1e-8


def test_small_epsilon_is_stable(xx_8):
    geom = Geometry.aeb(8, 2)
    values = [max_divergence_exact_mps(xx_8, geom, eps).d_infinity for eps in (1e-9, 1e-10, 1e-12)]
    assert abs(values[0] - values[2]) < 5e-2
    assert abs(values[1] - values[2]) < 1e-2


def test_product_state_vanishes(cfg):
    psi = product_mps([[1, 0], [1, 1], [0, 1], [1, 2], [1, 0], [3, 1]])
    for geom in (Geometry.aeb(6, 2), Geometry.custom(6, [0], [3, 4])):
        result = max_divergence_general(psi, geom, 1e-6, cfg)
        assert abs(result.d_infinity) < 1e-5
    assert abs(mutual_information_vn(psi, Geometry.aeb(6, 2))) < 1e-10


@pytest.mark.slow
@pytest.mark.parametrize("delta", [-2.0, 0.0, 1.0])
def test_edge_on_dmrg_ground_state(delta):
    p = XxzParams(J=1.0, delta=delta, N=10)
    cfg = SweepConfig(max_sweeps=30, energy_tol=1e-11, chi_max=32)
    _, psi = dmrg_ground_state(xxz_mpo(p), random_mps(10, 2, 8, seed=25), cfg)
    epsilon = 1e-6
    edge = max_divergence_edge(psi, 3, epsilon, cfg)
    exact = max_divergence_exact_mps(psi, Geometry.aeb(10, 3), epsilon)
    assert edge.converged
    assert abs(edge.d_infinity - exact.d_infinity) < 1e-6


@pytest.mark.slow
def test_gdmrg_on_dmrg_ground_state_matches_dense_mutual_information_bound():
    p = XxzParams(J=1.0, delta=0.0, N=10)
    cfg = SweepConfig(max_sweeps=30, energy_tol=1e-11, chi_max=32)
    _, psi = dmrg_ground_state(xxz_mpo(p), random_mps(10, 2, 8, seed=26), cfg)
    geom = Geometry.eaebe(10, 2)
    result = max_divergence_general(psi, geom, 1e-6, cfg)
    exact = max_divergence_exact_mps(psi, geom, 1e-6)
    assert abs(result.d_infinity - exact.d_infinity) < 1e-5
    v = DenseState.from_vector(np.asarray(exact_ground_state(xxz_dense_hamiltonian(p))[1].amplitudes))
    assert result.d_infinity >= mutual_information_exact(v, geom.region_a, geom.region_b) - 1e-6


def test_mutual_information_bell_pair():
    psi = from_dense_state(BELL, 2, 2)
    assert abs(mutual_information_vn(psi, Geometry.aeb(2, 1)) - 2 * np.log(2.0)) < 1e-12


def test_mutual_information_dense_matches_free_fermions(xx_10):
    geom = Geometry.aeb(10, 3)
    assert abs(mutual_information_vn(xx_10, geom) - free_fermion_mi(10, geom.region_a, geom.region_b)) < 1e-6


@pytest.mark.parametrize("n_sites, seed", [(4, 50), (6, 51), (6, 52), (6, 53)])
def test_full_bipartition_sums_inverse_schmidt_weights(n_sites, seed, cfg):
    ns = n_sites // 2
    psi = random_mps(n_sites, 2, 8, seed=seed)
    s = canonicalize(psi, ns, refresh=True).schmidt[ns - 1]
    epsilon = 1e-16
    expected = np.sum(s ** 2 / (s ** 4 + epsilon))
    edge = max_divergence_edge(psi, ns, epsilon, cfg)
    exact = max_divergence_exact_mps(psi, Geometry.aeb(n_sites, ns), epsilon)
    assert abs(edge.lam / expected - 1.0) < 1e-6
    assert abs(exact.lam / expected - 1.0) < 1e-6
    assert abs(expected / np.sum(s ** -2.0) - 1.0) < 1e-6


DELTA_GRID = [-4.0, -2.0, -1.0, 0.0, 0.5, 1.0, 2.0]


def dmrg_state(delta, seed):
    cfg = SweepConfig(max_sweeps=30, energy_tol=1e-11, chi_max=32)
    return dmrg_ground_state(xxz_mpo(XxzParams(J=1.0, delta=delta, N=10)), random_mps(10, 2, 8, seed=seed), cfg)[1]


@pytest.mark.slow
@pytest.mark.parametrize("delta", DELTA_GRID)
def test_three_methods_agree_on_the_anisotropy_grid(delta):
    psi = dmrg_state(delta, 60)
    cfg = SweepConfig(max_sweeps=30, energy_tol=1e-11, chi_max=32)
    geom = Geometry.aeb(10, 3)
    epsilon = 1e-6
    edge = max_divergence_edge(psi, 3, epsilon, cfg)
    general = max_divergence_general(psi, geom, epsilon, cfg)
    exact = max_divergence_exact_mps(psi, geom, epsilon)
    assert abs(edge.d_infinity - exact.d_infinity) < 1e-4
    assert abs(general.d_infinity - exact.d_infinity) < 1e-4
    assert abs(edge.d_infinity - general.d_infinity) < 1e-4
    assert exact.d_infinity >= mutual_information_vn(psi, geom) - 10 * epsilon
    assert general.diagnostics["cg_mean_iterations"] <= 60


@pytest.mark.slow
@pytest.mark.parametrize("delta", DELTA_GRID)
def test_general_geometry_on_the_anisotropy_grid(delta):
    psi = dmrg_state(delta, 61)
    cfg = SweepConfig(max_sweeps=30, energy_tol=1e-11, chi_max=32)
    geom = Geometry.eaebe(10, 2)
    epsilon = 1e-6
    general = max_divergence_general(psi, geom, epsilon, cfg)
    exact = max_divergence_exact_mps(psi, geom, epsilon)
    assert abs(general.d_infinity - exact.d_infinity) < 1e-4
    assert general.d_infinity >= mutual_information_vn(psi, geom) - 10 * epsilon


@pytest.mark.slow
def test_exact_divergence_of_an_mps_at_tiny_epsilon():
    psi = dmrg_state(1.0, 62)
    geom = Geometry.aeb(10, 3)
    coarse = max_divergence_exact_mps(psi, geom, 1e-6)
    fine = max_divergence_exact_mps(psi, geom, 1e-10)
    assert np.isfinite(fine.d_infinity)
    assert fine.d_infinity >= coarse.d_infinity - 1e-10
