import numpy as np
import pytest

from gedmrg import Tensor
from gedmrg.tensor.tensor import conjugate, contract, norm, qr, svd


@pytest.fixture
def rng():
    return np.random.default_rng(7)


def random_tensor(rng, shape, labels):
    return Tensor.from_array(rng.normal(size=shape) + 1j * rng.normal(size=shape), labels)


def test_identity_contracted_with_vector():
    eye = Tensor.from_array(np.eye(2), ["i", "j"])
    v = Tensor.from_array([1, 2], ["j"])
    out = contract(eye, v, [("j", "j")])
    assert out.labels == ("i",)
    np.testing.assert_allclose(out.data, [1, 2])


def test_matrix_product():
    a = Tensor.from_array([[0, 1], [1, 0]], ["i", "j"])
    b = Tensor.from_array([[1, 0], [0, -1]], ["j", "k"])
    out = contract(a, b, [("j", "j")])
    np.testing.assert_allclose(out.data, [[0, -1], [1, 0]])


def test_full_contraction_with_conjugate_gives_squared_norm(rng):
    t = random_tensor(rng, (2, 3, 4), ["a", "b", "c"])
    out = contract(t, conjugate(t), [("a", "a"), ("b", "b"), ("c", "c")])
    assert out.labels == ()
    assert abs(out.data.item() - norm(t) ** 2) < 1e-12 * norm(t) ** 2
    assert abs(np.sqrt(out.data.item().real) - norm(t)) < 1e-12 * norm(t)


def test_contract_is_bilinear(rng):
    a = random_tensor(rng, (3, 4), ["i", "j"])
    b = random_tensor(rng, (4, 5), ["j", "k"])
    alpha = 0.3 - 1.7j
    lhs = contract(a.scale(alpha), b, [("j", "j")]).data
    rhs = alpha * contract(a, b, [("j", "j")]).data
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_contract_dimension_mismatch():
    a = Tensor.from_array(np.zeros((2, 3)), ["i", "j"])
    b = Tensor.from_array(np.zeros((4, 2)), ["j", "k"])
    with pytest.raises(ValueError, match="Dimension mismatch"):
        contract(a, b, [("j", "j")])


def test_contract_duplicate_labels():
    a = Tensor.from_array(np.zeros((2, 3)), ["i", "j"])
    b = Tensor.from_array(np.zeros((3, 2)), ["j", "i"])
    with pytest.raises(ValueError, match="duplicate leg labels"):
        contract(a, b, [("j", "j")])


def test_tensor_rejects_repeated_labels():
    with pytest.raises(ValueError, match="unique"):
        Tensor.from_array(np.zeros((2, 2)), ["i", "i"])


def test_transpose_and_to_array(rng):
    t = random_tensor(rng, (2, 3, 4), ["a", "b", "c"])
    np.testing.assert_array_equal(t.to_array(["c", "a", "b"]), np.transpose(t.data, (2, 0, 1)))
    assert t.transpose(["b", "c", "a"]).legs == [("b", 3), ("c", 4), ("a", 2)]


def test_svd_rank_one():
    u = np.array([1.0, 2.0, 2.0])
    v = np.array([3.0, 4.0])
    res = svd(Tensor.from_array(np.outer(u, v), ["i", "j"]), ["i"])
    assert res.s.size == 1
    assert abs(res.s[0] - 15.0) < 1e-12
    assert res.discarded_weight < 1e-30


def test_svd_discarded_weight():
    res = svd(Tensor.from_array(np.diag([3.0, 1.0]), ["i", "j"]), ["i"], chi_max=1)
    np.testing.assert_allclose(res.s, [3.0])
    assert abs(res.discarded_weight - 0.1) < 1e-14


def test_svd_unitary(rng):
    q, _ = np.linalg.qr(rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4)))
    res = svd(Tensor.from_array(q, ["i", "j"]), ["i"])
    np.testing.assert_allclose(res.s, np.ones(4), atol=1e-12)


def test_svd_reconstruction_and_isometries(rng):
    t = random_tensor(rng, (3, 2, 4, 2), ["a", "b", "c", "d"])
    for chi_max in (2, 4, None):
        res = svd(t, ["a", "c"], chi_max=chi_max)
        assert np.all(np.diff(res.s) <= 0)
        u = res.u.data.reshape(-1, res.s.size)
        vh = res.vh.data.reshape(res.s.size, -1)
        np.testing.assert_allclose(u.conj().T @ u, np.eye(res.s.size), atol=1e-12)
        np.testing.assert_allclose(vh @ vh.conj().T, np.eye(res.s.size), atol=1e-12)
        rebuilt = contract(res.u, Tensor(res.vh.labels, res.s[:, None, None] * res.vh.data),
                           [("bond", "bond")])
        error = np.linalg.norm(rebuilt.to_array(["a", "b", "c", "d"]) - t.data)
        assert error / norm(t) <= np.sqrt(res.discarded_weight) + 1e-10
        if chi_max is None:
            assert res.discarded_weight == 0.0


def test_svd_cutoff_is_relative():
    res = svd(Tensor.from_array(np.diag([10.0, 1.0, 1e-3]), ["i", "j"]), ["i"], cutoff=1e-2)
    np.testing.assert_allclose(res.s, [10.0, 1.0])


def test_svd_rejects_bad_left_legs(rng):
    t = random_tensor(rng, (2, 2), ["i", "j"])
    with pytest.raises(ValueError, match="nonempty proper subset"):
        svd(t, [])
    with pytest.raises(ValueError, match="nonempty proper subset"):
        svd(t, ["i", "j"])


def test_qr_gives_left_isometry(rng):
    t = random_tensor(rng, (3, 2, 5), ["vL", "p", "vR"])
    q, r = qr(t, ["vL", "p"])
    m = q.data.reshape(6, -1)
    np.testing.assert_allclose(m.conj().T @ m, np.eye(m.shape[1]), atol=1e-12)
    np.testing.assert_allclose(contract(q, r, [("bond", "bond")]).data, t.data, atol=1e-12)


def test_conjugate_and_norm():
    real = Tensor.from_array(np.arange(6.0).reshape(2, 3), ["i", "j"])
    np.testing.assert_array_equal(conjugate(real).data, real.data)
    assert conjugate(real).labels == real.labels
    assert abs(norm(Tensor.from_array(np.eye(2), ["i", "j"])) - np.sqrt(2)) < 1e-15
