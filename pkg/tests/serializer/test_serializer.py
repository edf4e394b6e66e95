import numpy as np
import pytest

from gedmrg import NetworkSerializer, XxzParams
from gedmrg.errors import SerializationError
from gedmrg.mpo.mpo import MatrixProductOperator, xxz_mpo
from gedmrg.mps.mps import CanonicalForm, _from_arrays, random_mps


@pytest.fixture
def psi():
    return random_mps(6, 2, 4, seed=12)


def assert_same_state(a, b):
    assert a.n_sites == b.n_sites
    assert a.center == b.center
    assert a.canonical_form is b.canonical_form
    for x, y in zip(a.arrays, b.arrays):
        np.testing.assert_array_equal(x, y)
    for x, y in zip(a.schmidt, b.schmidt):
        np.testing.assert_array_equal(x, y)


@pytest.mark.parametrize("compress", [True, False])
def test_serialize_and_read_state(tmp_path, psi, compress):
    serializer = NetworkSerializer(str(tmp_path / "state.bin"), compress=compress)
    serializer.serialize(psi)
    assert_same_state(serializer.deserialize(), psi)


def test_serialize_operator(tmp_path):
    op = xxz_mpo(XxzParams(J=1.0, delta=-0.5, h=0.2, N=5))
    serializer = NetworkSerializer(str(tmp_path / "op.bin"))
    serializer.serialize(op)
    restored = serializer.deserialize()
    assert isinstance(restored, MatrixProductOperator)
    for x, y in zip(restored.arrays, op.arrays):
        np.testing.assert_array_equal(x, y)


def test_serialize_non_canonical_state(tmp_path):
    rng = np.random.default_rng(0)
    raw = _from_arrays([rng.normal(size=(1, 2, 2)), rng.normal(size=(2, 2, 1))], (), 0, CanonicalForm.NONE)
    serializer = NetworkSerializer(str(tmp_path / "raw.bin"), compress=False)
    serializer.serialize(raw)
    restored = serializer.deserialize()
    assert restored.canonical_form is CanonicalForm.NONE
    assert restored.schmidt == ()


def test_read_sites(tmp_path, psi):
    serializer = NetworkSerializer(str(tmp_path / "state.bin"))
    serializer.serialize(psi)
    reader = NetworkSerializer(str(tmp_path / "state.bin"))
    sites = reader.read_sites([4, 0, 2])
    for site, idx in zip(sites, [4, 0, 2]):
        np.testing.assert_array_equal(site.data, psi.arrays[idx])
        assert site.labels == ("vL", "p", "vR")


def test_read_sites_parallel(tmp_path, psi):
    serializer = NetworkSerializer(str(tmp_path / "state.bin"))
    serializer.serialize(psi)
    sites = serializer.read_sites([5, 3, 1], max_workers=3)
    for site, idx in zip(sites, [5, 3, 1]):
        np.testing.assert_array_equal(site.data, psi.arrays[idx])


def test_read_sites_out_of_range(tmp_path, psi):
    serializer = NetworkSerializer(str(tmp_path / "state.bin"))
    serializer.serialize(psi)
    with pytest.raises(ValueError, match="out of range"):
        serializer.read_sites([6])


def test_wrong_header(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"\x0c\x00\x00\x00GEDMRG-XXX-1" + b"\x00" * 16)
    with pytest.raises(SerializationError, match="Unknown header"):
        NetworkSerializer(str(path)).deserialize()


def test_truncated_file(tmp_path, psi):
    path = tmp_path / "state.bin"
    NetworkSerializer(str(path), compress=False).serialize(psi)
    path.write_bytes(path.read_bytes()[:60])
    with pytest.raises(SerializationError, match="Truncated"):
        NetworkSerializer(str(path)).deserialize()


@pytest.mark.parametrize("cut", [3, 18])
def test_truncated_schmidt_section(tmp_path, psi, cut):
    path = tmp_path / "state.bin"
    NetworkSerializer(str(path), compress=True).serialize(psi)
    path.write_bytes(path.read_bytes()[:-cut])
    with pytest.raises(SerializationError, match="Truncated Schmidt"):
        NetworkSerializer(str(path)).deserialize()


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        NetworkSerializer(str(tmp_path / "absent.bin")).deserialize()


def test_rejects_unknown_objects(tmp_path):
    with pytest.raises(ValueError, match="Cannot serialize"):
        NetworkSerializer(str(tmp_path / "x.bin")).serialize(np.zeros(3))


def test_str_repr(tmp_path):
    serializer = NetworkSerializer(str(tmp_path / "chain.bin"))
    assert "NetworkSerializer" in str(serializer)
    assert "chain.bin" in str(serializer)
