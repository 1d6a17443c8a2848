import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from facemood.errors import CorruptDataError, FormatError, ShapeError, TopologyError
from facemood.tensorio import (
    BUNDLE_TOPOLOGY,
    Tensor,
    WeightBundle,
    load_bundle,
    read_tensors,
    save_bundle,
    tensor_slice_channel_group,
    write_tensors,
)
from conftest import make_bundle


def test_tensor_rejects_bad_dims():
    with pytest.raises(ShapeError):
        Tensor("t", np.zeros((2, 0), np.float32))


def test_roundtrip_single_tensor(tmp_path):
    t = Tensor("t", np.array([[1, 2], [3, 4]], dtype=np.float32))
    path = tmp_path / "one.ntc"
    write_tensors({"t": t}, path)
    back = read_tensors(path)
    assert list(back) == ["t"]
    assert back["t"] == t


def test_roundtrip_preserves_float_bits(tmp_path):
    t = Tensor("x", np.array([0.1], dtype=np.float32))
    path = tmp_path / "bits.ntc"
    write_tensors([t], path)
    back = read_tensors(path)["x"]
    assert back.data.tobytes() == t.data.tobytes()


def test_second_save_is_byte_identical(tmp_path):
    bundle = make_bundle(seed=3)
    p1, p2 = tmp_path / "a.ntc", tmp_path / "b.ntc"
    save_bundle(bundle, p1)
    save_bundle(load_bundle(p1), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_empty_container_roundtrip(tmp_path):
    path = tmp_path / "empty.ntc"
    write_tensors({}, path)
    assert read_tensors(path) == {}


def test_bad_magic(tmp_path):
    path = tmp_path / "bad.ntc"
    path.write_bytes(b"XXXX" + struct.pack("<II", 1, 0))
    with pytest.raises(FormatError):
        read_tensors(path)


def test_bad_version(tmp_path):
    path = tmp_path / "v9.ntc"
    path.write_bytes(b"NTC1" + struct.pack("<II", 9, 0))
    with pytest.raises(FormatError):
        read_tensors(path)


def test_truncated_file(tmp_path):
    src = tmp_path / "full.ntc"
    write_tensors({"t": Tensor("t", np.ones((4, 4), np.float32))}, src)
    clipped = tmp_path / "cut.ntc"
    clipped.write_bytes(src.read_bytes()[:-5])
    with pytest.raises(FormatError):
        read_tensors(clipped)


def test_nonfinite_payload_rejected(tmp_path):
    path = tmp_path / "nan.ntc"
    payload = struct.pack("<f", float("nan"))
    path.write_bytes(
        b"NTC1"
        + struct.pack("<II", 1, 1)
        + struct.pack("<H", 1)
        + b"t"
        + struct.pack("<BB", 0, 1)
        + struct.pack("<I", 1)
        + payload
    )
    with pytest.raises(CorruptDataError):
        read_tensors(path)


def test_raw_mode_skips_topology(tmp_path):
    path = tmp_path / "raw.ntc"
    write_tensors({"t": Tensor("t", np.array([1, 2, 3, 4], np.float32).reshape(2, 2))}, path)
    bundle = load_bundle(path, raw=True)
    assert bundle["t"].dims == (2, 2)
    with pytest.raises(TopologyError):
        load_bundle(path)


def test_topology_accepts_reference_shapes(tmp_path):
    path = tmp_path / "w.ntc"
    save_bundle(make_bundle(seed=1), path)
    bundle = load_bundle(path)
    assert bundle["conv1.weight"].dims == (96, 3, 11, 11)


def test_topology_rejects_wrong_shape():
    bundle = make_bundle(seed=1)
    tensors = dict(bundle.tensors)
    tensors["conv1.weight"] = Tensor("conv1.weight", np.zeros((96, 3, 12, 12), np.float32))
    with pytest.raises(TopologyError):
        WeightBundle(tensors).validate_topology()


def test_topology_rejects_extra_tensor():
    tensors = dict(make_bundle(seed=1).tensors)
    tensors["stray"] = Tensor("stray", np.zeros(3, np.float32))
    with pytest.raises(TopologyError):
        WeightBundle(tensors).validate_topology()


def test_topology_table_is_consistent_with_network():
    # weight inner channels must chain: conv(n).out/groups feeds conv(n+1)
    assert BUNDLE_TOPOLOGY["conv2.weight"][1] == 96 // 2
    assert BUNDLE_TOPOLOGY["conv3.weight"][1] == 256
    assert BUNDLE_TOPOLOGY["conv4.weight"][1] == 384 // 2
    assert BUNDLE_TOPOLOGY["conv5.weight"][1] == 384 // 2
    assert BUNDLE_TOPOLOGY["fc6.weight"][1] == 256 * 6 * 6


def test_slice_channel_group():
    t = Tensor("t", np.arange(16, dtype=np.float32).reshape(4, 2, 2))
    first = tensor_slice_channel_group(t, 0, 2)
    last = tensor_slice_channel_group(t, 1, 2)
    assert first.dims == (2, 2, 2)
    np.testing.assert_array_equal(first.data, t.data[:2])
    np.testing.assert_array_equal(last.data, t.data[2:])


def test_slice_indivisible_raises():
    t = Tensor("t", np.zeros((3, 2, 2), np.float32))
    with pytest.raises(ShapeError):
        tensor_slice_channel_group(t, 0, 2)


@settings(max_examples=25, deadline=None)
@given(
    st.lists(
        st.tuples(
            st.text(alphabet="abcdefgh.", min_size=1, max_size=12),
            st.lists(st.integers(1, 4), min_size=1, max_size=3),
        ),
        max_size=4,
        unique_by=lambda nd: nd[0],
    ),
    st.randoms(use_true_random=False),
)
def test_roundtrip_property(tmp_path_factory, named_dims, rnd):
    tensors = {}
    for name, dims in named_dims:
        n = int(np.prod(dims))
        data = np.array([rnd.uniform(-1e3, 1e3) for _ in range(n)], np.float32).reshape(dims)
        tensors[name] = Tensor(name, data)
    path = tmp_path_factory.mktemp("rt") / "t.ntc"
    write_tensors(tensors, path)
    back = read_tensors(path)
    assert set(back) == set(tensors)
    for name, t in tensors.items():
        assert back[name].dims == t.dims
        assert back[name].data.tobytes() == t.data.tobytes()
