"""Container format: round trips, canonical bytes, corruption rejection."""

import numpy as np
import pytest

from difno import container


def sample_arrays():
    rng = np.random.default_rng(0)
    return {
        "real3": rng.standard_normal((2, 3, 4)),
        "cplx": rng.standard_normal((5,)) + 1j * rng.standard_normal((5,)),
        "scalar": np.array(7.5),
        "empty": np.zeros((0, 4)),
    }


def test_round_trip_bitwise(tmp_path):
    p = tmp_path / "t.difn"
    arrays = sample_arrays()
    container.save_arrays(p, arrays)
    back = container.load_arrays(p)
    assert sorted(back) == sorted(arrays)
    for k in arrays:
        assert back[k].dtype == arrays[k].dtype
        assert back[k].shape == arrays[k].shape
        assert np.array_equal(back[k], arrays[k])


def test_save_load_save_identical(tmp_path):
    p1 = tmp_path / "a.difn"
    p2 = tmp_path / "b.difn"
    container.save_arrays(p1, sample_arrays())
    container.save_arrays(p2, container.load_arrays(p1))
    assert p1.read_bytes() == p2.read_bytes()


def test_key_order_canonical(tmp_path):
    p1 = tmp_path / "a.difn"
    p2 = tmp_path / "b.difn"
    arrays = sample_arrays()
    container.save_arrays(p1, arrays)
    container.save_arrays(p2, dict(reversed(list(arrays.items()))))
    assert p1.read_bytes() == p2.read_bytes()


def test_int_arrays_stored_as_f64(tmp_path):
    p = tmp_path / "t.difn"
    container.save_arrays(p, {"count": np.array([3, 4], dtype=np.int64)})
    back = container.load_arrays(p)
    assert back["count"].dtype == np.float64
    assert np.array_equal(back["count"], [3.0, 4.0])


def test_bad_magic(tmp_path):
    p = tmp_path / "t.difn"
    container.save_arrays(p, {"x": np.zeros(2)})
    raw = bytearray(p.read_bytes())
    raw[:4] = b"NOPE"
    p.write_bytes(bytes(raw))
    with pytest.raises(container.ContainerError, match="magic"):
        container.load_arrays(p)


def test_bad_version(tmp_path):
    p = tmp_path / "t.difn"
    container.save_arrays(p, {"x": np.zeros(2)})
    raw = bytearray(p.read_bytes())
    raw[4] = 99
    p.write_bytes(bytes(raw))
    with pytest.raises(container.ContainerError, match="version"):
        container.load_arrays(p)


def test_truncated_payload(tmp_path):
    p = tmp_path / "t.difn"
    container.save_arrays(p, {"x": np.arange(10.0)})
    raw = p.read_bytes()
    p.write_bytes(raw[:-8])
    with pytest.raises(container.ContainerError, match="payload"):
        container.load_arrays(p)


def test_truncated_header(tmp_path):
    p = tmp_path / "t.difn"
    p.write_bytes(b"DIFN\x01\x00")
    with pytest.raises(container.ContainerError, match="header"):
        container.load_arrays(p)


def test_oversized_dim_rejected_before_allocation(tmp_path):
    # a record claiming a huge payload must fail the length check, not MemoryError
    p = tmp_path / "t.difn"
    container.save_arrays(p, {"x": np.zeros(4)})
    raw = bytearray(p.read_bytes())
    # dims start after magic(4)+hdr(8)+nlen(2)+name(1)+dtype/rank(2)
    dim_off = 4 + 8 + 2 + 1 + 2
    raw[dim_off : dim_off + 8] = (2**60).to_bytes(8, "little")
    p.write_bytes(bytes(raw))
    with pytest.raises(container.ContainerError, match="payload"):
        container.load_arrays(p)


def test_trailing_garbage(tmp_path):
    p = tmp_path / "t.difn"
    container.save_arrays(p, {"x": np.zeros(2)})
    p.write_bytes(p.read_bytes() + b"junk")
    with pytest.raises(container.ContainerError, match="trailing"):
        container.load_arrays(p)


def test_unknown_dtype_code(tmp_path):
    p = tmp_path / "t.difn"
    container.save_arrays(p, {"x": np.zeros(2)})
    raw = bytearray(p.read_bytes())
    raw[4 + 8 + 2 + 1] = 9  # dtype byte of the single record
    p.write_bytes(bytes(raw))
    with pytest.raises(container.ContainerError, match="dtype"):
        container.load_arrays(p)


def test_object_dtype_rejected(tmp_path):
    with pytest.raises(container.ContainerError, match="unsupported"):
        container.save_arrays(
            tmp_path / "t.difn", {"x": np.array(["a"], dtype=object)}
        )
