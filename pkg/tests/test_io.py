"""Binary tensor and dataset file formats."""

import struct

import numpy as np
import pytest

from tensorinfer.exceptions import FormatError, NumericError
from tensorinfer.io import (
    TENSOR_MAGIC,
    read_dataset,
    read_tensor,
    sniff_format,
    write_dataset,
    write_tensor,
)
from tensorinfer.regression import RegressionDataset


def make_dataset(seed, n=7, dims=(2, 3, 2), sigma=0.5):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, *dims))
    y = rng.standard_normal(n)
    return RegressionDataset(x, y, sigma=sigma)


def test_tensor_roundtrip_bit_exact(tmp_path):
    """Doubles survive the file unchanged, including awkward values."""
    t = np.random.default_rng(0).standard_normal((3, 4, 5))
    t[0, 0, 0] = -0.0
    t[1, 2, 3] = np.nextafter(1.0, 2.0)
    path = tmp_path / "t.tnsr"
    write_tensor(path, t)
    back = read_tensor(path)
    assert back.tobytes() == t.tobytes()


def test_tensor_bad_magic(tmp_path):
    path = tmp_path / "bad.tnsr"
    path.write_bytes(b"NOPE!\n" + b"\x00" * 64)
    with pytest.raises(FormatError, match="bad magic"):
        read_tensor(path)


def test_tensor_truncated_header(tmp_path):
    path = tmp_path / "short.tnsr"
    path.write_bytes(TENSOR_MAGIC + struct.pack("<Q", 2))
    with pytest.raises(FormatError, match="truncated header"):
        read_tensor(path)


def test_tensor_truncated_payload_reports_bytes(tmp_path):
    path = tmp_path / "cut.tnsr"
    write_tensor(path, np.ones((2, 2, 2)))
    blob = path.read_bytes()
    path.write_bytes(blob[:-9])
    with pytest.raises(FormatError, match="truncated payload"):
        read_tensor(path)


def test_tensor_trailing_bytes(tmp_path):
    path = tmp_path / "extra.tnsr"
    write_tensor(path, np.ones((2, 2, 2)))
    path.write_bytes(path.read_bytes() + b"xy")
    with pytest.raises(FormatError, match="trailing bytes"):
        read_tensor(path)


def test_tensor_implausible_dimensions(tmp_path):
    path = tmp_path / "huge.tnsr"
    path.write_bytes(TENSOR_MAGIC + struct.pack("<QQQ", 1 << 40, 2, 2))
    with pytest.raises(FormatError, match="implausible"):
        read_tensor(path)


def test_tensor_rejects_non_finite_payload(tmp_path):
    path = tmp_path / "nan.tnsr"
    t = np.ones((2, 2, 2))
    write_tensor(path, t)
    blob = bytearray(path.read_bytes())
    blob[-8:] = struct.pack("<d", np.nan)
    path.write_bytes(bytes(blob))
    with pytest.raises(NumericError):
        read_tensor(path)


def test_dataset_roundtrip(tmp_path):
    data = make_dataset(1)
    path = tmp_path / "d.ds"
    write_dataset(path, data)
    back = read_dataset(path)
    assert back.n == data.n
    assert back.dims == data.dims
    assert back.sigma == data.sigma
    assert back.covariates.tobytes() == data.covariates.tobytes()
    assert back.responses.tobytes() == data.responses.tobytes()


def test_dataset_roundtrip_without_sigma(tmp_path):
    data = make_dataset(2, sigma=None)
    path = tmp_path / "d.ds"
    write_dataset(path, data)
    assert read_dataset(path).sigma is None


def test_dataset_missing_header(tmp_path):
    path = tmp_path / "noheader.ds"
    path.write_bytes(b"\x00" * 16)
    with pytest.raises(FormatError, match="header"):
        read_dataset(path)


def test_dataset_unreadable_header(tmp_path):
    path = tmp_path / "mangled.ds"
    path.write_bytes(b"{not json\n" + b"\x00" * 8)
    with pytest.raises(FormatError):
        read_dataset(path)


def test_dataset_header_missing_field(tmp_path):
    import json

    path = tmp_path / "field.ds"
    path.write_bytes(json.dumps({"n": 1, "dims": [2, 2, 2]}).encode() + b"\n")
    with pytest.raises(FormatError, match="missing"):
        read_dataset(path)


def test_dataset_truncated_records_counted(tmp_path):
    data = make_dataset(3, n=5)
    path = tmp_path / "cut.ds"
    write_dataset(path, data)
    blob = path.read_bytes()
    # drop the last record plus a few bytes of the one before it
    rec = (2 * 3 * 2 + 1) * 8
    path.write_bytes(blob[: len(blob) - rec - 5])
    with pytest.raises(FormatError, match="truncated"):
        read_dataset(path)


def test_dataset_trailing_bytes(tmp_path):
    data = make_dataset(4, n=3)
    path = tmp_path / "extra.ds"
    write_dataset(path, data)
    path.write_bytes(path.read_bytes() + b"\x00")
    with pytest.raises(FormatError, match="trailing"):
        read_dataset(path)


def test_sniff_format(tmp_path):
    tpath = tmp_path / "a.tnsr"
    write_tensor(tpath, np.ones((2, 2, 2)))
    dpath = tmp_path / "a.ds"
    write_dataset(dpath, make_dataset(5, n=2))
    other = tmp_path / "a.txt"
    other.write_bytes(b"hello world")
    assert sniff_format(tpath) == "tensor"
    assert sniff_format(dpath) == "dataset"
    assert sniff_format(other) == "unknown"
