"""Binary tensor files and regression dataset files.

Tensor file layout: the 6 magic bytes ``TNSR1\\n``, three unsigned
64-bit little-endian dimensions, then p1*p2*p3 little-endian float64
values in linear order (last mode fastest).

Dataset file layout: one JSON header line ``{"n":..., "dims":[...],
"sigma":...}`` terminated by a newline, followed by n records, each a
covariate tensor payload in the same linear order plus one float64
response.
"""

import json
import struct

import numpy as np

from .exceptions import ArgumentError, FormatError, NumericError
from .tenalg import as_tensor3
from .regression import RegressionDataset

__all__ = ["read_tensor", "write_tensor", "read_dataset", "write_dataset",
           "sniff_format", "TENSOR_MAGIC"]

TENSOR_MAGIC = b"TNSR1\n"
_MAX_DIM = 1 << 32  # sanity bound on declared dimensions


def write_tensor(path, t):
    """Write ``t`` in the binary tensor format; bit-exact round trip."""
    t = as_tensor3(t)
    with open(path, "wb") as fh:
        fh.write(TENSOR_MAGIC)
        fh.write(struct.pack("<QQQ", *t.shape))
        fh.write(np.ascontiguousarray(t, dtype="<f8").tobytes())


def read_tensor(path):
    """Read a binary tensor file written by :func:`write_tensor`."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(TENSOR_MAGIC) or blob[: len(TENSOR_MAGIC)] != TENSOR_MAGIC:
        raise FormatError(f"{path}: not a tensor file (bad magic)")
    off = len(TENSOR_MAGIC)
    if len(blob) < off + 24:
        raise FormatError(
            f"{path}: truncated header, file ends at byte {len(blob)}"
        )
    dims = struct.unpack("<QQQ", blob[off:off + 24])
    off += 24
    if min(dims) < 1 or max(dims) > _MAX_DIM:
        raise FormatError(f"{path}: implausible dimensions {dims}")
    count = dims[0] * dims[1] * dims[2]
    need = off + 8 * count
    if len(blob) < need:
        raise FormatError(
            f"{path}: truncated payload, expected {need} bytes, "
            f"file ends at byte {len(blob)}"
        )
    if len(blob) > need:
        raise FormatError(f"{path}: {len(blob) - need} trailing bytes after payload")
    flat = np.frombuffer(blob, dtype="<f8", count=count, offset=off)
    t = flat.reshape(dims).astype(np.float64)
    if not np.isfinite(t).all():
        raise NumericError(f"{path}: tensor contains non-finite entries")
    return t


def write_dataset(path, data):
    """Write a RegressionDataset: JSON header line plus binary records."""
    if not isinstance(data, RegressionDataset):
        raise ArgumentError("expected a RegressionDataset")
    header = {
        "n": int(data.n),
        "dims": [int(d) for d in data.dims],
        "sigma": None if data.sigma is None else float(data.sigma),
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True).encode() + b"\n")
        x = np.ascontiguousarray(data.covariates, dtype="<f8")
        y = np.asarray(data.responses, dtype="<f8")
        for i in range(data.n):
            fh.write(x[i].tobytes())
            fh.write(struct.pack("<d", y[i]))


def read_dataset(path):
    """Read a dataset file written by :func:`write_dataset`."""
    with open(path, "rb") as fh:
        blob = fh.read()
    nl = blob.find(b"\n")
    if nl < 0:
        raise FormatError(f"{path}: missing header line")
    try:
        header = json.loads(blob[:nl].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: unreadable header: {exc}") from exc
    for key in ("n", "dims", "sigma"):
        if key not in header:
            raise FormatError(f"{path}: header missing field {key!r}")
    n = int(header["n"])
    dims = tuple(int(d) for d in header["dims"])
    if len(dims) != 3 or min(dims) < 1 or n < 1:
        raise FormatError(f"{path}: implausible header {header}")
    per = dims[0] * dims[1] * dims[2]
    record = 8 * (per + 1)
    off = nl + 1
    need = off + n * record
    if len(blob) < need:
        done = (len(blob) - off) // record
        raise FormatError(
            f"{path}: truncated after {done} of {n} records, expected "
            f"{need} bytes, file ends at byte {len(blob)}"
        )
    if len(blob) > need:
        raise FormatError(f"{path}: {len(blob) - need} trailing bytes after records")
    raw = np.frombuffer(blob, dtype="<f8", count=n * (per + 1), offset=off)
    raw = raw.reshape(n, per + 1)
    x = raw[:, :per].reshape((n,) + dims).astype(np.float64)
    y = raw[:, per].astype(np.float64)
    sigma = header["sigma"]
    return RegressionDataset(covariates=x, responses=y,
                             sigma=None if sigma is None else float(sigma))


def sniff_format(path):
    """Identify a file as "tensor", "dataset", or "unknown"."""
    with open(path, "rb") as fh:
        head = fh.read(len(TENSOR_MAGIC))
    if head == TENSOR_MAGIC:
        return "tensor"
    if head[:1] == b"{":
        return "dataset"
    return "unknown"
