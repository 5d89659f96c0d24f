"""File formats for instances and results.

Dense real matrices travel either as CSV or as a compact binary:
little-endian float64 entries in row-major order behind an 8-byte header
(magic ``VMIN``, u32 rows, u32 cols). Complex arrays in JSON are nested
``[re, im]`` pairs.
"""

import struct

import numpy as np

from .errors import InvalidInputError

VMIN_MAGIC = b"VMIN"


def write_vmin(path, A):
    A = np.ascontiguousarray(np.asarray(A, dtype="<f8"))
    if A.ndim != 2:
        raise InvalidInputError(f"expected a matrix, got ndim={A.ndim}")
    with open(path, "wb") as fh:
        fh.write(VMIN_MAGIC)
        fh.write(struct.pack("<II", A.shape[0], A.shape[1]))
        fh.write(A.tobytes(order="C"))


def read_vmin(path):
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != VMIN_MAGIC:
            raise InvalidInputError(f"{path}: bad magic {magic!r}, expected {VMIN_MAGIC!r}")
        n, l = struct.unpack("<II", fh.read(8))
        data = np.frombuffer(fh.read(8 * n * l), dtype="<f8")
        if data.size != n * l:
            raise InvalidInputError(f"{path}: truncated payload ({data.size} of {n * l} values)")
    return data.reshape(n, l).copy()


def write_matrix_csv(path, A):
    np.savetxt(path, np.asarray(A, dtype=float), delimiter=",")


def read_matrix_csv(path):
    A = np.loadtxt(path, delimiter=",", ndmin=2)
    return np.asarray(A, dtype=float)


def read_dense_matrix(path):
    """Dispatch on content: VMIN binary if the magic matches, else CSV."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
    if magic == VMIN_MAGIC:
        return read_vmin(path)
    return read_matrix_csv(path)


def complex_to_pairs(arr):
    """Nested-list representation of a complex array with [re, im] leaves."""
    arr = np.asarray(arr)
    stacked = np.stack([arr.real, arr.imag], axis=-1)
    return stacked.tolist()


def pairs_to_complex(data):
    stacked = np.asarray(data, dtype=float)
    return stacked[..., 0] + 1j * stacked[..., 1]
