"""Strict NPY v1.0 reading and writing.

Only little-endian float32/float64 arrays are accepted.  Header problems are
reported as :class:`NpyFormatError` naming the offending header field.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np
from numpy.lib import format as npformat

ACCEPTED_DTYPES = (np.dtype("<f4"), np.dtype("<f8"))


class NpyFormatError(ValueError):
    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


def save_npy(path, array: np.ndarray) -> Path:
    """Write ``array`` as NPY v1.0, C-order, little-endian; atomic via rename."""
    path = Path(path)
    array = np.asarray(array)
    if array.dtype.kind == "f":
        array = array.astype(array.dtype.newbyteorder("<"), copy=False)
    array = np.ascontiguousarray(array)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        npformat.write_array(fh, array, version=(1, 0), allow_pickle=False)
    os.replace(tmp, path)
    return path


def load_npy(path, ndim: int | None = 2) -> np.ndarray:
    """Read an NPY file, validating magic, dtype and rank before the payload."""
    with open(path, "rb") as fh:
        prefix = fh.read(6)
        if prefix != npformat.MAGIC_PREFIX:
            raise NpyFormatError("magic", f"not an NPY file (got {prefix!r})")
        fh.seek(0)
        try:
            version = npformat.read_magic(fh)
        except ValueError as exc:
            raise NpyFormatError("version", str(exc)) from None
        readers = {(1, 0): npformat.read_array_header_1_0, (2, 0): npformat.read_array_header_2_0}
        if version not in readers:
            raise NpyFormatError("version", f"unsupported NPY version {version}")
        try:
            shape, fortran_order, dtype = readers[version](fh)
        except ValueError as exc:
            raise NpyFormatError("header", str(exc)) from None
        if dtype not in ACCEPTED_DTYPES:
            raise NpyFormatError("descr", f"expected little-endian float32 or float64, got {dtype.str}")
        if ndim is not None and len(shape) != ndim:
            raise NpyFormatError("shape", f"expected rank {ndim}, got rank {len(shape)} {shape}")
        count = int(np.prod(shape, dtype=np.int64))
        data = np.fromfile(fh, dtype=dtype, count=count)
        if data.size != count:
            raise NpyFormatError("shape", f"payload holds {data.size} values, header promises {count}")
    if fortran_order:
        data = data.reshape(shape[::-1]).transpose()
    else:
        data = data.reshape(shape)
    return np.ascontiguousarray(data)
