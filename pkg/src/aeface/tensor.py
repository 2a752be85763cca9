"""Dense float64 matrix helpers.

Matrices are plain 2-D ``numpy.ndarray`` objects (C order, float64). These
functions add the shape and finiteness checks the rest of the package relies
on; numpy does the arithmetic.
"""

import numpy as np

from .errors import NumericError, ShapeError

_OPS = {
    "add": np.add,
    "sub": np.subtract,
    "hadamard": np.multiply,
}


def check_finite(a, what="matrix"):
    if not np.all(np.isfinite(a)):
        raise NumericError(f"{what} contains NaN or Inf")
    return a


def as_matrix(data):
    """Coerce ``data`` to a finite, C-contiguous float64 2-D array."""
    a = np.ascontiguousarray(data, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] < 1 or a.shape[1] < 1:
        raise ShapeError(f"expected a non-empty 2-D matrix, got shape {a.shape}")
    return check_finite(a)


def matmul(a, b):
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"cannot multiply {a.shape[0]}x{a.shape[1]} by {b.shape[0]}x{b.shape[1]}")
    with np.errstate(over="ignore", invalid="ignore"):
        out = a @ b
    return check_finite(out, "matmul result")


def transpose(a):
    return np.ascontiguousarray(as_matrix(a).T)


def zip_map(a, b, op):
    try:
        fn = _OPS[op]
    except KeyError:
        raise ValueError(f"unknown elementwise op {op!r}; expected one of {sorted(_OPS)}") from None
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape != b.shape:
        raise ShapeError(f"elementwise {op} needs equal shapes, got {a.shape} and {b.shape}")
    with np.errstate(over="ignore", invalid="ignore"):
        out = fn(a, b)
    return check_finite(out, f"{op} result")


def scale(a, c):
    if not np.isfinite(c):
        raise NumericError(f"scale factor {c} is not finite")
    with np.errstate(over="ignore", invalid="ignore"):
        out = as_matrix(a) * float(c)
    return check_finite(out, "scale result")
