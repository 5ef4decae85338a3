"""Complex tensor primitives shared by the reconstruction pipeline.

All arrays are numpy ndarrays in one of two precisions: "single"
(complex64 / float32 components) or "double" (complex128 / float64).
A given pipeline run sticks to one precision end to end; these helpers
never silently widen accumulators.
"""

import numpy as np

COMPLEX_DTYPES = {"single": np.complex64, "double": np.complex128}
REAL_DTYPES = {"single": np.float32, "double": np.float64}

PRECISIONS = ("single", "double")


class ShapeMismatchError(ValueError):
    """Raised when operand shapes or dtypes are incompatible."""


def validate_precision(precision):
    if precision not in PRECISIONS:
        raise ValueError(f"precision must be one of {PRECISIONS}, got {precision!r}")
    return precision


def complex_dtype(precision):
    return COMPLEX_DTYPES[validate_precision(precision)]


def real_dtype(precision):
    return REAL_DTYPES[validate_precision(precision)]


def precision_of(arr):
    """Return "single" or "double" for a complex array."""
    if arr.dtype == np.complex64:
        return "single"
    if arr.dtype == np.complex128:
        return "double"
    raise ShapeMismatchError(f"expected complex64/complex128 array, got {arr.dtype}")


def hermitian_dot(a, b):
    """<a, b> = sum(conj(a) * b) over all elements, in the operands' precision."""
    if a.shape != b.shape:
        raise ShapeMismatchError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.dtype != b.dtype:
        raise ShapeMismatchError(f"dtype mismatch: {a.dtype} vs {b.dtype}")
    return np.vdot(a, b)


def norm2_squared(a):
    """Squared 2-norm, computed as Re<a, a> with the same summation order."""
    return hermitian_dot(a, a).real


def axpy(alpha, x, y):
    """Return y + alpha * x with alpha cast to the operand dtype first."""
    if x.shape != y.shape:
        raise ShapeMismatchError(f"shape mismatch: {x.shape} vs {y.shape}")
    if x.dtype != y.dtype:
        raise ShapeMismatchError(f"dtype mismatch: {x.dtype} vs {y.dtype}")
    return y + x.dtype.type(alpha) * x


def contract_samples_by_pixels(op_matrix, vec, adjoint=False):
    """Apply a dense (n_samples, n_pixels) operator or its adjoint to a vector.

    Forward maps pixels -> samples; adjoint maps samples -> pixels using the
    conjugate transpose. No normalization is applied in either direction.
    """
    if op_matrix.ndim != 2:
        raise ShapeMismatchError(f"operator must be 2-D, got ndim={op_matrix.ndim}")
    if vec.ndim != 1:
        raise ShapeMismatchError(f"vector must be 1-D, got ndim={vec.ndim}")
    if op_matrix.dtype != vec.dtype:
        raise ShapeMismatchError(f"dtype mismatch: {op_matrix.dtype} vs {vec.dtype}")
    n_samples, n_pixels = op_matrix.shape
    if adjoint:
        if vec.shape[0] != n_samples:
            raise ShapeMismatchError(
                f"adjoint input length {vec.shape[0]} != n_samples {n_samples}")
        return np.conj(op_matrix.T) @ vec
    if vec.shape[0] != n_pixels:
        raise ShapeMismatchError(
            f"forward input length {vec.shape[0]} != n_pixels {n_pixels}")
    return op_matrix @ vec
