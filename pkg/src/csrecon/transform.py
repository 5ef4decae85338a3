"""Sparsifying transform: circular finite differences and their prox tools.

theta stacks the backward differences along both image axes with
circular wrap, so theta_adjoint(theta(x)) applies the periodic 2-D
Laplacian stencil (4 at the center, -1 at the four wrapped neighbors).
"""

import numpy as np

from . import kernels
from .tensor import ShapeMismatchError


def theta(image):
    """Circular backward differences, shape (2, nx, ny) from (nx, ny)."""
    if image.ndim != 2:
        raise ShapeMismatchError(f"image must be 2-D, got shape {image.shape}")
    return kernels.theta_forward(np.ascontiguousarray(image))


def theta_adjoint(diffs):
    """Exact adjoint of theta, mapping (2, nx, ny) back to (nx, ny)."""
    if diffs.ndim != 3 or diffs.shape[0] != 2:
        raise ShapeMismatchError(
            f"diff stack must have shape (2, nx, ny), got {diffs.shape}")
    return kernels.theta_adjoint(np.ascontiguousarray(diffs))


def soft_threshold(z, threshold):
    """Complex soft threshold: shrink each magnitude by threshold, keep phase.

    S_t(z) = z * (1 - t/|z|) where |z| > t, else 0. Exact minimizer of
    t*|u| + 0.5*|u - z|^2 elementwise.
    """
    if threshold < 0:
        raise ValueError(f"threshold must be >= 0, got {threshold}")
    z = np.ascontiguousarray(z)
    if z.dtype == np.complex64:
        t = np.float32(threshold)
    else:
        t = np.float64(threshold)
    return kernels.soft_threshold(z, t)
