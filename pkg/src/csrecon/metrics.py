"""Image comparison metrics: NRMSE, relative-difference maps, summaries."""

import numpy as np

from .tensor import ShapeMismatchError


def nrmse(image, reference):
    """||image - reference|| / ||reference||; errors on a zero reference."""
    if image.shape != reference.shape:
        raise ShapeMismatchError(
            f"shape mismatch: {image.shape} vs {reference.shape}")
    ref_norm = np.linalg.norm(reference.ravel())
    if ref_norm == 0:
        raise ValueError("reference image is identically zero")
    return float(np.linalg.norm((image - reference).ravel()) / ref_norm)


def scaled_nrmse(image, reference):
    """NRMSE after the least-squares complex scale fit of image to reference."""
    if image.shape != reference.shape:
        raise ShapeMismatchError(
            f"shape mismatch: {image.shape} vs {reference.shape}")
    denom = np.vdot(image, image)
    if denom == 0:
        return nrmse(image, reference)
    scale = np.vdot(image, reference) / denom
    return nrmse(scale * image, reference)


def relative_difference(image, reference, floor=1e-6):
    """Per-pixel |image - reference| / max(|reference|, floor * peak).

    The floor keeps near-empty background pixels from dominating: pixels
    where |reference| falls below floor times its peak are measured
    against that floor instead.
    """
    if image.shape != reference.shape:
        raise ShapeMismatchError(
            f"shape mismatch: {image.shape} vs {reference.shape}")
    ref_mag = np.abs(reference)
    peak = ref_mag.max()
    if peak == 0:
        raise ValueError("reference image is identically zero")
    denom = np.maximum(ref_mag, floor * peak)
    return np.abs(image - reference) / denom


def support_mask(reference, fraction=0.1):
    """Boolean mask of pixels with |reference| >= fraction of its peak."""
    ref_mag = np.abs(reference)
    peak = ref_mag.max()
    if peak == 0:
        raise ValueError("reference image is identically zero")
    return ref_mag >= fraction * peak


def masked_summary(diff_map, mask):
    """Median / mean / max of a difference map over a support mask."""
    if diff_map.shape != mask.shape:
        raise ShapeMismatchError(
            f"shape mismatch: {diff_map.shape} vs {mask.shape}")
    if not mask.any():
        raise ValueError("support mask is empty")
    vals = diff_map[mask]
    return {
        "median": float(np.median(vals)),
        "mean": float(np.mean(vals)),
        "max": float(np.max(vals)),
        "pixels": int(vals.size),
    }


def center_profiles(array2d):
    """Center-row and center-column profiles of a 2-D map.

    Returns (row, col): row is array2d[nx // 2, :], col is
    array2d[:, ny // 2].
    """
    if array2d.ndim != 2:
        raise ShapeMismatchError(f"expected a 2-D map, got shape {array2d.shape}")
    nx, ny = array2d.shape
    return array2d[nx // 2, :].copy(), array2d[:, ny // 2].copy()
