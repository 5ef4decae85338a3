"""Non-uniform DFT encoding operators.

The forward operator maps an (nx, ny) image to (n_samples, n_coils)
k-space values; the adjoint is its exact conjugate transpose with no
normalization, so adjoint(forward(.)) is not the identity.

Because every sample phase separates per axis,
exp(-2j*pi*k.r) = exp(-2j*pi*kx*x) * exp(-2j*pi*ky*y), the operator is
stored as two small phase-factor matrices. "materialized" mode expands
them into an explicit (n_samples, n_pixels) matrix (fast, memory-heavy);
"separable" mode contracts the factors directly (matrix-free).
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .tensor import COMPLEX_DTYPES, ShapeMismatchError, validate_precision

DEFAULT_MEMORY_BUDGET = 2 * 1024**3  # bytes per worker for a materialized matrix

MODES = ("auto", "materialized", "separable")


class MemoryBudgetError(RuntimeError):
    """Raised when a materialized operator would not fit its byte budget."""


@dataclass
class DftFactors:
    """Per-axis unit-magnitude phase factors of the encoding model.

    phase0[k, x] = exp(-2j*pi * kx_k * rx_x), shape (n_samples, nx)
    phase1[k, y] = exp(-2j*pi * ky_k * ry_y), shape (n_samples, ny)
    """

    phase0: np.ndarray
    phase1: np.ndarray

    @property
    def n_samples(self):
        return self.phase0.shape[0]

    @property
    def grid_shape(self):
        return (self.phase0.shape[1], self.phase1.shape[1])


def _unit_phase(kr, cdtype):
    # exp(-2j*pi*kr). The angle spans hundreds of radians, so evaluate it
    # in double regardless of the target precision and round only the unit
    # phasor: rounding the angle first would cost ~250x more phase accuracy
    # in single and the error amplifies through the ill-conditioned solve.
    ang = (-2 * np.pi) * np.asarray(kr, dtype=np.float64)
    out = np.empty(ang.shape, dtype=np.complex128)
    out.real = np.cos(ang)
    out.imag = np.sin(ang)
    return out.astype(cdtype, copy=False)


def sample_coords(trajectory):
    """Coordinate rows of a Trajectory or a plain (n, 2) array (a shard)."""
    coords = getattr(trajectory, "coords", None)
    if coords is None:
        coords = np.asarray(trajectory, dtype=np.float64)
        if coords.ndim != 2 or coords.shape[1] != 2:
            raise ValueError(f"coords must have shape (n, 2), got {coords.shape}")
    return coords


def build_factors(trajectory, grid, precision="double"):
    """Phase-factor matrices for a trajectory (or coordinate shard) on a grid."""
    validate_precision(precision)
    coords = sample_coords(trajectory)
    if coords.shape[0] == 0:
        raise ValueError("trajectory has no samples")
    cdt = COMPLEX_DTYPES[precision]
    rx, ry = grid.coords()
    phase0 = _unit_phase(np.outer(coords[:, 0], rx), cdt)
    phase1 = _unit_phase(np.outer(coords[:, 1], ry), cdt)
    return DftFactors(phase0, phase1)


def materialized_bytes(n_samples, grid, precision="double"):
    """Bytes an explicit operator matrix would occupy."""
    itemsize = np.dtype(COMPLEX_DTYPES[validate_precision(precision)]).itemsize
    return n_samples * grid.n_pixels * itemsize


def materialize(factors, memory_budget=DEFAULT_MEMORY_BUDGET):
    """Expand factors into an explicit (n_samples, nx*ny) matrix.

    Row k is the outer product of phase0[k] and phase1[k] flattened in
    pixel order n = x * ny + y. Raises MemoryBudgetError when the matrix
    would exceed memory_budget bytes; use separable mode in that case.
    """
    m = factors.n_samples
    nx, ny = factors.grid_shape
    need = m * nx * ny * factors.phase0.dtype.itemsize
    if memory_budget is not None and need > memory_budget:
        raise MemoryBudgetError(
            f"materialized operator needs {need} bytes "
            f"({m} samples x {nx * ny} pixels) which exceeds the budget of "
            f"{memory_budget} bytes; use separable mode")
    return (factors.phase0[:, :, None] * factors.phase1[:, None, :]).reshape(m, -1)


class DftOperator:
    """Multi-coil non-uniform DFT over one trajectory shard.

    forward(image) -> (n_samples, n_coils); adjoint(data) -> (nx, ny).
    Sensitivity encoding is fused into both directions: forward multiplies
    by the coil maps before the DFT, adjoint applies conjugate maps and
    sums over coils after it.
    """

    def __init__(self, factors, sens_maps, mode, matrix=None):
        if mode not in ("materialized", "separable"):
            raise ValueError(f"mode must be materialized or separable, got {mode!r}")
        if mode == "materialized" and matrix is None:
            raise ValueError("materialized mode requires the expanded matrix")
        nx, ny = factors.grid_shape
        if sens_maps.shape[1:] != (nx, ny):
            raise ShapeMismatchError(
                f"sensitivity grid {sens_maps.shape[1:]} != factor grid {(nx, ny)}")
        if sens_maps.dtype != factors.phase0.dtype:
            raise ShapeMismatchError(
                f"sensitivity dtype {sens_maps.dtype} != factor dtype "
                f"{factors.phase0.dtype}")
        self.factors = factors
        self.mode = mode
        self.matrix = matrix
        self.sens = np.ascontiguousarray(sens_maps)
        self.sens_flat = np.ascontiguousarray(sens_maps.reshape(sens_maps.shape[0], -1))
        self.phase1_t = np.ascontiguousarray(factors.phase1.T)
        self.phase1_conj = np.conj(factors.phase1)
        self.nx = nx
        self.ny = ny

    @classmethod
    def build(cls, trajectory, grid, sens, mode="auto", precision="double",
              memory_budget=DEFAULT_MEMORY_BUDGET):
        """Construct the operator for a trajectory (shard) and coil set.

        mode "auto" materializes when the explicit matrix fits the byte
        budget and falls back to separable otherwise.
        """
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
        validate_precision(precision)
        if sens.maps.shape[1:] != grid.shape:
            raise ShapeMismatchError(
                f"sensitivity grid {sens.maps.shape[1:]} != image grid {grid.shape}")
        coords = sample_coords(trajectory)
        factors = build_factors(coords, grid, precision)
        cdt = COMPLEX_DTYPES[precision]
        maps = sens.maps.astype(cdt)
        if mode == "auto":
            fits = materialized_bytes(coords.shape[0], grid, precision) \
                <= memory_budget
            mode = "materialized" if fits else "separable"
        matrix = materialize(factors, memory_budget) if mode == "materialized" else None
        return cls(factors, maps, mode, matrix)

    @property
    def n_samples(self):
        return self.factors.n_samples

    @property
    def n_coils(self):
        return self.sens.shape[0]

    @property
    def dtype(self):
        return self.factors.phase0.dtype

    def _check(self, arr, shape, what):
        if arr.shape != shape:
            raise ShapeMismatchError(f"{what} shape {arr.shape}, expected {shape}")
        if arr.dtype != self.dtype:
            raise ShapeMismatchError(
                f"{what} dtype {arr.dtype}, operator runs in {self.dtype}")

    def forward(self, image):
        """Encode an image into per-coil k-space samples."""
        self._check(image, (self.nx, self.ny), "image")
        if self.mode == "materialized":
            flat = np.ascontiguousarray(image.reshape(-1))
            return kernels.nudft_forward_mat(self.matrix, self.sens_flat, flat)
        return kernels.nudft_forward_sep(
            self.factors.phase0, self.phase1_t, self.sens,
            np.ascontiguousarray(image))

    def adjoint(self, data):
        """Conjugate-transpose map from k-space samples back to an image."""
        self._check(data, (self.n_samples, self.n_coils), "data")
        data = np.ascontiguousarray(data)
        if self.mode == "materialized":
            flat = kernels.nudft_adjoint_mat(self.matrix, self.sens_flat, data)
            return flat.reshape(self.nx, self.ny)
        return kernels.nudft_adjoint_sep(
            self.factors.phase0, self.phase1_conj, self.sens, data)


class ChunkedDftOperator:
    """One worker's shard as a run of fixed global sample chunks.

    Each chunk gets its own DftOperator, so every chunk's forward rows
    and adjoint partial are computed identically no matter which worker
    owns the chunk. forward concatenates chunk outputs; adjoint returns
    the per-chunk partial images stacked (n_chunks, nx, ny) without
    summing, ready for an order-stable reduction keyed by chunk id.
    """

    def __init__(self, ops, chunk_ids):
        if not ops:
            raise ValueError("chunked operator needs at least one chunk")
        self.ops = list(ops)
        self.chunk_ids = tuple(chunk_ids)
        self.mode = self.ops[0].mode

    @classmethod
    def build(cls, coords, grid, sens, chunk_ranges, chunk_ids, mode="auto",
              precision="double", memory_budget=DEFAULT_MEMORY_BUDGET):
        """Build per-chunk operators for absolute sample ranges of coords.

        The memory budget applies to the worker's chunks as a whole: auto
        mode materializes only when every chunk matrix fits together.
        """
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
        n_shard = sum(stop - start for start, stop in chunk_ranges)
        total_bytes = materialized_bytes(n_shard, grid, precision)
        if mode == "auto":
            mode = "materialized" if total_bytes <= memory_budget else "separable"
        if mode == "materialized" and total_bytes > memory_budget:
            raise MemoryBudgetError(
                f"materialized chunks need {total_bytes} bytes which exceeds "
                f"the budget of {memory_budget} bytes; use separable mode")
        ops = [
            DftOperator.build(coords[start:stop], grid, sens, mode=mode,
                              precision=precision, memory_budget=None)
            for start, stop in chunk_ranges
        ]
        return cls(ops, chunk_ids)

    @property
    def n_samples(self):
        return sum(op.n_samples for op in self.ops)

    @property
    def n_coils(self):
        return self.ops[0].n_coils

    @property
    def dtype(self):
        return self.ops[0].dtype

    def forward(self, image):
        return np.concatenate([op.forward(image) for op in self.ops], axis=0)

    def adjoint(self, data):
        partials = []
        offset = 0
        for op in self.ops:
            partials.append(op.adjoint(data[offset:offset + op.n_samples]))
            offset += op.n_samples
        if offset != data.shape[0]:
            raise ShapeMismatchError(
                f"data has {data.shape[0]} rows, chunks cover {offset}")
        return np.stack(partials)
