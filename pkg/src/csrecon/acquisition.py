"""Synthetic acquisition: image grid, radial trajectory, phantom, coils.

simulate_kspace evaluates the multi-coil encoding model by direct
summation over pixels and serves as the reference the fast operators are
validated against.
"""

from dataclasses import dataclass, field

import numpy as np

from .tensor import COMPLEX_DTYPES


@dataclass(frozen=True)
class ImageGrid:
    """Cartesian image grid of nx-by-ny pixels.

    Pixel n = x * ny + y sits at integer coordinates
    r = (x - nx // 2, y - ny // 2), so the grid is centered at the
    origin of the spatial coordinate system.
    """

    nx: int
    ny: int

    def __post_init__(self):
        if self.nx < 1 or self.ny < 1:
            raise ValueError(f"grid dims must be >= 1, got {self.nx}x{self.ny}")

    @property
    def n_pixels(self):
        return self.nx * self.ny

    @property
    def shape(self):
        return (self.nx, self.ny)

    def coords(self):
        """Per-axis pixel coordinates (rx of length nx, ry of length ny)."""
        rx = np.arange(self.nx, dtype=np.float64) - self.nx // 2
        ry = np.arange(self.ny, dtype=np.float64) - self.ny // 2
        return rx, ry


@dataclass
class Trajectory:
    """Non-Cartesian sample locations in units of cycles per pixel.

    coords has shape (n_k, 2) with every component in [-0.5, 0.5).
    Samples are ordered readout-major: readout j contributes rows
    j * n_samples_per_readout ... (j + 1) * n_samples_per_readout - 1.
    """

    coords: np.ndarray
    n_readouts: int
    n_samples_per_readout: int

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=np.float64)
        if c.ndim != 2 or c.shape[1] != 2:
            raise ValueError(f"coords must have shape (n_k, 2), got {c.shape}")
        if c.shape[0] != self.n_readouts * self.n_samples_per_readout:
            raise ValueError(
                f"coords rows {c.shape[0]} != n_readouts * n_samples_per_readout "
                f"= {self.n_readouts * self.n_samples_per_readout}")
        if c.size and (c.min() < -0.5 or c.max() >= 0.5):
            raise ValueError("trajectory coordinates must lie in [-0.5, 0.5)")
        self.coords = c

    @property
    def n_samples(self):
        return self.coords.shape[0]


@dataclass
class SensitivityMaps:
    """Per-coil complex sensitivity maps, shape (n_coils, nx, ny)."""

    maps: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.maps)
        if m.ndim != 3:
            raise ValueError(f"maps must have shape (n_coils, nx, ny), got {m.shape}")
        if not np.iscomplexobj(m):
            m = m.astype(np.complex128)
        self.maps = m

    @property
    def n_coils(self):
        return self.maps.shape[0]

    @property
    def grid(self):
        return ImageGrid(self.maps.shape[1], self.maps.shape[2])


@dataclass
class KSpaceDataset:
    """Measured k-space samples (n_k, n_coils) with their trajectory."""

    data: np.ndarray
    trajectory: Trajectory

    def __post_init__(self):
        d = np.asarray(self.data)
        if d.ndim != 2:
            raise ValueError(f"data must have shape (n_k, n_coils), got {d.shape}")
        if d.shape[0] != self.trajectory.n_samples:
            raise ValueError(
                f"data rows {d.shape[0]} != trajectory samples "
                f"{self.trajectory.n_samples}")
        self.data = d

    @property
    def n_coils(self):
        return self.data.shape[1]

    @property
    def n_samples(self):
        return self.data.shape[0]


def radial_trajectory(n_readouts, n_samples_per_readout):
    """Equispaced radial spokes through the k-space origin.

    Readout j has angle phi_j = pi * j / n_readouts; sample t on each
    spoke sits at radius t / n_samples_per_readout for
    t = -n//2 ... n//2 - 1, so samples span [-0.5, 0.5) along the spoke
    regardless of grid shape.

    Returns
    -------
    Trajectory
        n_readouts * n_samples_per_readout samples, readout-major.
    """
    if n_readouts < 1 or n_samples_per_readout < 1:
        raise ValueError("n_readouts and n_samples_per_readout must be >= 1")
    j = np.arange(n_readouts, dtype=np.float64)
    phi = np.pi * j / n_readouts
    t = np.arange(n_samples_per_readout, dtype=np.float64)
    radius = (t - n_samples_per_readout // 2) / n_samples_per_readout
    kx = np.cos(phi)[:, None] * radius[None, :]
    ky = np.sin(phi)[:, None] * radius[None, :]
    coords = np.stack([kx.ravel(), ky.ravel()], axis=1)
    return Trajectory(coords, n_readouts, n_samples_per_readout)


def undersample(dataset, factor):
    """Keep ceil(n_readouts / factor) readouts, evenly spaced by index.

    Kept readout j (0-based) is round(j * n_readouts / m) where m is the
    kept count; rounding is half-up. factor == 1 returns an identical
    copy. Sample rows within a readout are untouched.
    """
    if factor < 1:
        raise ValueError(f"undersampling factor must be >= 1, got {factor}")
    traj = dataset.trajectory
    n = traj.n_readouts
    m = int(np.ceil(n / factor))
    picks = np.floor(np.arange(m) * n / m + 0.5).astype(np.int64)
    spr = traj.n_samples_per_readout
    rows = (picks[:, None] * spr + np.arange(spr)[None, :]).ravel()
    new_traj = Trajectory(traj.coords[rows].copy(), m, spr)
    return KSpaceDataset(dataset.data[rows].copy(), new_traj)


# Ellipse table: (intensity, a, b, x0, y0, angle_deg) on the [-1, 1] square,
# additive intensities chosen so summed values stay within [0, 1].
_PHANTOM_ELLIPSES = (
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    (-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
    (-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
    (0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
    (0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
    (0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
    (0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
    (0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
    (0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
)


def shepp_logan(grid):
    """Real-valued Shepp-Logan phantom on the given grid, values in [0, 1].

    Pixel centers are mapped to the [-1, 1] x [-1, 1] square (x across
    rows, y across columns) and each ellipse adds its intensity to every
    pixel whose center lies inside it.
    """
    u = (2 * np.arange(grid.nx, dtype=np.float64) - (grid.nx - 1)) / grid.nx
    v = (2 * np.arange(grid.ny, dtype=np.float64) - (grid.ny - 1)) / grid.ny
    uu = u[:, None]
    vv = v[None, :]
    img = np.zeros((grid.nx, grid.ny), dtype=np.float64)
    for inten, a, b, x0, y0, ang in _PHANTOM_ELLIPSES:
        t = np.deg2rad(ang)
        ct, st = np.cos(t), np.sin(t)
        xr = (uu - x0) * ct + (vv - y0) * st
        yr = -(uu - x0) * st + (vv - y0) * ct
        img += inten * ((xr / a) ** 2 + (yr / b) ** 2 <= 1.0)
    return np.clip(img, 0.0, 1.0)


def birdcage_sensitivities(grid, n_coils, width=1.5):
    """Smooth synthetic coil maps, shape (n_coils, nx, ny).

    Coil c is a Gaussian magnitude bump centered on the edge of the field
    of view at angle 2*pi*c/n_coils, with a mild linear phase ramp
    pointing at the same location. width scales the Gaussian footprint in
    units of half the field of view; width -> inf gives |s| -> 1.
    """
    if n_coils < 1:
        raise ValueError(f"n_coils must be >= 1, got {n_coils}")
    rx, ry = grid.coords()
    xx = rx[:, None]
    yy = ry[None, :]
    half = max(grid.nx, grid.ny) / 2.0
    sigma = width * half
    maps = np.empty((n_coils, grid.nx, grid.ny), dtype=np.complex128)
    for c in range(n_coils):
        ang = 2 * np.pi * c / n_coils
        cx = half * np.cos(ang)
        cy = half * np.sin(ang)
        r2 = (xx - cx) ** 2 + (yy - cy) ** 2
        mag = np.exp(-r2 / (2 * sigma**2))
        phase = (np.pi / (4 * half)) * (xx * np.cos(ang) + yy * np.sin(ang))
        maps[c] = mag * np.exp(1j * phase)
    return SensitivityMaps(maps)


def simulate_kspace(image, sens, trajectory, chunk=4096):
    """Direct-summation multi-coil encoding of an image (the reference).

    d[k, c] = sum_n sens[c, n] * image[n] * exp(-2j*pi * k_k . r_n)
    with pixels on the centered integer grid. Always evaluated in double
    precision. No normalization factor is applied.
    """
    image = np.asarray(image)
    if image.shape != sens.maps.shape[1:]:
        raise ValueError(
            f"image shape {image.shape} != sensitivity grid {sens.maps.shape[1:]}")
    grid = sens.grid
    rx, ry = grid.coords()
    r_x = np.repeat(rx, grid.ny)  # pixel n = x * ny + y
    r_y = np.tile(ry, grid.nx)
    coil_images = (sens.maps.astype(np.complex128)
                   * image.astype(np.complex128)).reshape(sens.n_coils, -1)
    coords = trajectory.coords
    out = np.empty((trajectory.n_samples, sens.n_coils), dtype=np.complex128)
    for start in range(0, trajectory.n_samples, chunk):
        stop = min(start + chunk, trajectory.n_samples)
        phase = coords[start:stop, 0:1] * r_x[None, :] + \
            coords[start:stop, 1:2] * r_y[None, :]
        out[start:stop] = np.exp(-2j * np.pi * phase) @ coil_images.T
    return KSpaceDataset(out, trajectory)


def add_noise(dataset, snr_db, seed=0):
    """Complex white Gaussian noise at the given SNR in dB (RMS-based)."""
    rms = np.sqrt(np.mean(np.abs(dataset.data) ** 2))
    if rms == 0:
        raise ValueError("cannot set an SNR on all-zero data")
    sigma = rms / 10.0 ** (snr_db / 20.0)
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(dataset.data.shape) + \
        1j * rng.standard_normal(dataset.data.shape)
    noisy = dataset.data + (sigma / np.sqrt(2)) * noise
    return KSpaceDataset(noisy, dataset.trajectory)


def cast_dataset(dataset, precision):
    """Copy of the dataset with samples cast to the requested precision."""
    cdt = COMPLEX_DTYPES[precision]
    return KSpaceDataset(dataset.data.astype(cdt), dataset.trajectory)
