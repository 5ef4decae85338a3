"""Binary tensor files and dataset directories.

Tensor file layout (all integers little-endian):

    bytes 0-3   magic "CSMR"
    byte  4     format version, currently 1
    byte  5     dtype code: 0 complex-single, 1 complex-double,
                            2 real-single, 3 real-double
    byte  6     number of dimensions
    byte  7     reserved, written as 0
    8 bytes/dim dimension sizes, u64
    payload     row-major values; complex values interleaved (re, im)

Round-trips are bit-exact. A dataset directory groups phantom.cplx,
sens.cplx, traj.cplx, kspace.cplx and a meta.json that fully determines
regeneration.
"""

import json
import struct
from pathlib import Path

import numpy as np

MAGIC = b"CSMR"
VERSION = 1

_CODE_TO_DTYPE = {
    0: np.dtype("<c8"),
    1: np.dtype("<c16"),
    2: np.dtype("<f4"),
    3: np.dtype("<f8"),
}
_DTYPE_TO_CODE = {v: k for k, v in _CODE_TO_DTYPE.items()}

_HEADER = struct.Struct("<4sBBBB")


class TensorFileError(ValueError):
    """Raised for malformed tensor files or unsupported arrays."""


def write_tensor(path, arr):
    """Write an array (complex64/128 or float32/64, ndim >= 1) to path."""
    arr = np.asarray(arr)
    if arr.ndim < 1 or arr.ndim > 255:
        raise TensorFileError(f"ndim must be in 1..255, got {arr.ndim}")
    arr = np.ascontiguousarray(arr)
    dt = arr.dtype.newbyteorder("<")
    if dt not in _DTYPE_TO_CODE:
        raise TensorFileError(
            f"unsupported dtype {arr.dtype}; expected complex64/complex128/"
            "float32/float64")
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, VERSION, _DTYPE_TO_CODE[dt], arr.ndim, 0))
        f.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        f.write(arr.astype(dt, copy=False).tobytes())


def read_tensor(path):
    """Read a tensor file back to a numpy array (bit-exact round-trip)."""
    with open(path, "rb") as f:
        raw = f.read()
    if len(raw) < _HEADER.size:
        raise TensorFileError(f"{path}: truncated header")
    magic, version, code, ndim, _reserved = _HEADER.unpack_from(raw, 0)
    if magic != MAGIC:
        raise TensorFileError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise TensorFileError(f"{path}: unsupported version {version}")
    if code not in _CODE_TO_DTYPE:
        raise TensorFileError(f"{path}: unknown dtype code {code}")
    if ndim < 1:
        raise TensorFileError(f"{path}: ndim must be >= 1")
    dims_end = _HEADER.size + 8 * ndim
    if len(raw) < dims_end:
        raise TensorFileError(f"{path}: truncated dimension list")
    shape = struct.unpack_from(f"<{ndim}Q", raw, _HEADER.size)
    dtype = _CODE_TO_DTYPE[code]
    expected = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
    payload = raw[dims_end:]
    if len(payload) != expected:
        raise TensorFileError(
            f"{path}: payload is {len(payload)} bytes, header implies {expected}")
    return np.frombuffer(payload, dtype=dtype).reshape(shape).copy()


DATASET_FILES = {
    "phantom": "phantom.cplx",
    "sens": "sens.cplx",
    "traj": "traj.cplx",
    "kspace": "kspace.cplx",
}
META_FILE = "meta.json"


def save_dataset(directory, phantom, sens_maps, trajectory, kspace, meta):
    """Write a dataset directory; meta gains derived shape fields."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_tensor(directory / DATASET_FILES["phantom"],
                 np.asarray(phantom, dtype=np.complex128))
    write_tensor(directory / DATASET_FILES["sens"], sens_maps)
    write_tensor(directory / DATASET_FILES["traj"], trajectory.coords)
    write_tensor(directory / DATASET_FILES["kspace"], kspace)
    meta = dict(meta)
    meta["n_readouts_kept"] = trajectory.n_readouts
    meta["n_samples_per_readout"] = trajectory.n_samples_per_readout
    meta["n_kspace_samples"] = trajectory.n_samples
    meta["n_coils"] = int(kspace.shape[1])
    with open(directory / META_FILE, "w") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")


def load_dataset(directory):
    """Load a dataset directory; returns (phantom, sens, dataset, meta)."""
    from .acquisition import KSpaceDataset, SensitivityMaps, Trajectory

    directory = Path(directory)
    meta_path = directory / META_FILE
    if not meta_path.is_file():
        raise TensorFileError(f"{directory} is not a dataset directory "
                              f"(missing {META_FILE})")
    with open(meta_path) as f:
        meta = json.load(f)
    phantom = read_tensor(directory / DATASET_FILES["phantom"])
    sens = SensitivityMaps(read_tensor(directory / DATASET_FILES["sens"]))
    coords = read_tensor(directory / DATASET_FILES["traj"])
    traj = Trajectory(coords, meta["n_readouts_kept"],
                      meta["n_samples_per_readout"])
    kspace = read_tensor(directory / DATASET_FILES["kspace"])
    return phantom, sens, KSpaceDataset(kspace, traj), meta
