"""Tensor file format and dataset directory round-trips."""

import json
import struct

import numpy as np
import pytest

from csrecon.acquisition import (birdcage_sensitivities, ImageGrid,
                                 radial_trajectory, shepp_logan,
                                 simulate_kspace, undersample)
from csrecon.io import (TensorFileError, load_dataset, read_tensor,
                        save_dataset, write_tensor)

DTYPES = [np.complex64, np.complex128, np.float32, np.float64]


def random_array(rng, shape, dtype):
    vals = rng.standard_normal(shape)
    if np.issubdtype(dtype, np.complexfloating):
        vals = vals + 1j * rng.standard_normal(shape)
    return vals.astype(dtype)


class TestTensorRoundTrip:
    @pytest.mark.parametrize("dtype", DTYPES)
    @pytest.mark.parametrize("shape", [(7,), (3, 5), (2, 3, 4)])
    def test_bitwise_round_trip(self, tmp_path, dtype, shape):
        rng = np.random.default_rng(100)
        arr = random_array(rng, shape, dtype)
        path = tmp_path / "t.cplx"
        write_tensor(path, arr)
        back = read_tensor(path)
        assert back.dtype == arr.dtype
        assert back.shape == arr.shape
        assert np.array_equal(back.view(np.uint8), arr.view(np.uint8))

    def test_non_contiguous_input(self, tmp_path):
        rng = np.random.default_rng(101)
        base = random_array(rng, (6, 8), np.complex128)
        view = base[::2, 1::3]
        path = tmp_path / "v.cplx"
        write_tensor(path, view)
        assert np.array_equal(read_tensor(path), view)

    def test_fortran_order_input(self, tmp_path):
        arr = np.asfortranarray(np.arange(12.0).reshape(3, 4))
        path = tmp_path / "f.cplx"
        write_tensor(path, arr)
        back = read_tensor(path)
        assert back.flags["C_CONTIGUOUS"]
        assert np.array_equal(back, arr)

    def test_exact_byte_layout(self, tmp_path):
        arr = np.arange(6, dtype=np.float32).reshape(2, 3)
        path = tmp_path / "b.cplx"
        write_tensor(path, arr)
        raw = path.read_bytes()
        expected = (b"CSMR" + bytes([1, 2, 2, 0])
                    + struct.pack("<2Q", 2, 3) + arr.tobytes())
        assert raw == expected

    def test_dtype_codes(self, tmp_path):
        for dtype, code in [(np.complex64, 0), (np.complex128, 1),
                            (np.float32, 2), (np.float64, 3)]:
            path = tmp_path / f"c{code}.cplx"
            write_tensor(path, np.zeros(2, dtype))
            assert path.read_bytes()[5] == code


class TestTensorErrors:
    def _valid_bytes(self):
        arr = np.arange(4, dtype=np.float64)
        return (b"CSMR" + bytes([1, 3, 1, 0]) + struct.pack("<Q", 4)
                + arr.tobytes())

    def _write(self, tmp_path, raw):
        path = tmp_path / "bad.cplx"
        path.write_bytes(raw)
        return path

    def test_bad_magic(self, tmp_path):
        raw = b"XSMR" + self._valid_bytes()[4:]
        with pytest.raises(TensorFileError, match="magic"):
            read_tensor(self._write(tmp_path, raw))

    def test_unsupported_version(self, tmp_path):
        raw = bytearray(self._valid_bytes())
        raw[4] = 2
        with pytest.raises(TensorFileError, match="version"):
            read_tensor(self._write(tmp_path, bytes(raw)))

    def test_unknown_dtype_code(self, tmp_path):
        raw = bytearray(self._valid_bytes())
        raw[5] = 9
        with pytest.raises(TensorFileError, match="dtype code"):
            read_tensor(self._write(tmp_path, bytes(raw)))

    def test_zero_ndim_in_file(self, tmp_path):
        raw = bytearray(self._valid_bytes())
        raw[6] = 0
        with pytest.raises(TensorFileError, match="ndim"):
            read_tensor(self._write(tmp_path, bytes(raw)))

    def test_truncated_header(self, tmp_path):
        with pytest.raises(TensorFileError, match="truncated header"):
            read_tensor(self._write(tmp_path, b"CSM"))

    def test_truncated_dimension_list(self, tmp_path):
        raw = b"CSMR" + bytes([1, 3, 2, 0]) + struct.pack("<Q", 4)
        with pytest.raises(TensorFileError, match="dimension list"):
            read_tensor(self._write(tmp_path, raw))

    def test_truncated_payload(self, tmp_path):
        raw = self._valid_bytes()[:-1]
        with pytest.raises(TensorFileError, match="payload"):
            read_tensor(self._write(tmp_path, raw))

    def test_trailing_bytes(self, tmp_path):
        raw = self._valid_bytes() + b"x"
        with pytest.raises(TensorFileError, match="payload"):
            read_tensor(self._write(tmp_path, raw))

    def test_integer_arrays_rejected_on_write(self, tmp_path):
        with pytest.raises(TensorFileError, match="unsupported dtype"):
            write_tensor(tmp_path / "i.cplx", np.arange(3))

    def test_zero_dim_arrays_rejected_on_write(self, tmp_path):
        with pytest.raises(TensorFileError, match="ndim"):
            write_tensor(tmp_path / "s.cplx", np.float64(3.0))


class TestDatasetDirectory:
    def _make(self):
        grid = ImageGrid(8, 8)
        phantom = shepp_logan(grid)
        sens = birdcage_sensitivities(grid, 2)
        ds = undersample(
            simulate_kspace(phantom, sens, radial_trajectory(9, 8)), 2)
        return phantom, sens, ds

    def test_round_trip_and_derived_meta(self, tmp_path):
        phantom, sens, ds = self._make()
        meta = {"seed": 7, "snr_db": None}
        save_dataset(tmp_path / "d", phantom, sens.maps, ds.trajectory,
                     ds.data, meta)
        phantom2, sens2, ds2, meta2 = load_dataset(tmp_path / "d")
        assert np.array_equal(phantom2, phantom.astype(np.complex128))
        assert np.array_equal(sens2.maps, sens.maps)
        assert np.array_equal(ds2.data, ds.data)
        assert np.array_equal(ds2.trajectory.coords, ds.trajectory.coords)
        assert ds2.trajectory.n_readouts == ds.trajectory.n_readouts
        assert meta2["seed"] == 7
        assert meta2["n_readouts_kept"] == ds.trajectory.n_readouts
        assert meta2["n_samples_per_readout"] == 8
        assert meta2["n_kspace_samples"] == ds.n_samples
        assert meta2["n_coils"] == 2

    def test_saves_are_byte_identical_across_runs(self, tmp_path):
        phantom, sens, ds = self._make()
        meta = {"seed": 7}
        save_dataset(tmp_path / "a", phantom, sens.maps, ds.trajectory,
                     ds.data, meta)
        save_dataset(tmp_path / "b", phantom, sens.maps, ds.trajectory,
                     ds.data, meta)
        for name in ("phantom.cplx", "sens.cplx", "traj.cplx",
                     "kspace.cplx", "meta.json"):
            assert (tmp_path / "a" / name).read_bytes() \
                == (tmp_path / "b" / name).read_bytes()

    def test_meta_is_valid_json(self, tmp_path):
        phantom, sens, ds = self._make()
        save_dataset(tmp_path / "d", phantom, sens.maps, ds.trajectory,
                     ds.data, {})
        with open(tmp_path / "d" / "meta.json") as f:
            doc = json.load(f)
        assert set(doc) >= {"n_readouts_kept", "n_samples_per_readout",
                            "n_kspace_samples", "n_coils"}

    def test_missing_meta_rejected(self, tmp_path):
        (tmp_path / "empty").mkdir()
        with pytest.raises(TensorFileError, match="meta.json"):
            load_dataset(tmp_path / "empty")
