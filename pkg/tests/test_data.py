import json

import numpy as np
import pytest

from rollrecon.data import Dataset, dataset_of_sample, make_operator, read_sample, simulate_dataset
from rollrecon.errors import ConfigError
from rollrecon.physics import linear_recon


def test_simulate_layout_and_determinism(tmp_path):
    m1 = simulate_dataset(tmp_path / "a", "mri", 16, 4, 3, 1, 2, seed=5, coils=2, calib=4)
    simulate_dataset(tmp_path / "b", "mri", 16, 4, 3, 1, 2, seed=5, coils=2, calib=4)
    assert m1["splits"] == {"train": [0, 1, 2], "val": [0], "test": [0, 1]}
    for key in ("modality", "size", "rate", "seed"):
        assert key in m1
    for f in ("manifest.json", "operator/mask.mrtx", "train/2/x.mrtx", "test/1/y.mrtx"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    ds = Dataset(tmp_path / "a")
    assert ds.channels == 2 and ds.op.scale == m1["operator"]["scale"]
    x, y, x0 = ds.arrays("train")
    assert x.shape == (3, 16, 16, 2) and y.shape == (3, 2, 16, 16, 2)
    # splits draw distinct phantoms
    assert not np.array_equal(x[0], ds.arrays("test")[0][0])


def test_stored_baseline_matches_operator(tmp_path):
    simulate_dataset(tmp_path, "ct", 16, 2, 2, 0, 1, seed=1, n_views_full=20)
    ds = Dataset(tmp_path)
    s = read_sample(tmp_path / "test" / "0")
    np.testing.assert_array_equal(linear_recon(s.y, ds.op), s.x0)
    assert dataset_of_sample(tmp_path / "test" / "0").manifest == ds.manifest
    assert ds.arrays("val")[0].size == 0


def test_noise_is_confined_to_sampled_locations(tmp_path):
    simulate_dataset(tmp_path, "mri", 16, 4, 1, 0, 0, seed=2, coils=1, calib=4, noise_std=0.05,
                     dtype="f64")
    ds = Dataset(tmp_path)
    y = read_sample(tmp_path / "train" / "0").y
    assert not np.any(y[0][~ds.op.mask])
    clean = ds.op.apply(read_sample(tmp_path / "train" / "0").x)
    assert np.std((y - clean)[0][ds.op.mask]) == pytest.approx(0.05 / np.sqrt(2), rel=0.2)


def test_errors(tmp_path):
    with pytest.raises(ConfigError):
        make_operator("pet", 16, 2)
    with pytest.raises(ConfigError):
        simulate_dataset(tmp_path, "ct", 16, 2, 1, 0, 0, dtype="f16")
    with pytest.raises(FileNotFoundError):
        Dataset(tmp_path / "nothing")
