"""Synthetic datasets on disk.

Layout::

    <root>/manifest.json
    <root>/operator/mask.mrtx | coils.mrtx     (MRI)
    <root>/<split>/<id>/{x,y,x0}.mrtx, meta.json

All samples in a dataset share one operator (mask or view set), so a batch
can be pushed through a single forward/adjoint call.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import mrtx
from .errors import ConfigError
from .physics import (CTOperator, ImagingOperator, MRIOperator, ct_operator, gen_coils,
                      gen_phantom, linear_recon, make_vd_mask, mri_operator, subsample_views)
from .physics.sampling import DEFAULT_CALIB

SPLITS = ("train", "val", "test")
_SPLIT_CODE = {"train": 1, "val": 2, "test": 3}
DTYPES = {"f32": np.float32, "f64": np.float64}


@dataclass
class ReconSample:
    x: np.ndarray
    y: np.ndarray
    x0: np.ndarray
    noise_std: float = 0.0
    seed: Optional[int] = None
    name: str = ""


def _derived_seed(*parts: int) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


def make_operator(modality: str, size: int, rate: float, seed: int = 0, coils: int = 4,
                  calib: int = DEFAULT_CALIB, n_views_full: int = 60) -> ImagingOperator:
    if modality == "mri":
        mask = make_vd_mask(size, size, rate, min(calib, size), seed=_derived_seed(seed, 0))
        return mri_operator(mask, gen_coils(size, size, coils))
    if modality == "ct":
        return ct_operator(size, subsample_views(n_views_full, rate), n_views_full)
    raise ConfigError(f"unknown modality {modality!r}")


def simulate_sample(op: ImagingOperator, seed: int, noise_std: float = 0.0,
                    dtype=np.float32, name: str = "") -> ReconSample:
    """Phantom, measurements (optionally with complex Gaussian noise) and linear recon."""
    size = op.image_shape()[0]
    x = gen_phantom(size, size, seed, kind=op.modality)
    y = op.apply(x)
    if noise_std > 0:
        rng = np.random.default_rng(_derived_seed(seed, 99))
        # per real/imag component; total complex std is noise_std
        std = noise_std / np.sqrt(2.0) if op.modality == "mri" else noise_std
        noise = rng.normal(0.0, std, y.shape)
        if op.modality == "mri":
            noise *= op.mask[..., None]
        y = y + noise
    y = y.astype(dtype)
    return ReconSample(x.astype(dtype), y, linear_recon(y, op), noise_std, seed, name)


def _write_operator(root: Path, op: ImagingOperator) -> None:
    if isinstance(op, MRIOperator):
        mrtx.write(root / "operator" / "mask.mrtx", op.mask.astype(np.float32))
        coils = np.stack([op.coils.real, op.coils.imag], axis=-1)
        mrtx.write(root / "operator" / "coils.mrtx", coils)


def load_operator(root, desc: dict) -> ImagingOperator:
    root = Path(root)
    if desc["modality"] == "mri":
        mask = mrtx.read(root / "operator" / "mask.mrtx") > 0.5
        c = mrtx.read(root / "operator" / "coils.mrtx")
        return MRIOperator(mask, c[..., 0] + 1j * c[..., 1], scale=desc["scale"])
    return CTOperator(desc["size"], desc["views"], desc["n_views_full"], desc["n_det"],
                      scale=desc["scale"])


def write_sample(path: Path, sample: ReconSample) -> None:
    path.mkdir(parents=True, exist_ok=True)
    mrtx.write(path / "x.mrtx", sample.x)
    mrtx.write(path / "y.mrtx", sample.y)
    mrtx.write(path / "x0.mrtx", sample.x0)
    meta = {"seed": sample.seed, "noise_std": sample.noise_std}
    (path / "meta.json").write_text(json.dumps(meta, indent=2) + "\n")


def read_sample(path) -> ReconSample:
    path = Path(path)
    meta = json.loads((path / "meta.json").read_text())
    return ReconSample(mrtx.read(path / "x.mrtx"), mrtx.read(path / "y.mrtx"),
                       mrtx.read(path / "x0.mrtx"), meta.get("noise_std", 0.0),
                       meta.get("seed"), f"{path.parent.name}/{path.name}")


def simulate_dataset(out, modality: str, size: int, rate: float, n_train: int, n_val: int,
                     n_test: int, seed: int = 0, coils: int = 4, calib: int = DEFAULT_CALIB,
                     n_views_full: int = 60, noise_std: float = 0.0, dtype: str = "f32") -> dict:
    """Generate a dataset directory and return its manifest."""
    if dtype not in DTYPES:
        raise ConfigError(f"dtype must be one of {sorted(DTYPES)}")
    root = Path(out)
    op = make_operator(modality, size, rate, seed, coils, calib, n_views_full)
    counts = {"train": n_train, "val": n_val, "test": n_test}
    splits = {name: list(range(counts[name])) for name in SPLITS}
    for name in SPLITS:
        for i in splits[name]:
            sample = simulate_sample(op, _derived_seed(seed, _SPLIT_CODE[name], i), noise_std,
                                     DTYPES[dtype])
            write_sample(root / name / str(i), sample)
    _write_operator(root, op)
    manifest = {
        "modality": modality, "size": size, "rate": rate, "seed": seed, "splits": splits,
        "coils": coils if modality == "mri" else None, "calib": calib,
        "n_views_full": n_views_full if modality == "ct" else None,
        "noise_std": noise_std, "dtype": dtype, "operator": op.describe(),
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest


class Dataset:
    """A dataset directory with its shared operator."""

    def __init__(self, root):
        self.root = Path(root)
        manifest_path = self.root / "manifest.json"
        if not manifest_path.is_file():
            raise FileNotFoundError(f"no manifest.json under {self.root}")
        self.manifest = json.loads(manifest_path.read_text())
        self.op = load_operator(self.root, self.manifest["operator"])

    @property
    def modality(self) -> str:
        return self.manifest["modality"]

    @property
    def channels(self) -> int:
        return 2 if self.modality == "mri" else 1

    def ids(self, split: str) -> list:
        if split not in self.manifest["splits"]:
            raise ConfigError(f"dataset has no split {split!r}")
        return list(self.manifest["splits"][split])

    def samples(self, split: str) -> list[ReconSample]:
        return [read_sample(self.root / split / str(i)) for i in self.ids(split)]

    def arrays(self, split: str) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Stacked ``(x, y, x0)`` for a split."""
        samples = self.samples(split)
        if not samples:
            return (np.empty(0),) * 3
        return tuple(np.stack([getattr(s, f) for s in samples]) for f in ("x", "y", "x0"))


def dataset_of_sample(sample_dir) -> Dataset:
    """The dataset containing ``<root>/<split>/<id>``."""
    return Dataset(Path(os.path.abspath(sample_dir)).parent.parent)
