"""Per-sample metric reports for trained models and linear baselines."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .data import Dataset
from .metrics import psnr, ssim
from .model import ModelConfig, frozen
from .physics import linear_recon
from .train import predict

REPORT_FIELDS = ("sample", "psnr", "ssim")


@dataclass
class MetricReport:
    names: list[str] = field(default_factory=list)
    psnr: list[float] = field(default_factory=list)
    ssim: list[float] = field(default_factory=list)
    latency_ms: Optional[dict] = None
    peak_memory_mb: Optional[float] = None

    def add(self, name: str, recon: np.ndarray, ref: np.ndarray) -> None:
        self.names.append(name)
        self.psnr.append(psnr(recon, ref))
        self.ssim.append(ssim(recon, ref))

    @property
    def psnr_mean(self) -> float:
        return float(np.mean(self.psnr))

    @property
    def psnr_std(self) -> float:
        return float(np.std(self.psnr))

    @property
    def ssim_mean(self) -> float:
        return float(np.mean(self.ssim))

    @property
    def ssim_std(self) -> float:
        return float(np.std(self.ssim))

    def write_csv(self, path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(REPORT_FIELDS)
            for name, p, s in zip(self.names, self.psnr, self.ssim):
                w.writerow([name, repr(p), repr(s)])
            w.writerow(["mean", repr(self.psnr_mean), repr(self.ssim_mean)])
            w.writerow(["std", repr(self.psnr_std), repr(self.ssim_std)])


def evaluate_model(weights: dict, cfg: ModelConfig, dataset: Dataset, split: str = "test",
                   batch_size: int = 4) -> MetricReport:
    dtype = next(iter(weights.values())).dtype
    x, y, x0 = (a.astype(dtype) for a in dataset.arrays(split))
    pred = predict(frozen(weights), cfg, x0, y, dataset.op, batch_size)
    report = MetricReport()
    for i, (p, ref) in zip(dataset.ids(split), zip(pred, x)):
        report.add(f"{split}/{i}", p, ref)
    return report


def evaluate_baseline(dataset: Dataset, split: str = "test") -> MetricReport:
    """Zero-filled (MRI) or FBP (CT) reconstructions, recomputed from the measurements."""
    report = MetricReport()
    for i, sample in zip(dataset.ids(split), dataset.samples(split)):
        report.add(f"{split}/{i}", linear_recon(sample.y, dataset.op), sample.x)
    return report
