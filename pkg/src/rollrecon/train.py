"""Losses, the training loop, checkpoints and the ablation driver."""

from __future__ import annotations

import csv
import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import mrtx
from .data import DTYPES, Dataset
from .errors import ConfigError, DivergenceError, StateError
from .metrics import psnr, ssim
from .model import (ModelConfig, NetworkOutput, compressed_ssm_block, encode_scale, frozen,
                    init_weights, network_forward, ssm_params, weight_shapes)
from .tensorgrad import AdamState, Tape, Tensor, adam_step, add, concat, l1_loss, linear

LOSS_MODES = ("dmsd", "shallow_ss", "shallow_ms", "deep_msl")
HISTORY_FIELDS = ("epoch", "train_loss", "val_loss", "val_psnr", "val_ssim")
LR_RANGE = (1e-6, 1e-3)


@dataclass
class TrainConfig:
    epochs: int = 50
    lr: float = 1e-4
    batch_size: int = 4
    seed: int = 0
    loss_mode: str = "dmsd"
    val_every: int = 1
    dtype: str = "f32"
    data: Optional[str] = None
    out: Optional[str] = None

    def __post_init__(self):
        if int(self.epochs) < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        # lr = 0 is kept as an explicit frozen-weights run
        if self.lr != 0 and not (LR_RANGE[0] <= self.lr <= LR_RANGE[1]):
            raise ConfigError(f"lr must lie in [{LR_RANGE[0]:g}, {LR_RANGE[1]:g}], got {self.lr}")
        if int(self.batch_size) < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if int(self.val_every) < 1:
            raise ConfigError(f"val_every must be >= 1, got {self.val_every}")
        if self.loss_mode not in LOSS_MODES:
            raise ConfigError(f"unknown loss mode {self.loss_mode!r}; choose from {LOSS_MODES}")
        if self.dtype not in DTYPES:
            raise ConfigError(f"dtype must be one of {sorted(DTYPES)}")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown train config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)


# -- losses ---------------------------------------------------------------------


def dmsd_loss(out: NetworkOutput, x_ref) -> Tensor:
    """Sum over scales of the L1 distance between DC-enforced decodings and the reference."""
    if not out.scales:
        raise StateError("network output carries no per-scale decodings")
    terms = [l1_loss(o.u_dc, x_ref) for o in out.scales]
    loss = terms[0]
    for t in terms[1:]:
        loss = add(loss, t)
    return loss


def avg_pool(x: Tensor, f: int) -> Tensor:
    """Non-overlapping ``f x f`` average pooling of ``(..., H, W, C)``."""
    if f == 1:
        return x
    h, w = x.dims[-3], x.dims[-2]
    if h % f or w % f:
        raise ConfigError(f"{h}x{w} is not divisible by the pooling factor {f}")

    def fwd(a):
        *lead, hh, ww, c = a.shape
        return a.reshape(*lead, hh // f, f, ww // f, f, c).mean(axis=(-4, -2))

    def adj(g):
        return np.repeat(np.repeat(g, f, axis=-3), f, axis=-2) / (f * f)

    return linear(x, fwd, adj, op="avg_pool")


def latent_targets(x_ref: np.ndarray, weights: dict, cfg: ModelConfig) -> list[np.ndarray]:
    """Reference latents for the deep multi-scale loss.

    The reference image is tiled to the channel count each scale's encoder
    expects and pushed through that scale's encoder and SSM block of the last
    cascade with the current weights held fixed.
    """
    w = frozen(weights)
    k = 1 if cfg.share_cascades else cfg.K
    x = Tensor(np.asarray(x_ref))
    targets = []
    for pos, s in enumerate(cfg.scales()):
        f = x if pos == 0 else concat([x] * (2 * pos + 1))
        d = encode_scale(f, s, w, cfg, k)
        if not cfg.no_ssm:
            d = compressed_ssm_block(d, ssm_params(w, cfg, s, k), cfg.J, cfg.scan_order,
                                     cfg.scan_method)
        targets.append(d.data)
    return targets


def _sum(terms: list[Tensor]) -> Tensor:
    loss = terms[0]
    for t in terms[1:]:
        loss = add(loss, t)
    return loss


def total_loss(out: NetworkOutput, x_ref, mode: str = "dmsd", cfg: Optional[ModelConfig] = None,
               weights: Optional[dict] = None) -> Tensor:
    """Image loss on the final estimate plus the mode's auxiliary terms.

    ``shallow_ms`` needs ``cfg`` for the scale count (defaults to the number
    of decoded scales); ``deep_msl`` needs ``cfg`` and ``weights``.
    """
    if mode not in LOSS_MODES:
        raise ValueError(f"unknown loss mode {mode!r}; choose from {LOSS_MODES}")
    x_ref = np.asarray(x_ref, dtype=out.x_hat.dtype)
    terms = [l1_loss(out.x_hat, x_ref)]
    if mode == "dmsd":
        if out.scales:
            terms.append(dmsd_loss(out, x_ref))
    elif mode == "shallow_ms":
        n_scales = cfg.S if cfg is not None else max(1, len(out.scales))
        ref = Tensor(x_ref)
        for s in range(1, n_scales + 1):
            f = 2 ** (n_scales - s)
            terms.append(l1_loss(avg_pool(out.x_hat, f), avg_pool(ref, f).data))
    elif mode == "deep_msl":
        if cfg is None or weights is None:
            raise ValueError("deep_msl needs the model config and weights")
        for o, t in zip(out.scales, latent_targets(x_ref, weights, cfg)):
            terms.append(l1_loss(o.g, t))
    return _sum(terms)


# -- checkpoints ------------------------------------------------------------------


def save_checkpoint(path, weights: dict, cfg: ModelConfig) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    keys = list(weights)
    dtypes = {weights[k].dtype.name for k in keys}
    if len(dtypes) != 1:
        raise ConfigError(f"mixed weight dtypes {sorted(dtypes)}")
    for key in keys:
        mrtx.write(path / "weights" / f"{key}.mrtx", weights[key].data)
    manifest = {"config": cfg.to_dict(), "keys": keys,
                "dtype": "f32" if dtypes == {"float32"} else "f64"}
    (path / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def load_checkpoint(path) -> tuple[dict, ModelConfig]:
    path = Path(path)
    mpath = path / "manifest.json"
    if not mpath.is_file():
        raise FileNotFoundError(f"no checkpoint manifest under {path}")
    manifest = json.loads(mpath.read_text())
    cfg = ModelConfig.from_dict(manifest["config"])
    expected = weight_shapes(cfg)
    if set(manifest["keys"]) != set(expected):
        raise ConfigError("checkpoint keys do not match its model config")
    weights = {}
    for key in manifest["keys"]:
        arr = mrtx.read(path / "weights" / f"{key}.mrtx")
        if arr.shape != expected[key]:
            raise ConfigError(f"{key}: stored dims {arr.shape}, config expects {expected[key]}")
        weights[key] = Tensor(arr, requires_grad=True)
    return weights, cfg


# -- training -----------------------------------------------------------------------


@dataclass
class TrainResult:
    weights: dict
    history: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_psnr: float = -math.inf


def _first_nonfinite(named: dict) -> Optional[str]:
    for key, value in named.items():
        if value is not None and not np.all(np.isfinite(value)):
            return key
    return None


def _check_finite(loss: Tensor, out: NetworkOutput, weights: dict, grads: dict) -> None:
    named = {f"weights/{k}": v.data for k, v in weights.items()}
    if math.isfinite(loss.item()):
        named = {f"grad/{k}": v for k, v in grads.items()}
        key = _first_nonfinite(named)
        if key is None:
            return
    else:
        named.update({f"cascade{i + 1}/x_hat": c.data for i, c in enumerate(out.cascades)})
        named.update({f"scale{o.scale}/u_dc": o.u_dc.data for o in out.scales})
        key = _first_nonfinite(named) or "loss"
    raise DivergenceError(f"non-finite value in {key!r} (loss={loss.item()})", key)


def predict(weights: dict, cfg: ModelConfig, x0: np.ndarray, y: np.ndarray, op,
            batch_size: int = 4) -> np.ndarray:
    """Batched inference over a stack of samples."""
    outs = []
    for i in range(0, len(x0), batch_size):
        outs.append(network_forward(Tensor(x0[i:i + batch_size]), y[i:i + batch_size], op,
                                    weights, cfg).x_hat.data)
    return np.concatenate(outs)


def _validate(weights, cfg, tcfg, arrays, op) -> tuple[float, float, float]:
    x, y, x0 = arrays
    w = frozen(weights)
    losses, psnrs, ssims = [], [], []
    for i in range(0, len(x), tcfg.batch_size):
        sl = slice(i, i + tcfg.batch_size)
        out = network_forward(Tensor(x0[sl]), y[sl], op, w, cfg)
        loss = total_loss(out, x[sl], tcfg.loss_mode, cfg, w)
        losses.append(loss.item() * len(x[sl]))
        for pred, ref in zip(out.x_hat.data, x[sl]):
            psnrs.append(psnr(pred, ref))
            ssims.append(ssim(pred, ref))
    return float(sum(losses) / len(x)), float(np.mean(psnrs)), float(np.mean(ssims))


def write_history(path, history: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(HISTORY_FIELDS)
        for row in history:
            writer.writerow(["" if row[k] is None else repr(row[k]) for k in HISTORY_FIELDS])


def train_loop(tcfg: TrainConfig, mcfg: ModelConfig, dataset: Dataset, out_dir=None,
               log: Optional[Callable[[str], None]] = None) -> TrainResult:
    """Seeded Adam training; writes ``history.csv``, ``best/`` and ``final/`` when ``out_dir`` is set."""
    if dataset.channels != mcfg.P:
        raise ConfigError(f"{dataset.modality} data has {dataset.channels} channels, "
                          f"model expects P={mcfg.P}")
    if dataset.op.modality != dataset.modality:
        raise ConfigError("dataset operator modality does not match its manifest")
    train_ids = dataset.ids("train")
    if not train_ids:
        raise ConfigError("training split is empty")
    size = dataset.manifest["size"]
    mcfg.check_resolution(size, size)

    dtype = DTYPES[tcfg.dtype]
    op = dataset.op
    x_tr, y_tr, x0_tr = (a.astype(dtype) for a in dataset.arrays("train"))
    val = dataset.arrays("val") if dataset.ids("val") else None
    if val is not None:
        val = tuple(a.astype(dtype) for a in val)

    weights = init_weights(mcfg, tcfg.seed, dtype)
    state = AdamState(lr=tcfg.lr)
    rng = np.random.default_rng(tcfg.seed)
    result = TrainResult(weights)
    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)

    n = len(x_tr)
    for epoch in range(1, tcfg.epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        for i in range(0, n, tcfg.batch_size):
            idx = np.sort(order[i:i + tcfg.batch_size])
            for w in weights.values():
                w.zero_grad()
            with Tape() as tape:
                out = network_forward(Tensor(x0_tr[idx]), y_tr[idx], op, weights, mcfg)
                loss = total_loss(out, x_tr[idx], tcfg.loss_mode, mcfg, weights)
            if math.isfinite(loss.item()):
                tape.backward(loss)
            grads = {k: w.grad for k, w in weights.items()}
            _check_finite(loss, out, weights, grads)
            adam_step(weights, grads, state)
            total += loss.item() * len(idx)
        row = {"epoch": epoch, "train_loss": total / n, "val_loss": None, "val_psnr": None,
               "val_ssim": None}
        validate = val is not None and (epoch % tcfg.val_every == 0 or epoch == tcfg.epochs)
        if validate:
            row["val_loss"], row["val_psnr"], row["val_ssim"] = _validate(weights, mcfg, tcfg,
                                                                          val, op)
        result.history.append(row)
        improved = validate and row["val_psnr"] > result.best_psnr
        if improved:
            result.best_psnr, result.best_epoch = row["val_psnr"], epoch
        if out_path is not None:
            if improved or (val is None and epoch == tcfg.epochs):
                save_checkpoint(out_path / "best", weights, mcfg)
            write_history(out_path / "history.csv", result.history)
        if log is not None:
            log(" ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}"
                         for k, v in row.items() if v is not None))
    if out_path is not None:
        save_checkpoint(out_path / "final", weights, mcfg)
        (out_path / "train_config.json").write_text(json.dumps(tcfg.to_dict(), indent=2) + "\n")
    if val is None:
        result.best_epoch = tcfg.epochs
    return result


# -- ablations ----------------------------------------------------------------------

FLAG_VARIANTS = ("no_pdssm", "no_ar", "no_ssm", "no_dc")
LOSS_VARIANTS = ("shallow_ss", "shallow_ms", "deep_msl")
ALL_VARIANTS = ("full",) + FLAG_VARIANTS + LOSS_VARIANTS
ABLATION_FIELDS = ("variant", "psnr_mean", "psnr_std", "ssim_mean", "ssim_std", "n_test")


def variant_configs(mcfg: ModelConfig, tcfg: TrainConfig, variants=ALL_VARIANTS,
                    s_sweep=(), j_sweep=()) -> dict[str, tuple[ModelConfig, TrainConfig]]:
    """Named (model, train) config pairs for an ablation run."""
    runs = {}
    for v in variants:
        if v == "full":
            runs[v] = (mcfg, tcfg)
        elif v in FLAG_VARIANTS:
            runs[v] = (mcfg.replace(**{v: True}), tcfg)
        elif v in LOSS_VARIANTS:
            runs[v] = (mcfg, tcfg.replace(loss_mode=v))
        else:
            raise ConfigError(f"unknown variant {v!r}; choose from {ALL_VARIANTS}")
    for s in s_sweep:
        runs[f"S={s}"] = (mcfg.replace(S=int(s)), tcfg)
    for j in j_sweep:
        runs[f"J={j}"] = (mcfg.replace(J=int(j)), tcfg)
    return runs


def evaluate_split(weights: dict, cfg: ModelConfig, dataset: Dataset, split: str = "test",
                   batch_size: int = 4, dtype=np.float32) -> tuple[list[float], list[float]]:
    x, y, x0 = (a.astype(dtype) for a in dataset.arrays(split))
    pred = predict(frozen(weights), cfg, x0, y, dataset.op, batch_size)
    return [psnr(p, r) for p, r in zip(pred, x)], [ssim(p, r) for p, r in zip(pred, x)]


def ablation_suite(mcfg: ModelConfig, tcfg: TrainConfig, dataset: Dataset, out_dir,
                   variants=ALL_VARIANTS, s_sweep=(), j_sweep=(),
                   log: Optional[Callable[[str], None]] = None) -> list[dict]:
    """Train every variant under identical seeds and score it on the test split.

    Each variant trains into ``out_dir/<variant>``; the table goes to
    ``out_dir/ablation.csv``. Scores use the best-validation checkpoint.
    """
    out_dir = Path(out_dir)
    rows = []
    for name, (m, t) in variant_configs(mcfg, tcfg, variants, s_sweep, j_sweep).items():
        run_dir = out_dir / name.replace("=", "")
        train_loop(t, m, dataset, run_dir, log=log)
        weights, cfg = load_checkpoint(run_dir / "best")
        p, s = evaluate_split(weights, cfg, dataset, "test", t.batch_size, DTYPES[t.dtype])
        rows.append({"variant": name, "psnr_mean": float(np.mean(p)), "psnr_std": float(np.std(p)),
                     "ssim_mean": float(np.mean(s)), "ssim_std": float(np.std(s)),
                     "n_test": len(p)})
        write_ablation_csv(out_dir / "ablation.csv", rows)
    return rows


def write_ablation_csv(path, rows: list[dict]) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=ABLATION_FIELDS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
