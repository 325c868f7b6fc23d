"""Command-line entry point: ``rollrecon <subcommand> ...``.

Exit status is 0 on success, 2 for bad arguments or configs and 1 for any
other failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import mrtx
from .bench import bench
from .data import DTYPES, Dataset, dataset_of_sample, read_sample, simulate_dataset
from .errors import ConfigError
from .evaluate import evaluate_baseline, evaluate_model
from .model import ModelConfig, erf_map, erf_support, reconstruct
from .train import ALL_VARIANTS, TrainConfig, ablation_suite, load_checkpoint, train_loop


class ArgumentError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ArgumentError(f"{self.prog}: error: {message}")


def write_pgm16(path, image: np.ndarray) -> None:
    """Binary 16-bit PGM of a map scaled from [0, 1] to [0, 65535]."""
    img = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    if img.ndim != 2:
        raise ValueError(f"PGM export needs a 2-D map, got {img.shape}")
    h, w = img.shape
    data = np.round(img * 65535.0).astype(">u2")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(f"P5\n{w} {h}\n65535\n".encode("ascii") + data.tobytes())


def read_pgm16(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    parts = raw.split(maxsplit=4)
    if parts[0] != b"P5" or int(parts[3]) != 65535:
        raise ValueError(f"{path} is not a 16-bit binary PGM")
    w, h = int(parts[1]), int(parts[2])
    return np.frombuffer(parts[4], dtype=">u2", count=w * h).reshape(h, w)


def _load_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def _model_config(path, dataset: Dataset) -> ModelConfig:
    d = _load_json(path) if path else {}
    d.setdefault("P", dataset.channels)
    return ModelConfig.from_dict(d)


def _train_config(path, **overrides) -> TrainConfig:
    d = _load_json(path) if path else {}
    d.update({k: v for k, v in overrides.items() if v is not None})
    return TrainConfig.from_dict(d)


def _print(msg: str) -> None:
    print(msg, flush=True)


def cmd_simulate(a) -> None:
    m = simulate_dataset(a.out, a.modality, a.size, a.rate, a.n_train, a.n_val, a.n_test,
                         seed=a.seed, coils=a.coils, calib=a.calib, n_views_full=a.n_views_full,
                         noise_std=a.noise_std, dtype=a.dtype)
    counts = {k: len(v) for k, v in m["splits"].items()}
    _print(f"wrote {a.modality} dataset to {a.out} {counts}")


def cmd_train(a) -> None:
    tcfg = _train_config(a.train_config, data=a.data, out=a.out)
    if tcfg.data is None or tcfg.out is None:
        raise ConfigError("train needs --data and --out (or data/out in the train config)")
    ds = Dataset(tcfg.data)
    mcfg = _model_config(a.model_config, ds)
    res = train_loop(tcfg, mcfg, ds, tcfg.out, log=None if a.quiet else _print)
    _print(f"best epoch {res.best_epoch} val_psnr={res.best_psnr:.4f}; checkpoints in {tcfg.out}")


def cmd_eval(a) -> None:
    ds = Dataset(a.data)
    if a.ckpt:
        weights, cfg = load_checkpoint(a.ckpt)
        report = evaluate_model(weights, cfg, ds, a.split, a.batch_size)
    else:
        report = evaluate_baseline(ds, a.split)
    report.write_csv(a.out)
    kind = "model" if a.ckpt else "baseline"
    _print(f"{kind} {a.split}: psnr {report.psnr_mean:.4f} +- {report.psnr_std:.4f} dB, "
           f"ssim {report.ssim_mean:.4f} +- {report.ssim_std:.4f}")


def _sample_and_op(a, dtype):
    sample = read_sample(a.sample)
    ds = dataset_of_sample(a.sample)
    sample.x0 = sample.x0.astype(dtype)
    sample.y = sample.y.astype(dtype)
    return sample, ds.op


def cmd_infer(a) -> None:
    weights, cfg = load_checkpoint(a.ckpt)
    dtype = next(iter(weights.values())).dtype
    sample, op = _sample_and_op(a, dtype)
    mrtx.write(a.out, reconstruct(sample.x0, sample.y, op, weights, cfg))
    _print(f"wrote {a.out}")


def cmd_erf(a) -> None:
    weights, cfg = load_checkpoint(a.ckpt)
    dtype = next(iter(weights.values())).dtype
    sample, op = _sample_and_op(a, dtype)
    erf = erf_map(weights, cfg, sample, op)
    if a.out.endswith(".mrtx"):
        mrtx.write(a.out, erf)
    else:
        write_pgm16(a.out, erf)
    _print(f"wrote {a.out}; support(>{a.threshold:g}) = {erf_support(erf, a.threshold)} px")


def cmd_bench(a) -> None:
    weights, cfg = load_checkpoint(a.ckpt)
    dtype = next(iter(weights.values())).dtype
    sample, op = _sample_and_op(a, dtype)
    stats = bench(weights, cfg, sample.x0, sample.y, op, a.n_warmup, a.n_runs)
    if a.out:
        stats.write_csv(a.out)
    _print(f"median {stats.median_ms:.2f} ms, mean {stats.mean_ms:.2f} ms, "
           f"peak {stats.peak_memory_mb:.1f} MB")


def cmd_ablate(a) -> None:
    tcfg = _train_config(a.train_config, data=a.data)
    if tcfg.data is None:
        raise ConfigError("ablate needs --data")
    ds = Dataset(tcfg.data)
    mcfg = _model_config(a.model_config, ds)
    rows = ablation_suite(mcfg, tcfg, ds, a.out, a.variants, a.s_sweep, a.j_sweep,
                          log=None if a.quiet else _print)
    for r in rows:
        _print(f"{r['variant']}: psnr {r['psnr_mean']:.4f} ssim {r['ssim_mean']:.4f}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="rollrecon", description="Unrolled multi-scale SSM reconstruction toolkit.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="generate a synthetic dataset")
    s.add_argument("--modality", choices=("mri", "ct"), required=True)
    s.add_argument("--size", type=int, default=64)
    s.add_argument("--coils", type=int, default=4)
    s.add_argument("--rate", type=float, default=4.0)
    s.add_argument("--n-train", type=int, default=200)
    s.add_argument("--n-val", type=int, default=40)
    s.add_argument("--n-test", type=int, default=40)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--calib", type=int, default=16)
    s.add_argument("--n-views-full", type=int, default=60)
    s.add_argument("--noise-std", type=float, default=0.0)
    s.add_argument("--dtype", choices=sorted(DTYPES), default="f32")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    t = sub.add_parser("train", help="train a model")
    t.add_argument("--model-config")
    t.add_argument("--train-config")
    t.add_argument("--data")
    t.add_argument("--out")
    t.add_argument("--quiet", action="store_true")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="score a checkpoint, or the linear baseline without one")
    e.add_argument("--ckpt")
    e.add_argument("--data", required=True)
    e.add_argument("--split", choices=("train", "val", "test"), default="test")
    e.add_argument("--batch-size", type=int, default=4)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_eval)

    for name, func, help_ in (("infer", cmd_infer, "reconstruct one sample to MRTX"),
                              ("erf", cmd_erf, "effective receptive field map"),
                              ("bench", cmd_bench, "inference latency and memory")):
        c = sub.add_parser(name, help=help_)
        c.add_argument("--ckpt", required=True)
        c.add_argument("--sample", required=True, help="sample directory <data>/<split>/<id>")
        c.add_argument("--out", required=name != "bench")
        c.set_defaults(func=func)
        if name == "erf":
            c.add_argument("--threshold", type=float, default=0.01)
        if name == "bench":
            c.add_argument("--n-warmup", type=int, default=3)
            c.add_argument("--n-runs", type=int, default=20)

    b = sub.add_parser("ablate", help="train and score ablation variants")
    b.add_argument("--model-config")
    b.add_argument("--train-config")
    b.add_argument("--data")
    b.add_argument("--out", required=True)
    b.add_argument("--variants", nargs="+", choices=ALL_VARIANTS, default=list(ALL_VARIANTS))
    b.add_argument("--s-sweep", nargs="*", type=int, default=[])
    b.add_argument("--j-sweep", nargs="*", type=int, default=[])
    b.add_argument("--quiet", action="store_true")
    b.set_defaults(func=cmd_ablate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except ArgumentError as exc:
        print(exc, file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    try:
        args.func(args)
    except (ConfigError, ArgumentError) as exc:
        print(f"rollrecon {args.command}: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        print(f"rollrecon {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
