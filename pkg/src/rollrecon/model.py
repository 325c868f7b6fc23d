"""Unrolled multi-scale autoregressive reconstruction network.

Each cascade maps the previous estimate ``f_0`` through PD-SSM modules at
scales ``s = 1..S``. Module ``s`` sees the channel concatenation of every
earlier output ``f_<s``, encodes it down to resolution ``H / 2^(S-s)`` with
``2^(S-s) C`` channels, runs the compressed SSM block, decodes back to a
``P``-channel full-resolution image ``u_s`` and emits ``[u_s, DC(u_s)]``. A
two-convolution refinement module turns ``f_S`` into the cascade output.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError
from .physics import ImagingOperator, dc_step
from .ssmcore import SCAN_METHODS, SCAN_ORDERS, SSMParams, compressed_ssm_block, init_ssm_params
from .tensorgrad import Tape, Tensor, concat, conv2d, silu, vdot

SSM_KEYS = ("ssm.A", "ssm.B", "ssm.C")


@dataclass
class ModelConfig:
    S: int = 3
    K: int = 5
    C: int = 32
    J: int = 4
    D: int = 16
    P: int = 2
    scan_order: str = "raster"
    scan_method: str = "seq"
    no_ar: bool = False
    no_ssm: bool = False
    no_dc: bool = False
    no_pdssm: bool = False
    share_cascades: bool = False

    def __post_init__(self):
        for name in ("S", "K", "C", "J", "D", "P"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.scan_order not in SCAN_ORDERS:
            raise ConfigError(f"unknown scan order {self.scan_order!r}")
        if self.scan_method not in SCAN_METHODS:
            raise ConfigError(f"unknown scan method {self.scan_method!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ConfigError(f"unknown model config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "ModelConfig":
        return dataclasses.replace(self, **changes)

    def scales(self) -> list[int]:
        """Scale indices executed inside one cascade."""
        if self.no_pdssm:
            return []
        if self.no_ar:
            return [self.S]
        return list(range(1, self.S + 1))

    def factor(self, s: int) -> int:
        return 2 ** (self.S - s)

    def channels(self, s: int) -> int:
        return self.factor(s) * self.C

    def in_channels(self, position: int) -> int:
        """Channels of ``f_<s`` for the module at ``position`` (0-based) in the chain."""
        return self.P * (2 * position + 1)

    def check_resolution(self, height: int, width: int) -> None:
        for s in self.scales():
            f = self.factor(s)
            if height % f or width % f:
                raise ConfigError(f"{height}x{width} is not divisible by 2^(S-s)={f} at scale {s}")
            hs, ws = height // f, width // f
            if not self.no_ssm and (hs % self.J or ws % self.J):
                raise ConfigError(f"scale {s} grid {hs}x{ws} is not divisible by J={self.J}")


def weight_shapes(cfg: ModelConfig) -> dict[str, tuple]:
    """Every parameter key with its dims; derived from the config alone."""
    shapes: dict[str, tuple] = {}
    n_cascades = 1 if cfg.share_cascades else cfg.K
    for k in range(1, n_cascades + 1):
        for pos, s in enumerate(cfg.scales()):
            pre = f"cascade{k}/scale{s}/"
            cs = cfg.channels(s)
            layers = {
                "enc1": (cfg.in_channels(pos), cs),
                "enc_down": (cs, cs),
                "dec_up": (cs, cfg.C),
                "dec2": (cfg.C, cfg.P),
            }
            for name, (cin, cout) in layers.items():
                shapes[pre + name + ".kernel"] = (3, 3, cin, cout)
                shapes[pre + name + ".bias"] = (cout,)
            if not cfg.no_ssm:
                shapes[pre + "ssm.A"] = (cfg.D, cfg.D)
                shapes[pre + "ssm.B"] = (cfg.D, 1)
                shapes[pre + "ssm.C"] = (1, cfg.D)
        refine_in = cfg.P if cfg.no_pdssm else 2 * cfg.P
        for name, (cin, cout) in {"refine1": (refine_in, cfg.C), "refine2": (cfg.C, cfg.P)}.items():
            shapes[f"cascade{k}/{name}.kernel"] = (3, 3, cin, cout)
            shapes[f"cascade{k}/{name}.bias"] = (cout,)
    return shapes


def init_weights(cfg: ModelConfig, seed: int = 0, dtype=np.float32) -> dict[str, Tensor]:
    """Kernels ~ U(+-1/sqrt(9 Cin)), zero biases, stable diagonal SSM state matrices."""
    rng = np.random.default_rng(seed)
    weights: dict[str, Tensor] = {}
    shapes = weight_shapes(cfg)
    for key, dims in shapes.items():
        if key.endswith("ssm.A"):
            p = init_ssm_params(cfg.D, rng, dtype)
            stem = key[: -len("ssm.A")]
            weights[stem + "ssm.A"], weights[stem + "ssm.B"], weights[stem + "ssm.C"] = p.A, p.B, p.C
        elif key.endswith(("ssm.B", "ssm.C")):
            continue
        elif key.endswith(".kernel"):
            bound = 1.0 / np.sqrt(9 * dims[2])
            weights[key] = Tensor(rng.uniform(-bound, bound, dims).astype(dtype), requires_grad=True)
        else:
            weights[key] = Tensor(np.zeros(dims, dtype=dtype), requires_grad=True)
    return {key: weights[key] for key in shapes}


def frozen(weights: dict[str, Tensor]) -> dict[str, Tensor]:
    """Copies that share data but never collect gradients."""
    return {k: Tensor(v.data) for k, v in weights.items()}


def _cascade_prefix(cfg: ModelConfig, k: int) -> str:
    return "cascade1/" if cfg.share_cascades else f"cascade{k}/"


def _conv(x, w, name, stride=1, mode="same"):
    return conv2d(x, w[name + ".kernel"], w[name + ".bias"], stride, mode)


def encode_scale(f_prev: Tensor, s: int, weights: dict, cfg: ModelConfig, k: int = 1) -> Tensor:
    """``silu(Conv_down(silu(Conv(f_<s))))`` at resolution ``H / 2^(S-s)``."""
    pre = f"{_cascade_prefix(cfg, k)}scale{s}/"
    h, w = f_prev.dims[-3], f_prev.dims[-2]
    stride = cfg.factor(s)
    if h % stride or w % stride:
        raise ConfigError(f"{h}x{w} input is not divisible by 2^(S-s)={stride}")
    x = silu(_conv(f_prev, weights, pre + "enc1"))
    return silu(_conv(x, weights, pre + "enc_down", stride, "down" if stride > 1 else "same"))


def decode_scale(g: Tensor, s: int, weights: dict, cfg: ModelConfig, k: int = 1) -> Tensor:
    """``Conv(silu(Conv_up(g_s)))`` back to a full-resolution ``P``-channel image."""
    pre = f"{_cascade_prefix(cfg, k)}scale{s}/"
    stride = cfg.factor(s)
    x = silu(_conv(g, weights, pre + "dec_up", stride, "up" if stride > 1 else "same"))
    return _conv(x, weights, pre + "dec2")


def ssm_params(weights: dict, cfg: ModelConfig, s: int, k: int = 1) -> SSMParams:
    pre = f"{_cascade_prefix(cfg, k)}scale{s}/"
    return SSMParams(*(weights[pre + name] for name in SSM_KEYS))


@dataclass
class ScaleOutput:
    scale: int
    d: Tensor
    g: Tensor
    u: Tensor
    u_dc: Tensor
    f: Tensor


def pdssm_forward(f_prev: Tensor, s: int, y, op: ImagingOperator, weights: dict,
                  cfg: ModelConfig, k: int = 1) -> ScaleOutput:
    d = encode_scale(f_prev, s, weights, cfg, k)
    if cfg.no_ssm:
        g = d
    else:
        g = compressed_ssm_block(d, ssm_params(weights, cfg, s, k), cfg.J,
                                 cfg.scan_order, cfg.scan_method)
    u = decode_scale(g, s, weights, cfg, k)
    u_dc = u if cfg.no_dc else dc_step(u, y, op)
    return ScaleOutput(s, d, g, u, u_dc, concat([u, u_dc]))


def refine(f: Tensor, weights: dict, cfg: ModelConfig, k: int = 1) -> Tensor:
    pre = _cascade_prefix(cfg, k)
    return _conv(silu(_conv(f, weights, pre + "refine1")), weights, pre + "refine2")


def cascade_forward(x_prev: Tensor, k: int, y, op: ImagingOperator, weights: dict,
                    cfg: ModelConfig) -> tuple[Tensor, list[ScaleOutput]]:
    feats = [x_prev]
    outs: list[ScaleOutput] = []
    for s in cfg.scales():
        f_prev = feats[0] if len(feats) == 1 else concat(feats)
        out = pdssm_forward(f_prev, s, y, op, weights, cfg, k)
        outs.append(out)
        feats.append(out.f)
    return refine(feats[-1], weights, cfg, k), outs


@dataclass
class NetworkOutput:
    x_hat: Tensor
    scales: list[ScaleOutput] = field(default_factory=list)
    cascades: list[Tensor] = field(default_factory=list)

    @property
    def u(self) -> list[Tensor]:
        return [o.u for o in self.scales]

    @property
    def u_dc(self) -> list[Tensor]:
        return [o.u_dc for o in self.scales]

    @property
    def g(self) -> list[Tensor]:
        return [o.g for o in self.scales]


def network_forward(x0, y, op: ImagingOperator, weights: dict, cfg: ModelConfig) -> NetworkOutput:
    """Chain ``K`` cascades from the linear reconstruction ``x0``.

    Per-scale intermediates of the final cascade are kept for deep supervision.
    """
    if not isinstance(x0, Tensor):
        x0 = Tensor(x0)
    if x0.dims[-1] != cfg.P:
        raise ConfigError(f"input has {x0.dims[-1]} channels, model expects P={cfg.P}")
    cfg.check_resolution(x0.dims[-3], x0.dims[-2])
    x = x0
    history = []
    outs: list[ScaleOutput] = []
    for k in range(1, cfg.K + 1):
        x, outs = cascade_forward(x, k, y, op, weights, cfg)
        history.append(x)
    return NetworkOutput(x, outs, history)


def reconstruct(x0: np.ndarray, y: np.ndarray, op: ImagingOperator, weights: dict,
                cfg: ModelConfig) -> np.ndarray:
    """Inference without recording gradients."""
    return network_forward(Tensor(x0), y, op, weights, cfg).x_hat.data


def input_gradient_map(fn, x0: np.ndarray, center: Optional[tuple] = None) -> np.ndarray:
    """Normalized |d |fn(x0)[center]| / d x0| summed over channels.

    ``fn`` maps an ``H x W x P`` Tensor to an ``H x W x P`` Tensor.
    """
    h, w = x0.shape[-3], x0.shape[-2]
    if center is None:
        center = (h // 2, w // 2)
    x = Tensor(np.array(x0), requires_grad=True)
    with Tape() as tape:
        out = fn(x)
        pix = out.data[center[0], center[1]]
        mag = float(np.sqrt(np.sum(pix.astype(np.float64) ** 2)))
        seed = np.zeros(out.dims, dtype=out.dtype)
        seed[center[0], center[1]] = pix / mag if mag > 0 else 1.0 / np.sqrt(pix.size)
        target = vdot(out, seed)
    tape.backward(target)
    grad = np.sum(np.abs(x.grad.astype(np.float64)), axis=-1)
    peak = grad.max()
    return grad / peak if peak > 0 else grad


def erf_map(weights: dict, cfg: ModelConfig, sample, op: ImagingOperator) -> np.ndarray:
    """Effective receptive field of the centre output pixel's magnitude.

    Gradients are taken with respect to the linear reconstruction
    ``sample.x0``; the measurements ``sample.y`` are held fixed.
    """
    w = frozen(weights)
    x0 = np.asarray(sample.x0)
    y = np.asarray(sample.y, dtype=x0.dtype)
    return input_gradient_map(lambda x: network_forward(x, y, op, w, cfg).x_hat, x0)


def erf_support(erf: np.ndarray, threshold: float = 0.01) -> int:
    return int(np.count_nonzero(erf > threshold))
