"""High-frequency attentive super-resolution network.

Pipeline: bicubic pre-upsampling -> head conv (f_b) -> down block(s) (f_d)
-> chain of HFABs -> up block(s) -> concat with f_b -> tail conv.
"""

from dataclasses import asdict, dataclass

import numpy as np

from . import blocks
from .errors import DimensionError, ParameterError
from .resize import resize_matrix
from .spectral import hf_extract
from .tensor import Tensor, as_tensor, linear_map2d, no_grad

HF_MODES = ("per_block", "global", "off")


@dataclass(frozen=True)
class SrConfig:
    scale: int = 4
    channels: int = 16
    num_hfab: int = 2
    lam: float = 0.2
    hr_size: tuple = (32, 32)
    reduction: int = 4
    hf_mode: str = "per_block"

    def __post_init__(self):
        object.__setattr__(self, "hr_size", tuple(int(v) for v in self.hr_size))
        if self.scale not in (2, 3, 4):
            raise ParameterError(f"scale must be 2, 3 or 4, got {self.scale}")
        if self.num_hfab < 1 or self.channels < 4:
            raise ParameterError("need num_hfab >= 1 and channels >= 4")
        if not 0.0 <= self.lam <= 1.0:
            raise ParameterError(f"lambda must lie in [0, 1], got {self.lam}")
        if self.hf_mode not in HF_MODES:
            raise ParameterError(f"hf_mode must be one of {HF_MODES}")
        if any(v % self.scale for v in self.hr_size):
            raise DimensionError("hr_size must be divisible by scale", self.scale, self.hr_size)
        if self.channels % self.reduction:
            raise ParameterError(f"channels {self.channels} not divisible by reduction {self.reduction}")

    @property
    def lr_size(self):
        return tuple(v // self.scale for v in self.hr_size)

    @property
    def stages(self):
        """Stride of each down block; up blocks mirror them in reverse."""
        return {2: (2,), 3: (3,), 4: (2, 2)}[self.scale]

    @classmethod
    def full_scale(cls, scale=4, **kw):
        kw.setdefault("channels", 64)
        kw.setdefault("num_hfab", 4)
        kw.setdefault("reduction", 16)
        return cls(scale=scale, hr_size=(112, 112) if scale != 3 else (111, 111), **kw)

    def to_dict(self):
        d = asdict(self)
        d["hr_size"] = list(self.hr_size)
        return d


def init_sr(cfg: SrConfig, seed: int) -> dict:
    rng = np.random.default_rng(seed)
    f = cfg.channels
    return {
        "head": blocks.init_conv(rng, 3, f),
        "down": [blocks.init_down(rng, f, f) for _ in cfg.stages],
        "hfab": [blocks.init_hfab(rng, f, cfg.reduction) for _ in range(cfg.num_hfab)],
        "up": [blocks.init_up(rng, f, s) for s in reversed(cfg.stages)],
        "tail": blocks.init_conv(rng, 2 * f, 3),
    }


def sr_forward(lr, params: dict, cfg: SrConfig, clamp: bool = False) -> Tensor:
    """Super-resolve ``lr`` ([3,h,w] or [N,3,h,w]) by ``cfg.scale``.

    ``clamp`` is the inference-time presentation step; training uses raw output.
    """
    lr = as_tensor(lr)
    if lr.shape[-3:] != (3,) + cfg.lr_size:
        raise DimensionError("sr_forward input shape", (3,) + cfg.lr_size, lr.shape[-3:])
    h, w = cfg.lr_size
    up = linear_map2d(lr, resize_matrix(h, h * cfg.scale, float(cfg.scale)),
                      resize_matrix(w, w * cfg.scale, float(cfg.scale)))
    f_b = blocks.conv(up, params["head"])
    z = f_b
    for p, s in zip(params["down"], cfg.stages):
        z = blocks.down_block(z, p, s)
    f_d = z
    if cfg.hf_mode == "global":
        hf = hf_extract(f_d, cfg.lam)
    elif cfg.hf_mode == "off":
        hf = Tensor(np.zeros(f_d.shape))
    for p in params["hfab"]:
        z = blocks.hfab_forward(z, p, cfg.lam, None if cfg.hf_mode == "per_block" else hf)
    for p, s in zip(params["up"], reversed(cfg.stages)):
        z = blocks.up_block(z, p, s)
    out = blocks.conv(blocks.channel_concat(z, f_b), params["tail"])
    if clamp:
        out = Tensor(np.clip(out.data, 0.0, 1.0))
    return out


def super_resolve(lr, params: dict, cfg: SrConfig, batch: int = 16) -> np.ndarray:
    """Clamped SR output as a plain array, evaluated without recording."""
    lr = np.asarray(getattr(lr, "data", lr))
    single = lr.ndim == 3
    lr = lr[None] if single else lr
    with no_grad():
        out = np.concatenate([sr_forward(lr[i:i + batch], params, cfg, clamp=True).data
                              for i in range(0, len(lr), batch)])
    return out[0] if single else out

