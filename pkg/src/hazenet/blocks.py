"""Network building blocks: channel attention, RCAB, HFAB, down/up blocks.

Parameters are plain nested dicts of Tensors (see ``params``).  Every block
works on a single ``[C, H, W]`` item or a batch ``[N, C, H, W]``.
"""

import numpy as np

from .errors import DimensionError, ParameterError
from .spectral import hf_extract
from .tensor import (Tensor, add, concat, conv2d, global_avg_pool, leaky_relu, mul,
                     pixel_shuffle, relu, sigmoid)

LEAKY_SLOPE = 0.2
N_HF_RCAB = 2
N_ORIG_RCAB = 5


def init_conv(rng: np.random.Generator, c_in: int, c_out: int, k: int = 3) -> dict:
    bound = np.sqrt(1.0 / (c_in * k * k))
    return {
        "w": Tensor(rng.uniform(-bound, bound, (c_out, c_in, k, k)), requires_grad=True),
        "b": Tensor(rng.uniform(-bound, bound, c_out), requires_grad=True),
    }


def init_linear(rng: np.random.Generator, n_in: int, n_out: int) -> dict:
    bound = np.sqrt(1.0 / n_in)
    return {
        "w": Tensor(rng.uniform(-bound, bound, (n_out, n_in)), requires_grad=True),
        "b": Tensor(rng.uniform(-bound, bound, n_out), requires_grad=True),
    }


def conv(x, p, stride=1):
    k = p["w"].shape[-1]
    return conv2d(x, p["w"], p["b"], stride=stride, padding=k // 2)


def _channels(x):
    return x.shape[-3]


def init_ca(rng, channels: int, reduction: int) -> dict:
    if reduction < 1 or channels % reduction:
        raise ParameterError(f"{channels} channels not divisible by reduction ratio {reduction}")
    mid = channels // reduction
    return {"down": init_conv(rng, channels, mid, 1), "up": init_conv(rng, mid, channels, 1)}


def channel_attention(x: Tensor, p: dict) -> Tensor:
    """Scale each channel by a sigmoid gate computed from its global mean."""
    c = _channels(x)
    mid = p["down"]["w"].shape[0]
    if p["down"]["w"].shape[1] != c or mid == 0 or c % mid:
        raise ParameterError(f"attention parameters do not fit {c} channels")
    return mul(x, attention_gate(x, p))


def attention_gate(x: Tensor, p: dict) -> Tensor:
    z = global_avg_pool(x)
    return sigmoid(conv(relu(conv(z, p["down"])), p["up"]))


def init_rcab(rng, channels: int, reduction: int) -> dict:
    return {
        "conv1": init_conv(rng, channels, channels),
        "conv2": init_conv(rng, channels, channels),
        "ca": init_ca(rng, channels, reduction),
    }


def rcab_branch(x: Tensor, p: dict) -> Tensor:
    return channel_attention(conv(relu(conv(x, p["conv1"])), p["conv2"]), p["ca"])


def rcab_forward(x: Tensor, p: dict) -> Tensor:
    return add(x, rcab_branch(x, p))


def init_hfab(rng, channels: int, reduction: int) -> dict:
    return {
        "hf": [init_rcab(rng, channels, reduction) for _ in range(N_HF_RCAB)],
        "orig": [init_rcab(rng, channels, reduction) for _ in range(N_ORIG_RCAB)],
    }


def hfab_forward(x: Tensor, p: dict, lam: float, hf_input: Tensor = None) -> Tensor:
    """Sum of a 2-RCAB chain on the high-frequency map and a 5-RCAB chain on ``x``.

    ``hf_input`` overrides the extractor output (used by the global-extractor
    variant and by the HF-ablation check).
    """
    a = hf_extract(x, lam) if hf_input is None else hf_input
    for rp in p["hf"]:
        a = rcab_forward(a, rp)
    b = x
    for rp in p["orig"]:
        b = rcab_forward(b, rp)
    return add(b, a)


def init_down(rng, c_in: int, c_out: int) -> dict:
    return {"conv1": init_conv(rng, c_in, c_out), "conv2": init_conv(rng, c_out, c_out)}


def down_block(x: Tensor, p: dict, stride: int) -> Tensor:
    h, w = x.shape[-2:]
    if stride < 1 or h % stride or w % stride:
        raise DimensionError(f"down block stride {stride} does not divide extents", stride, (h, w))
    return conv(leaky_relu(conv(x, p["conv1"], stride), LEAKY_SLOPE), p["conv2"])


def init_up(rng, c_in: int, r: int, c_out: int = None) -> dict:
    c_out = c_in if c_out is None else c_out
    return {"conv1": init_conv(rng, c_in, c_in * r * r), "conv2": init_conv(rng, c_in, c_out)}


def up_block(x: Tensor, p: dict, r: int) -> Tensor:
    return conv(pixel_shuffle(conv(x, p["conv1"]), r), p["conv2"])


def channel_concat(a: Tensor, b: Tensor) -> Tensor:
    return concat([a, b], axis=-3)
