"""Orthonormal 2-D DCT, the diagonal high-pass mask and the HF extractor.

The transforms are applied separably as ``C_h @ x @ C_w.T`` on the two
trailing axes, so any leading channel/batch axes are handled for free.
With orthonormal bases the masked projection ``idct2(dct2(x) * mask)`` is
symmetric, which makes it its own adjoint.
"""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import DimensionError, ParameterError
from .tensor import Tensor, as_tensor, linear_map2d, mul


def dct_matrix(n: int) -> np.ndarray:
    """Orthonormal DCT-II basis, rows indexed by frequency."""
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    m = np.cos(np.pi * (2 * i + 1) * k / (2 * n)) * np.sqrt(2.0 / n)
    m[0] /= np.sqrt(2.0)
    return m


@dataclass(frozen=True)
class DctPlan:
    h: int
    w: int
    basis_h: np.ndarray = field(repr=False)
    basis_w: np.ndarray = field(repr=False)


@lru_cache(maxsize=64)
def make_plan(h: int, w: int) -> DctPlan:
    if h < 1 or w < 1:
        raise DimensionError("DCT plan extents must be positive", ">=1", (h, w))
    bh, bw = dct_matrix(h), dct_matrix(w)
    bh.setflags(write=False)
    bw.setflags(write=False)
    return DctPlan(h, w, bh, bw)


def _check(plan: DctPlan, x: Tensor):
    if x.ndim < 2 or x.shape[-2:] != (plan.h, plan.w):
        raise DimensionError("spatial extents do not match the DCT plan", (plan.h, plan.w),
                             x.shape[-2:])


def dct2(plan: DctPlan, x) -> Tensor:
    x = as_tensor(x)
    _check(plan, x)
    return linear_map2d(x, plan.basis_h, plan.basis_w)


def idct2(plan: DctPlan, d) -> Tensor:
    d = as_tensor(d)
    _check(plan, d)
    return linear_map2d(d, plan.basis_h.T, plan.basis_w.T)


@dataclass(frozen=True)
class SpectralMask:
    h: int
    w: int
    lam: float
    bits: np.ndarray = field(repr=False)


@lru_cache(maxsize=256)
def build_mask(h: int, w: int, lam: float) -> SpectralMask:
    """Zero the coefficient at column x, row y iff ``y < -x + 2*lam*h``."""
    if not 0.0 <= lam <= 1.0:
        raise ParameterError(f"lambda must lie in [0, 1], got {lam}")
    if h < 1 or w < 1:
        raise DimensionError("mask extents must be positive", ">=1", (h, w))
    y = np.arange(h)[:, None]
    x = np.arange(w)[None, :]
    bits = np.where(y < -x + 2 * lam * h, 0.0, 1.0)
    bits.setflags(write=False)
    return SpectralMask(h, w, float(lam), bits)


def hf_extract(x, lam: float) -> Tensor:
    """Keep only the DCT coefficients above the diagonal cutoff, back in space."""
    x = as_tensor(x)
    if x.ndim < 2:
        raise DimensionError("hf_extract needs at least two spatial axes", ">=2", x.ndim)
    h, w = x.shape[-2:]
    plan = make_plan(h, w)
    mask = build_mask(h, w, float(lam))
    return idct2(plan, mul(dct2(plan, x), Tensor(mask.bits)))
