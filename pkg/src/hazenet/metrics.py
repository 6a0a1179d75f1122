"""Image-quality and gaze metrics."""

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DimensionError, ParameterError
from .gaze import angles_to_vector

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03


def _arr(x):
    return np.asarray(getattr(x, "data", x), dtype=np.float64)


def psnr(a, b, max_val: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; ``inf`` when the images are identical."""
    a, b = _arr(a), _arr(b)
    if a.shape != b.shape:
        raise DimensionError("psnr operands", a.shape, b.shape)
    mse = np.mean((a - b) ** 2)
    if mse == 0:
        return math.inf
    return 10.0 * math.log10(max_val ** 2 / mse)


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r ** 2) / (2 * sigma ** 2))
    w = np.outer(g, g)
    return w / w.sum()


def luminance(img) -> np.ndarray:
    img = _arr(img)
    if img.ndim == 3:
        return img.mean(axis=0)
    if img.ndim == 2:
        return img
    raise DimensionError("ssim expects [3, H, W] or [H, W]", "2 or 3 dims", img.ndim)


def ssim(a, b, data_range: float = 1.0) -> float:
    """Single-scale SSIM on the channel-mean luminance, averaged over valid windows."""
    a, b = luminance(a), luminance(b)
    if a.shape != b.shape:
        raise DimensionError("ssim operands", a.shape, b.shape)
    if min(a.shape) < SSIM_WINDOW:
        raise ParameterError(f"image {a.shape} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} window")
    win = gaussian_window()
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2

    def filt(x):
        return np.tensordot(sliding_window_view(x, win.shape), win, axes=([2, 3], [0, 1]))

    mu_a, mu_b = filt(a), filt(b)
    var_a = filt(a * a) - mu_a * mu_a
    var_b = filt(b * b) - mu_b * mu_b
    cov = filt(a * b) - mu_a * mu_b
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


def angular_error(pred, gt) -> float:
    """Angle in degrees between the gaze vectors of two (pitch, yaw) pairs."""
    cos = float(np.dot(angles_to_vector(pred), angles_to_vector(gt)))
    return math.degrees(math.acos(min(1.0, max(-1.0, cos))))


def mean_angular_error(pred: np.ndarray, gt: np.ndarray) -> float:
    pred, gt = np.asarray(pred), np.asarray(gt)
    return float(np.mean([angular_error(p, g) for p, g in zip(pred, gt)]))
