"""Five-branch global/local gaze estimator.

Branch inputs: the high-frequency map of the whole face, the high-frequency
maps of both eye patches, and the two raw RGB eye patches.  Each branch has
its own small strided-conv backbone ending in global average pooling; the
pooled features and the ten landmark scalars feed a two-layer FC head that
regresses (pitch, yaw) in radians.
"""

import math
from dataclasses import asdict, dataclass

import numpy as np

from . import blocks
from .errors import DimensionError, ParameterError
from .spectral import hf_extract
from .tensor import Tensor, as_tensor, concat, crop, global_avg_pool, leaky_relu, matmul_fc, no_grad, reshape

BRANCHES = ("global", "local_left", "local_right", "patch_left", "patch_right")
LANDMARK_NAMES = ("left_eye", "right_eye", "nose", "mouth_left", "mouth_right")


@dataclass(frozen=True)
class GazeAngles:
    theta: float
    phi: float

    def to_vector(self) -> np.ndarray:
        return angles_to_vector(self)


def angles_to_vector(g) -> np.ndarray:
    """Unit gaze vector for pitch ``theta`` and yaw ``phi``."""
    theta, phi = (g.theta, g.phi) if isinstance(g, GazeAngles) else g
    ct = math.cos(theta)
    return np.array([-ct * math.sin(phi), -math.sin(theta), -ct * math.cos(phi)])


@dataclass(frozen=True)
class Landmarks:
    """Five (x, y) points in normalised image coordinates, x to the right, y down."""

    points: tuple

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.shape != (5, 2):
            raise DimensionError("landmarks need five (x, y) points", (5, 2), pts.shape)
        if np.any(pts < 0) or np.any(pts > 1):
            raise ParameterError("landmark coordinates must lie in [0, 1]")
        object.__setattr__(self, "points", tuple(map(tuple, pts.tolist())))

    @property
    def left_eye(self):
        return self.points[0]

    @property
    def right_eye(self):
        return self.points[1]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.points, dtype=np.float64)


@dataclass(frozen=True)
class GazeConfig:
    image_size: tuple = (32, 32)
    widths: tuple = (8, 16, 32)
    hidden: int = 64
    patch_frac: float = 0.25
    lam: float = 0.2

    def __post_init__(self):
        object.__setattr__(self, "image_size", tuple(int(v) for v in self.image_size))
        object.__setattr__(self, "widths", tuple(int(v) for v in self.widths))
        if not self.widths or self.hidden < 1:
            raise ParameterError("gaze backbone needs at least one stage and a positive head width")
        if self.patch_size < 2:
            raise ParameterError(f"eye patch of {self.patch_size} px is too small")

    @property
    def patch_size(self) -> int:
        return patch_size(self.image_size[0], self.patch_frac)

    @property
    def feature_width(self) -> int:
        return self.widths[-1]

    @classmethod
    def full_scale(cls, **kw):
        kw.setdefault("image_size", (112, 112))
        kw.setdefault("widths", (64, 128, 256, 512))
        kw.setdefault("hidden", 512)
        return cls(**kw)

    def to_dict(self):
        d = asdict(self)
        d["image_size"] = list(self.image_size)
        d["widths"] = list(self.widths)
        return d


def patch_size(height: int, patch_frac: float) -> int:
    return int(math.floor(patch_frac * height + 0.5))


def init_backbone(rng, widths) -> list:
    chans = (3,) + tuple(widths)
    return [blocks.init_conv(rng, a, b) for a, b in zip(chans[:-1], chans[1:])]


def backbone_forward(x: Tensor, p: list) -> Tensor:
    for stage in p:
        x = leaky_relu(blocks.conv(x, stage, stride=2), blocks.LEAKY_SLOPE)
    pooled = global_avg_pool(x)
    return reshape(pooled, pooled.shape[:-2])


def init_gaze(cfg: GazeConfig, seed: int) -> dict:
    rng = np.random.default_rng(seed)
    return {
        "branches": {name: init_backbone(rng, cfg.widths) for name in BRANCHES},
        "fc1": blocks.init_linear(rng, 5 * cfg.feature_width + 10, cfg.hidden),
        "fc2": blocks.init_linear(rng, cfg.hidden, 2),
    }


def patch_offsets(center, height: int, width: int, p: int):
    """Top-left corner of the p x p crop centred on a normalised point, clamped inside."""
    if p < 2:
        raise ParameterError(f"eye patch of {p} px is too small")
    if p > min(height, width):
        raise DimensionError("eye patch larger than image", f"<= {min(height, width)}", p)
    cx, cy = center[0] * width, center[1] * height
    top = min(max(int(math.floor(cy - p / 2 + 0.5)), 0), height - p)
    left = min(max(int(math.floor(cx - p / 2 + 0.5)), 0), width - p)
    return top, left


def extract_eye_patches(img, lm: Landmarks, patch_frac: float = 0.25):
    """Left and right eye crops of a single [3, H, W] image."""
    img = as_tensor(img)
    h, w = img.shape[-2:]
    p = patch_size(h, patch_frac)
    patches = []
    for eye in (lm.left_eye, lm.right_eye):
        top, left = patch_offsets(eye, h, w, p)
        patches.append(crop(img, top, left, p))
    return tuple(patches)


def build_global_map(img, lam: float) -> Tensor:
    return hf_extract(img, lam)


def build_local_maps(patches, lam: float):
    return tuple(hf_extract(p, lam) for p in patches)


def _batched_patches(imgs: Tensor, lms: np.ndarray, p: int):
    h, w = imgs.shape[-2:]
    out = []
    for eye in (0, 1):
        offs = [patch_offsets(lm[eye], h, w, p) for lm in lms]
        out.append(crop(imgs, [o[0] for o in offs], [o[1] for o in offs], p))
    return out


def _landmark_array(lms, n):
    if isinstance(lms, Landmarks):
        lms = [lms]
    arr = np.stack([l.as_array() if isinstance(l, Landmarks) else np.asarray(l, dtype=np.float64)
                    for l in lms])
    if arr.shape != (n, 5, 2):
        raise DimensionError("one landmark set per image", (n, 5, 2), arr.shape)
    return arr


def gaze_predict(imgs, lms, params: dict, cfg: GazeConfig) -> Tensor:
    """Batched forward: [N, 3, H, W] images and N landmark sets -> [N, 2] angles."""
    imgs = as_tensor(imgs)
    if imgs.ndim == 3:
        imgs = reshape(imgs, (1,) + imgs.shape)
    if imgs.shape[1:] != (3,) + cfg.image_size:
        raise DimensionError("gaze input shape", (3,) + cfg.image_size, imgs.shape[1:])
    n = imgs.shape[0]
    lm_arr = _landmark_array(lms, n)
    left, right = _batched_patches(imgs, lm_arr, cfg.patch_size)
    local_left, local_right = build_local_maps((left, right), cfg.lam)
    inputs = {
        "global": build_global_map(imgs, cfg.lam),
        "local_left": local_left,
        "local_right": local_right,
        "patch_left": left,
        "patch_right": right,
    }
    br = params["branches"]
    feats = [backbone_forward(inputs[name], br[name]) for name in BRANCHES]
    feats.append(Tensor(lm_arr.reshape(n, 10)))
    z = concat(feats, axis=1)
    z = leaky_relu(matmul_fc(z, params["fc1"]["w"], params["fc1"]["b"]), blocks.LEAKY_SLOPE)
    return matmul_fc(z, params["fc2"]["w"], params["fc2"]["b"])


def gaze_forward(img, lm: Landmarks, params: dict, cfg: GazeConfig) -> GazeAngles:
    with no_grad():
        out = gaze_predict(img, [lm], params, cfg).data[0]
    return GazeAngles(float(out[0]), float(out[1]))


def predict_angles(imgs, lms, params: dict, cfg: GazeConfig, batch: int = 32) -> np.ndarray:
    """[N, 2] predictions as a plain array, evaluated without recording."""
    imgs = np.asarray(getattr(imgs, "data", imgs))
    lms = _landmark_array(lms, len(imgs))
    with no_grad():
        return np.concatenate([gaze_predict(imgs[i:i + batch], lms[i:i + batch], params, cfg).data
                               for i in range(0, len(imgs), batch)])
