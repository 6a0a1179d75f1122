"""Procedural face cards with analytically known gaze.

Each card is a skin-toned rectangle on a plain background with two
elliptical sclerae, iris discs, a nose mark and a mouth bar.  The iris centre
in each eye sits at the eye landmark displaced by ``k*tan(phi)`` to the right
and ``k*tan(theta)`` downwards, ``k = 0.3 * eye_radius / tan(0.6)``, so the
label can be read back from the image geometry.  Shapes are rendered with
4x4 supersampling so sub-pixel iris shifts change pixel values smoothly.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .gaze import GazeAngles, Landmarks
from .resize import bicubic_resize

MAX_ANGLE = 0.6
LANDMARK_FRACTIONS = ((0.33, 0.40), (0.67, 0.40), (0.50, 0.60), (0.38, 0.78), (0.62, 0.78))
FACE_BOX = (0.12, 0.08, 0.88, 0.96)  # x0, y0, x1, y1
EYE_RADIUS_FRAC = 0.12  # sclera horizontal semi-axis, fraction of width
SCLERA_ASPECT = 0.6
IRIS_RADIUS_FRAC = 0.055
NOISE_SIGMA = 0.01
SUPERSAMPLE = 4


@dataclass
class FaceSample:
    hr: np.ndarray
    lr: np.ndarray
    landmarks: Landmarks
    gaze: GazeAngles
    id: int


@dataclass(frozen=True)
class Appearance:
    background: np.ndarray
    skin: np.ndarray
    iris: np.ndarray
    features: np.ndarray


def appearance_for(identity: int) -> Appearance:
    rng = np.random.default_rng([7919, identity])
    skin = np.array([0.85, 0.66, 0.52]) + rng.uniform(-0.12, 0.12) + rng.uniform(-0.04, 0.04, 3)
    return Appearance(
        background=np.full(3, rng.uniform(0.15, 0.45)) + rng.uniform(-0.05, 0.05, 3),
        skin=np.clip(skin, 0.3, 0.95),
        iris=np.clip(np.array([0.25, 0.16, 0.1]) * rng.uniform(0.4, 1.6) + rng.uniform(0, 0.12, 3), 0, 1),
        features=np.clip(np.array([0.55, 0.3, 0.28]) + rng.uniform(-0.1, 0.1, 3), 0, 1),
    )


def gain(width: int) -> float:
    return 0.3 * EYE_RADIUS_FRAC * width / math.tan(MAX_ANGLE)


def default_landmarks() -> Landmarks:
    return Landmarks(LANDMARK_FRACTIONS)


def iris_centers(gaze: GazeAngles, size):
    """Pixel-space (x, y) iris centres, left eye first."""
    h, w = size
    k = gain(w)
    dx, dy = k * math.tan(gaze.phi), k * math.tan(gaze.theta)
    return [(fx * w + dx, fy * h + dy) for fx, fy in LANDMARK_FRACTIONS[:2]]


def _grid(size):
    h, w = size
    s = SUPERSAMPLE
    ys = (np.arange(h * s) + 0.5) / s
    xs = (np.arange(w * s) + 0.5) / s
    return np.meshgrid(xs, ys)


def _coverage(mask, size):
    h, w = size
    s = SUPERSAMPLE
    return mask.reshape(h, s, w, s).mean(axis=(1, 3))


def _ellipse(x, y, cx, cy, rx, ry):
    return ((x - cx) / rx) ** 2 + ((y - cy) / ry) ** 2 <= 1.0


def iris_coverage(gaze: GazeAngles, size) -> np.ndarray:
    """Fractional per-pixel coverage of both iris discs."""
    h, w = size
    x, y = _grid(size)
    r = IRIS_RADIUS_FRAC * w
    mask = np.zeros_like(x, dtype=bool)
    for cx, cy in iris_centers(gaze, size):
        mask |= _ellipse(x, y, cx, cy, r, r)
    return _coverage(mask.astype(np.float64), size)


def render_face(gaze: GazeAngles, identity: int, size) -> np.ndarray:
    """Noise-free [3, H, W] card in [0, 1]."""
    h, w = size
    look = appearance_for(identity)
    x, y = _grid(size)
    img = np.empty((3, h, w))
    img[:] = look.background[:, None, None]

    def paint(mask, color):
        a = _coverage(mask.astype(np.float64), size)
        img[:] = img * (1 - a) + np.asarray(color)[:, None, None] * a

    x0, y0, x1, y1 = FACE_BOX
    paint((x >= x0 * w) & (x <= x1 * w) & (y >= y0 * h) & (y <= y1 * h), look.skin)
    rx = EYE_RADIUS_FRAC * w
    for fx, fy in LANDMARK_FRACTIONS[:2]:
        paint(_ellipse(x, y, fx * w, fy * h, rx, rx * SCLERA_ASPECT), (0.96, 0.95, 0.93))
    ir = IRIS_RADIUS_FRAC * w
    for cx, cy in iris_centers(gaze, size):
        paint(_ellipse(x, y, cx, cy, ir, ir), look.iris)
    nx, ny = LANDMARK_FRACTIONS[2]
    paint(_ellipse(x, y, nx * w, ny * h, 0.045 * w, 0.06 * h), look.features * 0.8)
    (mlx, mly), (mrx, mry) = LANDMARK_FRACTIONS[3:]
    paint((x >= mlx * w) & (x <= mrx * w) & (np.abs(y - mly * h) <= 0.025 * h + 0.5), look.features)
    for mx, my in LANDMARK_FRACTIONS[3:]:
        paint(_ellipse(x, y, mx * w, my * h, 0.03 * w, 0.03 * h), look.features * 0.7)
    return img


def synth_sample(gaze: GazeAngles, id: int, size=(32, 32), seed: int = 0, scale: int = 4,
                 noise: float = NOISE_SIGMA) -> FaceSample:
    if abs(gaze.theta) > MAX_ANGLE or abs(gaze.phi) > MAX_ANGLE:
        raise ParameterError(f"gaze angles must lie within +-{MAX_ANGLE} rad, got {gaze}")
    h, w = size
    if h < 16 or w < 16:
        raise ParameterError(f"image must be at least 16x16, got {size}")
    hr = render_face(gaze, id, size)
    if noise:
        hr = hr + np.random.default_rng(seed).normal(0.0, noise, hr.shape)
    hr = np.clip(hr, 0.0, 1.0)
    lr = bicubic_resize(hr, 1.0 / scale)
    return FaceSample(hr=hr, lr=lr, landmarks=default_landmarks(), gaze=gaze, id=id)


def generate_dataset(n: int, identities, size=(32, 32), scale: int = 4, seed: int = 0,
                     max_angle: float = 0.5, noise: float = NOISE_SIGMA):
    """``n`` samples cycling over ``identities`` with seeded uniform gaze labels."""
    identities = list(identities)
    if n < 1 or not identities:
        raise ParameterError("need at least one sample and one identity")
    samples = []
    for i in range(n):
        rng = np.random.default_rng([seed, i])
        theta, phi = rng.uniform(-max_angle, max_angle, 2)
        samples.append(synth_sample(GazeAngles(float(theta), float(phi)), identities[i % len(identities)],
                                    size, int(rng.integers(2 ** 31)), scale, noise))
    return samples


def split_identities(n_identities: int, n_val: int, seed: int):
    """Disjoint (train, validation) identity lists, reproducible from ``seed``."""
    if not 0 < n_val < n_identities:
        raise ParameterError("validation must take some but not all identities")
    perm = np.random.default_rng([seed, 104729]).permutation(n_identities)
    return sorted(perm[n_val:].tolist()), sorted(perm[:n_val].tolist())


def stack(samples):
    """Arrays (hr [N,3,H,W], lr [N,3,h,w], landmarks [N,5,2], gaze [N,2])."""
    return (np.stack([s.hr for s in samples]),
            np.stack([s.lr for s in samples]),
            np.stack([s.landmarks.as_array() for s in samples]),
            np.array([[s.gaze.theta, s.gaze.phi] for s in samples]))
