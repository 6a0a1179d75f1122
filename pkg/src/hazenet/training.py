"""Losses, Adam, per-module pretraining and the alternating two-phase schedule.

Phase 1 updates only the SR parameters under ``L_SR + alpha * L_GE`` while
gradients still flow through the frozen gaze network.  Phase 2 feeds the
frozen SR output to the gaze network and updates it under ``L_GE`` alone.
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from . import params as ptree
from .errors import DimensionError, NumericalError, ParameterError, UsageError
from .gaze import GazeConfig, gaze_predict, predict_angles
from .metrics import mean_angular_error, psnr, ssim
from .sr import SrConfig, sr_forward, super_resolve
from .synth import stack
from .tensor import Tensor, absolute, add, as_tensor, no_grad, scale, square, sub, tsum

log = logging.getLogger(__name__)

METRIC_COLUMNS = ["epoch", "phase", "l_sr", "l_ge", "psnr", "ssim", "angular_error_deg"]


# ---------------------------------------------------------------------------
# losses


def sr_loss(sr_out, hr) -> Tensor:
    """Batch-mean of the per-image L1 norm (sum over channels and pixels)."""
    sr_out, hr = as_tensor(sr_out), as_tensor(hr)
    if sr_out.shape != hr.shape:
        raise DimensionError("sr_loss operands", hr.shape, sr_out.shape)
    n = sr_out.shape[0] if sr_out.ndim == 4 else 1
    return scale(tsum(absolute(sub(sr_out, hr))), 1.0 / n)


def gaze_loss(pred, gt) -> Tensor:
    """Batch-mean of squared pitch error plus squared yaw error."""
    pred, gt = as_tensor(pred), as_tensor(gt)
    if pred.shape != gt.shape or pred.shape[-1] != 2:
        raise DimensionError("gaze_loss operands", gt.shape, pred.shape)
    n = pred.shape[0] if pred.ndim == 2 else 1
    return scale(tsum(square(sub(pred, gt))), 1.0 / n)


def total_loss(l_sr, l_ge, alpha: float):
    if isinstance(l_sr, Tensor) or isinstance(l_ge, Tensor):
        return add(as_tensor(l_sr), scale(as_tensor(l_ge), alpha))
    return l_sr + alpha * l_ge


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class OptimizerState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_step(params: dict, grads: dict, state: OptimizerState, lr: float):
    """One bias-corrected Adam update on named arrays; returns (new_params, state)."""
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    out = {}
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(p)
        elif g.shape != p.shape:
            raise DimensionError(f"gradient for {name!r}", p.shape, g.shape)
        m = state.m.get(name, 0.0) * b1 + (1 - b1) * g
        v = state.v.get(name, 0.0) * b2 + (1 - b2) * g * g
        state.m[name], state.v[name] = m, v
        out[name] = p - lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return out, state


class Adam:
    """Adam over a parameter tree; gradients are read from the tensors' ``grad``."""

    def __init__(self, tree, lr: float = 1e-3):
        self.tensors = ptree.flatten(tree)
        self.lr = lr
        self.state = OptimizerState()

    def step(self):
        params = {k: t.data for k, t in self.tensors.items()}
        grads = {k: t.grad for k, t in self.tensors.items() if t.grad is not None}
        new, _ = adam_step(params, grads, self.state, self.lr)
        for k, t in self.tensors.items():
            t.data = new[k]

    def zero_grad(self):
        for t in self.tensors.values():
            t.grad = None


# ---------------------------------------------------------------------------
# configuration and data


@dataclass(frozen=True)
class TrainConfig:
    alpha: float = 0.1
    lam: float = 0.2
    learning_rate: float = 1e-3
    batch_size: int = 8
    epochs: int = 40
    phase_schedule: int = 1
    seed: int = 0
    joint: bool = False

    def __post_init__(self):
        if self.alpha < 0:
            raise ParameterError(f"alpha must be non-negative, got {self.alpha}")
        if self.batch_size < 1 or self.phase_schedule < 1 or self.epochs < 0:
            raise ParameterError("batch_size and phase_schedule must be >= 1, epochs >= 0")

    def to_dict(self):
        return asdict(self)


@dataclass
class Dataset:
    hr: np.ndarray
    lr: np.ndarray
    landmarks: np.ndarray
    gaze: np.ndarray

    @classmethod
    def from_samples(cls, samples):
        if not samples:
            raise UsageError("dataset is empty")
        return cls(*stack(samples))

    def __len__(self):
        return len(self.hr)

    def subset(self, idx):
        return Dataset(self.hr[idx], self.lr[idx], self.landmarks[idx], self.gaze[idx])


def batches(n: int, batch_size: int, seed: int, epoch: int):
    order = np.random.default_rng([seed, epoch]).permutation(n)
    return [order[i:i + batch_size] for i in range(0, n, batch_size)]


def _finite(value: float, what: str) -> float:
    if not math.isfinite(value):
        raise NumericalError(f"non-finite {what}: {value}")
    return value


# ---------------------------------------------------------------------------
# pretraining


def pretrain(module: str, data: Dataset, cfg: TrainConfig, model_cfg, params: dict):
    """Train one module alone; returns the per-epoch mean training loss.

    SR minimises the L1 loss on (lr, hr) pairs; gaze minimises the squared
    angle loss on HR images.  ``params`` is updated in place.
    """
    if module not in ("sr", "gaze"):
        raise UsageError(f"unknown module {module!r}; expected 'sr' or 'gaze'")
    if data is None or len(data) == 0:
        raise UsageError("pretraining needs a non-empty dataset")
    ptree.set_requires_grad(params, True)
    opt = Adam(params, cfg.learning_rate)
    history = []
    for epoch in range(cfg.epochs):
        losses = []
        for idx in batches(len(data), cfg.batch_size, cfg.seed, epoch):
            if module == "sr":
                loss = sr_loss(sr_forward(data.lr[idx], params, model_cfg), data.hr[idx])
            else:
                loss = gaze_loss(gaze_predict(data.hr[idx], data.landmarks[idx], params, model_cfg),
                                 data.gaze[idx])
            losses.append(_finite(loss.item(), f"{module} pretraining loss"))
            loss.backward()
            opt.step()
            opt.zero_grad()
        history.append(float(np.mean(losses)))
        log.info("pretrain %s epoch %d loss %.6f", module, epoch + 1, history[-1])
    return history


# ---------------------------------------------------------------------------
# alternating end-to-end training


@dataclass
class HazeState:
    sr_cfg: SrConfig
    gaze_cfg: GazeConfig
    sr_params: dict
    gaze_params: dict
    lr: float = 1e-3
    epoch: int = 0
    opt_sr: Optional[Adam] = None
    opt_gaze: Optional[Adam] = None

    def __post_init__(self):
        if self.sr_params is None or self.gaze_params is None:
            raise UsageError("end-to-end training needs both pretrained SR and gaze parameters")
        if self.opt_sr is None:
            self.opt_sr = Adam(self.sr_params, self.lr)
        if self.opt_gaze is None:
            self.opt_gaze = Adam(self.gaze_params, self.lr)


def train_phase1(state: HazeState, batch: Dataset, cfg: TrainConfig):
    """SR step under the combined loss; the gaze network is frozen."""
    ptree.set_requires_grad(state.sr_params, True)
    ptree.set_requires_grad(state.gaze_params, False)
    out = sr_forward(batch.lr, state.sr_params, state.sr_cfg)
    l_sr = sr_loss(out, batch.hr)
    l_ge = gaze_loss(gaze_predict(out, batch.landmarks, state.gaze_params, state.gaze_cfg), batch.gaze)
    loss = total_loss(l_sr, l_ge, cfg.alpha)
    _finite(loss.item(), "phase-1 loss")
    loss.backward()
    state.opt_sr.step()
    state.opt_sr.zero_grad()
    return l_sr.item(), l_ge.item()


def train_phase2(state: HazeState, batch: Dataset, cfg: TrainConfig):
    """Gaze step on the frozen SR output under the gaze loss alone."""
    ptree.set_requires_grad(state.sr_params, False)
    ptree.set_requires_grad(state.gaze_params, True)
    with no_grad():
        out = sr_forward(batch.lr, state.sr_params, state.sr_cfg)
        l_sr = sr_loss(out, batch.hr).item()
    l_ge = gaze_loss(gaze_predict(out, batch.landmarks, state.gaze_params, state.gaze_cfg), batch.gaze)
    _finite(l_ge.item(), "phase-2 loss")
    l_ge.backward()
    state.opt_gaze.step()
    state.opt_gaze.zero_grad()
    return l_sr, l_ge.item()


def train_joint(state: HazeState, batch: Dataset, cfg: TrainConfig):
    """Both modules updated under the combined loss (no freezing)."""
    ptree.set_requires_grad(state.sr_params, True)
    ptree.set_requires_grad(state.gaze_params, True)
    out = sr_forward(batch.lr, state.sr_params, state.sr_cfg)
    l_sr = sr_loss(out, batch.hr)
    l_ge = gaze_loss(gaze_predict(out, batch.landmarks, state.gaze_params, state.gaze_cfg), batch.gaze)
    loss = total_loss(l_sr, l_ge, cfg.alpha)
    _finite(loss.item(), "joint loss")
    loss.backward()
    state.opt_sr.step()
    state.opt_gaze.step()
    state.opt_sr.zero_grad()
    state.opt_gaze.zero_grad()
    return l_sr.item(), l_ge.item()


def phase_for_epoch(epoch: int, cfg: TrainConfig) -> int:
    """Phase (1 or 2) for a zero-based epoch index; 0 denotes joint mode."""
    if cfg.joint:
        return 0
    return (epoch // cfg.phase_schedule) % 2 + 1


_STEPS = {0: train_joint, 1: train_phase1, 2: train_phase2}


def evaluate(state: HazeState, data: Dataset) -> dict:
    """Mean PSNR/SSIM of the clamped SR output and angular error of gaze on it."""
    sr_out = super_resolve(data.lr, state.sr_params, state.sr_cfg)
    pred = predict_angles(sr_out, data.landmarks, state.gaze_params, state.gaze_cfg)
    return {
        "psnr_db": float(np.mean([psnr(a, b) for a, b in zip(sr_out, data.hr)])),
        "ssim": float(np.mean([ssim(a, b) for a, b in zip(sr_out, data.hr)])),
        "angular_error_deg": mean_angular_error(pred, data.gaze),
        "n": len(data),
    }


def alternate_train(train: Dataset, val: Dataset, cfg: TrainConfig, state: HazeState):
    """Run ``cfg.epochs`` epochs of the alternating schedule; returns the metrics history."""
    if state is None:
        raise UsageError("alternating training needs pretrained checkpoints")
    if len(train) == 0:
        raise UsageError("training dataset is empty")
    history = []
    for _ in range(cfg.epochs):
        epoch = state.epoch
        phase = phase_for_epoch(epoch, cfg)
        step = _STEPS[phase]
        losses = [step(state, train.subset(idx), cfg)
                  for idx in batches(len(train), cfg.batch_size, cfg.seed, epoch)]
        state.epoch += 1
        metrics = evaluate(state, val)
        row = {
            "epoch": state.epoch,
            "phase": phase,
            "l_sr": float(np.mean([l[0] for l in losses])),
            "l_ge": float(np.mean([l[1] for l in losses])),
            "psnr": metrics["psnr_db"],
            "ssim": metrics["ssim"],
            "angular_error_deg": metrics["angular_error_deg"],
        }
        history.append(row)
        log.info("epoch %d phase %d l_sr %.4f l_ge %.5f val %.3f deg", row["epoch"], phase,
                 row["l_sr"], row["l_ge"], row["angular_error_deg"])
    return history


def format_metrics(history) -> str:
    lines = [",".join(METRIC_COLUMNS)]
    for row in history:
        lines.append(",".join([str(row["epoch"]), str(row["phase"])] +
                              [repr(float(row[k])) for k in METRIC_COLUMNS[2:]]))
    return "\n".join(lines) + "\n"

