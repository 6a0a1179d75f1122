"""``hazenet`` command line: dataset generation, HF maps, training, evaluation, inference.

Every setting is a flat key.  Values come from built-in defaults, then an
optional INI file (``--config``), then command-line flags, later sources
winning.  Unknown keys in the file are rejected by name.
"""

import argparse
import configparser
import json
import logging
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import fileio
from . import params as ptree
from .errors import FormatError, HazeError, ParameterError, UsageError
from .gaze import GazeAngles, GazeConfig, Landmarks, angles_to_vector, init_gaze, predict_angles
from .metrics import angular_error, psnr, ssim
from .spectral import hf_extract
from .sr import SrConfig, init_sr, super_resolve
from .synth import default_landmarks, generate_dataset, split_identities
from .training import (Adam, Dataset, HazeState, TrainConfig, alternate_train, evaluate,
                       format_metrics, pretrain)

log = logging.getLogger("hazenet")


def _bool(text):
    value = str(text).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _ints(text):
    if isinstance(text, (tuple, list)):
        return tuple(int(v) for v in text)
    return tuple(int(v) for v in str(text).split(",") if v.strip())


# key -> (parser, default, help)
KEYS = {
    "seed": (int, 0, "seed for data, initialisation and batch order"),
    "data_dir": (str, "data", "dataset directory (manifest.csv, hr/, lr/)"),
    "n": (int, 64, "number of samples to generate"),
    "identities": (int, 10, "number of synthetic face identities"),
    "val_identities": (int, 2, "identities held out for validation (0 = no split)"),
    "max_angle": (float, 0.5, "largest absolute pitch and yaw in generated labels, radians"),
    "noise": (float, 0.01, "pixel noise standard deviation of generated images"),
    "hr_size": (int, 32, "HR image height and width"),
    "scale": (int, 4, "super-resolution factor (2, 3 or 4)"),
    "lambda": (float, 0.2, "masking point of the HF extractor"),
    "alpha": (float, 0.1, "weight of the gaze loss in phase 1"),
    "channels": (int, 16, "SR feature channels"),
    "num_hfab": (int, 2, "number of HF attention blocks"),
    "reduction": (int, 4, "channel attention reduction ratio"),
    "hf_mode": (str, "per_block", "where HF extraction happens: per_block, global or off"),
    "gaze_widths": (_ints, (8, 16, 32), "gaze backbone stage widths, comma separated"),
    "gaze_hidden": (int, 64, "gaze head hidden width"),
    "patch_frac": (float, 0.25, "eye patch side as a fraction of image height"),
    "epochs": (int, 40, "training epochs"),
    "batch": (int, 8, "mini-batch size"),
    "learning_rate": (float, 1e-3, "Adam step size"),
    "phase_schedule": (int, 1, "epochs per phase before alternating"),
    "joint": (_bool, False, "update both modules every step instead of alternating"),
    "checkpoint": (str, "haze.ckpt", "checkpoint written by training, read by eval/infer"),
    "sr_checkpoint": (str, "", "pretrained SR checkpoint for train"),
    "gaze_checkpoint": (str, "", "pretrained gaze checkpoint for train"),
    "resume": (_bool, False, "continue training from --checkpoint"),
    "metrics": (str, "metrics.csv", "per-epoch metrics table"),
    "split": (str, "", "dataset split: train, val or all (command default if empty)"),
    "report": (str, "", "JSON report path for eval"),
    "per_sample": (str, "", "per-sample CSV path for eval"),
    "sweep": (str, "", "ablation sweep CSV path for eval (empty = no sweep)"),
    "input": (str, "", "input PPM image"),
    "output": (str, "", "output PPM image"),
    "raw": (str, "", "raw float output (.npy) for extract-hf"),
    "overlay": (str, "", "gaze-arrow overlay PPM for infer"),
    "landmarks": (str, "", "10 comma separated landmark fractions x0,y0,...,x4,y4"),
}

SWEEP_LAMBDAS = (0.2, 0.4, 0.5)
SWEEP_ALPHAS = (0.0, 0.1, 1.0)
SWEEP_COLUMNS = ["sweep", "lambda", "alpha", "psnr_db", "ssim", "angular_error_deg", "n"]
REPORT_FIELDS = ("psnr_db", "ssim", "angular_error_deg", "n")


# ---------------------------------------------------------------------------
# configuration


def _coerce(key, value, origin):
    try:
        return KEYS[key][0](value)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad value for {key!r} in {origin}: {exc}") from None


def read_config_file(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"config file {path} not found")
    text = path.read_text()
    if not any(line.strip().startswith("[") for line in text.splitlines()):
        text = "[haze]\n" + text
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise UsageError(f"cannot parse config {path}: {exc}") from None
    out = {}
    for section in parser.sections():
        for raw_key, value in parser.items(section):
            key = raw_key.replace("-", "_")
            if key not in KEYS:
                raise UsageError(f"unknown config key {raw_key!r} in {path}")
            out[key] = _coerce(key, value, path)
    return out


def resolve_config(args) -> dict:
    cfg = {k: entry[1] for k, entry in KEYS.items()}
    if args.config:
        cfg.update(read_config_file(args.config))
    for key in KEYS:
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = _coerce(key, value, "command line")
    return cfg


def sr_config(cfg) -> SrConfig:
    size = cfg["hr_size"]
    return SrConfig(scale=cfg["scale"], channels=cfg["channels"], num_hfab=cfg["num_hfab"],
                    lam=cfg["lambda"], hr_size=(size, size), reduction=cfg["reduction"],
                    hf_mode=cfg["hf_mode"])


def gaze_config(cfg) -> GazeConfig:
    size = cfg["hr_size"]
    return GazeConfig(image_size=(size, size), widths=cfg["gaze_widths"], hidden=cfg["gaze_hidden"],
                      patch_frac=cfg["patch_frac"], lam=cfg["lambda"])


def train_config(cfg, **kw) -> TrainConfig:
    base = TrainConfig(alpha=cfg["alpha"], lam=cfg["lambda"], learning_rate=cfg["learning_rate"],
                       batch_size=cfg["batch"], epochs=cfg["epochs"],
                       phase_schedule=cfg["phase_schedule"], seed=cfg["seed"], joint=cfg["joint"])
    return replace(base, **kw)


def _model_meta(cfg):
    return {"sr": sr_config(cfg).to_dict(), "gaze": gaze_config(cfg).to_dict()}


# ---------------------------------------------------------------------------
# dataset directory


def _need_path(cfg, key, hint):
    if not cfg[key]:
        raise UsageError(f"--{key.replace('_', '-')} is required; {hint}")
    return Path(cfg[key])


def cmd_generate(cfg):
    root = Path(cfg["data_dir"])
    (root / "hr").mkdir(parents=True, exist_ok=True)
    (root / "lr").mkdir(parents=True, exist_ok=True)
    size = cfg["hr_size"]
    if cfg["identities"] < 1:
        raise ParameterError("need at least one identity")
    samples = generate_dataset(cfg["n"], range(cfg["identities"]), size=(size, size),
                               scale=cfg["scale"], seed=cfg["seed"], max_angle=cfg["max_angle"],
                               noise=cfg["noise"])
    rows = []
    for i, s in enumerate(samples):
        hr_rel, lr_rel = f"hr/{i:05d}.ppm", f"lr/{i:05d}.ppm"
        fileio.save_ppm(root / hr_rel, s.hr)
        fileio.save_ppm(root / lr_rel, s.lr)
        row = {"id": s.id, "gaze_theta": repr(s.gaze.theta), "gaze_phi": repr(s.gaze.phi),
               "hr_path": hr_rel, "lr_path": lr_rel}
        for j, (x, y) in enumerate(s.landmarks.points):
            row[f"lm{j}_x"], row[f"lm{j}_y"] = repr(float(x)), repr(float(y))
        rows.append(row)
    fileio.write_manifest(root / "manifest.csv", rows)
    print(f"wrote {len(rows)} samples to {root}")
    return 0


def load_split(cfg, split: str) -> Dataset:
    root = Path(cfg["data_dir"])
    manifest = root / "manifest.csv"
    if not manifest.is_file():
        raise UsageError(f"no dataset at {root}; run `hazenet generate --data-dir {root}` first")
    rows = fileio.read_manifest(manifest)
    if not rows:
        raise FormatError(f"{manifest} has no rows")
    try:
        ids = [int(r["id"]) for r in rows]
        gaze = np.array([[float(r["gaze_theta"]), float(r["gaze_phi"])] for r in rows])
        lms = np.array([[[float(r[f"lm{j}_x"]), float(r[f"lm{j}_y"])] for j in range(5)] for r in rows])
    except (KeyError, ValueError) as exc:
        raise FormatError(f"bad manifest row in {manifest}: {exc}") from None
    if split not in ("train", "val", "all"):
        raise UsageError(f"split must be train, val or all, got {split!r}")
    keep = list(range(len(rows)))
    if split != "all" and cfg["val_identities"] > 0:
        train_ids, val_ids = split_identities(max(ids) + 1, cfg["val_identities"], cfg["seed"])
        wanted = set(train_ids if split == "train" else val_ids)
        keep = [i for i in keep if ids[i] in wanted]
        if not keep:
            raise UsageError(f"the {split} split of {root} is empty; adjust --val-identities")
    hr = np.stack([fileio.load_ppm(root / rows[i]["hr_path"]) for i in keep])
    lr = np.stack([fileio.load_ppm(root / rows[i]["lr_path"]) for i in keep])
    size = cfg["hr_size"]
    if hr.shape[-2:] != (size, size) or lr.shape[-2:] != (size // cfg["scale"],) * 2:
        raise FormatError(f"dataset extents {hr.shape[-2:]} / {lr.shape[-2:]} do not match "
                          f"hr_size={size} scale={cfg['scale']}")
    data = Dataset(hr, lr, lms[keep], gaze[keep])
    data.ids = [ids[i] for i in keep]
    return data


# ---------------------------------------------------------------------------
# checkpoints


def _adam_tensors(prefix, opt: Adam):
    out = []
    for name in sorted(opt.state.m):
        out.append((f"{prefix}/m/{name}", opt.state.m[name]))
        out.append((f"{prefix}/v/{name}", opt.state.v[name]))
    return out


def _restore_adam(opt: Adam, ckpt: fileio.Checkpoint, prefix, step):
    m, v = ckpt.segment(prefix + "/m"), ckpt.segment(prefix + "/v")
    opt.state.m = {k: a.copy() for k, a in m.items()}
    opt.state.v = {k: a.copy() for k, a in v.items()}
    opt.state.step = int(step)


def _meta(cfg, **extra):
    config = {k: (list(v) if isinstance(v, tuple) else v) for k, v in cfg.items()}
    meta = {"seed": cfg["seed"], "config": config, "model": _model_meta(cfg),
            "config_digest": fileio.config_digest(_model_meta(cfg))}
    meta.update(extra)
    return meta


def _load_ckpt(path, what, hint):
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"{what} checkpoint {path} not found; {hint}")
    return fileio.load_checkpoint(path)


def _load_params(ckpt, segment, tree, path):
    if not ckpt.has_segment(segment):
        raise FormatError(f"checkpoint {path} has no {segment!r} parameters")
    return ptree.load_flat(tree, ckpt.segment(segment))


def save_state(path, state: HazeState, cfg, phase):
    tensors = [(f"sr/{k}", a) for k, a in ptree.snapshot(state.sr_params).items()]
    tensors += [(f"gaze/{k}", a) for k, a in ptree.snapshot(state.gaze_params).items()]
    tensors += _adam_tensors("adam_sr", state.opt_sr) + _adam_tensors("adam_gaze", state.opt_gaze)
    meta = _meta(cfg, epoch=state.epoch, phase=phase, adam_sr_step=state.opt_sr.state.step,
                 adam_gaze_step=state.opt_gaze.state.step)
    fileio.save_checkpoint(path, fileio.Checkpoint(tensors, meta))


def load_models(cfg, path=None):
    """(sr_cfg, sr_params, gaze_cfg, gaze_params, checkpoint) from a combined checkpoint."""
    path = path or cfg["checkpoint"]
    ckpt = _load_ckpt(path, "model", "train one with `hazenet train`")
    s_cfg, g_cfg = sr_config(cfg), gaze_config(cfg)
    sr_p = _load_params(ckpt, "sr", init_sr(s_cfg, 0), path)
    g_p = _load_params(ckpt, "gaze", init_gaze(g_cfg, 0), path)
    return s_cfg, sr_p, g_cfg, g_p, ckpt


# ---------------------------------------------------------------------------
# commands


def cmd_extract_hf(cfg):
    src = _need_path(cfg, "input", "give a PPM image")
    dst = _need_path(cfg, "output", "give an output PPM path")
    img = fileio.load_ppm(src)
    raw = hf_extract(img, cfg["lambda"]).data
    lo, hi = float(raw.min()), float(raw.max())
    vis = (raw - lo) / (hi - lo) if hi - lo > 1e-12 else np.zeros_like(raw)
    fileio.save_ppm(dst, vis)
    if cfg["raw"]:
        np.save(cfg["raw"], raw)
    print(f"hf energy {float(np.sum(raw ** 2)):.6g} range [{lo:.6g}, {hi:.6g}]")
    return 0


def _pretrain(cfg, module):
    data = load_split(cfg, cfg["split"] or "train")
    if module == "sr":
        model_cfg = sr_config(cfg)
        tree = init_sr(model_cfg, cfg["seed"])
    else:
        model_cfg = gaze_config(cfg)
        tree = init_gaze(model_cfg, cfg["seed"] + 1)
    history = pretrain(module, data, train_config(cfg), model_cfg, tree)
    out = Path(cfg["checkpoint"])
    tensors = [(f"{module}/{k}", a) for k, a in ptree.snapshot(tree).items()]
    fileio.save_checkpoint(out, fileio.Checkpoint(tensors, _meta(cfg, epoch=len(history), phase=0,
                                                                 module=module)))
    lines = ["epoch,loss"] + [f"{i + 1},{loss!r}" for i, loss in enumerate(history)]
    Path(cfg["metrics"]).write_text("\n".join(lines) + "\n")
    print(f"pretrained {module} for {len(history)} epochs, final loss {history[-1]:.6g}; "
          f"checkpoint {out}")
    return 0


def cmd_pretrain_sr(cfg):
    return _pretrain(cfg, "sr")


def cmd_pretrain_gaze(cfg):
    return _pretrain(cfg, "gaze")


def build_state(cfg) -> HazeState:
    s_cfg, g_cfg = sr_config(cfg), gaze_config(cfg)
    if cfg["resume"]:
        s_cfg, sr_p, g_cfg, g_p, ckpt = load_models(cfg)
        state = HazeState(s_cfg, g_cfg, sr_p, g_p, lr=cfg["learning_rate"],
                          epoch=int(ckpt.meta.get("epoch", 0)))
        _restore_adam(state.opt_sr, ckpt, "adam_sr", ckpt.meta.get("adam_sr_step", 0))
        _restore_adam(state.opt_gaze, ckpt, "adam_gaze", ckpt.meta.get("adam_gaze_step", 0))
        return state
    hint = "run `hazenet pretrain-{}` first and pass --{}-checkpoint"
    if not cfg["sr_checkpoint"]:
        raise UsageError("training needs a pretrained SR model; " + hint.format("sr", "sr"))
    if not cfg["gaze_checkpoint"]:
        raise UsageError("training needs a pretrained gaze model; " + hint.format("gaze", "gaze"))
    sr_ck = _load_ckpt(cfg["sr_checkpoint"], "SR", hint.format("sr", "sr"))
    g_ck = _load_ckpt(cfg["gaze_checkpoint"], "gaze", hint.format("gaze", "gaze"))
    sr_p = _load_params(sr_ck, "sr", init_sr(s_cfg, 0), cfg["sr_checkpoint"])
    g_p = _load_params(g_ck, "gaze", init_gaze(g_cfg, 0), cfg["gaze_checkpoint"])
    return HazeState(s_cfg, g_cfg, sr_p, g_p, lr=cfg["learning_rate"])


def _val_split(cfg):
    return load_split(cfg, "val" if cfg["val_identities"] > 0 else "all")


def cmd_train(cfg):
    state = build_state(cfg)
    train = load_split(cfg, cfg["split"] or "train")
    val = _val_split(cfg)
    history = alternate_train(train, val, train_config(cfg), state)
    metrics = Path(cfg["metrics"])
    text = format_metrics(history)
    if cfg["resume"] and metrics.is_file():
        text = metrics.read_text() + "".join(text.splitlines(keepends=True)[1:])
    metrics.write_text(text)
    last_phase = history[-1]["phase"] if history else 0
    save_state(cfg["checkpoint"], state, cfg, last_phase)
    if history:
        print(f"epoch {state.epoch}: val angular error {history[-1]['angular_error_deg']:.4f} deg, "
              f"psnr {history[-1]['psnr']:.3f} dB")
    return 0


def _report(state, data):
    rep = evaluate(state, data)
    return {k: rep[k] for k in REPORT_FIELDS}


def run_sweep(cfg, state: HazeState, train: Dataset, val: Dataset):
    """Fine-tune a copy of ``state`` for each lambda and alpha setting; one row per setting."""
    base_sr, base_gaze = ptree.snapshot(state.sr_params), ptree.snapshot(state.gaze_params)
    settings = [("lambda", lam, cfg["alpha"]) for lam in SWEEP_LAMBDAS]
    settings += [("alpha", cfg["lambda"], a) for a in SWEEP_ALPHAS]
    rows = []
    for name, lam, alpha in settings:
        s_cfg = replace(state.sr_cfg, lam=lam)
        g_cfg = replace(state.gaze_cfg, lam=lam)
        sr_p = ptree.load_flat(init_sr(s_cfg, 0), base_sr)
        g_p = ptree.load_flat(init_gaze(g_cfg, 0), base_gaze)
        run = HazeState(s_cfg, g_cfg, sr_p, g_p, lr=cfg["learning_rate"])
        alternate_train(train, val, train_config(cfg, alpha=alpha, lam=lam), run)
        rep = _report(run, val)
        rows.append({"sweep": name, "lambda": lam, "alpha": alpha, **rep})
        log.info("sweep %s lambda=%g alpha=%g: %s", name, lam, alpha, rep)
    return rows


def cmd_eval(cfg):
    s_cfg, sr_p, g_cfg, g_p, _ = load_models(cfg)
    state = HazeState(s_cfg, g_cfg, sr_p, g_p)
    data = load_split(cfg, cfg["split"] or ("val" if cfg["val_identities"] > 0 else "all"))
    report = _report(state, data)
    text = json.dumps(report, sort_keys=True)
    print(text)
    if cfg["report"]:
        Path(cfg["report"]).write_text(text + "\n")
    if cfg["per_sample"]:
        sr_out = super_resolve(data.lr, sr_p, s_cfg)
        pred = predict_angles(sr_out, data.landmarks, g_p, g_cfg)
        lines = ["index,id,psnr_db,ssim,angular_error_deg"]
        for i in range(len(data)):
            lines.append(f"{i},{data.ids[i]},{psnr(sr_out[i], data.hr[i])!r},"
                         f"{ssim(sr_out[i], data.hr[i])!r},{angular_error(pred[i], data.gaze[i])!r}")
        Path(cfg["per_sample"]).write_text("\n".join(lines) + "\n")
    if cfg["sweep"]:
        rows = run_sweep(cfg, state, load_split(cfg, "train"), data)
        lines = [",".join(SWEEP_COLUMNS)]
        lines += [",".join(str(r[c]) for c in SWEEP_COLUMNS) for r in rows]
        Path(cfg["sweep"]).write_text("\n".join(lines) + "\n")
        print(f"sweep: {len(rows)} settings written to {cfg['sweep']}")
    return 0


# ---------------------------------------------------------------------------
# inference and the gaze-arrow overlay


ARROW_COLOR = (1.0, 0.0, 0.0)
ARROW_LENGTH_FRAC = 0.4


def parse_landmarks(text) -> Landmarks:
    try:
        vals = [float(v) for v in text.split(",")]
    except ValueError:
        raise UsageError(f"landmarks must be 10 numbers, got {text!r}") from None
    if len(vals) != 10:
        raise UsageError(f"landmarks must be 10 numbers, got {len(vals)}")
    return Landmarks([(vals[2 * i], vals[2 * i + 1]) for i in range(5)])


def arrow_segments(gaze: GazeAngles, lm: Landmarks, size):
    """Shaft and head segments ((x0, y0), (x1, y1)) in pixel coordinates."""
    h, w = size
    (lx, ly), (rx, ry) = lm.left_eye, lm.right_eye
    start = np.array([(lx + rx) / 2 * w, (ly + ry) / 2 * h])
    vec = angles_to_vector(gaze)
    # the image x axis follows +yaw and the y axis follows +pitch
    direction = np.array([-vec[0], -vec[1]])
    end = start + ARROW_LENGTH_FRAC * w * direction
    segments = [(start, end)]
    length = float(np.hypot(*(end - start)))
    if length > 1e-9:
        u = (end - start) / length
        head = max(2.0, 0.25 * length)
        for ang in (2.6, -2.6):
            c, s = math.cos(ang), math.sin(ang)
            segments.append((end, end + head * np.array([c * u[0] - s * u[1], s * u[0] + c * u[1]])))
    return segments


def rasterize_segment(p0, p1, size):
    """Pixel (row, col) pairs covered by a segment, sampled at half-pixel steps."""
    h, w = size
    steps = int(math.ceil(2 * float(np.hypot(*(np.asarray(p1) - p0))))) + 1
    pix = set()
    for t in np.linspace(0.0, 1.0, steps + 1):
        x, y = (1 - t) * np.asarray(p0) + t * np.asarray(p1)
        col, row = int(math.floor(x)), int(math.floor(y))
        if 0 <= row < h and 0 <= col < w:
            pix.add((row, col))
    return pix


def draw_gaze_arrow(img, gaze: GazeAngles, lm: Landmarks):
    out = np.array(img, dtype=np.float64, copy=True)
    size = out.shape[-2:]
    for p0, p1 in arrow_segments(gaze, lm, size):
        for row, col in rasterize_segment(p0, p1, size):
            out[:, row, col] = ARROW_COLOR
    return out


def cmd_infer(cfg):
    src = _need_path(cfg, "input", "give an LR PPM image")
    dst = _need_path(cfg, "output", "give an output PPM path for the SR image")
    s_cfg, sr_p, g_cfg, g_p, _ = load_models(cfg)
    lr = fileio.load_ppm(src)
    if lr.shape[-2:] != s_cfg.lr_size:
        raise FormatError(f"input is {lr.shape[-2]}x{lr.shape[-1]}, the model expects "
                          f"{s_cfg.lr_size[0]}x{s_cfg.lr_size[1]}")
    lm = parse_landmarks(cfg["landmarks"]) if cfg["landmarks"] else default_landmarks()
    sr = super_resolve(lr, sr_p, s_cfg)
    fileio.save_ppm(dst, sr)
    theta, phi = predict_angles(sr[None], [lm], g_p, g_cfg)[0]
    print(format_angles(GazeAngles(float(theta), float(phi))))
    if cfg["overlay"]:
        fileio.save_ppm(cfg["overlay"], draw_gaze_arrow(sr, GazeAngles(float(theta), float(phi)), lm))
    return 0


def format_angles(g: GazeAngles) -> str:
    return (f"theta_rad={g.theta:+.6f} phi_rad={g.phi:+.6f} "
            f"theta_deg={math.degrees(g.theta):+.4f} phi_deg={math.degrees(g.phi):+.4f}")


# ---------------------------------------------------------------------------
# entry point


COMMANDS = {
    "generate": (cmd_generate, "write a synthetic dataset with known gaze labels"),
    "extract-hf": (cmd_extract_hf, "apply the high-frequency extractor to a PPM image"),
    "pretrain-sr": (cmd_pretrain_sr, "pretrain the SR network on its L1 loss"),
    "pretrain-gaze": (cmd_pretrain_gaze, "pretrain the gaze network on HR images"),
    "train": (cmd_train, "alternating two-phase end-to-end training"),
    "eval": (cmd_eval, "PSNR, SSIM and angular error on a split, optional ablation sweep"),
    "infer": (cmd_infer, "super-resolve one LR image and predict its gaze"),
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat INI file of settings")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress")
    for key, (kind, default, help_text) in KEYS.items():
        flag = "--" + key.replace("_", "-")
        if kind is _bool:
            common.add_argument(flag, dest=key, action=argparse.BooleanOptionalAction,
                                default=None, help=f"{help_text} (default {default})")
        else:
            shown = ",".join(map(str, default)) if isinstance(default, tuple) else default
            common.add_argument(flag, dest=key, default=None, help=f"{help_text} (default {shown!r})")
    parser = argparse.ArgumentParser(
        prog="hazenet", description="Synthetic gaze data, HF maps, SR and gaze training, evaluation.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=help_text, description=help_text)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command][0](cfg)
    except HazeError as exc:
        print(f"hazenet {args.command}: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"hazenet {args.command}: I/O error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
