"""PPM images, the HAZE checkpoint container and the dataset manifest.

Checkpoint layout (all integers little-endian)::

    b"HAZE" | u32 version | u32 meta_len | meta (UTF-8 JSON)
    | u32 n_tensors | n_tensors x (u16 name_len | name | u32 rank
    | rank x u32 extent | prod(extents) x f64)
"""

import csv
import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, ParameterError, ParseError, UsageError

MAGIC = b"HAZE"
VERSION = 1
MANIFEST_FIELDS = ["id", "gaze_theta", "gaze_phi", "hr_path", "lr_path"] + \
    [f"lm{i}_{axis}" for i in range(5) for axis in "xy"]


# ---------------------------------------------------------------------------
# PPM


def encode_ppm(img) -> bytes:
    img = np.asarray(getattr(img, "data", img), dtype=np.float64)
    if img.ndim != 3 or img.shape[0] != 3:
        raise ParameterError(f"PPM images are [3, H, W], got {img.shape}")
    if img.min() < 0 or img.max() > 1:
        raise ParameterError("PPM save requires values clamped to [0, 1]")
    _, h, w = img.shape
    pix = np.floor(img * 255 + 0.5).astype(np.uint8).transpose(1, 2, 0)
    return f"P6\n{w} {h}\n255\n".encode("ascii") + pix.tobytes()


def save_ppm(path, img):
    Path(path).write_bytes(encode_ppm(img))


def _ppm_token(buf: bytes, pos: int):
    while True:
        while pos < len(buf) and buf[pos:pos + 1].isspace():
            pos += 1
        if pos < len(buf) and buf[pos:pos + 1] == b"#":
            while pos < len(buf) and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        break
    start = pos
    while pos < len(buf) and not buf[pos:pos + 1].isspace():
        pos += 1
    if start == pos:
        raise ParseError("unexpected end of PPM header", start)
    return buf[start:pos], pos


def decode_ppm(buf: bytes) -> np.ndarray:
    if buf[:2] != b"P6":
        raise ParseError("not a binary PPM (missing P6 magic)", 0)
    pos = 2
    values = []
    for _ in range(3):
        tok, end = _ppm_token(buf, pos)
        if not tok.isdigit():
            raise ParseError(f"bad PPM header field {tok!r}", end - len(tok))
        values.append(int(tok))
        pos = end
    w, h, maxval = values
    if w < 1 or h < 1 or not 0 < maxval < 256:
        raise ParseError(f"unsupported PPM geometry {w}x{h} maxval {maxval}", pos)
    if pos >= len(buf) or not buf[pos:pos + 1].isspace():
        raise ParseError("missing whitespace after PPM header", pos)
    pos += 1
    need = w * h * 3
    if len(buf) - pos < need:
        raise ParseError(f"truncated PPM payload: need {need} bytes, have {len(buf) - pos}",
                         len(buf))
    pix = np.frombuffer(buf, dtype=np.uint8, count=need, offset=pos).reshape(h, w, 3)
    return pix.transpose(2, 0, 1).astype(np.float64) / maxval


def load_ppm(path) -> np.ndarray:
    return decode_ppm(Path(path).read_bytes())


# ---------------------------------------------------------------------------
# checkpoints


@dataclass
class Checkpoint:
    tensors: list = field(default_factory=list)  # (name, ndarray) pairs
    meta: dict = field(default_factory=dict)

    def as_dict(self):
        return {name: arr for name, arr in self.tensors}

    def segment(self, prefix: str):
        """Tensors under ``prefix/`` with the prefix stripped."""
        p = prefix + "/"
        return {name[len(p):]: arr for name, arr in self.tensors if name.startswith(p)}

    def has_segment(self, prefix: str) -> bool:
        return any(name.startswith(prefix + "/") for name, _ in self.tensors)


def config_digest(config: dict) -> str:
    return hashlib.sha256(json.dumps(config, sort_keys=True).encode()).hexdigest()[:16]


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    names = [name for name, _ in ckpt.tensors]
    dupes = sorted({n for n in names if names.count(n) > 1})
    if dupes:
        raise UsageError(f"duplicate tensor names in checkpoint: {dupes}")
    meta = json.dumps(ckpt.meta, sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<II", VERSION, len(meta)), meta, struct.pack("<I", len(names))]
    for name, arr in ckpt.tensors:
        arr = np.asarray(arr, dtype="<f8")
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        parts.append(arr.tobytes())
    return b"".join(parts)


def decode_checkpoint(buf: bytes) -> Checkpoint:
    if buf[:4] != MAGIC:
        raise FormatError("bad checkpoint magic")
    pos = 4

    def take(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(buf):
            raise ParseError("truncated checkpoint", pos)
        vals = struct.unpack_from(fmt, buf, pos)
        pos += size
        return vals

    def take_bytes(n):
        nonlocal pos
        if pos + n > len(buf):
            raise ParseError("truncated checkpoint", pos)
        out = buf[pos:pos + n]
        pos += n
        return out

    version, meta_len = take("<II")
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    try:
        meta = json.loads(take_bytes(meta_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ParseError(f"bad checkpoint metadata: {exc}", 12) from None
    (count,) = take("<I")
    tensors = []
    for _ in range(count):
        (nlen,) = take("<H")
        name = take_bytes(nlen).decode("utf-8")
        (rank,) = take("<I")
        shape = take(f"<{rank}I")
        n = int(np.prod(shape, dtype=np.int64))
        arr = np.frombuffer(take_bytes(8 * n), dtype="<f8").reshape(shape).astype(np.float64)
        tensors.append((name, arr))
    if pos != len(buf):
        raise ParseError("trailing bytes after checkpoint", pos)
    return Checkpoint(tensors, meta)


def save_checkpoint(path, ckpt: Checkpoint):
    Path(path).write_bytes(encode_checkpoint(ckpt))


def load_checkpoint(path) -> Checkpoint:
    return decode_checkpoint(Path(path).read_bytes())


# ---------------------------------------------------------------------------
# dataset manifest


def write_manifest(path, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=MANIFEST_FIELDS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def read_manifest(path):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(MANIFEST_FIELDS[:5]) - set(reader.fieldnames or ())
        if missing:
            raise FormatError(f"manifest {path} lacks columns {sorted(missing)}")
        return list(reader)
