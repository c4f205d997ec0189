"""File formats: netpbm images, shape-headed tensor files, run manifests.

Images (8/16-bit PGM/PPM or tensor CSV/JSON) are normalized to [0, 1] on
load; grayscale is replicated across the three color channels.  Tensor files
carry an explicit shape header so dumps round-trip without side channels.
Manifests are deterministic (no timestamps) so reruns are byte-identical.
"""

from __future__ import annotations

import json
import re
from pathlib import Path

import numpy as np

_PNM_MAGICS = {b"P2": ("ascii", 1), b"P3": ("ascii", 3),
               b"P5": ("binary", 1), b"P6": ("binary", 3)}


def _pnm_tokens(data: bytes):
    """Header tokens with '#' comments stripped."""
    pos = 0
    while pos < len(data):
        chunk = data[pos:pos + 1]
        if chunk.isspace():
            pos += 1
            continue
        if chunk == b"#":
            end = data.find(b"\n", pos)
            pos = len(data) if end == -1 else end + 1
            continue
        match = re.match(rb"[^\s#]+", data[pos:])
        token = match.group(0)
        pos += len(token)
        yield token, pos


def load_pnm(path) -> np.ndarray:
    """Read PGM/PPM (ascii or binary, maxval <= 65535) as h x w x 3 in [0, 1]."""
    data = Path(path).read_bytes()
    tokens = _pnm_tokens(data)
    magic, _ = next(tokens)
    if magic not in _PNM_MAGICS:
        raise ValueError(f"unsupported netpbm magic {magic!r} in {path}")
    encoding, channels = _PNM_MAGICS[magic]
    width = int(next(tokens)[0])
    height = int(next(tokens)[0])
    maxval_token, body_start = next(tokens)
    maxval = int(maxval_token)
    if not 0 < maxval <= 65535:
        raise ValueError(f"maxval {maxval} out of range in {path}")
    count = width * height * channels
    if encoding == "ascii":
        values = np.array(data[body_start:].split()[:count], dtype=np.float64)
    else:
        body = data[body_start + 1:]  # single whitespace after maxval
        dtype = np.dtype(">u2" if maxval > 255 else np.uint8)
        if len(body) < count * dtype.itemsize:
            raise ValueError(f"truncated image data in {path}")
        values = np.frombuffer(body, dtype=dtype, count=count).astype(np.float64)
    if values.size != count:
        raise ValueError(f"truncated image data in {path}")
    image = values.reshape(height, width, channels) / maxval
    if channels == 1:
        image = np.repeat(image, 3, axis=2)
    return image


def load_tensor(path) -> np.ndarray:
    """Read a shape-headed tensor (.json or .csv)."""
    path = Path(path)
    if path.suffix == ".json":
        doc = json.loads(path.read_text())
        return np.asarray(doc["values"], dtype=np.float64).reshape(doc["shape"])
    lines = path.read_text().splitlines()
    if not lines or not lines[0].startswith("# shape:"):
        raise ValueError(f"{path}: missing '# shape:' header")
    shape = tuple(int(v) for v in lines[0].split(":", 1)[1].split(","))
    flat = [float(v) for line in lines[1:] if line.strip() and not line.startswith("#")
            for v in line.split(",")]
    return np.asarray(flat, dtype=np.float64).reshape(shape)


def save_tensor(path, array):
    """Write a tensor with shape header; format chosen by extension."""
    path = Path(path)
    array = np.asarray(array)
    if path.suffix == ".json":
        doc = {"shape": list(array.shape), "values": array.ravel().tolist()}
        path.write_text(json.dumps(doc) + "\n")
        return
    flat = array.reshape(array.shape[0], -1) if array.ndim > 1 else array[None, :]
    with open(path, "w") as fh:
        fh.write("# shape: " + ",".join(str(d) for d in array.shape) + "\n")
        for row in flat:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def load_image(path) -> np.ndarray:
    """Load any supported image format to h x w x 3 currents in [0, 1]."""
    path = Path(path)
    if path.suffix.lower() in (".pgm", ".ppm", ".pnm"):
        return load_pnm(path)
    image = load_tensor(path)
    if image.ndim == 2:
        image = np.repeat(image[:, :, None], 3, axis=2)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"{path}: expected h x w x 3 image, got {image.shape}")
    if image.min() < 0.0 or image.max() > 1.0:
        raise ValueError(f"{path}: image values must already be in [0, 1]")
    return image


def load_kernels(path) -> np.ndarray:
    """Load kernels as (c_o, k, k, 3); a single k x k x 3 kernel is wrapped."""
    tensor = load_tensor(path)
    if tensor.ndim == 3:
        tensor = tensor[None, ...]
    if tensor.ndim != 4 or tensor.shape[3] != 3 or tensor.shape[1] != tensor.shape[2]:
        raise ValueError(
            f"{path}: expected (c_o, k, k, 3) kernel tensor, got {tensor.shape}")
    return tensor


def write_manifest(out_path, payload: dict):
    """Write `<out_path>.manifest.json` describing how the output was made."""
    import fpca

    manifest = {"package": "fpca", "version": fpca.__version__}
    manifest.update(payload)
    path = Path(str(out_path) + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return path
