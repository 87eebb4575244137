"""On-disk episode bundle format.

A bundle is a directory with a ``manifest.json`` listing arrays as
``{name, dtype in {f32, u8}, shape, file}``; payloads are raw little-endian,
row-major, no header. Tensor layout is tokens-major ``[hw, d]`` (recorded here
as the IO convention). Loading validates every structural invariant; writing
then loading reproduces the input bit-exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .errors import (
    DimMismatch,
    EmptyMask,
    IoFailure,
    MissingArray,
    NegativeAttention,
    NonFinite,
    ShapeMismatch,
)

MANIFEST_NAME = "manifest.json"
_DTYPES = {"f32": np.dtype("<f4"), "u8": np.dtype("u1")}


@dataclass
class FeatureBundle:
    """One episode's tensors, as produced by the exporter."""

    query_features: np.ndarray          # [hw, d] f32
    support_features: list[np.ndarray]  # K x [hw, d] f32
    support_masks: list[np.ndarray]     # K x [H_img, W_img] u8, values in {0,1}
    text_embed_target: np.ndarray       # [d] f32
    text_embed_background: np.ndarray   # [d] f32
    attentions: np.ndarray              # [n, hw, hw] f32, rows non-negative
    h: int
    w: int
    d: int
    n: int
    K: int
    class_name: str
    image_height: int
    image_width: int
    seed: int | None = None

    @property
    def hw(self) -> int:
        return self.h * self.w


@dataclass
class PriorStack:
    """Engine output: K VVP channels plus one VTP channel, values in [0, 1]."""

    channels: np.ndarray  # [C, h, w] f32
    channel_names: list[str]
    class_name: str
    metadata: dict[str, Any] = field(default_factory=dict)


def _write_array(directory: Path, name: str, arr: np.ndarray) -> dict[str, Any]:
    if arr.dtype == np.dtype("<f4"):
        dtype = "f32"
    elif arr.dtype == np.dtype("u1"):
        dtype = "u8"
    else:
        raise IoFailure(f"unsupported dtype {arr.dtype} for array {name!r}")
    fname = f"{name}.bin"
    try:
        (directory / fname).write_bytes(np.ascontiguousarray(arr).tobytes())
    except OSError as e:
        raise IoFailure(str(e)) from e
    return {"name": name, "dtype": dtype, "shape": list(arr.shape), "file": fname}


def _read_array(directory: Path, entry: dict[str, Any]) -> np.ndarray:
    name = entry["name"]
    path = directory / entry["file"]
    if not path.is_file():
        raise MissingArray(f"array {name!r}: missing file {entry['file']!r}")
    dtype = _DTYPES.get(entry["dtype"])
    if dtype is None:
        raise ShapeMismatch(f"array {name!r}: unknown dtype {entry['dtype']!r}")
    shape = tuple(int(s) for s in entry["shape"])
    raw = path.read_bytes()
    expected = math.prod(shape) * dtype.itemsize
    if len(raw) != expected:
        raise ShapeMismatch(
            f"array {name!r}: shape {shape} needs {expected} bytes, file has {len(raw)}"
        )
    return np.frombuffer(raw, dtype=dtype).reshape(shape)


def _check_finite(name: str, arr: np.ndarray) -> None:
    if arr.dtype.kind == "f" and not np.isfinite(arr).all():
        raise NonFinite(f"array {name!r} contains NaN/Inf")


def write_bundle(bundle: FeatureBundle, path: str | Path) -> None:
    """Emit manifest + raw binaries; a subsequent load is bit-exact."""
    directory = Path(path)
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise IoFailure(str(e)) from e

    arrays = [_write_array(directory, "query_features", bundle.query_features)]
    for i, (feats, mask) in enumerate(zip(bundle.support_features, bundle.support_masks)):
        arrays.append(_write_array(directory, f"support_features_{i}", feats))
        arrays.append(_write_array(directory, f"support_mask_{i}", mask))
    arrays.append(_write_array(directory, "text_embed_target", bundle.text_embed_target))
    arrays.append(_write_array(directory, "text_embed_background", bundle.text_embed_background))
    arrays.append(_write_array(directory, "attentions", bundle.attentions))

    manifest = {
        "format": "clip-priors-bundle",
        "version": 1,
        "h": bundle.h,
        "w": bundle.w,
        "d": bundle.d,
        "n": bundle.n,
        "K": bundle.K,
        "class_name": bundle.class_name,
        "image_height": bundle.image_height,
        "image_width": bundle.image_width,
        "layout": "tokens_major",
        "arrays": arrays,
    }
    if bundle.seed is not None:
        manifest["seed"] = bundle.seed
    try:
        (directory / MANIFEST_NAME).write_text(
            json.dumps(manifest, indent=2), encoding="utf-8"
        )
    except OSError as e:
        raise IoFailure(str(e)) from e


def load_bundle(path: str | Path) -> FeatureBundle:
    """Load and fully validate a bundle directory."""
    directory = Path(path)
    manifest_path = directory / MANIFEST_NAME
    if not manifest_path.is_file():
        raise MissingArray(f"no {MANIFEST_NAME} in {directory}")
    try:
        manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise IoFailure(f"unreadable manifest: {e}") from e

    try:
        h, w = int(manifest["h"]), int(manifest["w"])
        d, n, K = int(manifest["d"]), int(manifest["n"]), int(manifest["K"])
        entries = {e["name"]: e for e in manifest["arrays"]}
    except (KeyError, TypeError, ValueError) as e:
        raise ShapeMismatch(f"malformed manifest: {e}") from e
    hw = h * w

    required = ["query_features", "text_embed_target", "text_embed_background", "attentions"]
    required += [f"support_features_{i}" for i in range(K)]
    required += [f"support_mask_{i}" for i in range(K)]
    for name in required:
        if name not in entries:
            raise MissingArray(f"manifest lacks array {name!r}")

    arrays = {name: _read_array(directory, entries[name]) for name in required}
    for name, arr in arrays.items():
        _check_finite(name, arr)

    def expect(name: str, shape: tuple[int, ...]) -> np.ndarray:
        arr = arrays[name]
        if arr.shape != shape:
            raise ShapeMismatch(f"array {name!r}: declared {arr.shape}, expected {shape}")
        return arr

    img_h = int(manifest["image_height"])
    img_w = int(manifest["image_width"])
    query = expect("query_features", (hw, d))
    t_f = expect("text_embed_target", (d,))
    t_b = expect("text_embed_background", (d,))
    attn = expect("attentions", (n, hw, hw))
    supports = [expect(f"support_features_{i}", (hw, d)) for i in range(K)]
    masks = [expect(f"support_mask_{i}", (img_h, img_w)) for i in range(K)]

    if t_f.shape[0] != d or t_b.shape[0] != d:
        raise DimMismatch("text embedding dimension differs from visual dimension")
    if (attn < 0).any():
        raise NegativeAttention("attention stack has negative entries")
    for i, mask in enumerate(masks):
        if not np.isin(mask, (0, 1)).all():
            raise ShapeMismatch(f"support_mask_{i} is not binary")
        if not mask.any():
            raise EmptyMask(f"support_mask_{i} has no foreground pixels")

    return FeatureBundle(
        query_features=query,
        support_features=supports,
        support_masks=masks,
        text_embed_target=t_f,
        text_embed_background=t_b,
        attentions=attn,
        h=h,
        w=w,
        d=d,
        n=n,
        K=K,
        class_name=str(manifest["class_name"]),
        image_height=img_h,
        image_width=img_w,
        seed=manifest.get("seed"),
    )


def write_prior_stack(stack: PriorStack, path: str | Path) -> None:
    """Write a prior stack in the same manifest + raw-binary container."""
    directory = Path(path)
    try:
        directory.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise IoFailure(str(e)) from e
    channels = np.ascontiguousarray(stack.channels, dtype="<f4")
    arrays = [_write_array(directory, "channels", channels)]
    manifest = {
        "format": "clip-priors-stack",
        "version": 1,
        "class_name": stack.class_name,
        "channel_names": stack.channel_names,
        "metadata": stack.metadata,
        "arrays": arrays,
    }
    try:
        (directory / MANIFEST_NAME).write_text(
            json.dumps(manifest, indent=2), encoding="utf-8"
        )
    except OSError as e:
        raise IoFailure(str(e)) from e


def load_prior_stack(path: str | Path) -> PriorStack:
    directory = Path(path)
    manifest_path = directory / MANIFEST_NAME
    if not manifest_path.is_file():
        raise MissingArray(f"no {MANIFEST_NAME} in {directory}")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    entries = {e["name"]: e for e in manifest["arrays"]}
    if "channels" not in entries:
        raise MissingArray("manifest lacks array 'channels'")
    channels = _read_array(directory, entries["channels"])
    _check_finite("channels", channels)
    if channels.ndim != 3:
        raise ShapeMismatch(f"channels must be [C, h, w], got {channels.shape}")
    if (channels < 0).any() or (channels > 1).any():
        raise ShapeMismatch("channel values outside [0, 1]")
    return PriorStack(
        channels=channels,
        channel_names=list(manifest["channel_names"]),
        class_name=str(manifest["class_name"]),
        metadata=dict(manifest.get("metadata", {})),
    )
