"""Feature extraction from a frozen CLIP ViT into prior-engine bundles.

The engine consumes a directory with a ``manifest.json`` plus raw
little-endian row-major binaries; this module produces that format directly
so the exporter stays decoupled from the engine's internals.

Patch tokens pass through the model's final visual projection so cosine
against the text embeddings is meaningful; attentions are taken post-softmax,
averaged over heads, with the class-token row and column removed. Input
images are resized to the nearest patch-multiple of the requested resolution
(473 -> 480 for 16-pixel patches) with position-embedding interpolation, and
the actual grid lands in the manifest.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from PIL import Image
from transformers import CLIPModel, CLIPTokenizer

from .templates import PromptTemplatePair

CLIP_MEAN = (0.48145466, 0.4578275, 0.40821073)
CLIP_STD = (0.26862954, 0.26130258, 0.27577711)

MANIFEST_NAME = "manifest.json"


class ExportError(Exception):
    pass


@dataclass
class ClipBackbone:
    model: CLIPModel
    tokenizer: CLIPTokenizer

    @classmethod
    def load(cls, model_path: str) -> "ClipBackbone":
        try:
            model = CLIPModel.from_pretrained(model_path, attn_implementation="eager")
            tokenizer = CLIPTokenizer.from_pretrained(model_path)
        except Exception as e:
            raise ExportError(f"cannot load CLIP model from {model_path!r}: {e}") from e
        model.eval()
        return cls(model=model, tokenizer=tokenizer)

    @property
    def patch_size(self) -> int:
        return self.model.config.vision_config.patch_size


def snap_resolution(requested: int, patch: int) -> int:
    """Nearest positive multiple of the patch size."""
    return max(patch, int(round(requested / patch)) * patch)


def preprocess_image(path: str | Path, resolution: int) -> torch.Tensor:
    try:
        img = Image.open(path).convert("RGB")
    except OSError as e:
        raise ExportError(f"cannot read image {path}: {e}") from e
    img = img.resize((resolution, resolution), Image.BICUBIC)
    arr = np.asarray(img, dtype=np.float32) / 255.0
    arr = (arr - np.array(CLIP_MEAN, dtype=np.float32)) / np.array(CLIP_STD, dtype=np.float32)
    return torch.from_numpy(arr).permute(2, 0, 1).unsqueeze(0)


def load_mask(path: str | Path, image_size: tuple[int, int], resolution: int) -> np.ndarray:
    """Binarize and resize a mask to the model resolution; sizes must match the image."""
    try:
        mask = Image.open(path).convert("L")
    except OSError as e:
        raise ExportError(f"cannot read mask {path}: {e}") from e
    if mask.size != image_size:
        raise ExportError(
            f"mask {path} size {mask.size} does not match its support image {image_size}"
        )
    mask = mask.resize((resolution, resolution), Image.NEAREST)
    return (np.asarray(mask) > 127).astype("u1")


@torch.no_grad()
def visual_forward(
    backbone: ClipBackbone, pixels: torch.Tensor, penultimate: bool = False
) -> tuple[np.ndarray, np.ndarray, int]:
    """Projected patch tokens [hw, d], head-averaged attentions [n, hw, hw], grid size."""
    model = backbone.model
    out = model.vision_model(
        pixels,
        output_attentions=True,
        output_hidden_states=True,
        interpolate_pos_encoding=True,
    )
    hidden = out.hidden_states[-2] if penultimate else out.last_hidden_state
    tokens = model.visual_projection(model.vision_model.post_layernorm(hidden))
    patch_tokens = tokens[0, 1:, :]  # drop the class token

    attn = torch.stack([a[0].mean(dim=0) for a in out.attentions])  # [n, 1+hw, 1+hw]
    attn = attn[:, 1:, 1:].clamp_min(0)

    hw = patch_tokens.shape[0]
    grid = int(round(hw**0.5))
    if grid * grid != hw:
        raise ExportError(f"non-square patch grid of {hw} tokens")
    return (
        patch_tokens.numpy().astype("<f4"),
        attn.numpy().astype("<f4"),
        grid,
    )


@torch.no_grad()
def text_embeddings(backbone: ClipBackbone, prompts: list[str]) -> np.ndarray:
    enc = backbone.tokenizer(prompts, padding=True, return_tensors="pt")
    model = backbone.model
    pooled = model.text_model(
        input_ids=enc.input_ids, attention_mask=enc.attention_mask
    ).pooler_output
    return model.text_projection(pooled).numpy().astype("<f4")


def _write_array(directory: Path, name: str, arr: np.ndarray) -> dict:
    dtype = "u8" if arr.dtype == np.dtype("u1") else "f32"
    fname = f"{name}.bin"
    (directory / fname).write_bytes(np.ascontiguousarray(arr).tobytes())
    return {"name": name, "dtype": dtype, "shape": list(arr.shape), "file": fname}


def export_bundle(
    backbone: ClipBackbone,
    query_image: str | Path,
    support: list[tuple[str, str]],  # (image, mask) pairs
    class_name: str,
    templates: PromptTemplatePair,
    out_dir: str | Path,
    resolution: int = 473,
    penultimate: bool = False,
) -> Path:
    """Extract one episode and write a bundle directory; returns its path."""
    if not support:
        raise ExportError("at least one support image:mask pair is required")
    res = snap_resolution(resolution, backbone.patch_size)

    query_px = preprocess_image(query_image, res)
    q_tokens, attentions, grid = visual_forward(backbone, query_px, penultimate)

    support_feats = []
    support_masks = []
    for img_path, mask_path in support:
        orig = Image.open(img_path)
        size = orig.size
        orig.close()
        px = preprocess_image(img_path, res)
        feats, _, s_grid = visual_forward(backbone, px, penultimate)
        if s_grid != grid:
            raise ExportError("support and query grids disagree")
        support_feats.append(feats)
        support_masks.append(load_mask(mask_path, size, res))

    prompts = list(templates.render(class_name))
    text = text_embeddings(backbone, prompts)
    if text.shape[1] != q_tokens.shape[1]:
        raise ExportError(
            f"text dim {text.shape[1]} != visual dim {q_tokens.shape[1]}"
        )

    directory = Path(out_dir)
    directory.mkdir(parents=True, exist_ok=True)
    arrays = [_write_array(directory, "query_features", q_tokens)]
    for i, (feats, mask) in enumerate(zip(support_feats, support_masks)):
        arrays.append(_write_array(directory, f"support_features_{i}", feats))
        arrays.append(_write_array(directory, f"support_mask_{i}", mask))
    arrays.append(_write_array(directory, "text_embed_target", text[0]))
    arrays.append(_write_array(directory, "text_embed_background", text[1]))
    arrays.append(_write_array(directory, "attentions", attentions))

    manifest = {
        "format": "clip-priors-bundle",
        "version": 1,
        "h": grid,
        "w": grid,
        "d": int(q_tokens.shape[1]),
        "n": int(attentions.shape[0]),
        "K": len(support),
        "class_name": class_name,
        "image_height": res,
        "image_width": res,
        "layout": "tokens_major",
        "prompts": prompts,
        "arrays": arrays,
    }
    (directory / MANIFEST_NAME).write_text(json.dumps(manifest, indent=2), encoding="utf-8")
    return directory
