"""Episode orchestration: full prior-stack generation, batch runs, rendering."""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from .bundle_io import FeatureBundle, PriorStack, load_bundle, write_prior_stack
from .config import PriorConfig
from .errors import IoFailure, PriorError
from .pir import RefinementMatrix, box_mask, make_refinement, refine_prior
from .vtp import gradcam_weights, vtp_map
from .vvp import vvp_multishot


def generate_prior_stack(bundle: FeatureBundle, config: PriorConfig) -> PriorStack:
    """Compute the stacked prior channels for one episode.

    Channel order: the K per-shot visual-visual maps (refined when
    refine_vvp is set), then the visual-text map (refined by default).
    Disabled components are omitted and the omission recorded in metadata.
    """
    config.validate(n_blocks=bundle.n)
    grid = (bundle.h, bundle.w)

    needs_refinement = (config.enable_vtp and config.refine_vtp) or (
        config.enable_vvp and config.refine_vvp
    )
    refinement: RefinementMatrix | None = None
    if needs_refinement:
        refinement = make_refinement(
            bundle,
            l=config.l_blocks,
            mode=config.refinement_mode,
            max_iters=config.sinkhorn_max_iters,
            tol=config.sinkhorn_tol,
        )

    def _refine(prior: np.ndarray) -> np.ndarray:
        assert refinement is not None
        box = box_mask(prior, config.box_theta, per_component=config.box_per_component)
        return refine_prior(prior, refinement, box, eps=config.eps)

    channels: list[np.ndarray] = []
    names: list[str] = []

    if config.enable_vvp:
        for i, vv in enumerate(vvp_multishot(
            bundle,
            eps=config.eps,
            foreground_only=config.vvp_foreground_only,
            bilinear_mask=config.bilinear_mask,
        )):
            if config.refine_vvp:
                vv = _refine(vv)
                names.append(f"vvp_refined_{i}")
            else:
                names.append(f"vvp_{i}")
            channels.append(vv)

    if config.enable_vtp:
        weights = gradcam_weights(
            bundle.query_features,
            bundle.text_embed_target,
            bundle.text_embed_background,
            config.tau,
        )
        vt = vtp_map(bundle.query_features, weights, grid, eps=config.eps)
        if config.refine_vtp:
            vt = _refine(vt)
            names.append("vtp_refined")
        else:
            names.append("vtp")
        channels.append(vt)

    stacked = (
        np.stack(channels).astype("<f4")
        if channels
        else np.zeros((0, bundle.h, bundle.w), dtype="<f4")
    )
    return PriorStack(
        channels=stacked,
        channel_names=names,
        class_name=bundle.class_name,
        metadata={"config": config.to_dict(), "class_name": bundle.class_name},
    )


def _process_episode(
    input_dir: Path, config: PriorConfig, output_dir: Path
) -> dict[str, Any]:
    start = time.perf_counter()
    record: dict[str, Any] = {"path": str(input_dir)}
    try:
        bundle = load_bundle(input_dir)
        stack = generate_prior_stack(bundle, config)
        write_prior_stack(stack, output_dir / input_dir.name)
        record["status"] = "ok"
        record["channels"] = [
            {
                "name": name,
                "min": float(chan.min()),
                "max": float(chan.max()),
                "mean": float(chan.mean()),
            }
            for name, chan in zip(stack.channel_names, stack.channels)
        ]
    except PriorError as e:
        record["status"] = "error"
        record["error"] = f"{type(e).__name__}: {e}"
    record["timing_ms"] = (time.perf_counter() - start) * 1000.0
    return record


def run_batch(
    input_dirs: Sequence[str | Path],
    config: PriorConfig,
    output_dir: str | Path,
    parallelism: int = 1,
) -> dict[str, Any]:
    """Process bundles into prior stacks; per-episode failures are recorded,
    not fatal. The summary is ordered by input order regardless of
    completion order, and outputs are independent of the parallelism degree.
    """
    out = Path(output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise IoFailure(str(e)) from e

    dirs = [Path(p) for p in input_dirs]
    if parallelism <= 1 or len(dirs) <= 1:
        episodes = [_process_episode(p, config, out) for p in dirs]
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            episodes = list(pool.map(lambda p: _process_episode(p, config, out), dirs))

    return {
        "episodes": episodes,
        "n_ok": sum(1 for e in episodes if e["status"] == "ok"),
        "n_failed": sum(1 for e in episodes if e["status"] == "error"),
    }


def render_heatmap(values: np.ndarray, path: str | Path) -> None:
    """Write a map in [0, 1] as a binary PGM (P5, maxval 255), one pixel per
    grid cell, pixel = round-half-up of 255 * value."""
    m = np.asarray(values, dtype=np.float64)
    if m.ndim != 2:
        raise IoFailure(f"expected a 2D map, got shape {m.shape}")
    pixels = np.clip(np.floor(255.0 * m + 0.5), 0, 255).astype(np.uint8)
    h, w = pixels.shape
    header = f"P5\n{w} {h}\n255\n".encode("ascii")
    try:
        Path(path).write_bytes(header + pixels.tobytes())
    except OSError as e:
        raise IoFailure(str(e)) from e
