"""Batch command-line interface."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .bundle_io import load_bundle, load_prior_stack, write_bundle
from .config import PriorConfig
from .errors import PriorError
from .oracles import SynthSpec, synth_bundle
from .pipeline import generate_prior_stack, render_heatmap, run_batch
from .vtp import gradcam_weights, vtp_map
from .vvp import vvp_multishot


def _config_options(fn):
    """Flags mirror PriorConfig one-to-one; None means "not given"."""
    opts = [
        click.option("--tau", type=float, default=None),
        click.option("--eps", type=float, default=None),
        click.option("--l-blocks", type=int, default=None),
        click.option("--sinkhorn-max-iters", type=int, default=None),
        click.option("--sinkhorn-tol", type=float, default=None),
        click.option("--box-theta", type=float, default=None),
        click.option(
            "--refinement-mode",
            type=click.Choice(["initial_D", "high_order_R"]),
            default=None,
        ),
        click.option("--refine-vtp/--no-refine-vtp", default=None),
        click.option("--refine-vvp/--no-refine-vvp", default=None),
        click.option("--enable-vtp/--no-enable-vtp", default=None),
        click.option("--enable-vvp/--no-enable-vvp", default=None),
        click.option("--vvp-foreground-only/--no-vvp-foreground-only", default=None),
        click.option("--bilinear-mask/--no-bilinear-mask", default=None),
        click.option("--box-per-component/--no-box-per-component", default=None),
        click.option("--config", "config_path", type=click.Path(exists=True), default=None),
    ]
    for opt in reversed(opts):
        fn = opt(fn)
    return fn


def _resolve_config(config_path: str | None, **flags) -> PriorConfig:
    base = PriorConfig.from_json(config_path) if config_path else PriorConfig()
    overrides = {k: v for k, v in flags.items() if v is not None}
    merged = base.to_dict()
    merged.update(overrides)
    cfg = PriorConfig.from_dict(merged)
    cfg.validate()
    return cfg


@click.group()
def main():
    """Training-free few-shot segmentation prior generation."""


@main.command()
@click.argument("bundles", nargs=-1, required=True, type=click.Path(exists=True))
def validate(bundles):
    """Validate bundle directories; exit nonzero if any fail."""
    failed = 0
    for path in bundles:
        try:
            load_bundle(path)
            click.echo(f"{path}: OK")
        except PriorError as e:
            failed += 1
            click.echo(f"{path}: {type(e).__name__}: {e}", err=True)
    sys.exit(1 if failed else 0)


@main.command()
@click.argument("inputs", nargs=-1, required=True, type=click.Path(exists=True))
@click.option("--output-dir", "-o", required=True, type=click.Path())
@click.option("--parallelism", type=int, default=1, show_default=True)
@_config_options
def prior(inputs, output_dir, parallelism, config_path, **flags):
    """Generate prior stacks for one or more bundle directories."""
    cfg = _resolve_config(config_path, **flags)
    summary = run_batch(inputs, cfg, output_dir, parallelism=parallelism)
    summary_path = Path(output_dir) / "summary.json"
    summary_path.write_text(json.dumps(summary, indent=2), encoding="utf-8")
    click.echo(json.dumps(summary, indent=2))
    sys.exit(0 if summary["n_failed"] == 0 else 1)


@main.command()
@click.argument("bundle_dir", type=click.Path(exists=True))
@click.option("--output", "-o", required=True, type=click.Path())
@_config_options
def vtp(bundle_dir, output, config_path, **flags):
    """Render the (unrefined) visual-text prior of one bundle as a PGM."""
    cfg = _resolve_config(config_path, **flags)
    bundle = load_bundle(bundle_dir)
    weights = gradcam_weights(
        bundle.query_features,
        bundle.text_embed_target,
        bundle.text_embed_background,
        cfg.tau,
    )
    prior_map = vtp_map(bundle.query_features, weights, (bundle.h, bundle.w), eps=cfg.eps)
    render_heatmap(prior_map, output)
    click.echo(f"wrote {output}")


@main.command()
@click.argument("bundle_dir", type=click.Path(exists=True))
@click.option("--output-dir", "-o", required=True, type=click.Path())
@_config_options
def vvp(bundle_dir, output_dir, config_path, **flags):
    """Render the per-shot visual-visual priors of one bundle as PGMs."""
    cfg = _resolve_config(config_path, **flags)
    bundle = load_bundle(bundle_dir)
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    maps = vvp_multishot(
        bundle,
        eps=cfg.eps,
        foreground_only=cfg.vvp_foreground_only,
        bilinear_mask=cfg.bilinear_mask,
    )
    for i, m in enumerate(maps):
        render_heatmap(m, out / f"vvp_{i}.pgm")
    click.echo(f"wrote {len(maps)} maps to {out}")


@main.command()
@click.argument("out_dir", type=click.Path())
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--grid-h", type=int, default=8, show_default=True)
@click.option("--grid-w", type=int, default=8, show_default=True)
@click.option("--dims", type=int, default=16, show_default=True)
@click.option("--blocks", type=int, default=12, show_default=True)
@click.option("--shots", type=int, default=1, show_default=True)
@click.option(
    "--planted",
    type=int,
    nargs=4,
    default=None,
    help="row0 col0 rows cols of a planted rectangle",
)
@click.option("--class-name", default="synthetic", show_default=True)
def synth(out_dir, seed, grid_h, grid_w, dims, blocks, shots, planted, class_name):
    """Write a deterministic synthetic bundle."""
    spec = SynthSpec(
        seed=seed,
        h=grid_h,
        w=grid_w,
        d=dims,
        n=blocks,
        K=shots,
        planted_region=tuple(planted) if planted else None,
        class_name=class_name,
    )
    write_bundle(synth_bundle(spec), out_dir)
    click.echo(f"wrote bundle to {out_dir}")


@main.command()
@click.argument("stack_dir", type=click.Path(exists=True))
@click.option("--output-dir", "-o", required=True, type=click.Path())
def render(stack_dir, output_dir):
    """Render every channel of a prior stack as a PGM."""
    stack = load_prior_stack(stack_dir)
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, chan in zip(stack.channel_names, stack.channels):
        render_heatmap(chan, out / f"{name}.pgm")
    click.echo(f"wrote {len(stack.channel_names)} channels to {out}")


if __name__ == "__main__":
    main()
