"""Exporter command-line interface."""

from __future__ import annotations

import sys

import click

from .export import ClipBackbone, ExportError, export_bundle
from .templates import resolve_template_set


@click.group()
def main():
    """Extract CLIP features into prior-engine bundles."""


@main.command()
@click.option("--query", required=True, type=click.Path(exists=True))
@click.option(
    "--support",
    "support_pairs",
    multiple=True,
    required=True,
    help="IMG:MASK pair; repeat for more shots",
)
@click.option("--class", "class_name", required=True)
@click.option("--template-set", default="default", show_default=True,
              help="default | origami | path to a custom JSON pair")
@click.option("--model", default="openai/clip-vit-base-patch16", show_default=True,
              help="Hugging Face model name or local checkpoint directory")
@click.option("--resolution", type=int, default=473, show_default=True,
              help="requested input size; snapped to the nearest patch multiple")
@click.option("--penultimate", is_flag=True,
              help="take patch tokens from the penultimate block instead of the last")
@click.option("--out", required=True, type=click.Path())
def export(query, support_pairs, class_name, template_set, model, resolution,
           penultimate, out):
    """Export one episode (query + K support shots) as a bundle directory."""
    support = []
    for pair in support_pairs:
        if ":" not in pair:
            raise click.BadParameter(f"--support expects IMG:MASK, got {pair!r}")
        img, mask = pair.rsplit(":", 1)
        support.append((img, mask))
    try:
        templates = resolve_template_set(template_set)
        backbone = ClipBackbone.load(model)
        path = export_bundle(
            backbone,
            query_image=query,
            support=support,
            class_name=class_name,
            templates=templates,
            out_dir=out,
            resolution=resolution,
            penultimate=penultimate,
        )
    except (ExportError, ValueError) as e:
        click.echo(f"export failed: {e}", err=True)
        sys.exit(1)
    click.echo(f"wrote bundle to {path}")


if __name__ == "__main__":
    main()
