import numpy as np
import pytest
from click.testing import CliRunner

from clip_exporter.cli import main as exporter_cli
from clip_exporter.export import ClipBackbone, ExportError, export_bundle, snap_resolution
from clip_exporter.templates import TEMPLATE_SETS

from clip_priors.bundle_io import load_bundle
from clip_priors.cli import main as engine_cli
from clip_priors.config import PriorConfig
from clip_priors.pipeline import generate_prior_stack


@pytest.fixture(scope="module")
def backbone(tiny_model_dir):
    return ClipBackbone.load(tiny_model_dir)


def test_snap_resolution():
    assert snap_resolution(473, 16) == 480
    assert snap_resolution(64, 16) == 64
    assert snap_resolution(5, 16) == 16


def _export(backbone, sample_episode, out, **kw):
    return export_bundle(
        backbone,
        query_image=sample_episode["query"],
        support=[(sample_episode["support"], sample_episode["mask"])],
        class_name="dog",
        templates=TEMPLATE_SETS["default"],
        out_dir=out,
        resolution=64,
        **kw,
    )


def test_exported_bundle_passes_engine_validation(backbone, sample_episode, tmp_path):
    out = _export(backbone, sample_episode, tmp_path / "ep")
    bundle = load_bundle(out)  # full structural validation
    assert bundle.h == bundle.w == 4  # 64px / 16px patches
    assert bundle.d == 24
    assert bundle.n == 3
    assert bundle.K == 1
    assert bundle.class_name == "dog"
    assert bundle.text_embed_target.shape[0] == bundle.query_features.shape[1]
    assert (bundle.attentions >= 0).all()

    res = CliRunner().invoke(engine_cli, ["validate", str(out)])
    assert res.exit_code == 0, res.output


def test_exported_bundle_runs_through_engine(backbone, sample_episode, tmp_path):
    out = _export(backbone, sample_episode, tmp_path / "ep")
    bundle = load_bundle(out)
    stack = generate_prior_stack(bundle, PriorConfig(l_blocks=3))
    assert stack.channels.shape == (2, 4, 4)
    assert stack.channels.min() >= 0.0 and stack.channels.max() <= 1.0


def test_reexport_is_stable(backbone, sample_episode, tmp_path):
    b1 = load_bundle(_export(backbone, sample_episode, tmp_path / "a"))
    b2 = load_bundle(_export(backbone, sample_episode, tmp_path / "b"))
    assert np.abs(b1.query_features - b2.query_features).max() <= 1e-6
    assert np.abs(b1.attentions - b2.attentions).max() <= 1e-6
    assert np.abs(b1.text_embed_target - b2.text_embed_target).max() <= 1e-6


def test_penultimate_flag_changes_features(backbone, sample_episode, tmp_path):
    b1 = load_bundle(_export(backbone, sample_episode, tmp_path / "a"))
    b2 = load_bundle(_export(backbone, sample_episode, tmp_path / "b", penultimate=True))
    assert np.abs(b1.query_features - b2.query_features).max() > 0


def test_position_embedding_interpolation(backbone, sample_episode, tmp_path):
    # native grid is 64/16 = 4; requesting 96 needs interpolation to a 6x6 grid
    out = export_bundle(
        backbone,
        query_image=sample_episode["query"],
        support=[(sample_episode["support"], sample_episode["mask"])],
        class_name="dog",
        templates=TEMPLATE_SETS["default"],
        out_dir=tmp_path / "ep",
        resolution=96,
    )
    bundle = load_bundle(out)
    assert bundle.h == bundle.w == 6
    assert bundle.image_height == 96


def test_mask_size_mismatch(backbone, sample_episode, tmp_path):
    from PIL import Image

    bad_mask = tmp_path / "bad_mask.png"
    Image.new("L", (10, 10), 255).save(bad_mask)
    with pytest.raises(ExportError):
        export_bundle(
            backbone,
            query_image=sample_episode["query"],
            support=[(sample_episode["support"], str(bad_mask))],
            class_name="dog",
            templates=TEMPLATE_SETS["default"],
            out_dir=tmp_path / "ep",
            resolution=64,
        )


def test_cli_end_to_end(tiny_model_dir, sample_episode, tmp_path):
    out = tmp_path / "ep"
    res = CliRunner().invoke(
        exporter_cli,
        [
            "export",
            "--query", sample_episode["query"],
            "--support", f"{sample_episode['support']}:{sample_episode['mask']}",
            "--class", "dog",
            "--model", tiny_model_dir,
            "--resolution", "64",
            "--template-set", "origami",
            "--out", str(out),
        ],
    )
    assert res.exit_code == 0, res.output
    bundle = load_bundle(out)
    assert bundle.class_name == "dog"
    import json

    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["prompts"] == [
        "a clean origami of dog",
        "a clean origami different from dog",
    ]
