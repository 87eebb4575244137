import json

import numpy as np
import pytest
import torch
from PIL import Image
from transformers import CLIPConfig, CLIPModel


@pytest.fixture(scope="session")
def tiny_model_dir(tmp_path_factory):
    """A small randomly initialized CLIP checkpoint plus a character tokenizer,
    saved to disk so the exporter exercises its real loading path offline."""
    torch.manual_seed(0)
    cfg = CLIPConfig(
        text_config={
            "hidden_size": 32,
            "intermediate_size": 64,
            "num_hidden_layers": 2,
            "num_attention_heads": 2,
            "vocab_size": 100,
            "max_position_embeddings": 77,
            "bos_token_id": 0,
            "eos_token_id": 1,
        },
        vision_config={
            "hidden_size": 32,
            "intermediate_size": 64,
            "num_hidden_layers": 3,
            "num_attention_heads": 2,
            "image_size": 64,
            "patch_size": 16,
        },
        projection_dim=24,
    )
    model = CLIPModel._from_config(cfg, attn_implementation="eager").eval()
    path = tmp_path_factory.mktemp("tiny_clip")
    model.save_pretrained(path)

    vocab = {"<|startoftext|>": 0, "<|endoftext|>": 1}
    for i, ch in enumerate("abcdefghijklmnopqrstuvwxyz"):
        vocab[ch] = 2 + 2 * i
        vocab[ch + "</w>"] = 3 + 2 * i
    (path / "vocab.json").write_text(json.dumps(vocab))
    (path / "merges.txt").write_text("#version: 0.2\n")
    return str(path)


@pytest.fixture(scope="session")
def sample_episode(tmp_path_factory):
    """Query image, support image, and a rectangular support mask."""
    rng = np.random.default_rng(7)
    root = tmp_path_factory.mktemp("images")

    def _image(name):
        arr = rng.integers(0, 256, size=(80, 80, 3), dtype=np.uint8)
        p = root / name
        Image.fromarray(arr).save(p)
        return str(p)

    query = _image("query.png")
    support = _image("support.png")
    mask = np.zeros((80, 80), dtype=np.uint8)
    mask[20:60, 16:64] = 255
    mask_path = root / "support_mask.png"
    Image.fromarray(mask).save(mask_path)
    return {"query": query, "support": support, "mask": str(mask_path)}
