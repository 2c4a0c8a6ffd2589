"""Checkpoint loading helpers wrapping the transformers auto classes."""

from __future__ import annotations

import torch

from .errors import ModelLoadFailure, TokenizerLoadFailure, WeightAccessFailure


def load_tokenizer(model_ref: str):
    from transformers import AutoTokenizer

    try:
        return AutoTokenizer.from_pretrained(model_ref)
    except Exception as e:
        raise TokenizerLoadFailure(f"cannot load tokenizer from {model_ref!r}: {e}") from e


def load_model(model_ref: str, device: str = "cpu"):
    from transformers import AutoModel

    try:
        model = AutoModel.from_pretrained(model_ref)
    except Exception as e:
        raise ModelLoadFailure(f"cannot load model from {model_ref!r}: {e}") from e
    model.eval()
    return model.to(device)


def input_embedding_matrix(model) -> torch.Tensor:
    try:
        weight = model.get_input_embeddings().weight
    except (AttributeError, NotImplementedError) as e:
        raise WeightAccessFailure(f"model exposes no input embedding matrix: {e}") from e
    if weight is None or weight.ndim != 2:
        raise WeightAccessFailure("input embedding weight is missing or not a matrix")
    return weight.detach()


def transformer_blocks(model) -> torch.nn.ModuleList:
    """The per-layer block list: the ModuleList matching config.num_hidden_layers."""
    layers = getattr(model.config, "num_hidden_layers", None)
    if not isinstance(layers, int) or layers < 1:
        raise ModelLoadFailure("config does not state num_hidden_layers")
    matches = [m for _, m in model.named_modules() if isinstance(m, torch.nn.ModuleList) and len(m) == layers]
    if not matches:
        raise ModelLoadFailure(f"no ModuleList of {layers} transformer blocks found")
    return matches[0]
