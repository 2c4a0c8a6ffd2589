"""Checkpoint-side exporters for the mutation harness's probe inputs."""

from .activations import extract_activations
from .containers import read_container, write_activation_container, write_embedding_container
from .embeddings import export_embeddings
from .errors import (
    ContainerFormatError,
    ExtractError,
    ModelLoadFailure,
    OutOfMemory,
    SpanReconstructionMismatch,
    TokenizerLoadFailure,
    WeightAccessFailure,
)
from .tokenization import export_tokenization, tokenize_prompt

__version__ = "0.1.0"

__all__ = [
    "ContainerFormatError",
    "ExtractError",
    "ModelLoadFailure",
    "OutOfMemory",
    "SpanReconstructionMismatch",
    "TokenizerLoadFailure",
    "WeightAccessFailure",
    "export_embeddings",
    "export_tokenization",
    "extract_activations",
    "read_container",
    "tokenize_prompt",
    "write_activation_container",
    "write_embedding_container",
    "__version__",
]
