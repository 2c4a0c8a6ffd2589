"""Prompt-mutation robustness and security evaluation harness.

Measures how minimal prompt mutations change the functional correctness and
security of LLM-generated code, and probes whether those outcomes are
predictable from prompt-end hidden states.
"""

__version__ = "0.1.0"
