"""Deterministic canned completions keyed by prompt hash.

The stub lets the whole pipeline run with no model behind it: same
(model, prompt) always yields the same completion at temperature zero,
and a seeded family of completions otherwise. Completions carry the
FUNC_OK / SEC_OK markers the bundled toy oracles grep for, with rates
chosen so mutated prompts flip labels often enough to exercise analysis
and probing.
"""

from __future__ import annotations

from ..hashing import fnv1a_64, splitmix64

FUNC_MARK = "FUNC_OK"
SEC_MARK = "SEC_OK"

# marker emission rates per 100 draws
_FUNC_RATE = 70
_SEC_RATE = 60


def stub_completion(model: str, prompt: str, temperature: float, sample_index: int, seed: int | None) -> str:
    base = fnv1a_64(f"{model}|{prompt}".encode("utf-8"))
    if temperature == 0.0:
        r = splitmix64(base)
    else:
        r = splitmix64(base ^ fnv1a_64(f"{seed or 0}|{sample_index}".encode("utf-8")))
    functional = r % 100 < _FUNC_RATE
    secure = (r >> 20) % 100 < _SEC_RATE
    lines = [f"// generated {(r >> 40) & 0xFFFFFF:06x}", "def solution():"]
    lines.append(f"    return {r % 997}")
    if functional:
        lines.append(f"# {FUNC_MARK}")
    if secure:
        lines.append(f"# {SEC_MARK}")
    return "\n".join(lines) + "\n"


def stub_completions(
    model: str, prompt: str, temperature: float, n: int, max_tokens: int, seed: int | None
) -> list[tuple[str, str]]:
    """n (text, finish_reason) pairs; finish honors a tiny max_tokens budget."""
    out = []
    for i in range(n):
        text = stub_completion(model, prompt, temperature, i, seed)
        words = text.split()
        if len(words) > max_tokens:
            text = " ".join(words[:max_tokens])
            out.append((text, "length"))
        else:
            out.append((text, "stop"))
    return out
