"""Autoregressive decoding over a trained model, plus the terminal REPL.

Every step re-runs the full forward (no KV cache): desk-scale contexts make
the quadratic cost acceptable and keep generation on the exact same code
path the equivalence tests exercise. Temperature applies before top-k/top-p
truncation; the kept probabilities are renormalized afterwards.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ContextOverflow
from .model import ModelParameters, forward
from .tokenizer import Vocabulary, decode, encode
from .datakit import render_test

STRATEGIES = ("greedy", "temperature", "top_k", "top_p")


@dataclass(frozen=True)
class GenerationParams:
    max_new_tokens: int
    strategy: str = "greedy"
    temperature: float = 1.0
    top_k: int | None = None
    top_p: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be positive")
        if self.strategy not in STRATEGIES:
            raise ValueError(f"strategy must be one of {STRATEGIES}")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")
        if self.strategy == "top_k" and (self.top_k is None or self.top_k < 1):
            raise ValueError("top_k strategy needs top_k >= 1")
        if self.strategy == "top_p" and (self.top_p is None or not 0 < self.top_p <= 1):
            raise ValueError("top_p strategy needs top_p in (0, 1]")


def _softmax(row: np.ndarray) -> np.ndarray:
    shifted = row - row.max()
    e = np.exp(shifted)
    return e / e.sum()


def sample_from_logits(
    row: np.ndarray,
    gen: GenerationParams,
    rng: np.random.Generator,
    forbidden: tuple[int, ...] = (),
) -> int:
    """One draw from a logits row under the configured strategy.

    Forbidden ids (BOS, PAD) are masked out before anything else. Ties in
    greedy and top-k resolve toward the lowest id, so decoding is stable.
    """
    logits = np.array(row, dtype=np.float64)
    logits[list(forbidden)] = -np.inf
    if gen.strategy == "greedy":
        return int(np.argmax(logits))
    logits = logits / gen.temperature
    if gen.strategy == "top_k":
        k = min(gen.top_k, int(np.isfinite(logits).sum()))
        order = np.argsort(-logits, kind="stable")
        cut = np.full_like(logits, -np.inf)
        cut[order[:k]] = logits[order[:k]]
        logits = cut
    probs = _softmax(logits)
    if gen.strategy == "top_p":
        order = np.argsort(-probs, kind="stable")
        cum = np.cumsum(probs[order])
        keep = int(np.searchsorted(cum, gen.top_p)) + 1  # smallest prefix reaching p
        mask = np.zeros_like(probs)
        mask[order[:keep]] = probs[order[:keep]]
        probs = mask / mask.sum()
    return int(rng.choice(probs.size, p=probs))


def generate(params: ModelParameters, prompt: list[int], gen: GenerationParams) -> list[int]:
    """Sample up to max_new_tokens after `prompt`; EOS stops and is dropped."""
    if not prompt:
        raise ValueError("prompt must be non-empty")
    cfg = params.config
    if len(prompt) + gen.max_new_tokens > cfg.context_length:
        raise ContextOverflow(
            f"prompt {len(prompt)} + max_new_tokens {gen.max_new_tokens} "
            f"exceeds context {cfg.context_length}"
        )
    bos_id = cfg.vocab_size - 3
    eos_id = cfg.vocab_size - 2
    pad_id = cfg.vocab_size - 1
    rng = np.random.default_rng(gen.seed)
    sequence = list(prompt)
    new_tokens: list[int] = []
    for _ in range(gen.max_new_tokens):
        logits = forward(params, None, sequence, mode="eval")
        token = sample_from_logits(logits.data[-1], gen, rng, forbidden=(bos_id, pad_id))
        if token == eos_id:
            break
        new_tokens.append(token)
        sequence.append(token)
    return new_tokens


def answer(params: ModelParameters, vocab: Vocabulary, instruction: str, gen: GenerationParams) -> str:
    """Wrap with the test template, generate until EOS, decode to text."""
    prompt = [vocab.bos_id] + encode(vocab, render_test(instruction))
    return decode(vocab, generate(params, prompt, gen))


def repl(
    params: ModelParameters,
    vocab: Vocabulary,
    gen: GenerationParams,
    in_stream,
    out_stream,
    as_json: bool = False,
) -> None:
    """One instruction per input line; response plus blank line per reply.

    With as_json each reply is a single JSON object line carrying the
    instruction, the response and the generated token count.
    """
    for line in in_stream:
        instruction = line.rstrip("\n")
        if not instruction.strip():
            continue
        prompt = [vocab.bos_id] + encode(vocab, render_test(instruction))
        tokens = generate(params, prompt, gen)
        response = decode(vocab, tokens)
        if as_json:
            out_stream.write(json.dumps(
                {"instruction": instruction, "response": response, "token_count": len(tokens)},
                ensure_ascii=False,
            ) + "\n")
        else:
            out_stream.write(response + "\n\n")
        out_stream.flush()
