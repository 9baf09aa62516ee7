"""Decoding strategies over a quickly overfit model.

Greedy decoding is deterministic and reproduces trained outputs; the
sampling strategies (temperature, top-k, top-p) share one convention:
temperature first, truncate, renormalize.
"""

import lexforge as lf
from lexforge.generation import GenerationParams, answer

from toydata import RECORDS, corpus

docs = corpus(60_000)
vocab = lf.train_bpe(docs, target_size=800)
examples = [lf.tokenize_example(r, vocab) for r in RECORDS]
config = lf.TransformerConfig(
    vocab_size=vocab.size, context_length=96, layers=2, heads=4,
    embed_dim=64, mlp_hidden_dim=128,
)
base = lf.ModelParameters.init(config, seed=0)
stage1 = lf.run_stage(lf.TrainConfig.for_stage("LPT", seed=0, batch_size=32),
                      [lf.encode(vocab, d) for d in docs], base).merged()
model = lf.run_stage(
    lf.TrainConfig.for_stage("LFT", seed=0, batch_size=4, epochs=40,
                             learning_rate=2e-2, dropout=0.0, grad_clip=1.0),
    examples, stage1,
).merged()

print("greedy answers on trained instructions:")
greedy = GenerationParams(max_new_tokens=24, strategy="greedy")
for record in RECORDS[:4]:
    print(f"  {record.instruction} -> {answer(model, vocab, record.instruction, greedy)!r}"
          f"  (target {record.output!r})")

instruction = RECORDS[0].instruction
print(f"\nsampling variations for {instruction!r}:")
for gen in (
    GenerationParams(max_new_tokens=16, strategy="temperature", temperature=0.8, seed=1),
    GenerationParams(max_new_tokens=16, strategy="top_k", top_k=5, temperature=1.0, seed=2),
    GenerationParams(max_new_tokens=16, strategy="top_p", top_p=0.9, temperature=1.0, seed=3),
):
    label = gen.strategy + (f"(k={gen.top_k})" if gen.top_k else f"(p={gen.top_p})" if gen.top_p else f"(t={gen.temperature})")
    print(f"  {label:<18} -> {answer(model, vocab, instruction, gen)!r}")

twice = [answer(model, vocab, instruction, GenerationParams(max_new_tokens=16, strategy="top_p",
                                                            top_p=0.9, seed=42)) for _ in range(2)]
print(f"\nseeded sampling reproducible: {twice[0] == twice[1]}")
