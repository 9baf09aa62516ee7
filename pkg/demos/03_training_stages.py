"""The two-stage adaptation loop on a desk-scale model.

Stage 1 pre-trains adapters on raw legal documents (every position is a
target); stage 2 merges them and fine-tunes fresh adapters where only the
output tokens carry loss. Base weights never move; checkpoints round-trip
bit-exactly.
"""

import tempfile
import time
from pathlib import Path

import numpy as np

import lexforge as lf
from lexforge.model import forward

from toydata import RECORDS, corpus

t0 = time.time()
docs = corpus(60_000)
vocab = lf.train_bpe(docs, target_size=800)
encoded = [lf.encode(vocab, d) for d in docs]
examples = [lf.tokenize_example(r, vocab) for r in RECORDS]

config = lf.TransformerConfig(
    vocab_size=vocab.size, context_length=96, layers=2, heads=4,
    embed_dim=64, mlp_hidden_dim=128,
)
base = lf.ModelParameters.init(config, seed=0)
print(f"model: {config.layers} layers, embed {config.embed_dim}, vocab {config.vocab_size}")

lpt_cfg = lf.TrainConfig.for_stage("LPT", seed=0, batch_size=32)
print(f"\nstage 1 ({lpt_cfg.stage}): rank {lpt_cfg.lora.rank}, alpha {lpt_cfg.lora.alpha}, "
      f"lr {lpt_cfg.learning_rate}, epochs {lpt_cfg.epochs}")
lpt_ckpt = lf.run_stage(lpt_cfg, encoded, base)
print(f"  {lpt_ckpt.step_count} steps, final batch loss {lpt_ckpt.extras['final_batch_loss']:.3f}")

frozen = all(
    np.array_equal(base.tensors[k].data, lpt_ckpt.params.tensors[k].data)
    for k in base.tensors
)
print(f"  base weights untouched: {frozen}")

stage1 = lpt_ckpt.merged()
lft_cfg = lf.TrainConfig.for_stage(
    "LFT", seed=0, batch_size=4, epochs=40, learning_rate=2e-2, dropout=0.0, grad_clip=1.0
)
print(f"\nstage 2 ({lft_cfg.stage}): rank {lft_cfg.lora.rank}, alpha {lft_cfg.lora.alpha}, "
      f"desk-scale lr {lft_cfg.learning_rate}")
lft_ckpt = lf.run_stage(lft_cfg, examples, stage1)
model = lft_ckpt.merged()

mean_loss = np.mean([
    float(lf.lft_loss(forward(model, None, list(ex.tokens)), ex).data) for ex in examples
])
print(f"  {lft_ckpt.step_count} steps, masked loss over the set {mean_loss:.4f}")

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "model.ckpt"
    lf.save_checkpoint(lft_ckpt, path)
    loaded = lf.load_checkpoint(path)
    identical = all(
        np.array_equal(loaded.params.tensors[k].data, lft_ckpt.params.tensors[k].data)
        for k in lft_ckpt.params.tensors
    )
    print(f"\ncheckpoint {path.stat().st_size} bytes; reload bit-identical: {identical}")

print(f"total {time.time()-t0:.0f}s")
