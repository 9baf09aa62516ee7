"""Task registry, scoring and report aggregation.

First the plumbing on published numbers: feeding per-task rows into the
aggregator reproduces their printed averages and best-in-column bolding.
Then a real zero-shot run of a tiny model over the bundled toy fixtures.
"""

import lexforge as lf
from lexforge.evaluation import (
    EvalReport,
    bundled_fixtures_dir,
    compare_reports,
    load_fixture_dir,
    run_eval,
    score_item,
)
from lexforge.generation import GenerationParams

from toydata import corpus

print("scorer spot checks:")
print("  choice  :", score_item("(A) 船舶抵押权的设定(B) 同国籍船舶碰撞", "答案为 A、B", "choice"))
print("  numeric :", score_item("监控布线款为15600元", "15600", "numeric"))
print("  exact   :", score_item(" 盗窃罪\n", "盗窃罪", "exact"))

rows = {
    "GPT-3.5 Turbo": [29.5, 31.3, 35.5, 78.7, 76.8, 27.4, 61.2, 17.4],
    "GPT-4": [52.5, 27.5, 42.0, 82.6, 81.9, 48.6, 77.6, 19.6],
    "LLaMA": [1.0, 7.5, 7.0, 41.3, 54.2, 0.2, 14.4, 7.8],
    "LaWGPT": [0.2, 11.0, 15.7, 42.4, 40.8, 6.2, 15.4, 7.6],
}
reports = [EvalReport.from_scores(m, {i + 1: s for i, s in enumerate(r)}) for m, r in rows.items()]
print("\nrecomputed averages:", {r.model: r.average for r in reports})
print("\ncomparison (best open-source cell per column in *bold*):\n")
print(compare_reports(reports, open_source={"LLaMA", "LaWGPT"}).render())

docs = corpus(40_000)
vocab = lf.train_bpe(docs, target_size=700)
config = lf.TransformerConfig(vocab_size=vocab.size, context_length=192, layers=1,
                              heads=2, embed_dim=32, mlp_hidden_dim=64)
model = lf.ModelParameters.init(config, seed=5)  # untrained: expect zeros
tasks = load_fixture_dir(bundled_fixtures_dir())
report = run_eval(model, vocab, tasks, GenerationParams(max_new_tokens=8), model_name="tiny-demo")
print("zero-shot toy-fixture run (untrained model, scores are plumbing only):")
print(compare_reports([report]).render())
