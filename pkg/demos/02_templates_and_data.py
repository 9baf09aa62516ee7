"""Prompt templating and instruction-dataset construction.

Shows the training/test wrappers (byte-identical prefix), the polishing
prompt sent to an external chat service, response parsing, dataset
validation, and the output-token mask a fine-tuning example carries.
"""

from lexforge import (
    InstructionRecord,
    build_dataset,
    parse_augmentation_response,
    render_augmentation_prompt,
    render_test,
    render_train,
    tokenize_example,
    train_bpe,
)
from lexforge.tokenizer import decode

from toydata import RECORDS, corpus

record = RECORDS[1]
print("instruction:", record.instruction)
print("output:     ", record.output)

test_prompt = render_test(record.instruction)
train_text = render_train(record.instruction, record.output)
print("\n--- inference wrapper ---")
print(test_prompt, end="")
print("--- (response would continue here) ---")
assert train_text.text.startswith(test_prompt)
print(f"train rendering = test prefix + output: {train_text.text[train_text.boundary:]!r}")

print("\n--- augmentation prompt (to replay through a chat service) ---")
print(render_augmentation_prompt(record))

response = '润色结果：\n```json\n{"question": "请问起诉后法院多久立案？", "answer": "法院当日即会立案。"}\n```'
refined = parse_augmentation_response(response)
print("\nparsed service response ->", refined)

build = build_dataset({"a": RECORDS[:5], "b": RECORDS[5:], "c": [refined]})
print(f"\ndataset: {build.total} records, counts {build.counts}")
print("proportions:", {k: round(v, 3) for k, v in build.proportions.items()})

vocab = train_bpe(corpus(40_000), target_size=700)
example = tokenize_example(record, vocab)
masked = sorted(example.output_index_set)
print(f"\ntokenized example: {len(example.tokens)} tokens, mask covers {len(masked)}")
print("masked positions decode to:", decode(vocab, [example.tokens[i] for i in masked[:-1]]))
