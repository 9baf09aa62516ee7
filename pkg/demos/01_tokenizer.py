"""Byte-level BPE from scratch: train, inspect, round-trip, persist.

The tokenizer's atoms are the 256 byte values, so Chinese legal prose needs
no character inventory; merges are learned greedily by pair frequency with
deterministic tie-breaking.
"""

import tempfile
from pathlib import Path

from lexforge import decode, encode, load_vocabulary, save_vocabulary, train_bpe

from toydata import corpus

docs = corpus(40_000)
print(f"training corpus: {len(docs)} documents")

vocab = train_bpe(docs, target_size=700)
print(f"vocabulary: 256 bytes + {len(vocab.merges)} merges + 3 specials = {vocab.size}")
print(f"special ids: BOS={vocab.bos_id} EOS={vocab.eos_id} PAD={vocab.pad_id}")

print("\nfirst merges learned (byte pairs -> new id):")
for k, (left, right) in enumerate(vocab.merges[:5]):
    piece = decode(vocab, [256 + k])
    print(f"  ({left:>3}, {right:>3}) -> {256 + k}  {piece!r}")

text = "上诉人因装修合同纠纷提起上诉，监控布线款为15600元。"
ids = encode(vocab, text)
print(f"\n{text!r}")
print(f"  -> {len(text.encode('utf-8'))} bytes -> {len(ids)} tokens")
print(f"  round-trip ok: {decode(vocab, ids) == text}")

with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "vocab.txt"
    save_vocabulary(vocab, path)
    again = load_vocabulary(path)
    print(f"\nmanifest round-trip identical: {again == vocab}")
    print("manifest head:", path.read_text().splitlines()[:4])
