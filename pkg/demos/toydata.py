"""Shared toy inputs for the demo scripts: a small synthetic legal corpus
and a handful of instruction records."""

import numpy as np

from lexforge import InstructionRecord

RECORDS = [
    InstructionRecord(i, o, "a")
    for i, o in [
        ("借款纠纷应向哪个法院起诉？", "被告住所地法院。"),
        ("起诉后法院多久立案？", "当日立案。"),
        ("民事诉讼普通时效几年？", "三年。"),
        ("离婚冷静期是多久？", "三十日。"),
        ("劳动仲裁时效是多久？", "一年。"),
        ("试用期最长不得超过多久？", "六个月。"),
        ("商标注册有效期是几年？", "十年。"),
        ("合同无效的后果是什么？", "返还财产。"),
    ]
]

_PHRASES = [
    "上诉人学校因装饰装修合同纠纷一案向本院提起上诉",
    "一审判决认定事实不清属漏审漏判",
    "监控布线款为15600元超出当事人的诉请",
    "依照《中华人民共和国民事诉讼法》之规定裁定如下",
    "预交的二审案件受理费6579元予以退回",
    "Below is an instruction that describes a task.",
    "Write a response that appropriately completes the request.",
    "### Instruction:",
    "### Response: ",
]


def corpus(target_bytes: int = 60_000, seed: int = 7) -> list[str]:
    rng = np.random.default_rng(seed)
    record_text = [f"{r.instruction}{r.output}" for r in RECORDS]
    docs, total = [], 0
    while total < target_bytes:
        parts = []
        for _ in range(int(rng.integers(4, 9))):
            pool = record_text if rng.random() < 0.5 else _PHRASES
            parts.append(str(rng.choice(pool)))
        doc = "。".join(parts)
        docs.append(doc)
        total += len(doc.encode("utf-8")) + 2
    return docs
