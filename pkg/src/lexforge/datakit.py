"""Prompt templates, instruction records and dataset construction.

The template strings are golden constants, byte-for-byte, including the
space before the final newline in "### Response: \n". Prompt and output are
tokenized separately and concatenated so the output mask is exact by
construction; a BPE merge can never straddle the boundary.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .errors import EmptyField, NoData, ParseError, SchemaError, TooLong
from .tokenizer import Vocabulary, encode
from .training import TrainExample

SUBSETS = ("a", "b", "c")

_PROMPT_HEAD = (
    "Below is an instruction that describes a task. "
    "Write a response that appropriately completes the request."
    "\n\n### Instruction:\n"
)
_PROMPT_TAIL = "\n\n### Response: \n"

_AUG_HEAD = (
    "我希望你担任语言专家的角色。我会给你一段与法律问答文本，请你使用正式的文风润色它。要求：\n"
    "1. 修正语法错误、标点符号错误，去掉特殊符号，必须使语句更通顺。\n"
    "2. 使逻辑更清晰、格式更规范，比如向<answer>中换行符。\n"
    "3. 使更礼貌，比如向<question>中加入“请问”等礼貌用语。\n"
    "4. 不要写任何解释性语句。\n"
    "5. <question>应该是问题，<answer>应该是答案。\n"
    "这段对话是：\n<question>:"
)
_AUG_MID = " \n<answer>:"
_AUG_TAIL = " \n\n以JSON格式返回结果："


@dataclass(frozen=True)
class InstructionRecord:
    instruction: str
    output: str
    subset: str

    def validate(self) -> "InstructionRecord":
        if self.subset not in SUBSETS:
            raise ValueError(f"subset must be one of {SUBSETS}, got {self.subset!r}")
        if not self.instruction.strip():
            raise EmptyField("instruction empty after trimming")
        if not self.output.strip():
            raise EmptyField("output empty after trimming")
        return self


@dataclass(frozen=True)
class RenderedText:
    text: str
    boundary: int  # character offset where the response begins


def render_test(instruction: str) -> str:
    """Inference-time wrapper: the training template cut after 'Response: \\n'."""
    if not instruction.strip():
        raise EmptyField("instruction empty after trimming")
    return _PROMPT_HEAD + instruction + _PROMPT_TAIL


def render_train(instruction: str, output: str) -> RenderedText:
    """Training wrapper; the prefix up to `boundary` equals render_test."""
    if not output.strip():
        raise EmptyField("output empty after trimming")
    prompt = render_test(instruction)
    return RenderedText(text=prompt + output, boundary=len(prompt))


def render_augmentation_prompt(record: InstructionRecord) -> str:
    """Polishing prompt sent to an external chat service for subset (c)."""
    record.validate()
    return _AUG_HEAD + record.instruction + _AUG_MID + record.output + _AUG_TAIL


def _find_json_object(text: str):
    """First decodable {...} span, skipping prose and code fences around it."""
    decoder = json.JSONDecoder()
    start = text.find("{")
    while start != -1:
        try:
            obj, _ = decoder.raw_decode(text[start:])
        except json.JSONDecodeError:
            start = text.find("{", start + 1)
            continue
        if isinstance(obj, dict):
            return obj
        start = text.find("{", start + 1)
    return None


def parse_augmentation_response(text: str) -> InstructionRecord:
    """Extract the refined (question, answer) pair from a service response.

    Accepts either question/answer or instruction/output key spellings and
    never aborts on junk around the JSON object; failures surface as typed
    errors instead.
    """
    obj = _find_json_object(text)
    if obj is None:
        raise ParseError("no JSON object found in response")
    for qkey, akey in (("question", "answer"), ("instruction", "output")):
        if qkey in obj and akey in obj:
            question, answer = obj[qkey], obj[akey]
            break
    else:
        raise SchemaError(f"response keys {sorted(obj)} lack question/answer")
    if not isinstance(question, str) or not isinstance(answer, str):
        raise SchemaError("question/answer values must be strings")
    return InstructionRecord(question.strip(), answer.strip(), subset="c").validate()


@dataclass
class DatasetBuild:
    records: list[InstructionRecord]
    counts: dict[str, int]
    proportions: dict[str, float]
    rejected: dict[str, int]

    @property
    def total(self) -> int:
        return len(self.records)


def build_dataset(sources: dict[str, list[InstructionRecord]]) -> DatasetBuild:
    """Validate, dedup exact (instruction, output) pairs, report proportions.

    Input order is preserved (subset a, then b, then c); invalid records are
    dropped and tallied per subset rather than failing the build.
    """
    records: list[InstructionRecord] = []
    rejected = {s: 0 for s in SUBSETS}
    seen: set[tuple[str, str]] = set()
    for subset in SUBSETS:
        for rec in sources.get(subset, []):
            rec = InstructionRecord(rec.instruction, rec.output, subset)
            try:
                rec.validate()
            except EmptyField:
                rejected[subset] += 1
                continue
            key = (rec.instruction, rec.output)
            if key in seen:
                continue
            seen.add(key)
            records.append(rec)
    if not records:
        raise NoData("no valid instruction records across all subsets")
    counts = {s: sum(1 for r in records if r.subset == s) for s in SUBSETS}
    total = len(records)
    proportions = {s: counts[s] / total for s in SUBSETS}
    return DatasetBuild(records, counts, proportions, rejected)


def tokenize_example(
    record: InstructionRecord, vocab: Vocabulary, context_length: int | None = None
) -> TrainExample:
    """BOS + prompt tokens + output tokens + EOS, with the output mask.

    The mask covers the output tokens and EOS; the template/instruction
    prefix is excluded so it never contributes to the fine-tuning loss.
    """
    record.validate()
    prompt_ids = encode(vocab, render_test(record.instruction))
    output_ids = encode(vocab, record.output)
    tokens = [vocab.bos_id] + prompt_ids + output_ids + [vocab.eos_id]
    if context_length is not None and len(tokens) > context_length:
        raise TooLong(f"example of {len(tokens)} tokens exceeds context {context_length}")
    first_output = 1 + len(prompt_ids)
    return TrainExample(
        tokens=tuple(tokens),
        output_index_set=frozenset(range(first_output, len(tokens))),
    )


# -- dataset files ------------------------------------------------------------

def write_dataset(records: list[InstructionRecord], path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(json.dumps(
                {"instruction": rec.instruction, "output": rec.output, "subset": rec.subset},
                ensure_ascii=False,
            ) + "\n")


def read_dataset(path) -> list[InstructionRecord]:
    records = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}:{lineno}: not a JSON record") from exc
            try:
                rec = InstructionRecord(obj["instruction"], obj["output"], obj["subset"])
            except KeyError as exc:
                raise SchemaError(f"{path}:{lineno}: missing key {exc}") from exc
            records.append(rec.validate())
    return records


def write_augmentation_batch(records: list[InstructionRecord], path) -> None:
    """Length-prefixed prompt blocks for offline replay through a chat service."""
    with open(path, "wb") as fh:
        for rec in records:
            payload = render_augmentation_prompt(rec).encode("utf-8")
            fh.write(f"{len(payload)}\n".encode("ascii"))
            fh.write(payload)
            fh.write(b"\n")


def read_augmentation_batch(path) -> list[str]:
    prompts = []
    with open(path, "rb") as fh:
        while True:
            header = fh.readline()
            if not header:
                break
            try:
                length = int(header.strip())
            except ValueError as exc:
                raise ParseError(f"{path}: bad length prefix {header!r}") from exc
            payload = fh.read(length)
            if len(payload) != length or fh.read(1) != b"\n":
                raise ParseError(f"{path}: truncated block")
            prompts.append(payload.decode("utf-8"))
    return prompts


def ingest_augmented_responses(path) -> tuple[list[InstructionRecord], list[str]]:
    """Parse one response per line into subset-(c) records; collect failures."""
    records: list[InstructionRecord] = []
    failures: list[str] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                records.append(parse_augmentation_response(line))
            except (ParseError, SchemaError, EmptyField) as exc:
                failures.append(f"line {lineno}: {exc}")
    return records, failures
