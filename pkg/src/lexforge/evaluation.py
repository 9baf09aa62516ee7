"""Zero-shot task evaluation: registry, scorers, runner and report table.

Eight legal applications are registered by id. Scorers are deliberately
simple stand-ins (normalized exact match, option-letter set equality,
numeric equality at relative tolerance) behind a registry so they stay
swappable. Scores are percentages rounded half-away-from-zero to one
decimal; the average is the arithmetic mean of the eight, rounded the same
way.
"""

from __future__ import annotations

import json
import logging
import re
import unicodedata
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path

from .errors import BadReference, NoData, UnknownMetric
from .generation import GenerationParams, answer
from .model import ModelParameters
from .tokenizer import Vocabulary

log = logging.getLogger(__name__)

TASK_NAMES = {
    1: "fact-based article prediction",
    2: "scene-based article prediction",
    3: "charge prediction",
    4: "prison term prediction without article",
    5: "prison term prediction with article",
    6: "case analysis",
    7: "criminal damages calculation",
    8: "consultation",
}

AVG_COLUMN = "Avg."


@dataclass(frozen=True)
class EvalTask:
    id: int
    name: str
    items: tuple[tuple[str, str], ...]  # (instruction, reference)
    metric: str

    def __post_init__(self):
        if self.id not in TASK_NAMES:
            raise ValueError(f"task id must be 1..8, got {self.id}")
        if not self.items:
            raise ValueError(f"task #{self.id} has no items")


@dataclass(frozen=True)
class EvalReport:
    model: str
    scores: dict[int, float]  # task id -> percentage, one decimal
    average: float

    @classmethod
    def from_scores(cls, model: str, scores: dict[int, float]) -> "EvalReport":
        avg = round1(sum(scores.values()) / len(scores))
        return cls(model=model, scores=dict(scores), average=avg)


def round1(x: float) -> float:
    """One decimal, halves away from zero (matches the printed table style)."""
    return float(Decimal(repr(x)).quantize(Decimal("0.1"), rounding=ROUND_HALF_UP))


def _normalize(text: str) -> str:
    # NFKC folds full-width ASCII to half-width; whitespace runs collapse.
    return re.sub(r"\s+", " ", unicodedata.normalize("NFKC", text)).strip()


def _score_exact(prediction: str, reference: str) -> float:
    return 1.0 if _normalize(prediction) == _normalize(reference) else 0.0


_OPTION_RE = re.compile(r"(?<![A-Za-z0-9])([A-D])(?![A-Za-z0-9])")


def _extract_options(text: str) -> frozenset[str]:
    return frozenset(_OPTION_RE.findall(_normalize(text).upper()))


def _score_choice(prediction: str, reference: str) -> float:
    return 1.0 if _extract_options(prediction) == _extract_options(reference) else 0.0


_NUMBER_RE = re.compile(r"-?\d+(?:\.\d+)?")


def parse_number(text: str) -> float | None:
    """First number in the text; full-width digits fold, thousands commas drop."""
    cleaned = _normalize(text).replace(",", "")
    match = _NUMBER_RE.search(cleaned)
    return float(match.group()) if match else None


def _score_numeric(prediction: str, reference: str) -> float:
    expected = parse_number(reference)
    if expected is None:
        raise BadReference(f"reference {reference!r} holds no parseable number")
    got = parse_number(prediction)
    if got is None:
        return 0.0
    tolerance = 1e-6 * max(abs(expected), 1e-6)
    return 1.0 if abs(got - expected) <= tolerance else 0.0


SCORERS = {
    "exact": _score_exact,
    "choice": _score_choice,
    "numeric": _score_numeric,
}


def score_item(prediction: str, reference: str, metric: str) -> float:
    if metric not in SCORERS:
        raise UnknownMetric(f"no scorer registered for {metric!r}")
    return SCORERS[metric](prediction, reference)


def run_eval(
    params: ModelParameters,
    vocab: Vocabulary,
    tasks: list[EvalTask],
    gen: GenerationParams,
    model_name: str = "lexforge",
) -> EvalReport:
    """Answer every item zero-shot (no exemplars in the prompt) and score it.

    A generation failure on an item scores 0 and is logged; the run never
    aborts. With greedy decoding the whole report is reproducible.
    """
    if not tasks:
        raise NoData("no evaluation tasks supplied")
    scores: dict[int, float] = {}
    for task in tasks:
        item_scores = []
        for instruction, reference in task.items:
            try:
                prediction = answer(params, vocab, instruction, gen)
                item_scores.append(score_item(prediction, reference, task.metric))
            except Exception as exc:  # noqa: BLE001 - scored 0, run continues
                log.warning("task #%d item failed (%s); scored 0", task.id, exc)
                item_scores.append(0.0)
        scores[task.id] = round1(100.0 * sum(item_scores) / len(item_scores))
    return EvalReport.from_scores(model_name, scores)


@dataclass
class Comparison:
    """Per-model rows, plus which cells are bolded (best in column)."""

    reports: list[EvalReport]
    columns: list
    bold: set  # {(model, column)}

    def render(self) -> str:
        headers = ["Models"] + [f"#{c}" if isinstance(c, int) else c for c in self.columns]
        rows = []
        for report in self.reports:
            cells = [report.model]
            for col in self.columns:
                value = report.average if col == AVG_COLUMN else report.scores.get(col)
                text = "-" if value is None else f"{value:.1f}"
                if (report.model, col) in self.bold:
                    text = f"*{text}*"
                cells.append(text)
            rows.append(cells)
        widths = [max(len(r[i]) for r in [headers] + rows) for i in range(len(headers))]
        lines = ["  ".join(h.ljust(widths[i]) for i, h in enumerate(headers))]
        lines.append("  ".join("-" * w for w in widths))
        for cells in rows:
            lines.append("  ".join(c.rjust(widths[i]) if i else c.ljust(widths[0])
                                   for i, c in enumerate(cells)))
        return "\n".join(lines) + "\n"


def compare_reports(reports: list[EvalReport], open_source: set[str] | None = None) -> Comparison:
    """Table of all reports; best-per-column bolding over the open-source subset.

    Ties bold every row that attains the column maximum. When no subset is
    designated, every report competes.
    """
    if not reports:
        raise NoData("compare_reports needs at least one report")
    task_ids = sorted({tid for r in reports for tid in r.scores})
    columns = task_ids + [AVG_COLUMN]
    competing = [r for r in reports if open_source is None or r.model in open_source]
    bold: set = set()
    for col in columns:
        values = {}
        for report in competing:
            value = report.average if col == AVG_COLUMN else report.scores.get(col)
            if value is not None:
                values[report.model] = value
        if not values:
            continue
        best = max(values.values())
        bold.update((m, col) for m, v in values.items() if v == best)
    return Comparison(reports=list(reports), columns=columns, bold=bold)


# -- fixture and report files ---------------------------------------------------

_FIXTURE_RE = re.compile(r"task(\d+)")


def load_task_fixture(path) -> EvalTask:
    """One task per file: dataset lines plus `reference` and `metric` fields."""
    path = Path(path)
    match = _FIXTURE_RE.search(path.stem)
    if match is None:
        raise ValueError(f"fixture name must carry a task id, got {path.name}")
    task_id = int(match.group(1))
    items = []
    metric = None
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            items.append((obj["instruction"], obj["reference"]))
            metric = obj["metric"]
    return EvalTask(id=task_id, name=TASK_NAMES[task_id], items=tuple(items), metric=metric)


def load_fixture_dir(directory) -> list[EvalTask]:
    paths = sorted(Path(directory).glob("task*.jsonl"))
    tasks = [load_task_fixture(p) for p in paths]
    return sorted(tasks, key=lambda t: t.id)


def bundled_fixtures_dir() -> Path:
    return Path(__file__).parent / "fixtures"


def write_report(report: EvalReport, path) -> None:
    payload = {
        "model": report.model,
        "scores": {str(k): v for k, v in sorted(report.scores.items())},
        "average": report.average,
    }
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(payload, ensure_ascii=False, sort_keys=True) + "\n")


def read_report(path) -> EvalReport:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    return EvalReport(
        model=payload["model"],
        scores={int(k): v for k, v in payload["scores"].items()},
        average=payload["average"],
    )
