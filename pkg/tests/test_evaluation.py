import pytest

import lexforge.evaluation as ev
from lexforge.datakit import render_test
from lexforge.errors import BadReference, NoData, UnknownMetric
from lexforge.evaluation import (
    EvalReport,
    EvalTask,
    compare_reports,
    load_fixture_dir,
    read_report,
    round1,
    run_eval,
    score_item,
    write_report,
)
from lexforge.generation import GenerationParams

TABLE_ROWS = {
    "GPT-3.5 Turbo": [29.5, 31.3, 35.5, 78.7, 76.8, 27.4, 61.2, 17.4],
    "GPT-4": [52.5, 27.5, 42.0, 82.6, 81.9, 48.6, 77.6, 19.6],
    "LLaMA": [1.0, 7.5, 7.0, 41.3, 54.2, 0.2, 14.4, 7.8],
    "LaWGPT": [0.2, 11.0, 15.7, 42.4, 40.8, 6.2, 15.4, 7.6],
}
PRINTED_AVERAGES = {"GPT-3.5 Turbo": 44.7, "GPT-4": 54.0, "LLaMA": 16.7, "LaWGPT": 17.4}


def report_for(model):
    return EvalReport.from_scores(model, {i + 1: s for i, s in enumerate(TABLE_ROWS[model])})


# -- scorers ---------------------------------------------------------------------

def test_choice_scorer_on_recorded_answer():
    prediction = "(A) 船舶抵押权的设定(B) 同国籍船舶在公海发生碰撞的损害赔偿"
    reference = "(A) 船舶抵押权的设定(B) 同国籍船舶在公海发生碰撞的损害赔偿"
    assert score_item(prediction, reference, "choice") == 1.0
    assert score_item("答案是 A 和 B", reference, "choice") == 1.0
    assert score_item("(A)", reference, "choice") == 0.0


def test_exact_scorer_normalizes():
    assert score_item("盗窃罪", "盗窃罪", "exact") == 1.0
    assert score_item("  盗窃罪 \n", "盗窃罪", "exact") == 1.0
    assert score_item("ＡＢＣ", "ABC", "exact") == 1.0  # full-width folds
    assert score_item("抢劫罪", "盗窃罪", "exact") == 0.0


def test_numeric_scorer_parses_units():
    assert score_item("监控布线款为15600元", "15600", "numeric") == 1.0
    assert score_item("约 15,600 元", "15600", "numeric") == 1.0
    assert score_item("大概两万", "15600", "numeric") == 0.0
    assert score_item("15600.1元", "15600", "numeric") == 0.0


def test_numeric_scorer_bad_reference():
    with pytest.raises(BadReference):
        score_item("123", "没有数字", "numeric")


def test_unknown_metric():
    with pytest.raises(UnknownMetric):
        score_item("a", "b", "bleu")


def test_round1_half_away_from_zero():
    assert round1(16.675) == 16.7
    assert round1(17.4125) == 17.4
    assert round1(0.05) == 0.1
    assert round1(99.949) == 99.9


# -- aggregation -------------------------------------------------------------------

def test_table_rows_reproduce_printed_averages():
    for model, printed in PRINTED_AVERAGES.items():
        assert abs(report_for(model).average - printed) < 0.05, model


def test_average_recomputable_and_bounded():
    report = report_for("LaWGPT")
    assert round1(sum(report.scores.values()) / 8) == report.average
    assert min(report.scores.values()) <= report.average <= max(report.scores.values())


def test_run_eval_perfect_predictions(monkeypatch, small_vocab):
    tasks = load_fixture_dir(ev.bundled_fixtures_dir())
    references = {inst: ref for t in tasks for inst, ref in t.items}
    monkeypatch.setattr(ev, "answer", lambda params, vocab, inst, gen: references[inst])
    report = run_eval(None, small_vocab, tasks, GenerationParams(max_new_tokens=4))
    assert all(score == 100.0 for score in report.scores.values())
    assert report.average == 100.0


def test_run_eval_failure_scores_zero_and_continues(monkeypatch, small_vocab):
    tasks = load_fixture_dir(ev.bundled_fixtures_dir())[:1]
    first_instruction = tasks[0].items[0][0]
    references = {inst: ref for inst, ref in tasks[0].items}

    def flaky(params, vocab, inst, gen):
        if inst == first_instruction:
            raise RuntimeError("boom")
        return references[inst]

    monkeypatch.setattr(ev, "answer", flaky)
    report = run_eval(None, small_vocab, tasks, GenerationParams(max_new_tokens=4))
    assert report.scores[tasks[0].id] == 90.0  # 9 of 10 items correct


def test_run_eval_requires_tasks(small_vocab):
    with pytest.raises(NoData):
        run_eval(None, small_vocab, [], GenerationParams(max_new_tokens=4))


def test_zero_shot_prompts_are_item_pure():
    tasks = load_fixture_dir(ev.bundled_fixtures_dir())
    items = [inst for t in tasks for inst, _ in t.items]
    prompt = render_test(items[0])
    assert all(other not in prompt for other in items[1:])


# -- comparison table ---------------------------------------------------------------

def test_compare_reproduces_paper_bolding():
    reports = [report_for(m) for m in ("GPT-3.5 Turbo", "GPT-4", "LLaMA", "LaWGPT")]
    comparison = compare_reports(reports, open_source={"LLaMA", "LaWGPT"})
    bold = comparison.bold
    assert {c for m, c in bold if m == "LaWGPT"} == {2, 3, 4, 6, 7, ev.AVG_COLUMN}
    assert {c for m, c in bold if m == "LLaMA"} == {1, 5, 8}
    assert not {m for m, _ in bold} - {"LLaMA", "LaWGPT"}  # proprietary rows never bolded
    table = comparison.render()
    assert "*17.4*" in table and "*54.0*" not in table


def test_single_report_fully_bolded():
    report = report_for("LaWGPT")
    comparison = compare_reports([report])
    assert len(comparison.bold) == 9  # eight tasks + average


def test_ties_bold_both():
    a = EvalReport.from_scores("a", {1: 50.0, 2: 10.0})
    b = EvalReport.from_scores("b", {1: 50.0, 2: 20.0})
    bold = compare_reports([a, b]).bold
    assert ("a", 1) in bold and ("b", 1) in bold


def test_compare_requires_reports():
    with pytest.raises(NoData):
        compare_reports([])


# -- fixtures and report files ---------------------------------------------------------

def test_bundled_fixtures_cover_all_tasks():
    tasks = load_fixture_dir(ev.bundled_fixtures_dir())
    assert [t.id for t in tasks] == list(range(1, 9))
    assert len({t.id for t in tasks}) == 8
    for task in tasks:
        assert task.name == ev.TASK_NAMES[task.id]
        assert task.items and task.metric in ev.SCORERS
        assert 10 <= len(task.items) <= 50


def test_report_file_roundtrip(tmp_path):
    report = report_for("LaWGPT")
    path = tmp_path / "report.json"
    write_report(report, path)
    assert read_report(path) == report
    # byte-determinism: rewriting produces identical bytes
    again = tmp_path / "again.json"
    write_report(read_report(path), again)
    assert path.read_bytes() == again.read_bytes()
