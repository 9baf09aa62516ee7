import io
import json

import pytest

from lexforge.cli import main
from lexforge.datakit import InstructionRecord, write_dataset

from toytext import TOY_RECORDS, toy_corpus


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Inputs plus the full tiny pipeline run once through the CLI."""
    root = tmp_path_factory.mktemp("cli")
    corpus_path = root / "corpus.txt"
    corpus_path.write_text("\n\n".join(toy_corpus(30_000, seed=13)), encoding="utf-8")

    write_dataset(TOY_RECORDS[:12], root / "subset_a.jsonl")
    write_dataset(
        [InstructionRecord(r.instruction, r.output, "b") for r in TOY_RECORDS[12:20]],
        root / "subset_b.jsonl",
    )

    steps = [
        ["tokenizer", "train", "--corpus", str(corpus_path), "--target-size", "700",
         "--out", str(root / "vocab.txt")],
        ["data", "build", "--subset-a", str(root / "subset_a.jsonl"),
         "--subset-b", str(root / "subset_b.jsonl"),
         "--out", str(root / "dataset.jsonl"), "--report", str(root / "build_report.json")],
        ["data", "augment-prompts", "--dataset", str(root / "dataset.jsonl"),
         "--out", str(root / "prompts.bin")],
        ["train", "lpt", "--corpus", str(corpus_path), "--vocab", str(root / "vocab.txt"),
         "--out", str(root / "lpt.ckpt"), "--context-length", "160", "--layers", "1",
         "--heads", "2", "--embed-dim", "32", "--mlp-hidden-dim", "64",
         "--batch-size", "16", "--epochs", "1", "--seed", "3"],
        ["merge", "--checkpoint", str(root / "lpt.ckpt"), "--out", str(root / "lpt_merged.ckpt")],
        ["train", "lft", "--dataset", str(root / "dataset.jsonl"), "--vocab", str(root / "vocab.txt"),
         "--from-lpt", str(root / "lpt_merged.ckpt"), "--out", str(root / "lft.ckpt"),
         "--batch-size", "4", "--epochs", "2", "--seed", "3"],
        ["merge", "--checkpoint", str(root / "lft.ckpt"), "--out", str(root / "model.ckpt")],
    ]
    for argv in steps:
        assert main(argv) == 0, f"failed: {argv}"
    return root


def test_pipeline_artifacts_exist(workspace):
    for name in ("vocab.txt", "dataset.jsonl", "prompts.bin", "lpt.ckpt", "lft.ckpt", "model.ckpt"):
        assert (workspace / name).exists()
    report = json.loads((workspace / "build_report.json").read_text(encoding="utf-8"))
    assert report["total"] == 20


def test_ingest_augmented_roundtrip(workspace):
    responses = workspace / "responses.jsonl"
    responses.write_text(
        '{"question":"请问新问","answer":"新答。"}\njunk\n', encoding="utf-8"
    )
    assert main(["data", "ingest-augmented", "--responses", str(responses),
                 "--out", str(workspace / "subset_c.jsonl")]) == 0
    records = (workspace / "subset_c.jsonl").read_text(encoding="utf-8").strip().splitlines()
    assert json.loads(records[0])["subset"] == "c"


def test_generate_prints_response(workspace, capsys):
    assert main(["generate", "--checkpoint", str(workspace / "model.ckpt"),
                 "--vocab", str(workspace / "vocab.txt"),
                 "--instruction", "请问民事诉讼普通时效几年？",
                 "--max-new-tokens", "8", "--seed", "3"]) == 0
    assert capsys.readouterr().out.endswith("\n")


def test_chat_json_mode(workspace, capsys, monkeypatch):
    monkeypatch.setattr("sys.stdin", io.StringIO("请问一个问题\n"))
    assert main(["chat", "--checkpoint", str(workspace / "model.ckpt"),
                 "--vocab", str(workspace / "vocab.txt"), "--json",
                 "--max-new-tokens", "4", "--seed", "3"]) == 0
    payload = json.loads(capsys.readouterr().out.strip())
    assert set(payload) == {"instruction", "response", "token_count"}


def test_eval_is_byte_deterministic(workspace):
    from lexforge.evaluation import bundled_fixtures_dir

    for out in ("report1.json", "report2.json"):
        assert main(["eval", "--checkpoint", str(workspace / "model.ckpt"),
                     "--vocab", str(workspace / "vocab.txt"),
                     "--fixtures", str(bundled_fixtures_dir()),
                     "--out", str(workspace / out),
                     "--max-new-tokens", "4", "--seed", "3"]) == 0
    assert (workspace / "report1.json").read_bytes() == (workspace / "report2.json").read_bytes()


def test_report_table(workspace, capsys):
    assert main(["report", "--reports", str(workspace / "report1.json")]) == 0
    table = capsys.readouterr().out
    assert "Avg." in table and "lexforge" in table


def test_lft_without_from_lpt_exits_3(workspace):
    assert main(["train", "lft", "--dataset", str(workspace / "dataset.jsonl"),
                 "--vocab", str(workspace / "vocab.txt"),
                 "--out", str(workspace / "nope.ckpt")]) == 3


def test_lft_from_base_stage_checkpoint_exits_3(workspace, tmp_path):
    import lexforge as lf
    from lexforge.training import Checkpoint

    config = lf.TransformerConfig(vocab_size=700, context_length=16, layers=1,
                                  heads=2, embed_dim=8, mlp_hidden_dim=16)
    base = lf.ModelParameters.init(config, seed=0)
    path = tmp_path / "base.ckpt"
    lf.save_checkpoint(Checkpoint(params=base, adapters=None, stage="base",
                                  step_count=0, seed=0), path)
    assert main(["train", "lft", "--dataset", str(workspace / "dataset.jsonl"),
                 "--vocab", str(workspace / "vocab.txt"), "--from-lpt", str(path),
                 "--out", str(workspace / "nope.ckpt")]) == 3


def test_missing_file_exits_2(workspace):
    assert main(["tokenizer", "train", "--corpus", str(workspace / "absent.txt"),
                 "--target-size", "300", "--out", str(workspace / "v.txt")]) == 2


def test_missing_required_flag_exits_2():
    with pytest.raises(SystemExit) as excinfo:
        main(["tokenizer", "train", "--target-size", "300"])
    assert excinfo.value.code == 2


def test_corrupt_checkpoint_exits_5(workspace, tmp_path):
    blob = bytearray((workspace / "model.ckpt").read_bytes())
    blob[len(blob) // 2] ^= 0xFF
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(bytes(blob))
    assert main(["generate", "--checkpoint", str(bad),
                 "--vocab", str(workspace / "vocab.txt"),
                 "--instruction", "问", "--max-new-tokens", "4"]) == 5


def test_invalid_data_exits_4(workspace, tmp_path):
    empty = tmp_path / "empty.jsonl"
    empty.write_text("", encoding="utf-8")
    assert main(["data", "build", "--subset-a", str(empty),
                 "--out", str(tmp_path / "out.jsonl")]) == 4


def test_config_file_supplies_defaults(workspace, tmp_path, capsys):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"generation": {"max_new_tokens": 4}, "seed": 3}))
    assert main(["--config", str(config), "generate",
                 "--checkpoint", str(workspace / "model.ckpt"),
                 "--vocab", str(workspace / "vocab.txt"),
                 "--instruction", "请问？"]) == 0
    capsys.readouterr()


def test_config_env_var_is_fallback(workspace, tmp_path, capsys, monkeypatch):
    config = tmp_path / "env_config.json"
    config.write_text(json.dumps({"generation": {"max_new_tokens": 4}, "seed": 3}))
    monkeypatch.setenv("LEXFORGE_CONFIG", str(config))
    assert main(["generate", "--checkpoint", str(workspace / "model.ckpt"),
                 "--vocab", str(workspace / "vocab.txt"),
                 "--instruction", "请问？"]) == 0
    capsys.readouterr()
