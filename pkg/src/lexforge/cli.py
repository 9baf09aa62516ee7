"""Command-line pipeline driver.

Subcommands mirror the stage order: tokenizer train, data build /
augment-prompts / ingest-augmented, train lpt, train lft, merge, generate,
chat, eval, report. Flags win over the optional JSON config file (--config
or $LEXFORGE_CONFIG). Progress goes to stderr; machine-readable output goes
to files or stdout.

Exit codes: 0 success, 2 missing input, 3 stage-order violation,
4 data validation failure, 5 checkpoint integrity failure, 1 unexpected.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import datakit, evaluation, generation, tokenizer, training
from .errors import (
    BadReference,
    ChecksumError,
    ContextOverflow,
    CorpusEmpty,
    EmptyField,
    EmptyOutputMask,
    LexforgeError,
    NoData,
    NoTargets,
    ParseError,
    SchemaError,
    ShapeError,
    StagePreconditionError,
    TooLong,
    UnknownMetric,
    UnknownToken,
    VersionError,
    VocabTooSmall,
)
from .model import ModelParameters, TransformerConfig

CONFIG_ENV = "LEXFORGE_CONFIG"

EXIT_MISSING_INPUT = 2
EXIT_STAGE_ORDER = 3
EXIT_DATA_INVALID = 4
EXIT_CHECKPOINT = 5

_MODEL_DEFAULTS = dict(context_length=256, layers=2, heads=4, embed_dim=64, mlp_hidden_dim=128)


class _MissingInput(LexforgeError):
    def __init__(self, flag: str, path):
        super().__init__(f"input for {flag} not found: {path}")


def _status(message: str) -> None:
    print(message, file=sys.stderr)


def _require(flag: str, path) -> Path:
    path = Path(path)
    if not path.exists():
        raise _MissingInput(flag, path)
    return path


def _load_config(path_flag) -> dict:
    path = path_flag or os.environ.get(CONFIG_ENV)
    if not path:
        return {}
    with open(_require("--config", path), "r", encoding="utf-8") as fh:
        return json.load(fh)


def _section(config: dict, name: str, defaults: dict) -> dict:
    merged = dict(defaults)
    merged.update(config.get(name, {}))
    return merged


def _pick(flag_value, section: dict, key: str):
    return flag_value if flag_value is not None else section.get(key)


def _read_corpus(path: Path) -> list[str]:
    """Documents separated by blank lines in one UTF-8 file."""
    text = path.read_text(encoding="utf-8")
    docs = [block.strip() for block in text.split("\n\n")]
    return [d for d in docs if d]


def _outdir(path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _model_config(args, config: dict, vocab_size: int) -> TransformerConfig:
    section = _section(config, "model", _MODEL_DEFAULTS)
    return TransformerConfig(
        vocab_size=vocab_size,
        context_length=_pick(args.context_length, section, "context_length"),
        layers=_pick(args.layers, section, "layers"),
        heads=_pick(args.heads, section, "heads"),
        embed_dim=_pick(args.embed_dim, section, "embed_dim"),
        mlp_hidden_dim=_pick(args.mlp_hidden_dim, section, "mlp_hidden_dim"),
    )


def _train_config(stage: str, args, config: dict) -> training.TrainConfig:
    section = _section(config, stage.lower(), {})
    overrides = {}
    for key in ("learning_rate", "batch_size", "epochs", "rank", "alpha", "dropout", "grad_clip"):
        value = _pick(getattr(args, key), section, key)
        if value is not None:
            overrides[key] = value
    seed = _pick(args.seed, config, "seed")
    return training.TrainConfig.for_stage(stage, seed=seed if seed is not None else 0, **overrides)


def _gen_params(args, config: dict) -> generation.GenerationParams:
    section = _section(config, "generation", {})
    seed = _pick(getattr(args, "seed", None), config, "seed")
    return generation.GenerationParams(
        max_new_tokens=_pick(args.max_new_tokens, section, "max_new_tokens") or 64,
        strategy=_pick(args.strategy, section, "strategy") or "greedy",
        temperature=_pick(args.temperature, section, "temperature") or 1.0,
        top_k=_pick(args.top_k, section, "top_k"),
        top_p=_pick(args.top_p, section, "top_p"),
        seed=seed if seed is not None else 0,
    )


def _load_model(args) -> tuple[ModelParameters, tokenizer.Vocabulary]:
    ckpt = training.load_checkpoint(_require("--checkpoint", args.checkpoint))
    vocab = tokenizer.load_vocabulary(_require("--vocab", args.vocab))
    return ckpt.merged(), vocab


# -- command handlers -----------------------------------------------------------

def _cmd_tokenizer_train(args, config):
    corpus = _read_corpus(_require("--corpus", args.corpus))
    vocab = tokenizer.train_bpe(corpus, args.target_size)
    tokenizer.save_vocabulary(vocab, _outdir(args.out))
    _status(f"trained {len(vocab.merges)} merges -> {args.out} (vocab size {vocab.size})")
    return 0


def _cmd_data_build(args, config):
    sources = {}
    for subset, flag in (("a", args.subset_a), ("b", args.subset_b), ("c", args.subset_c)):
        if flag:
            sources[subset] = datakit.read_dataset(_require(f"--subset-{subset}", flag))
    if not sources:
        raise NoData("no subset files supplied")
    build = datakit.build_dataset(sources)
    datakit.write_dataset(build.records, _outdir(args.out))
    summary = {
        "total": build.total,
        "counts": build.counts,
        "proportions": build.proportions,
        "rejected": build.rejected,
    }
    if args.report:
        with open(_outdir(args.report), "w", encoding="utf-8") as fh:
            json.dump(summary, fh, ensure_ascii=False, sort_keys=True, indent=2)
    _status(f"dataset -> {args.out}: {json.dumps(summary, ensure_ascii=False, sort_keys=True)}")
    return 0


def _cmd_data_augment_prompts(args, config):
    records = datakit.read_dataset(_require("--dataset", args.dataset))
    datakit.write_augmentation_batch(records, _outdir(args.out))
    _status(f"wrote {len(records)} augmentation prompts -> {args.out}")
    return 0


def _cmd_data_ingest_augmented(args, config):
    records, failures = datakit.ingest_augmented_responses(_require("--responses", args.responses))
    if not records:
        raise NoData("no valid augmented records in responses file")
    datakit.write_dataset(records, _outdir(args.out))
    for failure in failures:
        _status(f"skipped {failure}")
    _status(f"ingested {len(records)} subset-c records -> {args.out} ({len(failures)} rejected)")
    return 0


def _cmd_train_lpt(args, config):
    vocab = tokenizer.load_vocabulary(_require("--vocab", args.vocab))
    corpus = _read_corpus(_require("--corpus", args.corpus))
    encoded = [tokenizer.encode(vocab, doc) for doc in corpus]
    train_cfg = _train_config("LPT", args, config)
    model_cfg = _model_config(args, config, vocab.size)
    init = ModelParameters.init(model_cfg, seed=train_cfg.seed, stage="base")
    _status(f"LPT over {len(encoded)} documents, seed {train_cfg.seed}")
    ckpt = training.run_stage(train_cfg, encoded, init)
    training.save_checkpoint(ckpt, _outdir(args.out))
    _status(f"LPT checkpoint ({ckpt.step_count} steps) -> {args.out}")
    return 0


def _cmd_train_lft(args, config):
    if not args.from_lpt:
        raise StagePreconditionError("train lft requires --from-lpt with an LPT checkpoint")
    vocab = tokenizer.load_vocabulary(_require("--vocab", args.vocab))
    records = datakit.read_dataset(_require("--dataset", args.dataset))
    lpt_ckpt = training.load_checkpoint(_require("--from-lpt", args.from_lpt))
    init = lpt_ckpt.merged()
    if init.stage != "LPT":
        raise StagePreconditionError(f"--from-lpt checkpoint is stage {init.stage!r}, need LPT")
    examples = [datakit.tokenize_example(r, vocab) for r in records]
    train_cfg = _train_config("LFT", args, config)
    _status(f"LFT over {len(examples)} examples, seed {train_cfg.seed}")
    ckpt = training.run_stage(train_cfg, examples, init)
    training.save_checkpoint(ckpt, _outdir(args.out))
    _status(f"LFT checkpoint ({ckpt.step_count} steps) -> {args.out}")
    return 0


def _cmd_merge(args, config):
    ckpt = training.load_checkpoint(_require("--checkpoint", args.checkpoint))
    merged = ckpt.merged()
    out = training.Checkpoint(
        params=merged,
        adapters=None,
        stage=merged.stage,
        step_count=ckpt.step_count,
        seed=ckpt.seed,
        train_config=ckpt.train_config,
        extras=ckpt.extras,
    )
    training.save_checkpoint(out, _outdir(args.out))
    _status(f"merged checkpoint (stage {merged.stage}) -> {args.out}")
    return 0


def _cmd_generate(args, config):
    params, vocab = _load_model(args)
    gen = _gen_params(args, config)
    print(generation.answer(params, vocab, args.instruction, gen))
    return 0


def _cmd_chat(args, config):
    params, vocab = _load_model(args)
    gen = _gen_params(args, config)
    generation.repl(params, vocab, gen, sys.stdin, sys.stdout, as_json=args.json)
    return 0


def _cmd_eval(args, config):
    params, vocab = _load_model(args)
    tasks = evaluation.load_fixture_dir(_require("--fixtures", args.fixtures))
    if not tasks:
        raise NoData(f"no task fixture files under {args.fixtures}")
    gen = _gen_params(args, config)
    report = evaluation.run_eval(params, vocab, tasks, gen, model_name=args.model_name)
    evaluation.write_report(report, _outdir(args.out))
    _status(f"eval report -> {args.out} (average {report.average})")
    return 0


def _cmd_report(args, config):
    reports = [evaluation.read_report(_require("--reports", p)) for p in args.reports]
    subset = set(args.open_source) if args.open_source else None
    table = evaluation.compare_reports(reports, open_source=subset).render()
    if args.out:
        _outdir(args.out).write_text(table, encoding="utf-8")
        _status(f"comparison table -> {args.out}")
    else:
        sys.stdout.write(table)
    return 0


# -- parser ----------------------------------------------------------------------

def _add_model_flags(p):
    p.add_argument("--context-length", type=int, dest="context_length")
    p.add_argument("--layers", type=int)
    p.add_argument("--heads", type=int)
    p.add_argument("--embed-dim", type=int, dest="embed_dim")
    p.add_argument("--mlp-hidden-dim", type=int, dest="mlp_hidden_dim")


def _add_train_flags(p):
    p.add_argument("--learning-rate", type=float, dest="learning_rate")
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--epochs", type=int)
    p.add_argument("--rank", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--dropout", type=float)
    p.add_argument("--grad-clip", type=float, dest="grad_clip")
    p.add_argument("--seed", type=int)


def _add_gen_flags(p):
    p.add_argument("--max-new-tokens", type=int, dest="max_new_tokens")
    p.add_argument("--strategy", choices=generation.STRATEGIES)
    p.add_argument("--temperature", type=float)
    p.add_argument("--top-k", type=int, dest="top_k")
    p.add_argument("--top-p", type=float, dest="top_p")
    p.add_argument("--seed", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lexforge",
        description="Two-stage legal domain-adaptation pipeline (tokenizer, training, generation, eval).",
    )
    parser.add_argument("--config", help=f"JSON config file (or ${CONFIG_ENV}); flags win")
    commands = parser.add_subparsers(dest="command", required=True)

    tok = commands.add_parser("tokenizer", help="tokenizer construction").add_subparsers(
        dest="subcommand", required=True
    )
    p = tok.add_parser("train", help="learn a byte-level BPE vocabulary")
    p.add_argument("--corpus", required=True)
    p.add_argument("--target-size", type=int, required=True, dest="target_size")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_tokenizer_train)

    data = commands.add_parser("data", help="instruction dataset tooling").add_subparsers(
        dest="subcommand", required=True
    )
    p = data.add_parser("build", help="validate, dedup and merge subset files")
    p.add_argument("--subset-a", dest="subset_a")
    p.add_argument("--subset-b", dest="subset_b")
    p.add_argument("--subset-c", dest="subset_c")
    p.add_argument("--out", required=True)
    p.add_argument("--report")
    p.set_defaults(handler=_cmd_data_build)
    p = data.add_parser("augment-prompts", help="render length-prefixed polishing prompts")
    p.add_argument("--dataset", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_data_augment_prompts)
    p = data.add_parser("ingest-augmented", help="parse service responses into subset-c records")
    p.add_argument("--responses", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_data_ingest_augmented)

    train = commands.add_parser("train", help="run a training stage").add_subparsers(
        dest="subcommand", required=True
    )
    p = train.add_parser("lpt", help="legal-oriented pre-training over a document corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--out", required=True)
    _add_model_flags(p)
    _add_train_flags(p)
    p.set_defaults(handler=_cmd_train_lpt)
    p = train.add_parser("lft", help="legal-supervised fine-tuning over instruction records")
    p.add_argument("--dataset", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--from-lpt", dest="from_lpt")
    p.add_argument("--out", required=True)
    _add_train_flags(p)
    p.set_defaults(handler=_cmd_train_lft)

    p = commands.add_parser("merge", help="fold adapters into the base weights")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_merge)

    p = commands.add_parser("generate", help="answer a single instruction")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--instruction", required=True)
    _add_gen_flags(p)
    p.set_defaults(handler=_cmd_generate)

    p = commands.add_parser("chat", help="REPL: one instruction per stdin line")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--json", action="store_true")
    _add_gen_flags(p)
    p.set_defaults(handler=_cmd_chat)

    p = commands.add_parser("eval", help="zero-shot evaluation over task fixtures")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--fixtures", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--model-name", default="lexforge", dest="model_name")
    _add_gen_flags(p)
    p.set_defaults(handler=_cmd_eval)

    p = commands.add_parser("report", help="column-aligned comparison of report files")
    p.add_argument("--reports", nargs="+", required=True)
    p.add_argument("--open-source", nargs="*", dest="open_source")
    p.add_argument("--out")
    p.set_defaults(handler=_cmd_report)

    return parser


_DATA_ERRORS = (
    NoData, CorpusEmpty, VocabTooSmall, EmptyField, ParseError, SchemaError,
    TooLong, UnknownMetric, BadReference, UnknownToken, ContextOverflow,
    NoTargets, EmptyOutputMask, ShapeError,
)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = _load_config(args.config)
        return args.handler(args, config)
    except _MissingInput as exc:
        _status(f"error: {exc}")
        return EXIT_MISSING_INPUT
    except StagePreconditionError as exc:
        _status(f"error: {exc}")
        return EXIT_STAGE_ORDER
    except (ChecksumError, VersionError) as exc:
        _status(f"error: {exc}")
        return EXIT_CHECKPOINT
    except _DATA_ERRORS as exc:
        _status(f"error: {exc}")
        return EXIT_DATA_INVALID
    except FileNotFoundError as exc:
        _status(f"error: {exc}")
        return EXIT_MISSING_INPUT


if __name__ == "__main__":
    sys.exit(main())
