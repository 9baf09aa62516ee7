"""Desk-scale two-stage legal domain adaptation for decoder-only LMs.

Pipeline pieces: byte-level BPE tokenizer, a float64 transformer with
reverse-mode autodiff and low-rank adapters, the two training objectives,
instruction templating and dataset construction, autoregressive generation,
and a zero-shot task evaluation harness.
"""

from .tokenizer import Vocabulary, train_bpe, encode, decode, save_vocabulary, load_vocabulary
from .autodiff import Tensor
from .model import (
    TransformerConfig,
    ModelParameters,
    LoraConfig,
    LoraAdapters,
    forward,
    merge_lora,
)
from .training import (
    TrainConfig,
    TrainExample,
    Checkpoint,
    lpt_loss,
    lft_loss,
    adam_step,
    run_stage,
    save_checkpoint,
    load_checkpoint,
)
from .datakit import (
    InstructionRecord,
    RenderedText,
    render_train,
    render_test,
    render_augmentation_prompt,
    parse_augmentation_response,
    build_dataset,
    tokenize_example,
)
from .generation import GenerationParams, generate, answer
from .evaluation import EvalTask, EvalReport, score_item, run_eval, compare_reports

__version__ = "0.1.0"

__all__ = [
    "Vocabulary", "train_bpe", "encode", "decode", "save_vocabulary", "load_vocabulary",
    "Tensor",
    "TransformerConfig", "ModelParameters", "LoraConfig", "LoraAdapters", "forward", "merge_lora",
    "TrainConfig", "TrainExample", "Checkpoint", "lpt_loss", "lft_loss", "adam_step",
    "run_stage", "save_checkpoint", "load_checkpoint",
    "InstructionRecord", "RenderedText", "render_train", "render_test",
    "render_augmentation_prompt", "parse_augmentation_response", "build_dataset",
    "tokenize_example",
    "GenerationParams", "generate", "answer",
    "EvalTask", "EvalReport", "score_item", "run_eval", "compare_reports",
]
