"""Two-stage training: next-token pre-training and output-masked fine-tuning.

Both objectives are per-token means of the negative log-likelihood; the
fine-tuning variant restricts the mean to the output index set so the
instruction/template prefix contributes nothing. Only adapter factors are
optimized; base weights stay frozen through both stages.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, asdict

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import (
    ChecksumError,
    EmptyOutputMask,
    NoData,
    NoTargets,
    ShapeError,
    StagePreconditionError,
    VersionError,
)
from .model import LoraAdapters, LoraConfig, ModelParameters, TransformerConfig, forward

log = logging.getLogger(__name__)

CHECKPOINT_MAGIC = "lexforge-ckpt-v1"

# Stage presets (learning rate, batch size, epochs and per-stage adapter
# geometry). Desk-scale runs override what they must but these are the
# defaults a fresh config starts from.
STAGE_DEFAULTS = {
    "LPT": dict(
        lora=LoraConfig(rank=16, alpha=32.0, dropout=0.05),
        learning_rate=3e-4,
        batch_size=128,
        epochs=1,
    ),
    "LFT": dict(
        lora=LoraConfig(rank=8, alpha=16.0, dropout=0.05),
        learning_rate=3e-4,
        batch_size=64,
        epochs=20,
    ),
}


@dataclass(frozen=True)
class TrainConfig:
    stage: str
    lora: LoraConfig
    learning_rate: float
    batch_size: int
    epochs: int
    seed: int = 0
    grad_clip: float | None = None

    def __post_init__(self):
        if self.stage not in STAGE_DEFAULTS:
            raise ValueError(f"stage must be LPT or LFT, got {self.stage!r}")
        if self.learning_rate <= 0 or self.batch_size < 1 or self.epochs < 0:
            raise ValueError("learning_rate, batch_size and epochs must be positive")
        if self.grad_clip is not None and self.grad_clip <= 0:
            raise ValueError("grad_clip must be positive when set")

    @classmethod
    def for_stage(cls, stage: str, seed: int = 0, **overrides) -> "TrainConfig":
        if stage not in STAGE_DEFAULTS:
            raise ValueError(f"stage must be LPT or LFT, got {stage!r}")
        kwargs = dict(STAGE_DEFAULTS[stage])
        lora_overrides = {k: overrides.pop(k) for k in ("rank", "alpha", "dropout", "targets") if k in overrides}
        if lora_overrides:
            base = kwargs["lora"]
            kwargs["lora"] = LoraConfig(
                rank=lora_overrides.get("rank", base.rank),
                alpha=lora_overrides.get("alpha", base.alpha),
                dropout=lora_overrides.get("dropout", base.dropout),
                targets=tuple(lora_overrides.get("targets", base.targets)),
            )
        kwargs.update(overrides)
        return cls(stage=stage, seed=seed, **kwargs)


@dataclass(frozen=True)
class TrainExample:
    """Token ids plus the positions whose prediction carries the loss."""

    tokens: tuple[int, ...]
    output_index_set: frozenset[int]

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        object.__setattr__(self, "output_index_set", frozenset(self.output_index_set))
        n = len(self.tokens)
        for i in self.output_index_set:
            if not 1 <= i < n:
                raise ValueError(f"output index {i} outside [1, {n})")


def _nll_mean(logits: Tensor, tokens, positions: np.ndarray) -> Tensor:
    """Mean of -log softmax(logits[i-1])[tokens[i]] over `positions`."""
    tokens = np.asarray(tokens, dtype=np.int64)
    rows = positions - 1
    targets = tokens[positions]
    lse = ad.logsumexp(logits, axis=-1)
    per_position = ad.index_rows(lse, rows) - ad.gather_pairs(logits, rows, targets)
    return ad.tmean(per_position)


def lpt_loss(logits: Tensor, tokens) -> Tensor:
    """Autoregressive objective: every position after the anchor is a target."""
    n = len(tokens)
    if n < 2:
        raise NoTargets("need an anchor plus at least one target token")
    return _nll_mean(logits, tokens, np.arange(1, n, dtype=np.int64))


def lft_loss(logits: Tensor, example: TrainExample) -> Tensor:
    """Masked objective: only output positions contribute to the mean."""
    if not example.output_index_set:
        raise EmptyOutputMask("example has no output positions")
    positions = np.asarray(sorted(example.output_index_set), dtype=np.int64)
    return _nll_mean(logits, example.tokens, positions)


# -- optimizer ---------------------------------------------------------------

@dataclass
class AdamState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def init(cls, named: dict[str, Tensor]) -> "AdamState":
        return cls(
            step=0,
            m={k: np.zeros(t.shape) for k, t in named.items()},
            v={k: np.zeros(t.shape) for k, t in named.items()},
        )


def adam_step(
    named: dict[str, Tensor],
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
    weight_decay: float = 0.0,
) -> AdamState:
    """One AdamW update with bias-corrected moments; grads of None count as zero."""
    state.step += 1
    t = state.step
    for name in sorted(named):
        tensor = named[name]
        grad = tensor.grad if tensor.grad is not None else np.zeros(tensor.shape)
        if grad.shape != state.m[name].shape:
            raise ShapeError(f"{name}: grad shape {grad.shape} vs state {state.m[name].shape}")
        state.m[name] = beta1 * state.m[name] + (1.0 - beta1) * grad
        state.v[name] = beta2 * state.v[name] + (1.0 - beta2) * grad * grad
        m_hat = state.m[name] / (1.0 - beta1**t)
        v_hat = state.v[name] / (1.0 - beta2**t)
        if weight_decay > 0.0:
            tensor.data -= lr * weight_decay * tensor.data
        tensor.data -= lr * m_hat / (np.sqrt(v_hat) + eps)
    return state


def _clip_grads(named: dict[str, Tensor], max_norm: float) -> None:
    total = 0.0
    for t in named.values():
        if t.grad is not None:
            total += float((t.grad * t.grad).sum())
    norm = np.sqrt(total)
    if norm > max_norm:
        scale = max_norm / norm
        for t in named.values():
            if t.grad is not None:
                t.grad *= scale


# -- stage runner --------------------------------------------------------------

def build_lpt_windows(encoded_docs, context_length: int, bos_id: int) -> list[tuple[int, ...]]:
    """Split each document into non-overlapping windows anchored by BOS."""
    window = context_length - 1
    out: list[tuple[int, ...]] = []
    for doc in encoded_docs:
        for start in range(0, len(doc), window):
            chunk = doc[start : start + window]
            if chunk:
                out.append((bos_id,) + tuple(chunk))
    return out


def pad_batch(sequences: list[tuple[int, ...]], pad_id: int) -> tuple[np.ndarray, list[int]]:
    """Left-aligned (B, max_len) id array padded with PAD, plus true lengths."""
    lengths = [len(s) for s in sequences]
    width = max(lengths)
    batch = np.full((len(sequences), width), pad_id, dtype=np.int64)
    for row, seq in enumerate(sequences):
        batch[row, : len(seq)] = seq
    return batch, lengths


@dataclass
class Checkpoint:
    params: ModelParameters
    adapters: LoraAdapters | None
    stage: str
    step_count: int
    seed: int
    train_config: TrainConfig | None = None
    extras: dict = field(default_factory=dict)

    def merged(self) -> ModelParameters:
        from .model import merge_lora

        if self.adapters is None:
            return self.params
        return merge_lora(self.params, self.adapters)


def run_stage(config: TrainConfig, data, init: ModelParameters) -> Checkpoint:
    """Train fresh adapters over frozen `init` weights and return a checkpoint.

    LPT expects `data` as encoded documents (lists of token ids) and windows
    them to the context; LFT expects TrainExample records and drops any that
    exceed the context, reporting the count. Shuffling, adapter init and
    dropout all derive from config.seed, so identical inputs reproduce the
    checkpoint bit for bit.
    """
    if len(data) == 0:
        raise NoData(f"{config.stage} received no data")
    if config.stage == "LFT" and init.stage != "LPT":
        raise StagePreconditionError(
            f"LFT requires pre-trained (merged) init, got stage {init.stage!r}"
        )

    cfg = init.config
    bos_id = cfg.vocab_size - 3
    pad_id = cfg.vocab_size - 1
    dropped = 0
    if config.stage == "LPT":
        sequences = build_lpt_windows(data, cfg.context_length, bos_id)
        examples = [(seq, None) for seq in sequences if len(seq) >= 2]
    else:
        examples = []
        for ex in data:
            if len(ex.tokens) > cfg.context_length:
                dropped += 1
                continue
            examples.append((ex.tokens, ex))
        if dropped:
            log.warning("dropped %d fine-tuning examples over context %d", dropped, cfg.context_length)
    if not examples:
        raise NoData(f"{config.stage} has no usable examples after preparation")

    adapters = LoraAdapters.init(config.lora, cfg, seed=config.seed, stage=config.stage)
    adapter_named = adapters.named()
    base_named = init.named()
    state = AdamState.init(adapter_named)
    rng = np.random.default_rng(config.seed)

    steps = 0
    last_loss = float("nan")
    for _ in range(config.epochs):
        order = rng.permutation(len(examples))
        for start in range(0, len(order), config.batch_size):
            batch = [examples[i] for i in order[start : start + config.batch_size]]
            padded, lengths = pad_batch([seq for seq, _ in batch], pad_id)
            for t in base_named.values():
                t.grad = None
            for t in adapter_named.values():
                t.grad = None
            losses = []
            for row, (_, example) in enumerate(batch):
                # PAD trails every row, so the causal mask already keeps real
                # positions blind to it; forwarding the trimmed row computes
                # the same contributing logits without the dead rows.
                tokens = padded[row, : lengths[row]].tolist()
                logits = forward(init, adapters, tokens, mode="train", rng=rng)
                if example is None:
                    losses.append(lpt_loss(logits, tokens))
                else:
                    losses.append(lft_loss(logits, example))
            total = losses[0]
            for piece in losses[1:]:
                total = total + piece
            batch_loss = total * Tensor(1.0 / len(losses))
            batch_loss.backward()
            if config.grad_clip is not None:
                _clip_grads(adapter_named, config.grad_clip)
            adam_step(adapter_named, state, config.learning_rate)
            steps += 1
            last_loss = float(batch_loss.data)

    return Checkpoint(
        params=init,
        adapters=adapters,
        stage=config.stage,
        step_count=steps,
        seed=config.seed,
        train_config=config,
        extras={"dropped_examples": dropped, "final_batch_loss": last_loss},
    )


# -- checkpoint persistence -----------------------------------------------------

def fnv1a64(data: bytes) -> int:
    """64-bit FNV-1a over the payload; the checkpoint trailer stores it."""
    h = 0xCBF29CE484222325
    for byte in data:
        h ^= byte
        h = (h * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def _config_to_dict(config: TrainConfig | None):
    if config is None:
        return None
    d = asdict(config)
    d["lora"]["targets"] = list(config.lora.targets)
    return d


def _config_from_dict(d) -> TrainConfig | None:
    if d is None:
        return None
    lora = d.pop("lora")
    return TrainConfig(lora=LoraConfig(
        rank=lora["rank"], alpha=lora["alpha"], dropout=lora["dropout"],
        targets=tuple(lora["targets"]),
    ), **d)


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    entries = list(ckpt.params.named().items())
    if ckpt.adapters is not None:
        entries.extend(ckpt.adapters.named().items())
    records = []
    blobs = []
    offset = 0
    for name, tensor in entries:
        raw = np.ascontiguousarray(tensor.data, dtype="<f8").tobytes()
        records.append({"name": name, "dtype": "<f8", "shape": list(tensor.shape), "offset": offset})
        blobs.append(raw)
        offset += len(raw)
    payload = b"".join(blobs)

    adapters_meta = None
    if ckpt.adapters is not None:
        lora = asdict(ckpt.adapters.config)
        lora["targets"] = list(ckpt.adapters.config.targets)
        adapters_meta = {
            "config": lora,
            "stage": ckpt.adapters.stage,
            "pairs": sorted(ckpt.adapters.pairs),
        }
    manifest = {
        "stage": ckpt.stage,
        "step_count": ckpt.step_count,
        "seed": ckpt.seed,
        "params_stage": ckpt.params.stage,
        "model_config": asdict(ckpt.params.config),
        "train_config": _config_to_dict(ckpt.train_config),
        "adapters": adapters_meta,
        "tensors": records,
        "extras": ckpt.extras,
    }
    head = CHECKPOINT_MAGIC + "\n" + json.dumps(manifest, sort_keys=True, ensure_ascii=False) + "\n"
    with open(path, "wb") as fh:
        fh.write(head.encode("utf-8"))
        fh.write(payload)
        fh.write(fnv1a64(payload).to_bytes(8, "little"))


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        blob = fh.read()
    magic, _, rest = blob.partition(b"\n")
    if magic.decode("utf-8", errors="replace") != CHECKPOINT_MAGIC:
        raise VersionError(f"unknown checkpoint magic in {path}")
    manifest_line, _, body = rest.partition(b"\n")
    try:
        manifest = json.loads(manifest_line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ChecksumError(f"unreadable checkpoint manifest in {path}") from exc
    if len(body) < 8:
        raise ChecksumError(f"checkpoint truncated: {path}")
    payload, trailer = body[:-8], body[-8:]
    if fnv1a64(payload) != int.from_bytes(trailer, "little"):
        raise ChecksumError(f"checkpoint payload hash mismatch: {path}")

    tensors: dict[str, ad.Tensor] = {}
    for rec in manifest["tensors"]:
        shape = tuple(rec["shape"])
        count = int(np.prod(shape)) if shape else 1
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=rec["offset"])
        tensors[rec["name"]] = ad.parameter(arr.reshape(shape).copy())

    model_config = TransformerConfig(**manifest["model_config"])
    params = ModelParameters(
        model_config,
        {k: v for k, v in tensors.items() if not k.startswith("lora.")},
        stage=manifest["params_stage"],
    )
    adapters = None
    if manifest["adapters"] is not None:
        meta = manifest["adapters"]
        lora = LoraConfig(
            rank=meta["config"]["rank"],
            alpha=meta["config"]["alpha"],
            dropout=meta["config"]["dropout"],
            targets=tuple(meta["config"]["targets"]),
        )
        pairs = {}
        for target in meta["pairs"]:
            pairs[target] = (tensors[f"lora.{target}.A"], tensors[f"lora.{target}.B"])
        adapters = LoraAdapters(lora, pairs, stage=meta["stage"])

    return Checkpoint(
        params=params,
        adapters=adapters,
        stage=manifest["stage"],
        step_count=manifest["step_count"],
        seed=manifest["seed"],
        train_config=_config_from_dict(manifest["train_config"]),
        extras=manifest.get("extras", {}),
    )
