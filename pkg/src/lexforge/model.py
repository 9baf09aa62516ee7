"""Decoder-only transformer with optional low-rank adapters.

Pre-norm blocks, learned position embeddings, GELU MLP, no biases on the
projection matrices. Linear weights are stored (out_dim, in_dim) so an
adapter pair contributes W + (alpha/rank) * B @ A directly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ContextOverflow, ShapeError, UnknownToken

STAGES = ("base", "LPT", "LFT")

LORA_TARGET_WEIGHTS = {"query": "attn.wq", "value": "attn.wv"}

_LN_EPS = 1e-5
_NEG_INF = -1e9  # exp() underflows to exactly 0.0, keeping causality bit-exact


@dataclass(frozen=True)
class TransformerConfig:
    vocab_size: int
    context_length: int
    layers: int
    heads: int
    embed_dim: int
    mlp_hidden_dim: int

    def __post_init__(self):
        for name in ("vocab_size", "context_length", "layers", "heads", "embed_dim", "mlp_hidden_dim"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.context_length < 2:
            raise ValueError("context_length must be at least 2")
        if self.embed_dim % self.heads != 0:
            raise ValueError("embed_dim must be divisible by heads")

    @property
    def head_dim(self) -> int:
        return self.embed_dim // self.heads


def _parameter_shapes(config: TransformerConfig) -> dict[str, tuple[int, ...]]:
    d, f = config.embed_dim, config.mlp_hidden_dim
    shapes: dict[str, tuple[int, ...]] = {
        "tok_emb": (config.vocab_size, d),
        "pos_emb": (config.context_length, d),
    }
    for i in range(config.layers):
        prefix = f"layers.{i}."
        shapes[prefix + "ln1.g"] = (d,)
        shapes[prefix + "ln1.b"] = (d,)
        shapes[prefix + "attn.wq"] = (d, d)
        shapes[prefix + "attn.wk"] = (d, d)
        shapes[prefix + "attn.wv"] = (d, d)
        shapes[prefix + "attn.wo"] = (d, d)
        shapes[prefix + "ln2.g"] = (d,)
        shapes[prefix + "ln2.b"] = (d,)
        shapes[prefix + "mlp.w1"] = (f, d)
        shapes[prefix + "mlp.w2"] = (d, f)
    shapes["ln_f.g"] = (d,)
    shapes["ln_f.b"] = (d,)
    shapes["lm_head"] = (config.vocab_size, d)
    return shapes


class ModelParameters:
    """Named weight tensors plus the training-stage tag they carry."""

    def __init__(self, config: TransformerConfig, tensors: dict[str, Tensor], stage: str = "base"):
        if stage not in STAGES:
            raise ValueError(f"stage must be one of {STAGES}, got {stage!r}")
        expected = _parameter_shapes(config)
        if set(tensors) != set(expected):
            raise ShapeError("tensor names do not match the configuration")
        for name, shape in expected.items():
            if tensors[name].shape != shape:
                raise ShapeError(f"{name}: expected shape {shape}, got {tensors[name].shape}")
        self.config = config
        self.tensors = tensors
        self.stage = stage

    @classmethod
    def init(
        cls,
        config: TransformerConfig,
        seed: int,
        stage: str = "base",
        head_scale: float = 0.5,
    ) -> "ModelParameters":
        """Seeded random weights: interior matrices at std 0.02, norms at 1/0.

        The output projection uses the larger `head_scale` std. The base stays
        frozen under adapter training, so a faint random head would cap the
        reachable logit range (post-norm hidden norms are bounded); a stronger
        head keeps the softmax able to commit.
        """
        rng = np.random.default_rng(seed)
        tensors: dict[str, Tensor] = {}
        for name, shape in _parameter_shapes(config).items():
            if name.endswith(".g"):
                data = np.ones(shape)
            elif name.endswith(".b"):
                data = np.zeros(shape)
            elif name == "lm_head":
                data = rng.normal(0.0, head_scale, size=shape)
            else:
                data = rng.normal(0.0, 0.02, size=shape)
            tensors[name] = ad.parameter(data)
        return cls(config, tensors, stage)

    def copy(self, stage: str | None = None) -> "ModelParameters":
        tensors = {name: ad.parameter(t.data.copy()) for name, t in self.tensors.items()}
        return ModelParameters(self.config, tensors, stage or self.stage)

    def named(self) -> dict[str, Tensor]:
        return dict(self.tensors)


@dataclass(frozen=True)
class LoraConfig:
    rank: int
    alpha: float
    dropout: float
    targets: tuple[str, ...] = ("query", "value")

    def __post_init__(self):
        if self.rank < 1:
            raise ValueError("rank must be positive")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")
        unknown = set(self.targets) - set(LORA_TARGET_WEIGHTS)
        if unknown:
            raise ValueError(f"unknown LoRA targets: {sorted(unknown)}")
        if not self.targets:
            raise ValueError("at least one LoRA target required")

    @property
    def scale(self) -> float:
        return self.alpha / self.rank


class LoraAdapters:
    """Low-rank factor pairs per target matrix: A random, B zero at init.

    Zero-initialized B makes fresh adapters an exact no-op, so an adapted
    forward equals the base forward until training moves B.
    """

    def __init__(self, config: LoraConfig, pairs: dict[str, tuple[Tensor, Tensor]], stage: str):
        if stage not in STAGES:
            raise ValueError(f"stage must be one of {STAGES}, got {stage!r}")
        self.config = config
        self.pairs = pairs
        self.stage = stage

    @property
    def scale(self) -> float:
        return self.config.scale

    @classmethod
    def init(cls, config: LoraConfig, model_config: TransformerConfig, seed: int, stage: str) -> "LoraAdapters":
        if config.rank > model_config.embed_dim:
            raise ValueError("rank exceeds the smallest target matrix dimension")
        rng = np.random.default_rng(seed)
        pairs: dict[str, tuple[Tensor, Tensor]] = {}
        d = model_config.embed_dim
        for i in range(model_config.layers):
            for target in config.targets:
                name = f"layers.{i}.{LORA_TARGET_WEIGHTS[target]}"
                a = rng.uniform(-1.0, 1.0, size=(config.rank, d)) / config.rank
                b = np.zeros((d, config.rank))
                pairs[name] = (ad.parameter(a), ad.parameter(b))
        return cls(config, pairs, stage)

    def named(self) -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for name, (a, b) in self.pairs.items():
            out[f"lora.{name}.A"] = a
            out[f"lora.{name}.B"] = b
        return out


def _layer_norm(x: Tensor, gain: Tensor, bias: Tensor) -> Tensor:
    mu = ad.tmean(x, axis=-1, keepdims=True)
    centered = x - mu
    var = ad.tmean(centered * centered, axis=-1, keepdims=True)
    inv = (var + Tensor(_LN_EPS)) ** -0.5
    return centered * inv * gain + bias


def _linear(x: Tensor, weight: Tensor) -> Tensor:
    return x @ ad.transpose(weight, (1, 0))


def _adapted_linear(
    x: Tensor,
    weight: Tensor,
    adapters: LoraAdapters | None,
    name: str,
    train: bool,
    rng: np.random.Generator | None,
) -> Tensor:
    base = _linear(x, weight)
    if adapters is None or name not in adapters.pairs:
        return base
    a, b = adapters.pairs[name]
    if a.shape[1] != weight.shape[1] or b.shape[0] != weight.shape[0]:
        raise ShapeError(f"adapter for {name} does not match weight shape {weight.shape}")
    h = x
    if train and adapters.config.dropout > 0.0:
        h = ad.dropout(h, adapters.config.dropout, rng)
    delta = _linear(_linear(h, a), b)  # (x @ A^T) @ B^T, low-rank bottleneck
    return base + delta * Tensor(adapters.scale)


def _causal_mask(t: int) -> Tensor:
    mask = np.where(np.tril(np.ones((t, t), dtype=bool)), 0.0, _NEG_INF)
    return Tensor(mask)


def forward(
    params: ModelParameters,
    adapters: LoraAdapters | None,
    tokens: list[int],
    mode: str = "eval",
    rng: np.random.Generator | None = None,
) -> Tensor:
    """Next-token logits for every position, (len(tokens), vocab_size).

    Row i conditions only on positions <= i via the causal mask. In train
    mode adapter inputs pass through dropout, which needs `rng`.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    cfg = params.config
    ids = np.asarray(tokens, dtype=np.int64)
    if ids.size > cfg.context_length:
        raise ContextOverflow(f"{ids.size} tokens exceed context {cfg.context_length}")
    if ids.size and (ids.min() < 0 or ids.max() >= cfg.vocab_size):
        raise UnknownToken("token id outside the model vocabulary")
    train = mode == "train"
    if train and adapters is not None and adapters.config.dropout > 0.0 and rng is None:
        raise ValueError("train-mode forward with adapter dropout requires rng")

    t = ids.size
    p = params.tensors
    x = ad.index_rows(p["tok_emb"], ids) + ad.index_rows(p["pos_emb"], np.arange(t))
    mask = _causal_mask(t)
    inv_sqrt_hd = Tensor(1.0 / np.sqrt(cfg.head_dim))

    for i in range(cfg.layers):
        prefix = f"layers.{i}."
        h = _layer_norm(x, p[prefix + "ln1.g"], p[prefix + "ln1.b"])
        q = _adapted_linear(h, p[prefix + "attn.wq"], adapters, prefix + "attn.wq", train, rng)
        k = _linear(h, p[prefix + "attn.wk"])
        v = _adapted_linear(h, p[prefix + "attn.wv"], adapters, prefix + "attn.wv", train, rng)

        def split(m: Tensor) -> Tensor:
            return ad.transpose(ad.reshape(m, (t, cfg.heads, cfg.head_dim)), (1, 0, 2))

        qh, kh, vh = split(q), split(k), split(v)
        scores = (qh @ ad.transpose(kh, (0, 2, 1))) * inv_sqrt_hd + mask
        attn = ad.softmax(scores, axis=-1)
        ctx = ad.reshape(ad.transpose(attn @ vh, (1, 0, 2)), (t, cfg.embed_dim))
        x = x + _linear(ctx, p[prefix + "attn.wo"])

        h2 = _layer_norm(x, p[prefix + "ln2.g"], p[prefix + "ln2.b"])
        x = x + _linear(ad.gelu(_linear(h2, p[prefix + "mlp.w1"])), p[prefix + "mlp.w2"])

    x = _layer_norm(x, p["ln_f.g"], p["ln_f.b"])
    return _linear(x, p["lm_head"])


def merge_lora(params: ModelParameters, adapters: LoraAdapters) -> ModelParameters:
    """Fold each adapter pair into its target: W + scale * B @ A.

    The result carries the adapters' stage tag and the inputs stay untouched.
    """
    merged = params.copy(stage=adapters.stage)
    for name, (a, b) in adapters.pairs.items():
        if name not in merged.tensors:
            raise ShapeError(f"adapter target {name} not present in model")
        w = merged.tensors[name].data
        delta = b.data @ a.data
        if delta.shape != w.shape:
            raise ShapeError(f"{name}: adapter delta {delta.shape} vs weight {w.shape}")
        merged.tensors[name] = ad.parameter(w + adapters.scale * delta)
    return merged
