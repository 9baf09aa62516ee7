import numpy as np
import numpy.testing as npt
import pytest

import lexforge as lf
from lexforge.errors import ContextOverflow, ShapeError, UnknownToken
from lexforge.model import forward, merge_lora

from conftest import random_tokens
from grad_check import check_gradients


def zero_params(config):
    params = lf.ModelParameters.init(config, seed=0)
    for t in params.tensors.values():
        t.data[:] = 0.0
    return params


def fresh_adapters(config, rank=4, alpha=8.0, dropout=0.0, seed=7, stage="LPT"):
    return lf.LoraAdapters.init(
        lf.LoraConfig(rank=rank, alpha=alpha, dropout=dropout), config, seed=seed, stage=stage
    )


def randomized_adapters(config, seed=7, **kwargs):
    adapters = fresh_adapters(config, seed=seed, **kwargs)
    rng = np.random.default_rng(seed + 1)
    for _, b in adapters.pairs.values():
        b.data[:] = rng.normal(0.0, 0.05, b.shape)
    return adapters


def test_all_zero_weights_give_uniform_logits(tiny_config):
    logits = forward(zero_params(tiny_config), None, [1, 2, 3]).data
    npt.assert_array_equal(logits, np.zeros_like(logits))


def test_fresh_adapters_are_exact_noop(tiny_config, tiny_params):
    tokens = [5, 9, 13, 2, 40]
    base = forward(tiny_params, None, tokens).data
    adapted = forward(tiny_params, fresh_adapters(tiny_config), tokens).data
    assert np.array_equal(base, adapted)


def test_fresh_adapters_noop_in_train_mode_with_dropout(tiny_config, tiny_params):
    tokens = [5, 9, 13]
    adapters = fresh_adapters(tiny_config, dropout=0.3)
    base = forward(tiny_params, None, tokens).data
    adapted = forward(tiny_params, adapters, tokens, mode="train", rng=np.random.default_rng(0)).data
    assert np.array_equal(base, adapted)


def test_causality_future_tokens_never_leak(tiny_config, tiny_params):
    rng = np.random.default_rng(11)
    tokens = random_tokens(rng, tiny_config, 10)
    baseline = forward(tiny_params, None, tokens).data
    for j in range(1, 10):
        perturbed = list(tokens)
        perturbed[j] = (perturbed[j] + 17) % (tiny_config.vocab_size - 3)
        changed = forward(tiny_params, None, perturbed).data
        assert np.array_equal(baseline[:j], changed[:j]), f"row before {j} changed"


def test_eval_mode_is_bit_deterministic(tiny_config, tiny_params):
    tokens = [3, 1, 4, 1, 5]
    a = forward(tiny_params, randomized_adapters(tiny_config), tokens).data
    b = forward(tiny_params, randomized_adapters(tiny_config), tokens).data
    assert np.array_equal(a, b)


def test_merge_equivalence_on_random_tiny_models(tiny_config):
    rng = np.random.default_rng(123)
    for trial in range(5):
        params = lf.ModelParameters.init(tiny_config, seed=int(rng.integers(1 << 30)))
        adapters = randomized_adapters(tiny_config, seed=int(rng.integers(1 << 30)))
        tokens = random_tokens(rng, tiny_config, 9)
        merged_out = forward(merge_lora(params, adapters), None, tokens).data
        adapter_out = forward(params, adapters, tokens).data
        assert np.abs(merged_out - adapter_out).max() < 1e-9


def test_merge_with_zero_b_is_identity(tiny_config, tiny_params):
    merged = merge_lora(tiny_params, fresh_adapters(tiny_config))
    for name, tensor in tiny_params.tensors.items():
        assert np.array_equal(tensor.data, merged.tensors[name].data)


def test_merge_carries_adapter_stage_and_leaves_input_alone(tiny_config, tiny_params):
    adapters = randomized_adapters(tiny_config, stage="LFT")
    before = {k: t.data.copy() for k, t in tiny_params.tensors.items()}
    merged = merge_lora(tiny_params, adapters)
    assert merged.stage == "LFT"
    assert tiny_params.stage == "base"
    for name, data in before.items():
        assert np.array_equal(tiny_params.tensors[name].data, data)


def test_paper_stage_configs_scale():
    assert lf.LoraConfig(rank=16, alpha=32.0, dropout=0.05).scale == 2.0
    assert lf.LoraConfig(rank=8, alpha=16.0, dropout=0.05).scale == 2.0


def test_context_overflow_and_unknown_token(tiny_config, tiny_params):
    with pytest.raises(ContextOverflow):
        forward(tiny_params, None, [0] * (tiny_config.context_length + 1))
    with pytest.raises(UnknownToken):
        forward(tiny_params, None, [tiny_config.vocab_size])


def test_adapter_shape_mismatch_detected(tiny_params):
    other = lf.TransformerConfig(
        vocab_size=64, context_length=16, layers=2, heads=2, embed_dim=16, mlp_hidden_dim=32
    )
    adapters = fresh_adapters(other)
    with pytest.raises(ShapeError):
        forward(tiny_params, adapters, [1, 2, 3])
    with pytest.raises(ShapeError):
        merge_lora(tiny_params, adapters)


def test_train_mode_dropout_requires_rng(tiny_config, tiny_params):
    adapters = fresh_adapters(tiny_config, dropout=0.1)
    with pytest.raises(ValueError):
        forward(tiny_params, adapters, [1, 2], mode="train")


def test_gradients_match_finite_differences(tiny_config):
    params = lf.ModelParameters.init(tiny_config, seed=5)
    adapters = randomized_adapters(tiny_config, seed=6)
    rng = np.random.default_rng(8)
    tokens = random_tokens(rng, tiny_config, 8)
    named = {**params.named(), **adapters.named()}

    def loss():
        return lf.lpt_loss(forward(params, adapters, tokens), tokens)

    check_gradients(loss, named, samples_per_tensor=2, seed=1)


def test_config_validation():
    with pytest.raises(ValueError):
        lf.TransformerConfig(vocab_size=10, context_length=1, layers=1, heads=1, embed_dim=4, mlp_hidden_dim=8)
    with pytest.raises(ValueError):
        lf.TransformerConfig(vocab_size=10, context_length=4, layers=1, heads=3, embed_dim=4, mlp_hidden_dim=8)
    with pytest.raises(ValueError):
        lf.LoraConfig(rank=0, alpha=1.0, dropout=0.0)
    with pytest.raises(ValueError):
        lf.LoraConfig(rank=2, alpha=1.0, dropout=1.0)
    with pytest.raises(ValueError):
        lf.LoraConfig(rank=2, alpha=1.0, dropout=0.0, targets=("key",))
