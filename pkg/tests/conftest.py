import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

import lexforge as lf
from toytext import toy_corpus

GOLDEN_DIR = Path(__file__).parent / "golden"


@pytest.fixture(scope="session")
def tiny_config() -> lf.TransformerConfig:
    return lf.TransformerConfig(
        vocab_size=64, context_length=16, layers=2, heads=2, embed_dim=32, mlp_hidden_dim=64
    )


@pytest.fixture(scope="session")
def tiny_params(tiny_config) -> lf.ModelParameters:
    return lf.ModelParameters.init(tiny_config, seed=1234)


@pytest.fixture(scope="session")
def small_vocab() -> lf.Vocabulary:
    return lf.train_bpe(toy_corpus(20_000, seed=5), target_size=400)


def random_tokens(rng: np.random.Generator, config: lf.TransformerConfig, n: int) -> list[int]:
    # stay below the specials so sequences look like real text ids
    return rng.integers(0, config.vocab_size - 3, size=n).tolist()
