from __future__ import annotations

import numpy as np
import pytest

from adtext.encoder import ModelConfig, ModelParams
from adtext.tokenizer import CLS_ID, PAD_ID, SEP_ID, Encoding

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def numeric_grad(f, x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central differences of scalar f() w.r.t. every entry of x (mutated in place, restored)."""
    g = np.zeros_like(x, dtype=np.float64)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        up = f()
        flat[i] = orig - step
        down = f()
        flat[i] = orig
        gflat[i] = (up - down) / (2 * step)
    return g


def make_encoding(body: list[int], max_seq: int) -> Encoding:
    ids = [CLS_ID, *body, SEP_ID]
    n = len(ids)
    return Encoding(tuple(ids + [PAD_ID] * (max_seq - n)), (1,) * n + (0,) * (max_seq - n), n)


def random_encodings(rng: np.random.Generator, batch: int, max_seq: int, vocab_size: int) -> list[Encoding]:
    out = []
    for _ in range(batch):
        n = int(rng.integers(0, max_seq - 1))
        out.append(make_encoding([int(t) for t in rng.integers(5, vocab_size, n)], max_seq))
    return out


@pytest.fixture
def tiny_config() -> ModelConfig:
    return ModelConfig(hidden_size=16, num_layers=2, num_heads=2, max_seq=8, vocab_size=50,
                       intermediate_size=32, num_classes=12, dropout_rate=0.1)


@pytest.fixture
def tiny_params(tiny_config) -> ModelParams:
    return ModelParams.initialize(tiny_config, seed=3)


def conditioned_params(config: ModelConfig, seed: int = 0) -> ModelParams:
    """Double-precision parameters at a well-scaled random point (weights ~ 1/sqrt(fan_in),
    non-trivial gains and biases), where central differences resolve every gradient entry."""
    params = ModelParams.initialize(config, seed, dtype=np.float64)
    rng = np.random.default_rng(seed + 1000)
    for p in params:
        if p.name.endswith(".gain"):
            p.data[:] = 1.0 + 0.1 * rng.standard_normal(p.shape)
        elif p.data.ndim == 1:
            p.data[:] = 0.1 * rng.standard_normal(p.shape)
        else:
            p.data[:] = rng.standard_normal(p.shape) / np.sqrt(p.shape[0])
    return params
