import numpy as np
import pytest

from adtext.checkpoint import Checkpoint
from adtext.encoder import ModelConfig, ModelParams
from adtext.errors import CheckpointError
from adtext.tokenizer import SPECIALS, Vocabulary


@pytest.fixture
def ckpt():
    vocab = Vocabulary.from_tokens(SPECIALS + tuple(f"w{i}" for i in range(25)) + ("çiçek", "##ği"))
    cfg = ModelConfig(hidden_size=8, num_layers=1, num_heads=2, max_seq=6, vocab_size=len(vocab),
                      intermediate_size=16, num_classes=3)
    return Checkpoint(cfg, vocab, ModelParams.initialize(cfg, 2), ("a", "b", "c"), {"selected_iteration": 4})


def test_round_trip(ckpt, tmp_path):
    path = tmp_path / "m.ckpt"
    ckpt.save(path)
    back = Checkpoint.load(path)
    assert back.config == ckpt.config
    assert back.vocab == ckpt.vocab
    assert back.labels == ckpt.labels
    assert back.options == ckpt.options
    for p in ckpt.params:
        np.testing.assert_array_equal(back.params[p.name].data, p.data)
    assert back.to_bytes() == ckpt.to_bytes()


def test_header_line(ckpt):
    assert ckpt.to_bytes().startswith(b"ADTXT1\n{")


def test_bad_magic(ckpt):
    with pytest.raises(CheckpointError):
        Checkpoint.from_bytes(b"XXXXXX" + ckpt.to_bytes()[6:])


@pytest.mark.parametrize("cut", [10, 200, -1])
def test_truncated(ckpt, cut):
    with pytest.raises(CheckpointError):
        Checkpoint.from_bytes(ckpt.to_bytes()[:cut])


def test_trailing_bytes(ckpt):
    with pytest.raises(CheckpointError):
        Checkpoint.from_bytes(ckpt.to_bytes() + b"\0")


def test_missing_file(tmp_path):
    with pytest.raises(CheckpointError):
        Checkpoint.load(tmp_path / "nope.ckpt")


def test_vocab_size_mismatch(ckpt):
    bad = Checkpoint(ckpt.config, Vocabulary.from_tokens(SPECIALS), ckpt.params)
    with pytest.raises(CheckpointError):
        bad.to_bytes()
