"""Binary checkpoint: config, vocabulary, labels and float32 weights in one file.

Layout::

    ADTXT1\\n
    <one-line JSON: model config, label names, options>\\n
    <N>\\n
    <N vocabulary lines>
    then per weight, in canonical order:
    <name>\\n<space-separated shape>\\n<little-endian float32 data>
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .encoder import ModelConfig, ModelParams, param_shapes
from .errors import CheckpointError
from .tokenizer import Vocabulary

MAGIC = b"ADTXT1"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    config: ModelConfig
    vocab: Vocabulary
    params: ModelParams
    labels: tuple[str, ...] = ()
    options: dict = field(default_factory=dict)

    def to_bytes(self) -> bytes:
        if len(self.vocab) != self.config.vocab_size:
            raise CheckpointError(f"vocabulary has {len(self.vocab)} tokens, config says {self.config.vocab_size}")
        header = {
            "format_version": FORMAT_VERSION,
            "config": self.config.to_dict(),
            "labels": list(self.labels),
            "options": self.options,
        }
        buf = io.BytesIO()
        buf.write(MAGIC + b"\n")
        buf.write(json.dumps(header, sort_keys=True, ensure_ascii=False).encode("utf-8") + b"\n")
        buf.write(f"{len(self.vocab)}\n".encode())
        buf.write(self.vocab.to_text().encode("utf-8"))
        for name, shape in param_shapes(self.config):
            data = np.ascontiguousarray(self.params[name].data, dtype="<f4")
            buf.write(f"{name}\n{' '.join(map(str, shape))}\n".encode())
            buf.write(data.tobytes())
        return buf.getvalue()

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def from_bytes(cls, blob: bytes, dtype=np.float32) -> "Checkpoint":
        stream = io.BytesIO(blob)

        def line() -> str:
            raw = stream.readline()
            if not raw.endswith(b"\n"):
                raise CheckpointError("truncated checkpoint")
            return raw[:-1].decode("utf-8")

        if stream.readline() != MAGIC + b"\n":
            raise CheckpointError("not an ADTXT1 checkpoint")
        try:
            header = json.loads(line())
            config = ModelConfig.from_dict(header["config"])
            n_vocab = int(line())
        except (ValueError, KeyError, TypeError) as exc:
            raise CheckpointError(f"bad checkpoint header: {exc}") from None
        vocab = Vocabulary.from_tokens(line() for _ in range(n_vocab))

        arrays = {}
        for name, shape in param_shapes(config):
            got_name = line()
            got_shape = tuple(int(s) for s in line().split())
            if got_name != name or got_shape != shape:
                raise CheckpointError(f"expected weight {name} {shape}, found {got_name} {got_shape}")
            count = int(np.prod(shape))
            raw = stream.read(4 * count)
            if len(raw) != 4 * count:
                raise CheckpointError(f"truncated data for {name}")
            arrays[name] = np.frombuffer(raw, dtype="<f4").reshape(shape)
        if stream.read(1):
            raise CheckpointError("trailing bytes after last weight block")
        params = ModelParams.from_arrays(config, arrays, dtype)
        return cls(config, vocab, params, tuple(header.get("labels", ())), header.get("options", {}))

    @classmethod
    def load(cls, path: str | Path, dtype=np.float32) -> "Checkpoint":
        path = Path(path)
        if not path.is_file():
            raise CheckpointError(f"no such checkpoint: {path}")
        return cls.from_bytes(path.read_bytes(), dtype)
