"""Architecture configurations and their exact parameter layouts."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields


@dataclass(frozen=True)
class TransformerConfig:
    layers: int = 8
    heads: int = 8
    d_model: int = 512
    d_ffn: int = 1024
    vocab: int = 32000
    rope_base: int = 10000
    max_positions: int = 32768

    def __post_init__(self):
        if self.layers < 0 or min(self.heads, self.d_model, self.d_ffn, self.vocab) < 1:
            raise ValueError("dimensions must be positive")
        if self.d_model % self.heads:
            raise ValueError("d_model must be divisible by heads")
        if self.head_dim % 2:
            raise ValueError("rotary embeddings need an even head dimension")
        if self.rope_base <= 0:
            raise ValueError("rope_base must be positive")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.heads

    @classmethod
    def paper(cls) -> "TransformerConfig":
        return cls()

    @classmethod
    def mini(cls) -> "TransformerConfig":
        return cls(layers=2, heads=4, d_model=64, d_ffn=128, vocab=256)

    def param_shapes(self) -> list[tuple[str, tuple[int, ...]]]:
        """Parameter names and shapes in declaration (serialization) order."""
        d, f = self.d_model, self.d_ffn
        shapes = [("embed", (self.vocab, d))]
        for i in range(self.layers):
            p = f"layers.{i}."
            shapes += [
                (p + "attn_norm", (d,)),
                (p + "wq", (d, d)),
                (p + "wk", (d, d)),
                (p + "wv", (d, d)),
                (p + "wo", (d, d)),
                (p + "ffn_norm", (d,)),
                (p + "w_gate", (d, f)),
                (p + "w_up", (d, f)),
                (p + "w_down", (f, d)),
            ]
        if self.layers:
            shapes += [("final_norm", (d,)), ("lm_head", (d, self.vocab))]
        return shapes


@dataclass(frozen=True)
class MambaConfig:
    layers: int = 8
    d_model: int = 512
    d_state: int = 16
    expand: int = 2
    d_conv: int = 4
    vocab: int = 32000

    def __post_init__(self):
        if self.layers < 0 or min(self.d_model, self.d_state, self.expand, self.d_conv, self.vocab) < 1:
            raise ValueError("dimensions must be positive")

    @property
    def d_inner(self) -> int:
        return self.expand * self.d_model

    @property
    def dt_rank(self) -> int:
        return math.ceil(self.d_model / 16)

    @classmethod
    def paper(cls) -> "MambaConfig":
        return cls()

    @classmethod
    def mini(cls) -> "MambaConfig":
        return cls(layers=2, d_model=64, d_state=8, expand=2, d_conv=4, vocab=256)

    def param_shapes(self) -> list[tuple[str, tuple[int, ...]]]:
        d, di, n, r = self.d_model, self.d_inner, self.d_state, self.dt_rank
        shapes = [("embed", (self.vocab, d))]
        for i in range(self.layers):
            p = f"layers.{i}."
            shapes += [
                (p + "norm", (d,)),
                (p + "in_proj", (d, 2 * di)),
                (p + "conv_weight", (di, self.d_conv)),
                (p + "conv_bias", (di,)),
                (p + "x_proj", (di, r + 2 * n)),
                (p + "dt_proj", (r, di)),
                (p + "dt_bias", (di,)),
                (p + "A_log", (di, n)),
                (p + "out_proj", (di, d)),
            ]
        if self.layers:
            shapes += [("final_norm", (d,)), ("lm_head", (d, self.vocab))]
        return shapes


ModelConfig = TransformerConfig | MambaConfig

CONFIG_FIELDS = {
    TransformerConfig: [f.name for f in fields(TransformerConfig)],
    MambaConfig: [f.name for f in fields(MambaConfig)],
}


def architecture(config: ModelConfig) -> str:
    return "transformer" if isinstance(config, TransformerConfig) else "mamba"


def preset(arch: str, name: str) -> ModelConfig:
    cls = {"transformer": TransformerConfig, "mamba": MambaConfig}[arch]
    if name not in ("paper", "mini"):
        raise ValueError(f"unknown config preset {name!r}")
    return getattr(cls, name)()


def param_count(config: ModelConfig, embeddings: bool = True) -> int:
    """Exact scalar parameter count.

    With ``embeddings=False`` the input embedding table and the output
    projection to the vocabulary are excluded.
    """
    total = sum(math.prod(shape) for _, shape in config.param_shapes())
    if not embeddings:
        total -= config.vocab * config.d_model * (2 if config.layers else 1)
    return total
