"""Seeded weight initialization and the flat binary snapshot format.

Snapshot layout (all little-endian)::

    b"SBWT"                       4-byte magic
    int32 version                 currently 1
    int32 architecture            0 = transformer, 1 = mamba
    int32 field_count
    int32 * field_count           config fields in dataclass order
    float32 ...                   parameters in declaration order
"""

from __future__ import annotations

import math
import struct
from pathlib import Path

import numpy as np

from ..tensor import Tensor, active_meter, cast, dtype_of
from .config import CONFIG_FIELDS, MambaConfig, ModelConfig, TransformerConfig

MAGIC = b"SBWT"
VERSION = 1
INIT_STD = 0.02
_ARCH_CODES = {TransformerConfig: 0, MambaConfig: 1}

Weights = dict[str, Tensor]


def init_weights(config: ModelConfig, seed: int = 42, precision: str = "single") -> Weights:
    """Draw random (untrained) weights, metered under the ``param`` tag.

    Matrices are N(0, 0.02); norm scales start at one; Mamba's ``A_log``
    holds log(1..d_state) per row and ``dt_bias`` is the inverse softplus of
    step sizes log-uniform in [1e-3, 1e-1].  The full footprint is checked
    against the active meter before any random numbers are drawn.
    """
    dtype = dtype_of(precision)
    shapes = config.param_shapes()
    meter = active_meter()
    if meter is not None:
        meter.check(sum(math.prod(s) for _, s in shapes) * np.dtype(dtype).itemsize)
    rng = np.random.default_rng(seed)
    weights: Weights = {}
    for name, shape in shapes:
        leaf = name.rsplit(".", 1)[-1]
        if leaf.endswith("norm"):
            arr = np.ones(shape)
        elif leaf == "A_log":
            arr = np.log(np.broadcast_to(np.arange(1, shape[1] + 1, dtype=np.float64), shape))
        elif leaf == "dt_bias":
            dt = np.exp(rng.uniform(np.log(1e-3), np.log(1e-1), size=shape))
            arr = dt + np.log(-np.expm1(-dt))
        elif leaf == "conv_bias":
            arr = np.zeros(shape)
        else:
            arr = rng.normal(0.0, INIT_STD, size=shape)
        weights[name] = Tensor(arr, precision, tag="param")
    return weights


def cast_weights(weights: Weights, precision: str) -> Weights:
    return {name: cast(t, precision) for name, t in weights.items()}


def save_weights(path: str | Path, config: ModelConfig, weights: Weights) -> None:
    values = [getattr(config, name) for name in CONFIG_FIELDS[type(config)]]
    header = MAGIC + struct.pack(
        f"<iii{len(values)}i", VERSION, _ARCH_CODES[type(config)], len(values), *values
    )
    with open(path, "wb") as fh:
        fh.write(header)
        for name, shape in config.param_shapes():
            arr = weights[name].data
            if arr.shape != shape:
                raise ValueError(f"{name}: shape {arr.shape} != {shape}")
            fh.write(np.ascontiguousarray(arr, dtype="<f4").tobytes())


def load_weights(path: str | Path, precision: str = "single") -> tuple[ModelConfig, Weights]:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise ValueError("not a scalebench weight snapshot")
    version, arch_code, count = struct.unpack_from("<iii", raw, 4)
    if version != VERSION:
        raise ValueError(f"unsupported snapshot version {version}")
    cls = {v: k for k, v in _ARCH_CODES.items()}[arch_code]
    values = struct.unpack_from(f"<{count}i", raw, 16)
    config = cls(**dict(zip(CONFIG_FIELDS[cls], values)))
    offset = 16 + 4 * count
    weights: Weights = {}
    for name, shape in config.param_shapes():
        n = math.prod(shape)
        arr = np.frombuffer(raw, dtype="<f4", count=n, offset=offset).reshape(shape)
        weights[name] = Tensor(arr, precision, tag="param")
        offset += 4 * n
    if offset != len(raw):
        raise ValueError("trailing bytes after the last parameter")
    return config, weights
