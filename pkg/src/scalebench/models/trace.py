from __future__ import annotations

import contextlib
from dataclasses import dataclass, field

import numpy as np

from ..errors import BadTokenId
from ..tensor import AllocationMeter, Tensor, active_meter


@dataclass
class ForwardTrace:
    """Outputs of one forward pass.

    ``hidden_states`` holds the embedding output followed by each layer's
    residual-stream output (empty unless requested).  ``attentions`` holds
    one (heads, N, N) tensor per layer, or ``None``.  ``final_states`` holds
    each Mamba layer's last recurrent state.  ``peak_memory`` is in bytes and
    ``elapsed`` in milliseconds.
    """

    logits: Tensor
    hidden_states: list[Tensor]
    attentions: list[Tensor] | None
    peak_memory: int
    elapsed: float
    final_states: list[Tensor] = field(default_factory=list)

    def hidden_arrays(self) -> list[np.ndarray]:
        return [h.data for h in self.hidden_states]

    def attention_array(self) -> np.ndarray:
        """Attentions stacked as (layers, heads, N, N)."""
        if self.attentions is None:
            raise ValueError("attentions were not collected")
        return np.stack([a.data for a in self.attentions])


def check_tokens(tokens, vocab: int) -> np.ndarray:
    ids = np.asarray(tokens, dtype=np.int64).reshape(-1)
    if ids.size < 1:
        raise ValueError("need at least one token")
    if ids.min() < 0 or ids.max() >= vocab:
        raise BadTokenId(f"token ids must lie in [0, {vocab})")
    return ids


@contextlib.contextmanager
def metered(meter: AllocationMeter | None):
    """Activate ``meter`` if given, else keep whichever meter is active."""
    if meter is None:
        yield active_meter()
    else:
        with meter.active():
            yield meter
