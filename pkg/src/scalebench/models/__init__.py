from .config import MambaConfig, ModelConfig, TransformerConfig, architecture, param_count, preset
from .mamba import forward_mamba
from .scan import selective_scan, selective_scan_array
from .trace import ForwardTrace
from .transformer import forward_transformer
from .weights import cast_weights, init_weights, load_weights, save_weights

__all__ = [
    "ForwardTrace",
    "MambaConfig",
    "ModelConfig",
    "TransformerConfig",
    "architecture",
    "cast_weights",
    "forward",
    "forward_mamba",
    "forward_transformer",
    "init_weights",
    "load_weights",
    "param_count",
    "preset",
    "save_weights",
    "selective_scan",
    "selective_scan_array",
]


def forward(config: ModelConfig, weights, tokens=None, collect=(), meter=None, inputs_embeds=None) -> ForwardTrace:
    """Dispatch to the forward pass matching ``config``'s architecture."""
    fn = forward_transformer if isinstance(config, TransformerConfig) else forward_mamba
    return fn(config, weights, tokens, collect=collect, meter=meter, inputs_embeds=inputs_embeds)
