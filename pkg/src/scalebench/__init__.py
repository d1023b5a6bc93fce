"""Scaling benchmarks and representational metrics for attention vs selective state-space stacks."""
__version__ = "0.1.0"
