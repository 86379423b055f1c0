"""Hybrid reservoir/DNN classifier: configuration, layer ops, batched forward pass, checkpoints."""

from rnnet.network.config import (
    LayerSpec,
    NetworkConfig,
    ReservoirSpec,
    adc_input_nodes,
    count_macs,
    count_params,
    param_report,
    preset,
)

__all__ = [
    "LayerSpec",
    "NetworkConfig",
    "ReservoirSpec",
    "adc_input_nodes",
    "count_macs",
    "count_params",
    "param_report",
    "preset",
]
