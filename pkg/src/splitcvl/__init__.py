"""Cost-model simulator and optimizer for split-inference cross-view
localization in a space-air-ground network."""

from .netmodel import (
    ChannelDistribution,
    ChannelState,
    DeviceProfile,
    sample_channel,
    shannon_rate,
    tx_energy,
    tx_latency,
)
from .nnprofile import (
    LayerProfile,
    ModelProfile,
    PartitionPoint,
    build_resnet50_usam_profile,
    device_flops,
    intermediate_bytes,
)
from .trico import (
    ConfidentialityTable,
    PartitionDecision,
    Scenario,
    TriCoBreakdown,
    TriCoWeights,
    brute_force_optimal,
    comm_cost,
    comp_cost,
    conf_cost,
    decision_effect,
    default_scenario,
)

__version__ = "0.1.0"

__all__ = [
    "ChannelDistribution",
    "ChannelState",
    "ConfidentialityTable",
    "DeviceProfile",
    "LayerProfile",
    "ModelProfile",
    "PartitionDecision",
    "PartitionPoint",
    "Scenario",
    "TriCoBreakdown",
    "TriCoWeights",
    "brute_force_optimal",
    "build_resnet50_usam_profile",
    "comm_cost",
    "comp_cost",
    "conf_cost",
    "decision_effect",
    "default_scenario",
    "device_flops",
    "intermediate_bytes",
    "sample_channel",
    "shannon_rate",
    "tx_energy",
    "tx_latency",
]
