"""Polar-code information reconciliation for quantum key distribution.

Modules
-------
channel
    BSC / BIAWGN models, capacities, LLRs, seeded transmission.
construction
    Density-evolution code construction, frozen-set selection, code tables.
polar_core
    Polar transform and successive-cancellation decoding (float and
    fixed-point paths).
reconcile
    Two-party disclosure protocol, verification, leakage and key-rate
    accounting, wire frames.
bench
    Monte-Carlo FER / efficiency / throughput measurement and CSV reports.
cli
    Command-line front end including the loopback TCP reconciliation demo.
"""

from .channel import (
    BiAwgn,
    Bsc,
    ChannelModel,
    LLR_CLAMP,
    binary_entropy,
    capacity,
    channel_llr,
    gaussian_mutual_information,
    make_rng,
    transmit,
)
from .construction import (
    ConstructionResult,
    DeGrid,
    PolarCode,
    density_evolution,
    efficiency,
    efficiency_gaussian_mi,
    fer_upper_bound,
    read_code_table,
    select_frozen,
    write_code_table,
)

__version__ = "0.1.0"

__all__ = [
    "BiAwgn",
    "Bsc",
    "ChannelModel",
    "LLR_CLAMP",
    "binary_entropy",
    "capacity",
    "channel_llr",
    "gaussian_mutual_information",
    "make_rng",
    "transmit",
    "ConstructionResult",
    "DeGrid",
    "PolarCode",
    "density_evolution",
    "efficiency",
    "efficiency_gaussian_mi",
    "fer_upper_bound",
    "read_code_table",
    "select_frozen",
    "write_code_table",
    "__version__",
]
