"""Symbol-level constructive-interference precoding for the MU-MISO downlink."""
from .chanmodel import ChannelMatrix, cross_correlation, generate_rayleigh
from .linksim import MetricsRecord, Precoder, SimConfig, run_slot, run_sweep
from .mqam import ConstellationSpec, build_constellation, classify, detect
from .slp import (
    SnrTargets,
    SymbolSlot,
    build_constraints,
    precode_min_power,
    precode_zf_symbol,
    rowspace_coefficients,
    solve_all_active,
)

__version__ = "0.1.0"
