"""Blocking predicates, the bulk engine and dataset metrics."""

from ipfscensor.attack.engine import BlockageEngine, EndpointKey
from ipfscensor.attack.evaluate import (
    ALL_MODES,
    ALL_VECTORS,
    BlockageResult,
    evaluate_dataset,
    evaluate_engine,
)
from ipfscensor.attack.predicates import (
    AttackConfig,
    Blockage,
    Mode,
    TiePolicy,
    Vector,
    attack_surface,
    endpoint_blocked,
    hijack_diverts,
    passive_intercepts,
    requesters_blocked,
)
from ipfscensor.attack.stats import SurfaceStats, surface_stats

__all__ = [
    "ALL_MODES", "ALL_VECTORS", "AttackConfig", "Blockage", "BlockageEngine",
    "BlockageResult", "EndpointKey", "Mode", "TiePolicy", "Vector", "attack_surface",
    "endpoint_blocked", "evaluate_dataset", "evaluate_engine", "hijack_diverts",
    "passive_intercepts", "requesters_blocked", "SurfaceStats", "surface_stats",
]
