"""Attacker budget planning and countermeasure evaluation."""

from ipfscensor.strategy.budget import BudgetPlan, greedy_prefix_budget, hijack_pairs
from ipfscensor.strategy.pinning import PinningCurve, PinningPoint, sample_sizes, simulate_random_pinning
from ipfscensor.strategy.protection import ProtectionRow, Verdict, protection_report, report_csv

__all__ = [
    "BudgetPlan", "PinningCurve", "PinningPoint", "ProtectionRow", "Verdict",
    "greedy_prefix_budget", "hijack_pairs", "protection_report", "report_csv",
    "sample_sizes", "simulate_random_pinning",
]
