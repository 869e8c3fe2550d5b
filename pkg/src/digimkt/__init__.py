"""Equilibrium solver and certifier for markets mixing bread with substitutable digital goods."""

from .certify import (
    Certificate,
    ParetoVerdict,
    check_balance_identity,
    check_partial_pareto,
    check_transfer_equilibrium,
    certify,
)
from .demand import DetailedAllocation, MarketTotals, coarse_demand, detailed_allocation, market_totals
from .equilibrium import MarketState, SolveConfig, f_map, price_update, solve, solve_with_transfers
from .model import GlobalBounds, InstanceError, MarketInstance, UtilitySpec, compute_bounds, generate_instance, parse_instance
from .production import best_response, earnings, sold_curve

__all__ = [
    "Certificate",
    "DetailedAllocation",
    "GlobalBounds",
    "InstanceError",
    "MarketInstance",
    "MarketState",
    "MarketTotals",
    "ParetoVerdict",
    "SolveConfig",
    "UtilitySpec",
    "best_response",
    "certify",
    "check_balance_identity",
    "check_partial_pareto",
    "check_transfer_equilibrium",
    "coarse_demand",
    "compute_bounds",
    "detailed_allocation",
    "earnings",
    "f_map",
    "generate_instance",
    "market_totals",
    "parse_instance",
    "price_update",
    "sold_curve",
    "solve",
    "solve_with_transfers",
]
