"""Equilibrium certificates and welfare checks on explicit market states."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any

import numpy as np

from .demand import (
    DetailedAllocation,
    coarse_demand,
    detailed_allocation,
    excess_supply,
    market_totals,
)
from .model import MarketInstance, compute_bounds
from .production import all_earnings, best_response, curves_for, production_value, residual_matrix

if TYPE_CHECKING:
    from .equilibrium import MarketState


class DimensionError(ValueError):
    pass


@dataclass
class Certificate:
    """Residuals of the three equilibrium conditions at one state.

    cond1: per agent, best-response earnings minus achieved earnings (plus
        any labor overrun).
    cond2: per agent, optimal minus achieved utility, plus budget slack and
        any departure of the detailed allocation from the order walk.
    bread_imbalance, unsold, over_demand: market clearing; ``unsold[j-1][k]``
        is entity k's supply not fully bought by any single buyer (only
        for categories priced above ``tol``).
    """

    tol: float
    cond1: np.ndarray
    cond2: np.ndarray
    bread_imbalance: float
    unsold: list[np.ndarray]
    over_demand: np.ndarray

    @property
    def max_cond1(self) -> float:
        return float(self.cond1.max(initial=0.0))

    @property
    def max_cond2(self) -> float:
        return float(self.cond2.max(initial=0.0))

    @property
    def max_cond3(self) -> float:
        worst = max([self.bread_imbalance, float(self.over_demand.max(initial=0.0))])
        for u in self.unsold:
            worst = max(worst, float(u.max(initial=0.0)))
        return worst

    @property
    def worst(self) -> float:
        return max(self.max_cond1, self.max_cond2, self.max_cond3)

    @property
    def passed(self) -> bool:
        return self.worst <= self.tol

    def to_dict(self) -> dict[str, Any]:
        return {
            "tol": self.tol,
            "passed": self.passed,
            "condition1": {"per_agent": self.cond1.tolist(), "max": self.max_cond1},
            "condition2": {"per_agent": self.cond2.tolist(), "max": self.max_cond2},
            "condition3": {
                "bread_imbalance": self.bread_imbalance,
                "unsold": [u.tolist() for u in self.unsold],
                "over_demand": self.over_demand.tolist(),
                "max": self.max_cond3,
            },
        }

    def summary(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        lines = [
            f"{'condition':<28}{'max residual':>14}",
            f"{'1 optimal production':<28}{self.max_cond1:>14.3e}",
            f"{'2 optimal allocation':<28}{self.max_cond2:>14.3e}",
            f"{'3 market clearing':<28}{self.max_cond3:>14.3e}",
            f"verdict at tol={self.tol:g}: {verdict}",
        ]
        return "\n".join(lines)


def _check_dims(inst: MarketInstance, state: "MarketState") -> None:
    n, g = inst.n, inst.g
    x = state.x
    if state.prices.shape != (g + 1,) or state.y.shape != (n, g + 1):
        raise DimensionError("prices/production do not match the instance")
    if x.bread.shape != (n,) or x.excess.shape != (n, g) or len(x.songs) != g:
        raise DimensionError("allocation does not match the instance")
    for j in range(1, g + 1):
        if x.songs[j - 1].shape != (n, inst.n_entities(j)):
            raise DimensionError(f"allocation block of category {j} has the wrong shape")


def allocation_gap(inst: MarketInstance, x: DetailedAllocation, y: np.ndarray, i: int) -> float:
    """Largest difference between buyer i's purchases and the order walk of her demand."""
    gap = 0.0
    for j in range(1, inst.g + 1):
        row = x.songs[j - 1][i]
        want = row.sum() + x.excess[i, j - 1]
        walk, d = detailed_allocation(inst.agents[i].orders[j - 1], inst.supplies(y, j), want)
        gap = max(gap, float(np.abs(walk - row).max()), abs(d - x.excess[i, j - 1]))
    return gap


def certify(
    inst: MarketInstance,
    state: "MarketState",
    tol: float = 1e-6,
    budgets: np.ndarray | None = None,
) -> Certificate:
    """Residuals of the equilibrium conditions.

    Budgets default to the earnings at the state itself; pass ``budgets``
    to certify an equilibrium with wealth transfers.
    """
    _check_dims(inst, state)
    p, x, y = state.prices, state.x, state.y
    cap = compute_bounds(inst).cap
    z = x.coarse()
    if budgets is None:
        budgets = all_earnings(inst, p, x, y)

    residuals = [residual_matrix(inst, z, y, j) for j in range(1, inst.g + 1)]
    cond1 = np.empty(inst.n)
    cond2 = np.empty(inst.n)
    for i, agent in enumerate(inst.agents):
        curves = curves_for(inst, z, y, i, residuals)
        best = best_response(inst, p, x, y, i, z=z, residuals=residuals)
        overrun = max(float(agent.costs @ y[i]) - agent.labor, 0.0)
        gain = production_value(p, curves, best) - production_value(p, curves, y[i])
        cond1[i] = max(gain, 0.0) + overrun

        target = coarse_demand(agent.utility, p, budgets[i], cap)
        utility_gap = agent.utility.value(target, cap) - agent.utility.value(z[i], cap)
        slack = abs(float(p @ z[i]) - budgets[i])
        cond2[i] = max(utility_gap, 0.0) + slack + allocation_gap(inst, x, y, i)

    unsold = []
    for j in range(1, inst.g + 1):
        if p[j] > tol:
            unsold.append(excess_supply(x.songs[j - 1], inst.supplies(y, j)))
        else:
            unsold.append(np.zeros(inst.n_entities(j)))
    return Certificate(
        tol=tol,
        cond1=cond1,
        cond2=cond2,
        bread_imbalance=abs(float(x.bread.sum() - y[:, 0].sum())),
        unsold=unsold,
        over_demand=x.excess.copy(),
    )


# --------------------------------------------------------------------------
# balance identity


@dataclass
class BalanceReport:
    identity_error: np.ndarray
    exclusive: np.ndarray
    excess_demand: np.ndarray
    excess_supply: list[np.ndarray]

    @property
    def ok(self) -> bool:
        return bool(np.all(self.identity_error <= 1e-9) and np.all(self.exclusive))


def check_balance_identity(
    x: DetailedAllocation, y: np.ndarray, inst: MarketInstance, eps: float = 0.0
) -> BalanceReport:
    """Bought minus sold against excess demand minus excess supply, per category.

    ``exclusive[j-1]`` is False when some buyer has excess demand above
    ``eps`` while some entity has excess supply above ``eps``.
    """
    totals = market_totals(x, y, inst)
    errors = np.empty(inst.g)
    exclusive = np.empty(inst.g, dtype=bool)
    for j in range(1, inst.g + 1):
        d = x.excess[:, j - 1]
        l = totals.excess_supply[j - 1]
        lhs = totals.bought[j] - totals.sold[j]
        errors[j - 1] = abs(lhs - (d.sum() - l.sum()))
        exclusive[j - 1] = not (np.any(d > eps) and np.any(l > eps))
    return BalanceReport(errors, exclusive, x.excess.copy(), totals.excess_supply)


# --------------------------------------------------------------------------
# first welfare theorem


@dataclass
class ParetoVerdict:
    dominated: bool
    grid_step: float
    slack: np.ndarray
    utilities: np.ndarray
    witness: dict[str, Any] | None = None
    evaluated: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "dominated": self.dominated,
            "grid_step": self.grid_step,
            "slack": self.slack.tolist(),
            "utilities": self.utilities.tolist(),
            "witness": self.witness,
            "evaluated": self.evaluated,
        }


class GridTooLarge(ValueError):
    pass


def lipschitz_bound(inst: MarketInstance, i: int, z: np.ndarray, step: float) -> float:
    """Bound on how fast agent i's utility moves with her bread.

    linear: the bread coefficient; pwl_concave: the first bread slope;
    cobb_douglas: the bread partial derivative at ``max(z_0 - step, step)``,
    which bounds the derivative over the grid cells adjacent to ``z_0``.
    """
    u = inst.agents[i].utility
    cap = compute_bounds(inst).cap
    if u.family == "linear":
        return float(u.coefficients[0])
    if u.family == "pwl_concave":
        pieces = u.segments[0]
        return float(pieces[0][1]) if pieces else 0.0
    a0 = u.coefficients[0]
    if a0 == 0:
        return 0.0
    low = z.copy()
    low[0] = max(z[0] - step, step)
    return float(a0 * u.value(low, cap) / low[0])


def check_partial_pareto(
    inst: MarketInstance,
    state: "MarketState",
    grid_step: float = 0.05,
    tol: float = 1e-6,
    max_points: int = 2_000_000,
) -> ParetoVerdict:
    """Search for a Pareto improvement that only moves bread.

    Digital production and every digital purchase stay as in ``state``.
    Each agent may make any grid amount of bread up to what her leftover
    labor allows; the bread is then split on the grid (the last agent
    receives the remainder). Utilities are nondecreasing in bread for every
    supported family, so a split of the largest producible total dominates
    whenever a split of a smaller total does; only that total is searched.
    """
    _check_dims(inst, state)
    cap = compute_bounds(inst).cap
    n, g = inst.n, inst.g
    z = state.x.coarse()
    u0 = np.array([a.utility.value(z[i], cap) for i, a in enumerate(inst.agents)])
    slack = np.array(
        [lipschitz_bound(inst, i, z[i], grid_step) * grid_step * (g + 1) for i in range(n)]
    )

    spare = inst.labor - np.einsum("ij,ij->i", inst.costs[:, 1:], state.y[:, 1:])
    most = np.maximum(spare, 0.0) / inst.costs[:, 0]
    total = float(most.sum())

    steps = int(np.floor(total / grid_step + 1e-9))
    count = 1
    for k in range(1, n):
        count = count * (steps + k) // k
    if count > max_points:
        raise GridTooLarge(f"{count} bread splits exceed the limit of {max_points}")

    def utilities(bread: np.ndarray) -> np.ndarray:
        out = np.empty(n)
        for i, a in enumerate(inst.agents):
            bundle = z[i].copy()
            bundle[0] = bread[i]
            out[i] = a.utility.value(bundle, cap)
        return out

    evaluated = 0
    for shares in itertools.product(range(steps + 1), repeat=n - 1):
        if sum(shares) > steps:
            continue
        bread = np.empty(n)
        bread[: n - 1] = np.asarray(shares, dtype=float) * grid_step
        bread[n - 1] = max(total - bread[: n - 1].sum(), 0.0)
        v = utilities(bread)
        evaluated += 1
        if np.all(v >= u0 - tol) and np.any(v > u0 + slack + tol):
            witness = {
                "bread_production": most.tolist(),
                "bread_allocation": bread.tolist(),
                "utilities": v.tolist(),
            }
            return ParetoVerdict(True, grid_step, slack, u0, witness, evaluated)
    return ParetoVerdict(False, grid_step, slack, u0, None, evaluated)


# --------------------------------------------------------------------------
# second welfare theorem


@dataclass
class TransferVerdict:
    alpha: float
    ratios: np.ndarray
    utilities: np.ndarray
    max_deviation: float
    certificate: Certificate
    passed: bool
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict[str, Any]:
        return {
            "alpha": self.alpha,
            "ratios": self.ratios.tolist(),
            "utilities": self.utilities.tolist(),
            "max_deviation": self.max_deviation,
            "passed": self.passed,
            "notes": self.notes,
            "certificate": self.certificate.to_dict(),
        }


def check_transfer_equilibrium(
    inst: MarketInstance,
    state: "MarketState",
    w: np.ndarray,
    targets: np.ndarray,
    tol: float = 1e-6,
) -> TransferVerdict:
    targets = np.asarray(targets, dtype=float)
    if targets.shape != (inst.n,) or np.any(targets <= 0):
        raise ValueError("targets must be one positive utility per agent")
    w = np.asarray(w, dtype=float)
    cap = compute_bounds(inst).cap
    cert = certify(inst, state, tol, budgets=w)
    z = state.x.coarse()
    v = np.array([a.utility.value(z[i], cap) for i, a in enumerate(inst.agents)])
    ratios = v / targets
    alpha = float(ratios.mean())
    dev = np.abs(v - alpha * targets) / np.maximum(1.0, alpha * targets)
    notes = []
    gamma = float(all_earnings(inst, state.prices, state.x, state.y).sum())
    if abs(w.sum() - gamma) > tol:
        notes.append(f"transfers sum to {w.sum():.9g}, total earnings are {gamma:.9g}")
    if np.any(w < 0):
        notes.append("negative transfer")
    passed = cert.passed and float(dev.max()) <= tol and alpha >= 1 - tol and not notes
    return TransferVerdict(alpha, ratios, v, float(dev.max()), cert, passed, notes)
