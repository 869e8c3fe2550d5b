"""Two-step demand: coarse bundles under a budget, then detailed allocations.

Also holds the excess demand / excess supply bookkeeping that lets the
bought and sold totals of a category be compared off equilibrium.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import MarketInstance, UtilitySpec, compute_bounds


@dataclass(eq=False)
class DetailedAllocation:
    """Bread per buyer, per-category (buyer x entity) purchases, and excess demand.

    ``songs[j - 1][i, k]`` is how much of entity k buyer i bought in category
    j; ``excess[i, j - 1]`` is the part of i's coarse demand that found no
    supply.
    """

    bread: np.ndarray
    songs: list[np.ndarray]
    excess: np.ndarray

    def coarse(self) -> np.ndarray:
        """Coarse bundles (n, g+1) implied by the allocation."""
        z = np.empty((len(self.bread), len(self.songs) + 1))
        z[:, 0] = self.bread
        for j, block in enumerate(self.songs, start=1):
            z[:, j] = block.sum(axis=1) + self.excess[:, j - 1]
        return z

    def copy(self) -> "DetailedAllocation":
        return DetailedAllocation(
            self.bread.copy(), [b.copy() for b in self.songs], self.excess.copy()
        )

    @classmethod
    def zeros(cls, inst: MarketInstance) -> "DetailedAllocation":
        return cls(
            np.zeros(inst.n),
            [np.zeros((inst.n, inst.n_entities(j))) for j in range(1, inst.g + 1)],
            np.zeros((inst.n, inst.g)),
        )


@dataclass(frozen=True)
class MarketTotals:
    bought: np.ndarray
    sold: np.ndarray
    excess_supply: list[np.ndarray]

    def ratios(self) -> np.ndarray:
        """Bought/sold per good, with the +1 smoothing on bread."""
        r = self.bought / self.sold
        r[0] = (self.bought[0] + 1.0) / (self.sold[0] + 1.0)
        return r


# --------------------------------------------------------------------------
# coarse demand


def coarse_demand(
    utility: UtilitySpec, prices: np.ndarray, budget: float, cap: float
) -> np.ndarray:
    """Utility-maximizing bundle over ``{z : p.z <= budget, 0 <= z <= cap}``.

    Goods with zero price are filled to ``cap`` regardless of the family.
    Ties go to the lowest good index.
    """
    p = np.asarray(prices, dtype=float)
    z = np.zeros(len(p))
    free = p <= 0.0
    z[free] = cap
    budget = max(float(budget), 0.0)
    if budget == 0.0:
        return z

    if utility.family == "linear":
        u = utility.coefficients
        goods = [j for j in range(len(p)) if not free[j] and u[j] > 0]
        # stable sort keeps the lowest index first among equal bang-per-buck
        goods.sort(key=lambda j: -u[j] / p[j])
        for j in goods:
            take = min(cap, budget / p[j])
            z[j] = take
            budget -= take * p[j]
            if budget <= 0.0:
                break
        return z

    if utility.family == "cobb_douglas":
        a = utility.coefficients
        active = [j for j in range(len(p)) if not free[j] and a[j] > 0]
        while active:
            weight = sum(a[j] for j in active)
            capped = [j for j in active if a[j] * budget / (weight * p[j]) >= cap]
            if not capped:
                for j in active:
                    z[j] = a[j] * budget / (weight * p[j])
                break
            for j in capped:
                z[j] = cap
                budget -= cap * p[j]
            active = [j for j in active if j not in capped]
            if budget <= 0.0:
                break
        return z

    pieces = []
    for j, segs in enumerate(utility.segments):
        if free[j]:
            continue
        for t, (length, slope) in enumerate(segs):
            if slope > 0:
                pieces.append((-slope / p[j], j, t, length))
    pieces.sort(key=lambda item: item[:3])
    for _, j, _, length in pieces:
        room = cap - z[j] if length is None else min(length, cap - z[j])
        take = min(room, budget / p[j])
        if take <= 0.0:
            continue
        z[j] += take
        budget -= take * p[j]
        if budget <= 0.0:
            break
    return z


# --------------------------------------------------------------------------
# detailed allocation and market maker accounting


def detailed_allocation(
    order: np.ndarray, supplies: np.ndarray, demand: float
) -> tuple[np.ndarray, float]:
    """Walk ``order`` taking as much of each entity as remains of ``demand``.

    Returns per-entity amounts (indexed like ``supplies``) and the excess
    demand left after every entity is exhausted.
    """
    amounts = np.zeros(len(supplies))
    remaining = float(demand)
    for k in order:
        if remaining <= 0.0:
            break
        take = min(remaining, supplies[k])
        amounts[k] = take
        remaining -= take
    return amounts, max(remaining, 0.0)


def excess_supply(block: np.ndarray, supplies: np.ndarray) -> np.ndarray:
    """Unsold part of every entity against its single best buyer."""
    best = block.max(axis=0) if block.shape[0] else np.zeros(len(supplies))
    return np.maximum(supplies - best, 0.0)


def market_totals(
    x: DetailedAllocation, y: np.ndarray, inst: MarketInstance
) -> MarketTotals:
    """Bought and sold totals per good, market-maker terms included."""
    g = inst.g
    bought = np.empty(g + 1)
    sold = np.empty(g + 1)
    bought[0] = x.bread.sum()
    sold[0] = y[:, 0].sum()
    slack = []
    for j in range(1, g + 1):
        block = x.songs[j - 1]
        supplies = inst.supplies(y, j)
        l = excess_supply(block, supplies)
        taken = block.sum()
        bought[j] = x.excess[:, j - 1].sum() + taken
        sold[j] = l.sum() + taken
        slack.append(l)
    return MarketTotals(bought, sold, slack)


def allocate(
    inst: MarketInstance, z: np.ndarray, y: np.ndarray
) -> DetailedAllocation:
    """Detailed allocation of given coarse bundles against production ``y``."""
    x = DetailedAllocation.zeros(inst)
    x.bread[:] = z[:, 0]
    for j in range(1, inst.g + 1):
        supplies = inst.supplies(y, j)
        block = x.songs[j - 1]
        for i, agent in enumerate(inst.agents):
            block[i], x.excess[i, j - 1] = detailed_allocation(
                agent.orders[j - 1], supplies, z[i, j]
            )
    return x


def all_agents_demand(
    inst: MarketInstance, prices: np.ndarray, budgets: np.ndarray, y: np.ndarray
) -> DetailedAllocation:
    cap = compute_bounds(inst).cap
    z = np.array(
        [coarse_demand(a.utility, prices, budgets[i], cap) for i, a in enumerate(inst.agents)]
    )
    return allocate(inst, z, y)
