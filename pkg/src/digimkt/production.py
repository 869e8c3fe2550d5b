"""Earnings and the producers' best response to current demand."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .demand import DetailedAllocation
from .model import MarketInstance


@dataclass(frozen=True)
class SoldCurve:
    """Copies sold as a function of own output: ``sum_b min(y, residual_b)``.

    ``residuals`` are the buyers' leftover demands once everything ranked
    above the producer is taken, sorted in decreasing order.
    """

    residuals: np.ndarray

    def __call__(self, amount: float) -> float:
        return float(np.minimum(amount, self.residuals).sum())

    def segments(self) -> list[tuple[float, int]]:
        """(length, slope) pieces with positive slope, steepest first."""
        r = self.residuals[self.residuals > 0][::-1]
        out = []
        start = 0.0
        for t, end in enumerate(r):
            if end > start:
                out.append((end - start, len(r) - t))
                start = end
        return out

    def slope_at(self, amount: float) -> int:
        """Right derivative at ``amount``."""
        return int(np.count_nonzero(self.residuals > amount))


def earnings(
    inst: MarketInstance, prices: np.ndarray, x: DetailedAllocation, y: np.ndarray, i: int
) -> float:
    total = prices[0] * y[i, 0]
    for j in range(1, inst.g + 1):
        owned = inst.owners(j) == i
        total += prices[j] * x.songs[j - 1][:, owned].sum()
    return float(total)


def all_earnings(
    inst: MarketInstance, prices: np.ndarray, x: DetailedAllocation, y: np.ndarray
) -> np.ndarray:
    out = prices[0] * y[:, 0]
    for j in range(1, inst.g + 1):
        copies = x.songs[j - 1].sum(axis=0)
        out = out + prices[j] * np.bincount(inst.owners(j), weights=copies, minlength=inst.n)
    return out


def residual_matrix(inst: MarketInstance, z: np.ndarray, y: np.ndarray, j: int) -> np.ndarray:
    """``R[b, i]``: buyer b's category-j demand left once everything she ranks above agent i is taken."""
    supplies = inst.supplies(y, j)
    out = np.empty((inst.n, inst.n))
    for b, agent in enumerate(inst.agents):
        order = agent.orders[j - 1]
        above = np.concatenate(([0.0], np.cumsum(supplies[order])))
        out[b] = z[b, j] - above[inst.rank(b, j)[: inst.n]]
    return np.maximum(out, 0.0)


def sold_curve(
    inst: MarketInstance, z: np.ndarray, y: np.ndarray, i: int, j: int
) -> SoldCurve:
    """Copies-sold curve for producer i in category j, other supplies fixed.

    ``z`` are the buyers' coarse bundles; agent i's own current output in
    ``y`` is ignored.
    """
    return SoldCurve(np.sort(residual_matrix(inst, z, y, j)[:, i])[::-1])


def curves_for(
    inst: MarketInstance,
    z: np.ndarray,
    y: np.ndarray,
    i: int,
    residuals: list[np.ndarray] | None = None,
) -> list[SoldCurve]:
    if residuals is None:
        residuals = [residual_matrix(inst, z, y, j) for j in range(1, inst.g + 1)]
    return [SoldCurve(np.sort(r[:, i])[::-1]) for r in residuals]


def production_value(prices: np.ndarray, curves: list[SoldCurve], row: np.ndarray) -> float:
    """Earnings of a production row, excluding sales of initial songs."""
    return float(prices[0] * row[0] + sum(prices[j] * c(row[j]) for j, c in enumerate(curves, 1)))


def best_response(
    inst: MarketInstance,
    prices: np.ndarray,
    x: DetailedAllocation,
    y: np.ndarray,
    i: int,
    z: np.ndarray | None = None,
    residuals: list[np.ndarray] | None = None,
) -> np.ndarray:
    """Earnings-maximizing production row for agent i.

    Labor goes to sold-curve pieces in order of revenue per unit of labor;
    a piece only beats bread if strictly better, and the remainder is bread.
    """
    if z is None:
        z = x.coarse()
    agent = inst.agents[i]
    c = agent.costs
    bread_rate = prices[0] / c[0]
    pieces = []
    for j, curve in enumerate(curves_for(inst, z, y, i, residuals), start=1):
        if prices[j] <= 0.0:
            continue
        for length, slope in curve.segments():
            rate = prices[j] * slope / c[j]
            if rate > bread_rate:
                pieces.append((-rate, j, length))
    pieces.sort(key=lambda item: item[:2])
    row = np.zeros(inst.g + 1)
    labor = agent.labor
    for _, j, length in pieces:
        take = min(length, labor / c[j])
        row[j] += take
        labor -= take * c[j]
        if labor <= 0.0:
            labor = 0.0
            break
    row[0] = labor / c[0]
    return row
