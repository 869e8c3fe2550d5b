"""Fixed-point map of the market and damped iterations searching for its fixed points."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np

from .certify import Certificate, certify
from .demand import DetailedAllocation, all_agents_demand, allocate, coarse_demand, market_totals
from .model import MarketInstance, compute_bounds
from .production import all_earnings, best_response, curves_for, production_value, residual_matrix

log = logging.getLogger(__name__)

PRICE_RULES = ("argmax", "multiplicative")
ORDERS = ("jacobi", "gauss_seidel")
RESPONSES = ("damped", "proportional")
RATIO_TIE = 1e-12
RATIO_FLOOR = 1e-3


@dataclass(eq=False)
class MarketState:
    """Prices on the simplex, detailed allocation, production and budgets."""

    prices: np.ndarray
    x: DetailedAllocation
    y: np.ndarray
    budgets: np.ndarray

    def copy(self) -> "MarketState":
        return MarketState(self.prices.copy(), self.x.copy(), self.y.copy(), self.budgets.copy())


@dataclass(frozen=True)
class SolveConfig:
    rule: str = "multiplicative"
    eta: float = 0.1
    damping: float = 0.5
    max_iters: int = 50_000
    tol: float = 1e-6
    certify_every: int = 10
    seed: int = 0
    jitter: float = 0.0
    order: str = "jacobi"
    transfer_eta: float = 0.1
    response: str = "proportional"
    gain_scale: float = 1.0
    optimism: float = 3.0

    def __post_init__(self):
        if self.response not in RESPONSES:
            raise ValueError(f"response must be one of {RESPONSES}")
        if self.optimism < 0:
            raise ValueError("optimism must be nonnegative")
        if self.gain_scale <= 0:
            raise ValueError("gain_scale must be positive")
        if self.rule not in PRICE_RULES:
            raise ValueError(f"rule must be one of {PRICE_RULES}")
        if self.order not in ORDERS:
            raise ValueError(f"order must be one of {ORDERS}")
        if not 0 < self.eta <= 1 or not 0 < self.damping <= 1 or not 0 < self.transfer_eta <= 1:
            raise ValueError("eta, damping and transfer_eta must lie in (0, 1]")
        if self.max_iters < 0 or self.certify_every < 1 or self.tol <= 0:
            raise ValueError("need max_iters >= 0, certify_every >= 1, tol > 0")
        if not 0 <= self.jitter <= 1:
            raise ValueError("jitter must lie in [0, 1]")


@dataclass
class WealthTransfer:
    w: np.ndarray
    gamma: float
    alpha: float
    targets: np.ndarray
    achieved: np.ndarray

    @property
    def deviations(self) -> np.ndarray:
        return np.abs(self.achieved - self.alpha * self.targets)


@dataclass
class SolveResult:
    state: MarketState
    certificate: Certificate
    log: list[dict[str, float]]
    converged: bool
    iterations: int
    transfer: WealthTransfer | None = None
    extra: dict[str, Any] = field(default_factory=dict)


# --------------------------------------------------------------------------
# price rules


def price_ratios(bought: np.ndarray, sold: np.ndarray) -> np.ndarray:
    bought = np.asarray(bought, dtype=float)
    sold = np.asarray(sold, dtype=float)
    r = np.empty_like(bought)
    r[0] = (bought[0] + 1.0) / (sold[0] + 1.0)
    r[1:] = bought[1:] / sold[1:]
    return r


def argmax_prices(ratios: np.ndarray) -> np.ndarray:
    """Uniform point on the face of the simplex maximizing ``q . ratios``."""
    top = ratios.max()
    face = ratios >= top - RATIO_TIE * max(abs(top), 1.0)
    return face / face.sum()


def price_update(
    bought: np.ndarray, sold: np.ndarray, p_prev: np.ndarray, rule: str = "argmax", eta: float = 1.0
) -> np.ndarray:
    ratios = price_ratios(bought, sold)
    if rule == "argmax":
        return (1.0 - eta) * p_prev + eta * argmax_prices(ratios)
    if rule == "multiplicative":
        # an unbought good would otherwise get price 0 and never recover
        p = p_prev * np.maximum(ratios, RATIO_FLOOR) ** eta
        return p / p.sum()
    raise ValueError(f"unknown price rule {rule!r}")


# --------------------------------------------------------------------------
# the fixed-point map


def initial_state(inst: MarketInstance, config: SolveConfig | None = None) -> MarketState:
    """Uniform prices (optionally jittered), all-bread production, matching demand."""
    config = config or SolveConfig()
    g = inst.g
    p = np.full(g + 1, 1.0 / (g + 1))
    if config.jitter > 0:
        rng = np.random.default_rng(config.seed)
        p = (1 - config.jitter) * p + config.jitter * rng.dirichlet(np.ones(g + 1))
    y = np.zeros((inst.n, g + 1))
    y[:, 0] = inst.labor / inst.costs[:, 0]
    empty = DetailedAllocation.zeros(inst)
    budgets = all_earnings(inst, p, empty, y)
    x = all_agents_demand(inst, p, budgets, y)
    return MarketState(p, x, y, budgets)


def best_responses(inst: MarketInstance, p: np.ndarray, x: DetailedAllocation, y: np.ndarray) -> np.ndarray:
    z = x.coarse()
    residuals = [residual_matrix(inst, z, y, j) for j in range(1, inst.g + 1)]
    return np.array([best_response(inst, p, x, y, i, z, residuals) for i in range(inst.n)])


def f_map(
    inst: MarketInstance, state: MarketState, rule: str = "argmax", eta: float = 1.0
) -> MarketState:
    """One application of the equilibrium map, every component from the old state."""
    p, x, y = state.prices, state.x, state.y
    budgets = all_earnings(inst, p, x, y)
    x_new = all_agents_demand(inst, p, budgets, y)
    y_new = best_responses(inst, p, x, y)
    totals = market_totals(x, y, inst)
    p_new = price_update(totals.bought, totals.sold, p, rule, eta)
    return MarketState(p_new, x_new, y_new, budgets)


@dataclass
class MapResiduals:
    utility_gap: np.ndarray
    earnings_gap: np.ndarray
    ratio_gap: float
    ratio_to_one: float

    @property
    def worst(self) -> float:
        return max(
            float(self.utility_gap.max(initial=0.0)),
            float(self.earnings_gap.max(initial=0.0)),
            self.ratio_gap,
            self.ratio_to_one,
        )


def fmap_residuals(inst: MarketInstance, state: MarketState, tol: float = 1e-6) -> MapResiduals:
    """How far ``state`` is from being reproduced by :func:`f_map`.

    Utility and earnings gaps compare the mapped allocation and production
    with the current ones; the ratio gaps measure how far every good priced
    above ``tol`` is from the largest bought/sold ratio, and how far that
    ratio is from 1.
    """
    cap = compute_bounds(inst).cap
    mapped = f_map(inst, state)
    z_old, z_new = state.x.coarse(), mapped.x.coarse()
    util = np.array(
        [abs(a.utility.value(z_new[i], cap) - a.utility.value(z_old[i], cap)) for i, a in enumerate(inst.agents)]
    )
    residuals = [residual_matrix(inst, z_old, state.y, j) for j in range(1, inst.g + 1)]
    earn = np.empty(inst.n)
    for i in range(inst.n):
        curves = curves_for(inst, z_old, state.y, i, residuals)
        earn[i] = abs(
            production_value(state.prices, curves, mapped.y[i])
            - production_value(state.prices, curves, state.y[i])
        )
    totals = market_totals(state.x, state.y, inst)
    ratios = price_ratios(totals.bought, totals.sold)
    top = float(ratios.max())
    priced = state.prices > tol
    gap = float((top - ratios[priced]).max(initial=0.0))
    return MapResiduals(util, earn, gap, abs(top - 1.0))


# --------------------------------------------------------------------------
# iterations


def _demand_step(
    inst: MarketInstance, state: MarketState, config: SolveConfig, budgets: np.ndarray
) -> np.ndarray:
    """Coarse bundles for the next state.

    With the proportional response, agents whose demand is set-valued
    (linear, pwl) move from their current bundle, rescaled to the new
    budget, toward the greedy optimum by a step proportional to the
    utility gained per unit of money moved. At an exact tie the gain is
    zero and the bundle stays put instead of jumping to a vertex.
    """
    p = state.prices
    cap = compute_bounds(inst).cap
    z_old = state.x.coarse()
    z = np.empty_like(z_old)
    for i, agent in enumerate(inst.agents):
        best = coarse_demand(agent.utility, p, budgets[i], cap)
        spent = float(p @ z_old[i])
        if (
            config.response == "damped"
            or agent.utility.family == "cobb_douglas"
            or spent <= 0.0
            or np.any(p <= 0.0)
        ):
            z[i] = best
            continue
        current = np.minimum(z_old[i] * (budgets[i] / spent), cap)
        f = agent.utility
        top = f.value(best, cap)
        moved = 0.5 * float(p @ np.abs(best - current))
        if moved <= 0.0 or top <= 0.0:
            z[i] = best
            continue
        gain = max(top - f.value(current, cap), 0.0)
        s = min(1.0, config.gain_scale * (gain / moved) / (top / budgets[i]))
        z[i] = (1.0 - s) * current + s * best
    return z


def _production_step(
    inst: MarketInstance, p: np.ndarray, x: DetailedAllocation, y: np.ndarray, config: SolveConfig
) -> np.ndarray:
    """Damped move toward the best response, slowed near revenue ties."""
    z = x.coarse()
    residuals = [residual_matrix(inst, z, y, j) for j in range(1, inst.g + 1)]
    y_new = y.copy()
    for i, agent in enumerate(inst.agents):
        br = best_response(inst, p, x, y, i, z, residuals)
        s = config.damping
        if config.response == "proportional":
            labor_moved = 0.5 * float(agent.costs @ np.abs(br - y[i]))
            if labor_moved <= 0.0:
                continue
            curves = curves_for(inst, z, y, i, residuals)
            gain = production_value(p, curves, br) - production_value(p, curves, y[i])
            bread_rate = p[0] / agent.costs[0]
            if bread_rate > 0:
                s = min(s, config.gain_scale * max(gain, 0.0) / labor_moved / bread_rate)
        y_new[i] = (1.0 - s) * y[i] + s * br
    return y_new


def _step(
    inst: MarketInstance,
    state: MarketState,
    config: SolveConfig,
    budgets: np.ndarray,
    prev_ratios: np.ndarray | None = None,
) -> tuple[MarketState, np.ndarray]:
    p, x, y = state.prices, state.x, state.y
    x_new = allocate(inst, _demand_step(inst, state, config, budgets), y)
    if config.order == "jacobi":
        y_new = _production_step(inst, p, x, y, config)
        totals = market_totals(x, y, inst)
    else:
        y_new = _production_step(inst, p, x_new, y, config)
        totals = market_totals(x_new, y, inst)
    ratios = np.maximum(price_ratios(totals.bought, totals.sold), RATIO_FLOOR)
    if config.rule == "multiplicative" and config.optimism > 0 and prev_ratios is not None:
        # extrapolate the log-ratio one step ahead; damps price/quantity rotation
        eff = ratios ** (1 + config.optimism) / prev_ratios**config.optimism
        p_new = p * np.maximum(eff, RATIO_FLOOR) ** config.eta
        p_new /= p_new.sum()
    else:
        p_new = price_update(totals.bought, totals.sold, p, config.rule, config.eta)
    return MarketState(p_new, x_new, y_new, budgets), ratios


def _log_row(it: int, state: MarketState, cert: Certificate, earned: float) -> dict[str, float]:
    row: dict[str, float] = {"iter": it}
    for j, pj in enumerate(state.prices):
        row[f"p_{j}"] = float(pj)
    row["res_cond1"] = cert.max_cond1
    row["res_cond2"] = cert.max_cond2
    row["res_cond3"] = cert.max_cond3
    row["total_earnings"] = earned
    return row


def solve(inst: MarketInstance, config: SolveConfig | None = None) -> SolveResult:
    """Damped iteration of the equilibrium map until the certificate passes.

    Budgets lag one step: they are the earnings of the current state.
    Returns the first certified state, or the best state seen when
    ``max_iters`` runs out.
    """
    config = config or SolveConfig()
    state = initial_state(inst, config)
    return _iterate(inst, state, config, None)


def _iterate(
    inst: MarketInstance,
    state: MarketState,
    config: SolveConfig,
    targets: np.ndarray | None,
) -> SolveResult:
    cap = compute_bounds(inst).cap
    rows: list[dict[str, float]] = []
    best: tuple[float, MarketState, Certificate, np.ndarray | None] | None = None
    w = None
    if targets is not None:
        gamma = float(all_earnings(inst, state.prices, state.x, state.y).sum())
        w = np.full(inst.n, gamma / inst.n)
        state = replace(state, x=all_agents_demand(inst, state.prices, w, state.y), budgets=w)

    it = 0
    prev_ratios = None
    while True:
        earned = all_earnings(inst, state.prices, state.x, state.y)
        if it % config.certify_every == 0 or it == config.max_iters:
            cert = certify(inst, state, config.tol, budgets=w if targets is not None else None)
            score = cert.worst
            if targets is not None:
                score = max(score, _transfer_score(inst, state, targets, cap))
            rows.append(_log_row(it, state, cert, float(earned.sum())))
            log.debug("iter %d worst residual %.3e", it, score)
            if best is None or score < best[0]:
                best = (score, state, cert, None if w is None else w.copy())
            if score <= config.tol:
                break
        if it >= config.max_iters:
            break
        if targets is None:
            budgets = earned
        else:
            budgets = _transfer_update(inst, state, targets, w, float(earned.sum()), config, cap)
            w = budgets
        state, prev_ratios = _step(inst, state, config, budgets, prev_ratios)
        it += 1

    score, state, cert, w_best = best
    converged = score <= config.tol
    transfer = None
    if targets is not None:
        z = state.x.coarse()
        v = np.array([a.utility.value(z[i], cap) for i, a in enumerate(inst.agents)])
        alpha = float(np.mean(v / targets))
        gamma = float(all_earnings(inst, state.prices, state.x, state.y).sum())
        transfer = WealthTransfer(w_best, gamma, alpha, targets, v)
    return SolveResult(state, cert, rows, converged, it, transfer)


def _transfer_score(inst, state, targets, cap) -> float:
    z = state.x.coarse()
    v = np.array([a.utility.value(z[i], cap) for i, a in enumerate(inst.agents)])
    alpha = float(np.mean(v / targets))
    return float((np.abs(v - alpha * targets) / np.maximum(1.0, alpha * targets)).max())


def _transfer_update(inst, state, targets, w, gamma, config, cap) -> np.ndarray:
    """Move transfers toward the agents furthest below the common utility ratio."""
    z = state.x.coarse()
    v = np.array([a.utility.value(z[i], cap) for i, a in enumerate(inst.agents)])
    ratios = v / targets
    if config.rule == "argmax":
        low = ratios <= ratios.min() + RATIO_TIE * max(abs(ratios.min()), 1.0)
        target_w = gamma * low / low.sum()
        scaled = w * (gamma / w.sum()) if w.sum() > 0 else np.full(inst.n, gamma / inst.n)
        return (1 - config.transfer_eta) * scaled + config.transfer_eta * target_w
    mean = ratios.mean()
    factor = np.where(ratios > 0, (mean / np.maximum(ratios, 1e-300)) ** config.transfer_eta, 2.0)
    out = w * factor
    if out.sum() <= 0:
        return np.full(inst.n, gamma / inst.n)
    return out * (gamma / out.sum())


def solve_with_transfers(
    inst: MarketInstance, targets: np.ndarray, config: SolveConfig | None = None
) -> SolveResult:
    """Iterate toward an equilibrium whose utilities are a common multiple of ``targets``.

    Spending budgets come from a transfer vector that always sums to the
    current total earnings; it is nudged toward agents whose utility ratio
    is below average.
    """
    targets = np.asarray(targets, dtype=float)
    if targets.shape != (inst.n,) or np.any(targets <= 0):
        raise ValueError("targets must be one positive utility per agent")
    config = config or SolveConfig()
    state = initial_state(inst, config)
    return _iterate(inst, state, config, targets)
