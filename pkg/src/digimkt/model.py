"""Economy data model: agents, categories of substitutable songs, utilities.

Good 0 is bread; goods 1..g are digital categories. Inside a category,
"entities" are indexed so that positions 0..n-1 are the agents (as
producers) and position n + t is the t-th initial song of that category.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

FAMILIES = ("linear", "cobb_douglas", "pwl_concave")
CAP_FACTOR = 1.1


class InstanceError(ValueError):
    """Raised when an instance document violates the schema or invariants."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


@dataclass(frozen=True, eq=False)
class UtilitySpec:
    """Coarse utility of one agent.

    ``coefficients`` holds linear weights or Cobb-Douglas exponents;
    ``segments`` holds, per good, ``(length, slope)`` pieces of a concave
    piecewise-linear function. A ``None`` length means the piece runs to
    the satiation cap.
    """

    family: str
    coefficients: np.ndarray | None = None
    segments: tuple[tuple[tuple[float | None, float], ...], ...] | None = None

    @property
    def n_goods(self) -> int:
        if self.family == "pwl_concave":
            return len(self.segments)
        return len(self.coefficients)

    def value(self, z: Sequence[float], cap: float) -> float:
        """Utility of the coarse bundle ``z``; every good saturates at ``cap``."""
        z = np.minimum(np.maximum(np.asarray(z, dtype=float), 0.0), cap)
        if self.family == "linear":
            return float(self.coefficients @ z)
        if self.family == "cobb_douglas":
            a = self.coefficients
            active = a > 0
            if np.any(z[active] <= 0.0):
                return 0.0
            return float(np.prod(z[active] ** a[active]))
        total = 0.0
        for amount, pieces in zip(z, self.segments):
            total += _pwl_value(pieces, amount)
        return total

    def to_dict(self) -> dict[str, Any]:
        if self.family == "linear":
            return {"family": "linear", "coefficients": [float(v) for v in self.coefficients]}
        if self.family == "cobb_douglas":
            return {"family": "cobb_douglas", "exponents": [float(v) for v in self.coefficients]}
        return {
            "family": "pwl_concave",
            "segments": [
                [[None if ln is None else float(ln), float(sl)] for ln, sl in pieces]
                for pieces in self.segments
            ],
        }


def _pwl_value(pieces, amount: float) -> float:
    total = 0.0
    left = amount
    for length, slope in pieces:
        if left <= 0.0:
            break
        take = left if length is None else min(left, length)
        total += take * slope
        left -= take
    return total


@dataclass(frozen=True)
class Song:
    id: str
    owner: int


@dataclass(frozen=True, eq=False)
class Agent:
    """Labor budget, unit labor costs per good, utility and total orders.

    ``orders[j - 1]`` is the agent's ranking of category j as an array of
    entity indices, best first.
    """

    labor: float
    costs: np.ndarray
    utility: UtilitySpec
    orders: tuple[np.ndarray, ...]


@dataclass(frozen=True, eq=False)
class MarketInstance:
    agents: tuple[Agent, ...]
    categories: tuple[tuple[Song, ...], ...]
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def n(self) -> int:
        return len(self.agents)

    @property
    def g(self) -> int:
        return len(self.categories)

    def n_entities(self, j: int) -> int:
        return self.n + len(self.categories[j - 1])

    def entity_ids(self, j: int) -> list[str]:
        ids = [f"agent:{i}" for i in range(self.n)]
        ids += [f"song:{s.id}" for s in self.categories[j - 1]]
        return ids

    def entity_index(self, j: int) -> dict[str, int]:
        key = ("entity_index", j)
        if key not in self._cache:
            self._cache[key] = {e: k for k, e in enumerate(self.entity_ids(j))}
        return self._cache[key]

    def rank(self, i: int, j: int) -> np.ndarray:
        """Position of every category-j entity in agent i's order."""
        key = ("rank", i, j)
        if key not in self._cache:
            order = self.agents[i].orders[j - 1]
            pos = np.empty(len(order), dtype=int)
            pos[order] = np.arange(len(order))
            self._cache[key] = pos
        return self._cache[key]

    def supplies(self, y: np.ndarray, j: int) -> np.ndarray:
        """Entity supplies in category j: agents' production, then 1 per initial song."""
        return np.concatenate([y[:, j], np.ones(len(self.categories[j - 1]))])

    def owners(self, j: int) -> np.ndarray:
        """Owner agent of every entity in category j (agents own themselves)."""
        key = ("owners", j)
        if key not in self._cache:
            own = [*range(self.n), *(s.owner for s in self.categories[j - 1])]
            self._cache[key] = np.asarray(own, dtype=int)
        return self._cache[key]

    @property
    def labor(self) -> np.ndarray:
        return np.array([a.labor for a in self.agents])

    @property
    def costs(self) -> np.ndarray:
        return np.array([a.costs for a in self.agents])

    def to_dict(self) -> dict[str, Any]:
        agents = []
        for a in self.agents:
            orders = {}
            for j in range(1, self.g + 1):
                ids = self.entity_ids(j)
                orders[str(j)] = [ids[k] for k in a.orders[j - 1]]
            agents.append(
                {
                    "labor": float(a.labor),
                    "costs": [float(c) for c in a.costs],
                    "utility": a.utility.to_dict(),
                    "orders": orders,
                }
            )
        categories = [
            {"songs": [{"id": s.id, "owner": s.owner} for s in cat]} for cat in self.categories
        ]
        return {"agents": agents, "categories": categories}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


@dataclass(frozen=True)
class GlobalBounds:
    M: float
    cap: float


def compute_bounds(inst: MarketInstance) -> GlobalBounds:
    """Supply bound if every agent made a single good, and the satiation cap."""
    key = "bounds"
    if key in inst._cache:
        return inst._cache[key]
    labor = inst.labor
    costs = inst.costs
    M = float(np.sum(labor / costs[:, 0]))
    for j in range(1, inst.g + 1):
        M = max(M, len(inst.categories[j - 1]) + float(np.sum(labor / costs[:, j])))
    bounds = GlobalBounds(M=M, cap=CAP_FACTOR * M)
    inst._cache[key] = bounds
    return bounds


# --------------------------------------------------------------------------
# parsing


def _number(value: Any, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise InstanceError(path, f"expected a number, got {value!r}")
    if not np.isfinite(value):
        raise InstanceError(path, "must be finite")
    return float(value)


def _parse_utility(doc: Any, n_goods: int, path: str) -> UtilitySpec:
    if not isinstance(doc, dict):
        raise InstanceError(path, "expected an object")
    family = doc.get("family")
    if family not in FAMILIES:
        raise InstanceError(f"{path}.family", f"unknown family {family!r}")

    if family in ("linear", "cobb_douglas"):
        name = "coefficients" if family == "linear" else "exponents"
        raw = doc.get(name)
        if not isinstance(raw, list) or len(raw) != n_goods:
            raise InstanceError(f"{path}.{name}", f"expected a list of {n_goods} numbers")
        coef = np.array([_number(v, f"{path}.{name}[{t}]") for t, v in enumerate(raw)])
        if np.any(coef < 0):
            raise InstanceError(f"{path}.{name}", "entries must be nonnegative")
        if not np.any(coef > 0):
            raise InstanceError(f"{path}.{name}", "at least one entry must be positive")
        if family == "cobb_douglas" and abs(coef.sum() - 1.0) > 1e-9:
            raise InstanceError(f"{path}.{name}", "exponents must sum to 1")
        return UtilitySpec(family, coefficients=coef)

    raw = doc.get("segments")
    if not isinstance(raw, list) or len(raw) != n_goods:
        raise InstanceError(f"{path}.segments", f"expected a list of {n_goods} piece lists")
    goods = []
    for j, pieces in enumerate(raw):
        gpath = f"{path}.segments[{j}]"
        if not isinstance(pieces, list):
            raise InstanceError(gpath, "expected a list of [length, slope] pairs")
        parsed = []
        for t, piece in enumerate(pieces):
            ppath = f"{gpath}[{t}]"
            if not isinstance(piece, list) or len(piece) != 2:
                raise InstanceError(ppath, "expected [length, slope]")
            length, slope = piece
            if length is None:
                if t != len(pieces) - 1:
                    raise InstanceError(ppath, "only the last piece may have a null length")
            else:
                length = _number(length, ppath)
                if length <= 0:
                    raise InstanceError(ppath, "length must be positive")
            slope = _number(slope, ppath)
            if slope < 0:
                raise InstanceError(ppath, "slope must be nonnegative")
            if parsed and slope >= parsed[-1][1]:
                raise InstanceError(ppath, "slopes must be strictly decreasing")
            parsed.append((length, slope))
        goods.append(tuple(parsed))
    if not any(pieces and pieces[0][1] > 0 for pieces in goods):
        raise InstanceError(f"{path}.segments", "at least one first slope must be positive")
    return UtilitySpec("pwl_concave", segments=tuple(goods))


def instance_from_dict(doc: Any) -> MarketInstance:
    """Validate a decoded instance document and build a :class:`MarketInstance`."""
    if not isinstance(doc, dict):
        raise InstanceError("", "instance document must be a JSON object")
    raw_agents = doc.get("agents")
    raw_cats = doc.get("categories")
    if not isinstance(raw_agents, list) or not raw_agents:
        raise InstanceError("agents", "expected a non-empty list")
    if not isinstance(raw_cats, list) or not raw_cats:
        raise InstanceError("categories", "expected a non-empty list")
    n, g = len(raw_agents), len(raw_cats)

    seen: set[str] = set()
    categories = []
    for j, cat in enumerate(raw_cats, start=1):
        cpath = f"categories[{j - 1}]"
        songs = cat.get("songs") if isinstance(cat, dict) else None
        if not isinstance(songs, list):
            raise InstanceError(f"{cpath}.songs", "expected a list")
        if not songs:
            raise InstanceError(f"{cpath}.songs", f"category {j} has empty initial song set")
        parsed = []
        for t, song in enumerate(songs):
            spath = f"{cpath}.songs[{t}]"
            if not isinstance(song, dict):
                raise InstanceError(spath, "expected an object")
            sid, owner = song.get("id"), song.get("owner")
            if not isinstance(sid, str) or not sid:
                raise InstanceError(f"{spath}.id", "expected a non-empty string")
            if sid in seen:
                raise InstanceError(f"{spath}.id", f"duplicate song id {sid!r}")
            seen.add(sid)
            if isinstance(owner, bool) or not isinstance(owner, int) or not 0 <= owner < n:
                raise InstanceError(f"{spath}.owner", f"owner must be an agent index in [0, {n})")
            parsed.append(Song(sid, owner))
        categories.append(tuple(parsed))

    agents = []
    for i, a in enumerate(raw_agents):
        apath = f"agents[{i}]"
        if not isinstance(a, dict):
            raise InstanceError(apath, "expected an object")
        labor = _number(a.get("labor"), f"{apath}.labor")
        if labor <= 0:
            raise InstanceError(f"{apath}.labor", "labor must be positive")
        raw_costs = a.get("costs")
        if not isinstance(raw_costs, list) or len(raw_costs) != g + 1:
            raise InstanceError(f"{apath}.costs", f"expected {g + 1} unit costs")
        costs = np.array([_number(c, f"{apath}.costs[{j}]") for j, c in enumerate(raw_costs)])
        if np.any(costs <= 0):
            raise InstanceError(f"{apath}.costs", "unit costs must be positive")
        utility = _parse_utility(a.get("utility"), g + 1, f"{apath}.utility")

        raw_orders = a.get("orders")
        if not isinstance(raw_orders, dict):
            raise InstanceError(f"{apath}.orders", "expected an object keyed by category")
        orders = []
        for j in range(1, g + 1):
            opath = f"{apath}.orders.{j}"
            label = f"T_{i}{j}" if n < 10 and g < 10 else f"T_{i},{j}"
            ids = [f"agent:{k}" for k in range(n)] + [f"song:{s.id}" for s in categories[j - 1]]
            order = raw_orders.get(str(j))
            if not isinstance(order, list):
                raise InstanceError(opath, f"order {label} missing")
            index = {e: k for k, e in enumerate(ids)}
            unknown = [e for e in order if e not in index]
            if unknown:
                raise InstanceError(opath, f"order {label} has unknown entities {unknown}")
            if len(set(order)) != len(order):
                raise InstanceError(opath, f"order {label} repeats an entity")
            missing = [e for e in ids if e not in set(order)]
            if missing:
                raise InstanceError(opath, f"order {label} is missing {missing}")
            orders.append(np.array([index[e] for e in order], dtype=int))
        agents.append(Agent(labor, costs, utility, tuple(orders)))

    return MarketInstance(tuple(agents), tuple(categories))


def parse_instance(document: str) -> MarketInstance:
    """Parse JSON instance text; raises :class:`InstanceError` on any violation."""
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise InstanceError("", f"malformed JSON: {exc}") from exc
    return instance_from_dict(doc)


# --------------------------------------------------------------------------
# random instances

# Ranges used by the generator:
#   labor ~ U[0.5, 2], unit costs ~ U[0.5, 2]
#   linear coefficients ~ U[0.1, 1]
#   Cobb-Douglas exponents ~ Dirichlet(1, ..., 1)
#   pwl: 1-3 pieces per good, slopes sorted from U[0.1, 1], lengths ~ U[0.5, 2],
#        last piece unbounded


def generate_instance(
    n: int, g: int, songs: int, family: str = "linear", seed: int = 0
) -> MarketInstance:
    if n < 1 or g < 1 or songs < 1:
        raise ValueError("need n >= 1, g >= 1 and songs >= 1")
    if family not in FAMILIES:
        raise ValueError(f"unknown utility family {family!r}")
    rng = np.random.default_rng(seed)

    categories = tuple(
        tuple(Song(f"c{j}s{t}", int(rng.integers(n))) for t in range(songs))
        for j in range(1, g + 1)
    )
    agents = []
    for _ in range(n):
        labor = float(rng.uniform(0.5, 2.0))
        costs = rng.uniform(0.5, 2.0, size=g + 1)
        if family == "linear":
            utility = UtilitySpec("linear", coefficients=rng.uniform(0.1, 1.0, size=g + 1))
        elif family == "cobb_douglas":
            a = rng.dirichlet(np.ones(g + 1))
            utility = UtilitySpec("cobb_douglas", coefficients=a / a.sum())
        else:
            goods = []
            for _ in range(g + 1):
                k = int(rng.integers(1, 4))
                slopes = np.sort(rng.uniform(0.1, 1.0, size=k))[::-1]
                lengths = rng.uniform(0.5, 2.0, size=k)
                goods.append(
                    tuple(
                        (None if t == k - 1 else float(lengths[t]), float(slopes[t]))
                        for t in range(k)
                    )
                )
            utility = UtilitySpec("pwl_concave", segments=tuple(goods))
        orders = tuple(rng.permutation(n + songs) for _ in range(g))
        agents.append(Agent(labor, costs, utility, orders))
    # round-trip through the validator so generated and parsed instances agree
    return instance_from_dict(MarketInstance(tuple(agents), categories).to_dict())
