import numpy as np
import pytest

from digimkt.demand import DetailedAllocation, allocate
from digimkt.production import (
    SoldCurve,
    all_earnings,
    best_response,
    curves_for,
    earnings,
    production_value,
    sold_curve,
)

from conftest import agent_doc, build
from oracles import grid_aligned_case, grid_best_earnings, oracle_sold_fns


def test_earnings_two_copies():
    inst = build([agent_doc(), agent_doc(), agent_doc()], [[("s", 0)]])
    y = np.zeros((3, 2))
    x = allocate(inst, np.array([[0, 0], [0, 1.0], [0, 1.0]]), y)
    p = np.array([0.5, 0.5])
    assert earnings(inst, p, x, y, 0) == 1.0
    assert all_earnings(inst, p, x, y).tolist() == [1.0, 0.0, 0.0]


def test_earnings_bread_only():
    inst = build([agent_doc()], [[("s", 0)]])
    y = np.array([[2.0, 0.0]])
    x = DetailedAllocation.zeros(inst)
    assert earnings(inst, np.array([0.25, 0.75]), x, y, 0) == 0.5


def test_self_purchase_counts():
    inst = build([agent_doc()], [[("s", 0)]])
    y = np.zeros((1, 2))
    x = allocate(inst, np.array([[0.0, 1.0]]), y)
    assert earnings(inst, np.array([0.7, 0.3]), x, y, 0) == pytest.approx(0.3)


def test_sold_curve_top_ranked():
    inst = build([agent_doc(orders={"1": ["agent:0", "song:s"]})], [[("s", 0)]])
    curve = sold_curve(inst, np.array([[0.0, 2.0]]), np.zeros((1, 2)), 0, 1)
    assert [curve(v) for v in (0.0, 1.0, 2.0, 5.0)] == [0.0, 1.0, 2.0, 2.0]


def test_sold_curve_exhausted_above():
    inst = build([agent_doc(orders={"1": ["song:s", "agent:0"]})], [[("s", 0)]])
    curve = sold_curve(inst, np.array([[0.0, 1.0]]), np.zeros((1, 2)), 0, 1)
    assert curve(3.0) == 0.0
    assert curve.segments() == []


def test_sold_curve_two_residuals():
    curve = SoldCurve(np.array([2.0, 1.0]))
    assert curve(0.5) == 1.0 and curve(1.5) == 2.5 and curve(3.0) == 3.0
    assert curve.segments() == [(1.0, 2), (1.0, 1)]
    assert curve.slope_at(0.5) == 2 and curve.slope_at(1.5) == 1 and curve.slope_at(2.0) == 0


def test_best_response_song_beats_bread():
    orders = {"1": ["agent:0", "agent:1", "song:s"]}
    agents = [agent_doc(orders=dict(orders)), agent_doc(orders=dict(orders))]
    inst = build(agents, [[("s", 1)]])
    y = np.zeros((2, 2))
    x = allocate(inst, np.array([[0.0, 1.0], [0.0, 1.5]]), y)
    p = np.array([0.5, 0.5])
    row = best_response(inst, p, x, y, 0)
    assert row.tolist() == [0.0, 1.0]
    curves = curves_for(inst, x.coarse(), y, 0)
    assert production_value(p, curves, row) == 1.0
    oracle = grid_best_earnings(p, 1.0, [1.0, 1.0], curves)
    assert oracle == pytest.approx(1.0)


def test_best_response_falls_back_to_bread():
    inst = build([agent_doc(labor=1.5, costs=(0.5, 1.0))], [[("s", 0)]])
    y = np.zeros((1, 2))
    x = DetailedAllocation.zeros(inst)
    assert best_response(inst, np.array([0.5, 0.5]), x, y, 0).tolist() == [3.0, 0.0]


def test_revenue_tie_goes_to_bread():
    # one buyer, slope 1: song rate 0.5/1 equals bread rate 0.5/1
    inst = build([agent_doc(orders={"1": ["agent:0", "song:s"]})], [[("s", 0)]])
    y = np.zeros((1, 2))
    x = allocate(inst, np.array([[0.0, 2.0]]), y)
    assert best_response(inst, np.array([0.5, 0.5]), x, y, 0).tolist() == [1.0, 0.0]


def test_best_response_matches_labor_grid():
    rng = np.random.default_rng(2024)
    for _ in range(40):
        inst, p, z, y = grid_aligned_case(rng)
        x = allocate(inst, z, y)
        i = int(rng.integers(inst.n))
        agent = inst.agents[i]
        row = best_response(inst, p, x, y, i)
        fns = oracle_sold_fns(inst, z, y, i)
        greedy = p[0] * row[0] + sum(p[j] * fns[j - 1](row[j]) for j in range(1, inst.g + 1))
        oracle = grid_best_earnings(p, agent.labor, agent.costs, fns)
        assert agent.costs @ row <= agent.labor + 1e-9
        assert greedy == pytest.approx(oracle, abs=1e-6)


def test_package_curve_matches_oracle_walk():
    rng = np.random.default_rng(7)
    for _ in range(30):
        inst, p, z, y = grid_aligned_case(rng)
        i = int(rng.integers(inst.n))
        fns = oracle_sold_fns(inst, z, y, i)
        for j, curve in enumerate(curves_for(inst, z, y, i), start=1):
            for amt in (0.0, 0.3, 1.0, 2.7):
                assert curve(amt) == pytest.approx(fns[j - 1](amt), abs=1e-12)
