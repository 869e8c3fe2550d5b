import numpy as np
import pytest

from digimkt.certify import certify, check_transfer_equilibrium
from digimkt.demand import market_totals
from digimkt.equilibrium import (
    SolveConfig,
    argmax_prices,
    f_map,
    fmap_residuals,
    initial_state,
    price_ratios,
    price_update,
    solve,
    solve_with_transfers,
)
from digimkt.model import compute_bounds, generate_instance

from conftest import agent_doc, build

CD = {"family": "cobb_douglas", "exponents": [0.5, 0.5]}


def symmetric_pair(utility):
    agents = [
        agent_doc(utility=utility, orders={"1": ["song:a", "song:b", "agent:0", "agent:1"]}),
        agent_doc(utility=utility, orders={"1": ["song:b", "song:a", "agent:1", "agent:0"]}),
    ]
    return build(agents, [[("a", 0), ("b", 1)]])


def test_argmax_unique():
    assert argmax_prices(np.array([1.5, 1.0])).tolist() == [1.0, 0.0]


def test_argmax_all_equal_is_uniform():
    assert argmax_prices(np.ones(4)).tolist() == [0.25] * 4


def test_price_update_argmax_full_step():
    p = price_update(np.array([1.0, 1.0, 3.0]), np.array([1.0, 1.0, 1.0]), np.full(3, 1 / 3), "argmax", 1.0)
    assert p.tolist() == [0.0, 0.0, 1.0]


def test_price_update_multiplicative_fixed_point():
    p0 = np.array([0.2, 0.3, 0.5])
    p = price_update(np.array([2.0, 1.0, 3.0]), np.array([2.0, 1.0, 3.0]), p0, "multiplicative", 0.1)
    assert p == pytest.approx(p0, abs=1e-15)


def test_price_update_multiplicative_example():
    p = price_update(np.array([1.0, 2.0]), np.array([1.0, 1.0]), np.array([0.5, 0.5]), "multiplicative", 1.0)
    assert p == pytest.approx([1 / 3, 2 / 3], abs=1e-15)


def test_price_ratios_bread_smoothing():
    r = price_ratios(np.array([0.0, 2.0]), np.array([1.0, 4.0]))
    assert r.tolist() == [0.5, 0.5]


def test_unbought_good_price_recovers():
    # a floor on the ratio keeps an unbought good's price positive
    p = price_update(np.array([1.0, 0.0]), np.array([1.0, 1.0]), np.array([0.5, 0.5]), "multiplicative", 1.0)
    assert p[1] > 0


def test_config_validation():
    with pytest.raises(ValueError):
        SolveConfig(eta=0.0)
    with pytest.raises(ValueError):
        SolveConfig(rule="walras")
    with pytest.raises(ValueError):
        SolveConfig(order="random")
    with pytest.raises(ValueError):
        SolveConfig(max_iters=-1)


def test_zero_iterations_returns_initial_state():
    inst = generate_instance(2, 1, 1, "linear", seed=3)
    r = solve(inst, SolveConfig(max_iters=0))
    start = initial_state(inst)
    assert r.iterations == 0
    assert r.state.prices.tolist() == start.prices.tolist()
    assert r.state.y.tolist() == start.y.tolist()
    assert len(r.log) == 1
    assert r.certificate.worst == certify(inst, start).worst


def test_f_map_shapes_and_simplex():
    inst = generate_instance(3, 2, 2, "cobb_douglas", seed=2)
    state = initial_state(inst)
    out = f_map(inst, state)
    assert out.prices.sum() == pytest.approx(1.0)
    assert np.all(out.prices >= 0)
    assert out.y.shape == state.y.shape
    cap = compute_bounds(inst).cap
    assert np.all(out.x.coarse() <= cap + 1e-12)


def test_bread_only_agent_prices_song_out():
    # the only buyer ignores songs, so the song never clears and its price falls
    u = {"family": "linear", "coefficients": [1.0, 0.0]}
    inst = build([agent_doc(utility=u, orders={"1": ["agent:0", "song:s"]})], [[("s", 0)]])
    r = solve(inst, SolveConfig(max_iters=5000))
    assert r.converged
    assert r.state.prices[1] <= r.certificate.tol
    assert [row["iter"] for row in r.log] == list(range(0, r.iterations + 1, 10))
    assert set(r.log[0]) == {"iter", "p_0", "p_1", "res_cond1", "res_cond2", "res_cond3", "total_earnings"}


@pytest.mark.parametrize(
    "utility",
    [
        CD,
        {"family": "linear", "coefficients": [1.0, 0.8]},
        {"family": "pwl_concave", "segments": [[[1.0, 1.0], [None, 0.2]], [[1.0, 0.8], [None, 0.1]]]},
    ],
)
def test_symmetric_pair_equal_budgets(utility):
    inst = symmetric_pair(utility)
    r = solve(inst, SolveConfig(max_iters=5000))
    assert r.converged and r.certificate.passed
    assert r.state.budgets[0] == pytest.approx(r.state.budgets[1], abs=1e-6)


def test_certified_state_is_a_map_fixed_point():
    inst = symmetric_pair(CD)
    tol = 1e-6
    r = solve(inst, SolveConfig(max_iters=5000, tol=tol))
    assert r.converged
    res = fmap_residuals(inst, r.state, tol)
    assert res.worst <= 10 * tol
    assert np.all(r.state.prices > 0)
    totals = market_totals(r.state.x, r.state.y, inst)
    assert np.abs(totals.bought - totals.sold).max() <= 1e-5


def test_gauss_seidel_order_runs():
    inst = symmetric_pair(CD)
    r = solve(inst, SolveConfig(max_iters=5000, order="gauss_seidel"))
    assert r.certificate.worst == min(row_worst(r.log))


def row_worst(log):
    return [max(row["res_cond1"], row["res_cond2"], row["res_cond3"]) for row in log]


def test_solve_deterministic():
    inst = generate_instance(3, 2, 1, "linear", seed=4)
    cfg = SolveConfig(max_iters=300, jitter=0.2, seed=9)
    a, b = solve(inst, cfg), solve(inst, cfg)
    assert a.log == b.log
    assert a.state.prices.tolist() == b.state.prices.tolist()
    assert a.state.y.tolist() == b.state.y.tolist()
    c = solve(inst, SolveConfig(max_iters=300, jitter=0.2, seed=10))
    assert c.log[0] != a.log[0]


def test_nonconvergence_reports_best_state():
    inst = generate_instance(3, 2, 2, "pwl_concave", seed=0)
    r = solve(inst, SolveConfig(max_iters=20))
    assert not r.converged
    assert r.iterations == 20
    assert r.certificate.worst == pytest.approx(min(row_worst(r.log)))


# --------------------------------------------------------------------------
# transfers


def test_transfer_single_agent():
    inst = build([agent_doc(utility=CD)], [[("s", 0)]])
    r = solve_with_transfers(inst, np.array([0.5]), SolveConfig(max_iters=5000))
    assert r.converged
    t = r.transfer
    assert t.w.tolist() == pytest.approx([t.gamma])
    assert t.alpha == pytest.approx(t.achieved[0] / 0.5)


def test_transfer_self_consistency():
    inst = symmetric_pair({"family": "linear", "coefficients": [1.0, 0.8]})
    cap = compute_bounds(inst).cap
    base = solve(inst, SolveConfig(max_iters=5000))
    z = base.state.x.coarse()
    u = np.array([a.utility.value(z[i], cap) for i, a in enumerate(inst.agents)])
    r = solve_with_transfers(inst, u, SolveConfig(max_iters=5000))
    assert r.converged
    assert r.transfer.alpha == pytest.approx(1.0, abs=1e-5)
    assert r.transfer.w == pytest.approx(base.state.budgets, abs=1e-5)
    verdict = check_transfer_equilibrium(inst, r.state, r.transfer.w, u)
    assert verdict.passed


def test_transfer_rejects_nonpositive_targets():
    inst = symmetric_pair(CD)
    with pytest.raises(ValueError):
        solve_with_transfers(inst, np.array([1.0, 0.0]))
