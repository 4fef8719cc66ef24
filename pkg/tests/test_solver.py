import math

import numpy as np
import pytest

from app.oracles import hungarian_matching, matching_suite
from app.solver import (
    EQ, GE, LE, IPInstance, MatchingInstance, Status, dump_lp, matching_as_lp, min_cost_matching,
    solve_ip, solve_lp, write_lp,
)
from app.utils import Budget


def _knapsack():
    """max 5a + 4b s.t. 6a + 4b <= 24, a + 2b <= 6; relaxation (3, 1.5), integer optimum (4, 0)."""
    inst = IPInstance()
    a = inst.add_variable('a', -5.0, integer=True)
    b = inst.add_variable('b', -4.0, integer=True)
    inst.add_constraint({a: 6.0, b: 4.0}, LE, 24.0)
    inst.add_constraint({a: 1.0, b: 2.0}, LE, 6.0)
    return inst


def test_lp_lower_bound():
    inst = IPInstance()
    x = inst.add_variable('x', 1.0)
    inst.add_constraint({x: 1.0}, GE, 3.0)
    result = solve_lp(inst)
    assert result.status is Status.OPTIMAL
    assert result.objective == pytest.approx(3.0)


def test_lp_many_to_one_rebalance():
    # two vehicles, one target, 10 s and 20 s away
    inst = IPInstance()
    ys = [inst.add_variable(f'y_{i}', cost, upper=1.0) for i, cost in enumerate((10.0, 20.0))]
    inst.add_constraint({y: 1.0 for y in ys}, EQ, 1.0)
    result = solve_lp(inst)
    assert result.objective == pytest.approx(10.0)
    assert list(result.values) == pytest.approx([1.0, 0.0])


def test_lp_infeasible_and_unbounded():
    inst = IPInstance()
    x = inst.add_variable('x', 1.0)
    inst.add_constraint({x: 1.0}, LE, 1.0)
    inst.add_constraint({x: 1.0}, GE, 2.0)
    assert solve_lp(inst).status is Status.INFEASIBLE

    open_ended = IPInstance()
    open_ended.add_variable('x', -1.0)
    assert solve_lp(open_ended).status is Status.UNBOUNDED


def test_lp_rejects_non_finite_data():
    inst = IPInstance()
    inst.add_variable('x', math.inf)
    with pytest.raises(ValueError):
        solve_lp(inst)
    with pytest.raises(ValueError):
        IPInstance().add_constraint({}, '<', 1.0)


def test_ip_branches_to_integer_optimum():
    inst = _knapsack()
    relaxed = solve_lp(inst)
    assert relaxed.objective == pytest.approx(-21.0)
    result = solve_ip(inst)
    assert result.status is Status.OPTIMAL
    assert result.objective == pytest.approx(-20.0)
    assert list(result.values) == [4.0, 0.0]
    assert result.nodes > 1


def test_ip_integral_relaxation_needs_one_node():
    inst = IPInstance()
    xs = [inst.add_variable(f'x_{i}', cost, upper=1.0, integer=True) for i, cost in enumerate((3.0, 1.0))]
    inst.add_constraint({x: 1.0 for x in xs}, EQ, 1.0)
    result = solve_ip(inst)
    assert result.status is Status.OPTIMAL
    assert result.nodes == 1
    assert list(result.values) == [0.0, 1.0]


def test_ip_budget_returns_incumbent():
    inst = _knapsack()
    stopped = solve_ip(inst, warm_start=[0.0, 0.0], budget=Budget(steps=0))
    assert stopped.status is Status.BUDGET
    assert stopped.objective == 0.0
    assert stopped.ok

    nothing = solve_ip(inst, budget=Budget(steps=0))
    assert nothing.status is Status.BUDGET
    assert not nothing.ok

    previous = math.inf
    for steps in range(0, 12):
        result = solve_ip(inst, warm_start=[0.0, 0.0], budget=Budget(steps=steps))
        assert result.objective <= previous
        previous = result.objective
    assert previous == pytest.approx(-20.0)


def test_ip_ignores_infeasible_warm_start():
    result = solve_ip(_knapsack(), warm_start=[10.0, 10.0])
    assert result.status is Status.OPTIMAL
    assert result.objective == pytest.approx(-20.0)


def test_matching_examples():
    both = min_cost_matching(MatchingInstance([[1.0, 2.0], [3.0, 1.0]], 2))
    assert both.status is Status.OPTIMAL
    assert both.pairs == [(0, 0), (1, 1)]
    assert both.objective == 2.0

    none = min_cost_matching(MatchingInstance([[1.0, 2.0], [3.0, 1.0]], 0))
    assert none.pairs == [] and none.objective == 0.0

    single = min_cost_matching(MatchingInstance([[5.0, 1.0]], 1))
    assert single.pairs == [(0, 1)] and single.objective == 1.0


def test_matching_reports_shortfall():
    costs = [[math.inf, math.inf], [1.0, math.inf]]
    result = min_cost_matching(MatchingInstance(costs, 2))
    assert result.status is Status.INFEASIBLE
    assert result.pairs == [(1, 0)]
    assert hungarian_matching(costs, 2) is None
    with pytest.raises(ValueError):
        MatchingInstance([[1.0]], 2)


def test_matching_agrees_with_lp_and_scipy():
    costs = np.array([[4.0, 1.0, 3.0], [2.0, 0.0, 5.0], [3.0, 2.0, 2.0]])
    for m in range(4):
        inst = MatchingInstance(costs, m)
        fast = min_cost_matching(inst)
        lp, _ = matching_as_lp(inst)
        assert solve_lp(lp).objective == pytest.approx(fast.objective)
        assert hungarian_matching(costs, m)[0] == pytest.approx(fast.objective)
    assert min_cost_matching(MatchingInstance(costs, 3)).objective == 5.0


def test_matching_suite_small():
    summary = matching_suite(n_instances=60, seed=2)
    assert summary['failures'] == 0
    assert summary['passed']
    assert summary['largest_side'] == 8


def test_dump_lp(tmp_path):
    inst = IPInstance()
    x = inst.add_variable('x', 1.0, upper=1.0, integer=True)
    y = inst.add_variable('y', -2.0)
    inst.add_constraint({x: 1.0, y: 1.0}, LE, 1.0, name='cap')
    expected = (
        'minimize\n'
        '  obj: 1.0 x - 2.0 y\n'
        'subject to\n'
        '  cap: 1.0 x + 1.0 y <= 1.0\n'
        'bounds\n'
        '  0.0 <= x <= 1.0\n'
        '  0.0 <= y <= inf\n'
        'general\n'
        '  x\n'
        'end\n'
    )
    assert dump_lp(inst) == expected
    write_lp(tmp_path / 'model.lp', inst)
    assert (tmp_path / 'model.lp').read_text() == expected
