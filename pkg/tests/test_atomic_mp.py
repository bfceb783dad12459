"""
原子博弈网格消息传递测试
"""
import numpy as np
import pytest

from app.core.atomic_mp import AtomicSolver, run_atomic_bilevel, run_atomic_equilibrium, user_counts
from app.core.cost_model import AffineLatency
from app.core.errors import ConfigError
from app.core.network_builder import generate_rrg, place_integer_users
from app.models.params_models import AtomicParams, TieBreakRule
from app.oracles.builtin.atomic_bruteforce import atomic_bruteforce
from app.oracles.builtin.atomic_min_cost_flow import atomic_min_cost_flow

from .conftest import diamond


def _assert_feasible(net, flows):
    flows = np.asarray(flows)
    assert np.all(flows >= 0)
    residual = np.array(net.resources) + net.incidence_matrix().toarray() @ flows
    residual[net.destination] = 0.0
    assert np.allclose(residual, 0.0)


def test_user_counts_requires_integers():
    """测试非整数资源被拒绝"""
    assert user_counts(diamond(3.0)) == [3, 0, 0, 0]
    with pytest.raises(ConfigError):
        user_counts(diamond(1.5))


def test_solver_rejects_multiple_destinations():
    """测试多目的地路网被拒绝"""
    net = generate_rrg(12, 3, seed=4, num_destinations=2)
    with pytest.raises(ConfigError):
        AtomicSolver(net, AffineLatency.from_network(net))


def test_two_users_split():
    """测试两名用户在对称菱形上各走一条路径"""
    net = diamond(2.0)
    cost = AffineLatency([0.0] * 4, [1.0] * 4)
    result = run_atomic_equilibrium(net, cost, params=AtomicParams(seed=1, window=3))
    # 分开走 Φ = 4，同走一条路径 Φ = 6
    assert result.flows == [1, 1, 1, 1]
    assert result.potential == pytest.approx(4.0)


def test_two_users_split_at_default_window():
    """测试默认窗口 M = 1 下两名用户在对称菱形上仍各走一条路径"""
    net = diamond(2.0)
    cost = AffineLatency([0.0] * 4, [1.0] * 4)
    result = run_atomic_equilibrium(net, cost, params=AtomicParams(seed=1))
    assert AtomicParams().window == 1
    assert result.flows == [1, 1, 1, 1]
    assert result.potential == pytest.approx(4.0)


def test_reaches_bruteforce_minimum():
    """测试 20 个随机小实例中至少 14 个达到枚举得到的势函数全局极小"""
    attained = 0
    for seed in range(20):
        net = place_integer_users(generate_rrg(8, 3, seed=seed), 2, 3, seed=seed)
        cost = AffineLatency.from_network(net)
        exact = atomic_bruteforce(net, cost)
        result = run_atomic_equilibrium(net, cost, params=AtomicParams(seed=seed))
        _assert_feasible(net, result.flows)
        # 任何可行整数流的势函数都不低于全局极小
        assert result.potential >= exact["minimum"] - 1e-9
        attained += result.potential <= exact["minimum"] + 1e-9
    assert attained >= 14


def test_exchange_cancels_negative_cycle():
    """测试单位交换把同走一条路径的两名用户分开"""
    net = diamond(2.0)
    cost = AffineLatency([0.0] * 4, [1.0] * 4)
    solver = AtomicSolver(net, cost, params=AtomicParams(seed=0))
    flows, rounds = solver.exchange([2, 2, 0, 0])
    # 沿 0→2→3→1→0 的环势函数下降 2
    assert flows.tolist() == [1, 1, 1, 1]
    assert rounds == 1
    # 已是全局极小时不再改动
    again, rounds = solver.exchange(flows)
    assert again.tolist() == [1, 1, 1, 1]
    assert rounds == 0


def test_restarts_keep_lowest_potential():
    """测试多次重启的结果不劣于任一单次运行"""
    net = place_integer_users(generate_rrg(8, 3, seed=5), 2, 3, seed=5)
    cost = AffineLatency.from_network(net)
    single = [
        run_atomic_equilibrium(net, cost, params=AtomicParams(seed=5 + k, restarts=1, exchange=False)).potential
        for k in range(3)
    ]
    best = run_atomic_equilibrium(net, cost, params=AtomicParams(seed=5, restarts=3, exchange=False))
    assert best.potential == pytest.approx(min(single))
    assert 0 <= best.restart < 3


@pytest.mark.parametrize("rule", [TieBreakRule.RESIDUAL, TieBreakRule.BIAS])
def test_result_is_feasible(small_rrg, rule):
    """测试两种平局规则下的结果都是可行整数流"""
    net = place_integer_users(small_rrg, 3, 2, seed=1)
    cost = AffineLatency.from_network(net)
    result = run_atomic_equilibrium(net, cost, params=AtomicParams(seed=3, tie_break=rule, max_sweeps=30))
    _assert_feasible(net, result.flows)
    assert all(isinstance(x, int) for x in result.flows)
    assert result.potential >= atomic_min_cost_flow(net, cost).potential - 1e-9


def test_repair_adds_missing_users():
    """测试修复：零流量补成一条完整路径"""
    net = diamond(2.0)
    solver = AtomicSolver(net, AffineLatency([0.0] * 4, [1.0] * 4), params=AtomicParams(seed=0))
    repaired = solver.repair([0, 0, 0, 0])
    _assert_feasible(net, repaired)
    # L1 距离最小：两名用户各占两条边
    assert int(np.abs(repaired).sum()) == 4


def test_repair_removes_excess():
    """测试修复：多出的流量沿原路径退回"""
    net = diamond(2.0)
    solver = AtomicSolver(net, AffineLatency([0.0] * 4, [1.0] * 4), params=AtomicParams(seed=0))
    assert solver.repair([3, 3, 0, 0]).tolist() == [2, 2, 0, 0]
    # 已可行的流量保持不变
    assert solver.repair([1, 1, 1, 1]).tolist() == [1, 1, 1, 1]


def test_residuals():
    """测试整数守恒残差"""
    net = diamond(2.0)
    solver = AtomicSolver(net, AffineLatency([0.0] * 4, [1.0] * 4), params=AtomicParams(seed=0))
    assert solver.residuals([1, 1, 1, 1]).tolist() == [0, 0, 0, 0]
    assert solver.residuals([1, 0, 1, 1]).tolist() == [0, 1, 0, 0]


def test_grid_snapshot_shape():
    """测试网格消息的窗口长度与不可行项"""
    net = diamond(2.0)
    solver = AtomicSolver(net, AffineLatency([0.0] * 4, [1.0] * 4), params=AtomicParams(seed=0, window=2))
    solver.update_grid_message(0)
    message = solver.grid_snapshot(0)
    assert len(message.values) == 5
    assert message.window == 2


def test_atomic_bilevel_bounds():
    """测试原子双层收费：代价介于社会最优与无收费均衡之间"""
    net = diamond(4.0)
    cost = AffineLatency([1.0, 0.0, 2.0, 0.0], [1.0, 1.0, 0.5, 0.5])
    params = AtomicParams(seed=1, trials=2, toll_sweeps=3, tau_max=1.0)
    result = run_atomic_bilevel(net, cost, params)

    assert len(result.trial_costs) == 2
    assert result.optimum_cost - 1e-9 <= result.social_cost <= result.nash_cost + 1e-9
    assert all(0.0 <= tau <= 1.0 for tau in result.tolls)
    # 记录的代价由精确费用流评估
    for record in result.trajectory:
        assert record.social_cost == pytest.approx(atomic_min_cost_flow(net, cost, record.tolls).social_cost)
