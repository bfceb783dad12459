"""
双层收费优化测试
"""
import numpy as np
import pytest

from app.core.bilevel_toll import (
    BilevelTollOptimizer,
    fractional_reduction,
    marginal_cost_tolls,
    run_bilevel,
    select_tollable_edges
)
from app.core.cost_model import AffineLatency, social_cost
from app.core.errors import ConfigError
from app.core.network_builder import generate_rrg
from app.models.params_models import BilevelParams, EquilibriumParams, TollSelection
from app.oracles.builtin.convex_equilibrium import convex_equilibrium

# 仿射菱形：H_N = 11，社会最优 x_A = 7/6，x_B = 11/6
AFFINE_NASH_COST = 11.0
AFFINE_OPTIMUM_COST = 393 / 36


def test_fractional_reduction():
    """测试相对降低量的端点与零差距"""
    assert fractional_reduction(11.0, 11.0, 10.0) == pytest.approx(1.0)
    assert fractional_reduction(10.0, 11.0, 10.0) == pytest.approx(0.0)
    assert fractional_reduction(10.5, 11.0, 10.0) == pytest.approx(0.5)
    # 没有可降低的差距
    assert fractional_reduction(5.0, 5.0, 5.0) == 0.0


def test_pigou_marginal_toll(pigou):
    """测试庇古网络的边际代价收费：上路收 0.5"""
    net, cost = pigou
    tolls = marginal_cost_tolls(net, cost)
    assert tolls[0] == pytest.approx(0.5, abs=1e-6)
    # 上路两段收费之和为 0.5
    assert tolls[0] + tolls[1] == pytest.approx(0.5, abs=1e-6)


def test_marginal_tolls_reach_optimum(affine_diamond):
    """测试边际代价收费下的均衡达到社会最优"""
    net, cost = affine_diamond
    tolls = marginal_cost_tolls(net, cost)
    assert tolls == pytest.approx([7 / 6, 7 / 6, 11 / 12, 11 / 12], abs=1e-6)

    tolled = convex_equilibrium(net, cost, tolls=tolls)
    assert social_cost(cost, tolled.flows) == pytest.approx(AFFINE_OPTIMUM_COST, abs=1e-6)


def test_run_bilevel_bounds(affine_diamond):
    """测试收费轨迹：收费不越界，记录的代价不高于无收费均衡"""
    net, cost = affine_diamond
    params = BilevelParams(tau_max=1.0, warmup_sweeps=5, sweeps=10, equilibrium=EquilibriumParams(seed=1))
    trajectory = run_bilevel(net, cost, params)

    assert trajectory.nash_cost == pytest.approx(AFFINE_NASH_COST, abs=1e-6)
    assert trajectory.optimum_cost == pytest.approx(AFFINE_OPTIMUM_COST, abs=1e-6)
    assert trajectory.best_social_cost <= trajectory.nash_cost + 1e-9
    assert all(0.0 <= tau <= 1.0 for tau in trajectory.best_tolls)
    for record in trajectory.records:
        # 收费在 [0, τ_max] 内
        assert all(0.0 <= tau <= 1.0 + 1e-12 for tau in record.tolls)
        assert record.fractional_reduction <= 1.0 + 1e-6


def test_zero_tau_max_keeps_nash(affine_diamond):
    """测试 τ_max = 0 时收费恒为零"""
    net, cost = affine_diamond
    params = BilevelParams(tau_max=0.0, warmup_sweeps=2, sweeps=3, equilibrium=EquilibriumParams(seed=2))
    trajectory = run_bilevel(net, cost, params)
    for record in trajectory.records:
        assert record.nonzero_tolls == 0
        assert record.social_cost == pytest.approx(AFFINE_NASH_COST, abs=1e-6)


def test_toll_interval(small_rrg):
    """测试收费更新间隔：默认每 (2/5)·|E| 次消息更新一次"""
    cost = AffineLatency.from_network(small_rrg)
    optimizer = BilevelTollOptimizer(small_rrg, cost, BilevelParams(updates_per_sweep=None))
    assert optimizer.toll_interval() == round(0.4 * small_rrg.num_edges)


def test_select_tollable_edges(small_rrg):
    """测试可收费边的选择：数量与非法比例"""
    cost = AffineLatency.from_network(small_rrg)
    optimizer = BilevelTollOptimizer(small_rrg, cost, BilevelParams(equilibrium=EquilibriumParams(seed=3)))
    count = round(0.2 * small_rrg.num_edges)

    chosen = select_tollable_edges(optimizer, 0.2, TollSelection.RANDOM)
    assert len(chosen) == count
    assert chosen == sorted(chosen)

    heuristic = select_tollable_edges(optimizer, 0.2, TollSelection.HEURISTIC)
    assert len(heuristic) == count

    assert select_tollable_edges(optimizer, 1.0, TollSelection.HEURISTIC) == list(range(small_rrg.num_edges))
    with pytest.raises(ConfigError):
        select_tollable_edges(optimizer, 0.0)


def test_set_tollable_zeroes_others(small_rrg):
    """测试不可收费边的收费与上限为零"""
    cost = AffineLatency.from_network(small_rrg)
    optimizer = BilevelTollOptimizer(small_rrg, cost, BilevelParams(tau_max=1.0))
    optimizer.solver.tolls[:] = 0.3
    optimizer.set_tollable([0, 1])
    assert np.all(optimizer.tolls[2:] == 0.0)
    assert optimizer.tau_max[0] == 1.0
    assert optimizer.tau_max[5] == 0.0
    with pytest.raises(ConfigError):
        optimizer.set_tollable([small_rrg.num_edges])


@pytest.mark.slow
def test_bilevel_reduces_cost_on_rrg():
    """测试随机正则图上双层收费降低社会代价"""
    net = generate_rrg(100, 3, seed=1)
    cost = AffineLatency.from_network(net)
    params = BilevelParams(tau_max=1.0, equilibrium=EquilibriumParams(seed=1))
    trajectory = run_bilevel(net, cost, params)
    best = fractional_reduction(trajectory.best_social_cost, trajectory.nash_cost, trajectory.optimum_cost)
    assert best < 0.5


def test_toll_dependent_flow(affine_diamond):
    """测试收敛后下层流量随收费的响应：τ = 0 处为均衡流量，之后不增"""
    net, cost = affine_diamond
    optimizer = BilevelTollOptimizer(net, cost, BilevelParams(tau_max=1.0, equilibrium=EquilibriumParams(seed=4)))
    assert optimizer.solver.run().converged

    response = optimizer.toll_dependent_flow(0)
    assert response[0][0] == 0.0
    assert response[0][1] == pytest.approx(4 / 3, abs=1e-5)
    flows = [x for _, x in response]
    assert all(later <= earlier + 1e-12 for earlier, later in zip(flows, flows[1:]))
    # 上层消息更新不移动工作点
    centers = optimizer.solver.lower.center.copy()
    assert optimizer.update_upper_message(0, 0) >= 0.0
    assert np.array_equal(optimizer.solver.lower.center, centers)


def test_toll_state_respects_tollable_mask(affine_diamond):
    """测试收费状态：不可收费边的上限为零，越界收费无法构造状态"""
    net, cost = affine_diamond
    optimizer = BilevelTollOptimizer(net, cost, BilevelParams(tau_max=1.0), tollable=[0, 2])
    state = optimizer.toll_state()
    assert state.tau_max == [1.0, 0.0, 1.0, 0.0]

    optimizer.solver.tolls[0] = 2.0
    with pytest.raises(ValueError):
        optimizer.toll_state()
