"""
消息传递均衡求解器测试
"""
import math

import numpy as np
import pytest

from app.core.cavity import CavityTerm, solve_cavity_root
from app.core.cost_model import AffineLatency
from app.core.errors import ConfigError
from app.core.mp_equilibrium import EquilibriumSolver, build_slots, run_equilibrium, run_equilibrium_multidest
from app.core.network_builder import generate_rrg
from app.models.message_models import SlotMessage
from app.models.network_models import DirectedNetwork
from app.models.params_models import DestinationMethod, EquilibriumParams
from app.oracles.builtin.convex_equilibrium import convex_equilibrium

FLOW_TOL = 1e-5


def test_build_slots_signs(symmetric_diamond):
    """测试槽位表：头端为 -1，尾端为 +1，上游来自相邻边的另一端"""
    net, _ = symmetric_diamond
    slot_node, slot_edge, slot_sign, upstream = build_slots(net)
    assert slot_node[:2] == [0, 1]
    assert slot_edge[:2] == [0, 0]
    assert slot_sign[:2] == [-1, 1]

    # 槽位 (0→e0) 的上游是边 2 在节点 2 一侧的槽位
    assert upstream[0] == [(2, 5, -1)]
    # 槽位 (1→e0) 的上游是边 1 在节点 3 一侧的槽位
    assert upstream[1] == [(1, 3, -1)]


def test_symmetric_diamond(symmetric_diamond):
    """测试对称菱形上两条路径平分流量"""
    net, cost = symmetric_diamond
    report = run_equilibrium(net, cost, method=DestinationMethod.GROUNDED, params=EquilibriumParams(seed=1))
    assert report.converged
    assert np.allclose(report.flows, [1.0, 1.0, 1.0, 1.0], atol=FLOW_TOL)
    assert report.wardrop.passed


def test_constrained_destination_on_single_cycle(symmetric_diamond):
    """测试目的地受约束时单环网络上的消息不收敛，报告预算用尽"""
    net, cost = symmetric_diamond
    params = EquilibriumParams(seed=1, max_sweeps=30)
    report = run_equilibrium(net, cost, method=DestinationMethod.CONSTRAINED, params=params)
    # 环上每绕一圈曲率都会累加，消息变化不会低于阈值
    assert not report.converged
    assert report.sweeps == 30
    assert len(report.trace) == 30
    assert report.trace[-1].message_change >= params.tol
    assert report.wardrop is not None


def test_affine_diamond_closed_form(affine_diamond):
    """测试仿射菱形的解析均衡 x_A = 4/3，x_B = 5/3"""
    net, cost = affine_diamond
    report = run_equilibrium(net, cost, params=EquilibriumParams(seed=2))
    assert report.converged
    assert np.allclose(report.flows, [4 / 3, 4 / 3, 5 / 3, 5 / 3], atol=FLOW_TOL)
    assert report.max_residual < 1e-6


def test_tolls_shift_equilibrium(affine_diamond):
    """测试收费把流量推离被收费的路径"""
    net, cost = affine_diamond
    tolls = [0.5, 0.0, 0.0, 0.0]
    report = run_equilibrium(net, cost, tolls=tolls, params=EquilibriumParams(seed=3))
    # 1.5 + 2x_A = 2 + x_B，x_A + x_B = 3
    assert np.allclose(report.flows, [7 / 6, 7 / 6, 11 / 6, 11 / 6], atol=FLOW_TOL)


def test_reference_flows_trace(affine_diamond):
    """测试给出基准流量时逐轮记录 L∞ 误差"""
    net, cost = affine_diamond
    reference = [4 / 3, 4 / 3, 5 / 3, 5 / 3]
    report = run_equilibrium(net, cost, params=EquilibriumParams(seed=4), reference_flows=reference)
    assert all(record.flow_error is not None for record in report.trace)
    assert report.final_flow_error < FLOW_TOL


def test_small_rrg_matches_oracle(small_rrg):
    """测试随机正则图上的结果与凸优化基准一致"""
    cost = AffineLatency.from_network(small_rrg)
    oracle = convex_equilibrium(small_rrg, cost)
    report = run_equilibrium(small_rrg, cost, params=EquilibriumParams(seed=5))
    assert report.converged
    assert np.max(np.abs(np.array(report.flows) - np.array(oracle.flows))) < FLOW_TOL
    assert report.wardrop.passed


def test_multidestination_matches_oracle():
    """测试多目的地均衡与凸优化基准的总流量一致"""
    net = generate_rrg(12, 3, seed=4, num_destinations=2)
    cost = AffineLatency.from_network(net)
    oracle = convex_equilibrium(net, cost)
    report = run_equilibrium_multidest(net, cost, params=EquilibriumParams(seed=6))
    assert len(report.class_flows) == 2
    assert np.max(np.abs(np.array(report.flows) - np.array(oracle.flows))) < FLOW_TOL


def test_single_destination_entry_rejects_multiple():
    """测试单目的地入口拒绝多目的地路网"""
    net = generate_rrg(12, 3, seed=4, num_destinations=2)
    with pytest.raises(ConfigError):
        run_equilibrium(net, AffineLatency.from_network(net))


def test_solver_rejects_bad_inputs(symmetric_diamond):
    """测试代价维度或收费非法时报配置错误"""
    net, cost = symmetric_diamond
    with pytest.raises(ConfigError):
        EquilibriumSolver(net, AffineLatency([0.0], [1.0]))
    with pytest.raises(ConfigError):
        EquilibriumSolver(net, cost, tolls=[-1.0, 0.0, 0.0, 0.0])


def test_same_seed_reproducible(affine_diamond):
    """测试相同种子给出相同轨迹"""
    net, cost = affine_diamond
    first = run_equilibrium(net, cost, params=EquilibriumParams(seed=9, max_sweeps=5))
    second = run_equilibrium(net, cost, params=EquilibriumParams(seed=9, max_sweeps=5))
    assert first.flows == second.flows
    assert [r.message_change for r in first.trace] == [r.message_change for r in second.trace]


@pytest.mark.slow
def test_large_rrg_matches_oracle():
    """测试 N = 100 的随机正则图收敛到基准"""
    net = generate_rrg(100, 3, seed=1)
    cost = AffineLatency.from_network(net)
    oracle = convex_equilibrium(net, cost)
    report = run_equilibrium(net, cost, params=EquilibriumParams(seed=1))
    assert np.max(np.abs(np.array(report.flows) - np.array(oracle.flows))) < 1e-6


def test_effective_resource_without_leaves(symmetric_diamond):
    """测试没有上游叶子时 Λ^eff 等于节点资源"""
    net, cost = symmetric_diamond
    solver = EquilibriumSolver(net, cost, params=EquilibriumParams(seed=7))
    assert solver.effective_resource(0, 0) == pytest.approx(2.0)
    assert solver.effective_resource(0, 1) == pytest.approx(0.0)


def test_message_updates_and_marginal_flow(affine_diamond):
    """测试单次消息更新与收敛后的边际流量"""
    net, cost = affine_diamond
    solver = EquilibriumSolver(net, cost, params=EquilibriumParams(seed=8))
    assert solver.update_message(0, 0) >= 0.0

    report = solver.run()
    assert report.converged
    # 边际流量由两端消息与边能量直接给出
    flows = [solver.marginal_flow(0, e) for e in range(net.num_edges)]
    assert np.allclose(flows, [4 / 3, 4 / 3, 5 / 3, 5 / 3], atol=FLOW_TOL)


def _chain(resources) -> DirectedNetwork:
    """0 → 1 → 2 的链，目的地为 2"""
    return DirectedNetwork(num_nodes=3, edges=[(0, 1), (1, 2)], resources=list(resources), destinations=[2])


def test_update_message_hand_kkt():
    """测试单条零流量流入上游边、x_e = 1 时的消息 β = 2、α = 2"""
    net = _chain([1.0, 0.0, 0.0])
    # e0 上 φ′(0) = 0，φ″ = 1
    solver = EquilibriumSolver(net, AffineLatency([0.0, 0.0], [1.0, 1.0]), params=EquilibriumParams(seed=0))
    solver.lower.assign(0, 0, SlotMessage.smooth(0.0, 1.0, 0.0))
    solver.wp[0, 2] = 1.0
    message = solver.solve_slot(solver.lower, 0, 2)
    assert not message.leaf
    assert message.beta_right == pytest.approx(2.0)
    assert message.alpha_right == pytest.approx(2.0)

    # x_e = 0 时所有上游流量都在零处，得到以 0 为断点的叶子
    solver.wp[0, 2] = 0.0
    message = solver.solve_slot(solver.lower, 0, 2)
    assert message.leaf
    assert message.center == 0.0
    assert message.alpha_right == pytest.approx(2.0)
    assert math.isinf(message.alpha_left)


def test_grounded_destination_message():
    """测试方法一中目的地发出的消息为 (α, β, f) = (0, 0, 0)"""
    net = _chain([1.0, 0.0, 0.0])
    solver = EquilibriumSolver(net, AffineLatency([1.0, 1.0], [1.0, 1.0]), params=EquilibriumParams(seed=0))
    # 槽位 3 是 e1 在目的地一侧
    message = solver.solve_slot(solver.lower, 0, 3)
    assert (message.alpha_right, message.beta_right, message.leaf) == (0.0, 0.0, False)


def test_effective_resource_with_upstream_leaf():
    """测试 Λ_i = 3、上游流入叶子断点为 1 时 Λ^eff = 4"""
    net = _chain([0.0, 3.0, 0.0])
    solver = EquilibriumSolver(net, AffineLatency([1.0, 1.0], [1.0, 1.0]), params=EquilibriumParams(seed=0))
    solver.lower.assign(0, 0, SlotMessage(True, 1.0, 1.0, 0.0, math.inf, 0.0))
    assert solver.effective_resource(0, 2) == pytest.approx(4.0)


def _primary_leaf_solver(symmetric_diamond, confirm: bool) -> EquilibriumSolver:
    net, cost = symmetric_diamond
    solver = EquilibriumSolver(net, cost, params=EquilibriumParams(seed=0, confirm_leaves=confirm))
    # 另一条流出边 e2 上没有流量，x_e0 停在 Λ_S = 2
    solver.lower.assign(0, 5, SlotMessage.smooth(0.0, 1.0, 0.0))
    solver.wp[0, 5] = 0.0
    solver.lower.assign(0, 1, SlotMessage.smooth(0.0, 1.0, 0.0))
    solver.wp[0, 0] = 2.0
    return solver


def test_primary_leaf(symmetric_diamond):
    """测试主叶子：上游流量全为零时消息是以 Λ_i 为断点的叶子"""
    solver = _primary_leaf_solver(symmetric_diamond, confirm=False)
    message = solver.solve_slot(solver.lower, 0, 0)
    assert message.leaf
    assert message.center == pytest.approx(2.0)
    # 右侧需要额外流入，节点 0 没有流入边
    assert math.isinf(message.alpha_right)
    assert message.alpha_left == pytest.approx(2.0)


def test_leaf_working_point_follows_marginal_flow(symmetric_diamond):
    """测试边际流量离开断点时叶子槽位的工作点照常按学习率移动"""
    solver = _primary_leaf_solver(symmetric_diamond, confirm=True)
    solver.update_message(0, 0)
    assert solver.lower.leaf[0, 0]
    # 边能量导数 2(x − 2) + x + x 在 x* = 1 处为零
    assert solver.flows[0, 0] == pytest.approx(1.0)
    assert solver.wp[0, 0] == pytest.approx(0.1 * 1.0 + 0.9 * 2.0)


def test_beta_matches_cavity_energy_difference():
    """测试 β = B·μ* 与空腔能量的中心差分一致，α 与 β 的差分一致"""
    terms = [
        CavityTerm(sign=1, curvature=2.0, slope=0.1, working_point=0.5),
        CavityTerm(sign=1, curvature=3.0, slope=-0.2, working_point=1.0)
    ]
    sign, x_e, h = -1, 1.2, 1e-5

    def energy(x):
        root = solve_cavity_root(terms, sign * x)
        flows = [t.optimal_flow(root.mu) for t in terms]
        return sum(t.slope * (y - t.working_point) + 0.5 * t.curvature * (y - t.working_point) ** 2
                   for t, y in zip(terms, flows))

    def beta(x):
        return sign * solve_cavity_root(terms, sign * x).mu

    root = solve_cavity_root(terms, sign * x_e)
    assert not root.degenerate
    assert (energy(x_e + h) - energy(x_e - h)) / (2 * h) == pytest.approx(beta(x_e), abs=1e-4)
    assert (beta(x_e + h) - beta(x_e - h)) / (2 * h) == pytest.approx(1.0 / root.conductance, rel=1e-4)


def test_converged_report_is_certified():
    """测试报告收敛时守恒残差不超过 1e-8 且通过 Wardrop 检查"""
    net = generate_rrg(16, 3, seed=2)
    cost = AffineLatency.from_network(net)
    oracle = convex_equilibrium(net, cost)
    report = run_equilibrium(net, cost, params=EquilibriumParams(seed=2))
    assert report.converged
    assert report.max_residual <= 1e-8
    assert report.wardrop.passed
    assert np.max(np.abs(np.array(report.flows) - np.array(oracle.flows))) < FLOW_TOL


def test_quiet_table_alone_is_not_convergence(small_rrg):
    """测试消息变化低于阈值但流量未认证时继续扫描"""
    cost = AffineLatency.from_network(small_rrg)
    params = EquilibriumParams(seed=2, tol=1e3, max_sweeps=1, sweep_factor=1)
    report = run_equilibrium(small_rrg, cost, params=params)
    assert report.converged == (report.max_residual <= 1e-8 and report.wardrop.passed)
    # 一轮里每个槽位只更新一次，工作点远未达到守恒精度
    assert not report.converged
    assert report.sweeps == 1


def test_snapshots_follow_message_table(affine_diamond):
    """测试消息快照与消息表一致"""
    net, cost = affine_diamond
    solver = EquilibriumSolver(net, cost, params=EquilibriumParams(seed=3))
    solver.lower.assign(0, 0, SlotMessage(True, 3.0, 2.0, -1.0, math.inf, 0.0))
    snapshot = solver.snapshot(0, 0)
    assert snapshot.leaf and snapshot.breakpoint == 3.0
    assert snapshot.node == 0 and snapshot.edge == 0 and snapshot.traffic_class == 0
    assert solver.snapshot(0, 1).alpha == pytest.approx(float(solver.lower.alpha_right[0, 1]))


def test_report_carries_every_slot(affine_diamond):
    """测试收敛报告附带所有槽位的消息快照"""
    net, cost = affine_diamond
    report = run_equilibrium(net, cost, params=EquilibriumParams(seed=1))
    assert len(report.messages) == 2 * net.num_edges
    assert [m.edge for m in report.messages] == [0, 0, 1, 1, 2, 2, 3, 3]
    # 叶子只给断点，光滑消息只给 (α, β)
    for message in report.messages:
        assert (message.breakpoint is not None) == message.leaf
