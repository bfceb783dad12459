"""
基准求解器与注册表测试
"""
import numpy as np
import pytest

from app.core.cost_model import AffineLatency, conservation_residual, verify_wardrop
from app.core.errors import OracleError
from app.core.network_builder import generate_rrg
from app.oracles import OracleRegistry
from app.oracles.builtin import (
    atomic_bruteforce,
    atomic_min_cost_flow,
    convex_equilibrium,
    finite_difference,
    laplacian_solve,
    social_optimum
)

from .conftest import diamond

BUILTIN_IDS = [
    "atomic_bruteforce",
    "atomic_min_cost_flow",
    "convex_equilibrium",
    "laplacian_solve",
    "social_optimum"
]


@pytest.fixture
def registry():
    registry = OracleRegistry()
    registry.discover_oracles()
    return registry


def test_discover_builtin_oracles(registry):
    """测试自动发现全部内置基准求解器"""
    listed = registry.list_oracles()
    assert [item["oracle_id"] for item in listed] == BUILTIN_IDS
    assert all(item["description"] for item in listed)


def test_execute_missing_parameter(registry):
    """测试缺少必需参数时返回错误结果而不抛出"""
    report = registry.execute_oracle("convex_equilibrium", {"cost": None})
    assert not report.success
    assert "network" in report.error


def test_execute_unknown_oracle(registry):
    """测试不存在的基准求解器"""
    report = registry.execute_oracle("nope", {})
    assert not report.success


def test_execute_convex_equilibrium(registry, affine_diamond):
    """测试通过注册表执行凸优化基准"""
    net, cost = affine_diamond
    report = registry.execute_oracle("convex_equilibrium", {"network": net, "cost": cost})
    assert report.success
    assert np.allclose(report.content["flows"], [4 / 3, 4 / 3, 5 / 3, 5 / 3], atol=1e-6)
    assert report.metadata["social_cost"] == pytest.approx(11.0, abs=1e-6)


def test_laplacian_oracle_rejects_directed(registry, affine_diamond):
    """测试拉普拉斯基准拒绝有向网络"""
    net, _ = affine_diamond
    report = registry.execute_oracle("laplacian_solve", {"network": net})
    assert not report.success


def test_pigou_costs(pigou):
    """测试庇古网络：H_N = 1，H_S = 3/4"""
    net, cost = pigou
    assert convex_equilibrium(net, cost).social_cost == pytest.approx(1.0, abs=1e-6)
    optimum = social_optimum(net, cost)
    assert optimum.social_cost == pytest.approx(0.75, abs=1e-6)
    assert optimum.flows[0] == pytest.approx(0.5, abs=1e-6)


def test_multiclass_equilibrium_is_certified():
    """测试两个目的地的联合均衡：各类别守恒，且在总流量下各自满足 Wardrop 条件"""
    net = generate_rrg(12, 3, seed=4, num_destinations=2)
    cost = AffineLatency.from_network(net)
    classes = net.traffic_classes()
    solution = convex_equilibrium(net, cost, classes=classes)
    assert solution.max_violation <= 1e-9
    assert len(solution.class_flows) == 2

    class_flows = np.array(solution.class_flows)
    total = class_flows.sum(axis=0)
    assert np.allclose(total, solution.flows, atol=1e-12)
    for traffic_class, flows in zip(classes, class_flows):
        residual = conservation_residual(net, flows, traffic_class.resources, traffic_class.destination)
        assert np.max(np.abs(residual)) <= 1e-8
        check = verify_wardrop(net, cost, None, flows, traffic_class=traffic_class, total_flows=total)
        assert check.passed


def test_atomic_oracles_agree():
    """测试蛮力枚举与整数费用流给出相同的势函数极小值"""
    net = diamond(2.0)
    cost = AffineLatency([0.0] * 4, [1.0] * 4)
    exact = atomic_bruteforce(net, cost)
    assert exact["minimum"] == pytest.approx(4.0)
    assert exact["minimizers"] == [[1, 1, 1, 1]]

    flow = atomic_min_cost_flow(net, cost)
    assert flow.potential == pytest.approx(4.0)
    assert flow.flows == [1, 1, 1, 1]


def test_atomic_social_optimum():
    """测试整数社会最优：四名用户在不对称菱形上"""
    net = diamond(4.0)
    cost = AffineLatency([1.0, 0.0, 2.0, 0.0], [1.0, 1.0, 0.5, 0.5])
    social = atomic_min_cost_flow(net, cost, social=True)
    # 逐一比较全部整数分配 (k, 4−k)
    candidates = [k * (1 + 2 * k) + (4 - k) * (2 + (4 - k)) for k in range(5)]
    assert social.social_cost == pytest.approx(min(candidates))


def test_bruteforce_size_limit():
    """测试超出规模上限时拒绝"""
    net = diamond(9.0)
    with pytest.raises(OracleError):
        atomic_bruteforce(net, AffineLatency([0.0] * 4, [1.0] * 4))


def test_laplacian_conservation(small_undirected_rrg):
    """测试拉普拉斯解满足节点守恒"""
    net = small_undirected_rrg
    _, flows = laplacian_solve(net)
    lam = net.signed_resources()
    # x_ij 从 j 流向 i：节点 i 流入 +x，节点 j 流出
    balance = lam.copy()
    for k, (i, j) in enumerate(net.edges):
        balance[i] += flows[k]
        balance[j] -= flows[k]
    assert np.allclose(balance, 0.0, atol=1e-9)


def test_finite_difference():
    """测试中心差分：二次函数的梯度为 2x"""
    point = np.array([1.0, -2.0, 0.5])
    gradient = finite_difference(lambda p: float(np.sum(p * p)), point)
    assert np.allclose(gradient, 2.0 * point, atol=1e-6)
    with pytest.raises(ValueError):
        finite_difference(lambda p: 0.0, point, h=0.0)
