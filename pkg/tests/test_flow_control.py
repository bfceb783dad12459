"""
流量调控测试：值消息、铰链目标、梯度消息与精确梯度
"""
import numpy as np
import pytest

from app.core.errors import ConfigError
from app.core.flow_control import (
    FlowController,
    ggd_gradient,
    gradient_mse_trace,
    hinge_slope,
    objective,
    run_flow_control,
    run_ggd_control,
    select_targets
)
from app.core.network_builder import generate_rrg
from app.models.message_models import ControlState
from app.models.params_models import DestinationMethod, FlowControlParams
from app.oracles.builtin.finite_difference import finite_difference
from app.oracles.builtin.laplacian_solve import laplacian_solve

TRIANGLE_FLOWS = [-1 / 3, -1 / 3, -2 / 3]


def _grounded(**kwargs) -> FlowControlParams:
    return FlowControlParams(method=DestinationMethod.GROUNDED, seed=0, **kwargs)


def _state(flows, targets, theta=0.1) -> ControlState:
    return ControlState(
        resistance=[1.0] * len(flows),
        r_min=0.1,
        r_max=10.0,
        targets=targets,
        baseline={k: float(flows[k]) for k in targets},
        theta=theta
    )


def test_triangle_value_messages(triangle):
    """测试三角形上的值消息：α = 2，流量按电阻分流"""
    controller = FlowController(triangle, _grounded())
    assert controller.converge()
    # 边 (0,1) 两个方向的上游都是参考节点发出的固定消息
    assert controller.alpha[0] == pytest.approx(2.0)
    assert controller.alpha[1] == pytest.approx(2.0)
    assert np.allclose(controller.flows(), TRIANGLE_FLOWS, atol=1e-8)


def test_laplacian_solve_triangle(triangle):
    """测试直接求解：x_ij 为从 j 流向 i 的流量"""
    mu, flows = laplacian_solve(triangle)
    assert mu[triangle.reference] == 0.0
    assert mu[0] == pytest.approx(2 / 3)
    assert np.allclose(flows, TRIANGLE_FLOWS)


def test_rrg_flows_match_laplacian(small_undirected_rrg):
    """测试随机正则图上的消息传递流量等于拉普拉斯解"""
    controller = FlowController(small_undirected_rrg, FlowControlParams(seed=1))
    assert controller.converge()
    _, exact = laplacian_solve(small_undirected_rrg)
    assert np.max(np.abs(controller.flows() - exact)) < 1e-6


def test_objective_examples():
    """测试铰链目标：x⁰ = 1、θ = 0.1"""
    state = _state([1.0], [0])
    value, rho = objective([1.2], state)
    assert value == 0.0
    assert rho[0] == pytest.approx(0.1)

    value, rho = objective([1.0], state)
    assert value == pytest.approx(0.1)
    assert rho[0] == pytest.approx(-0.1)

    # 方向无关，只看绝对值
    value, _ = objective([-1.0], state)
    assert value == pytest.approx(0.1)


def test_hinge_slope():
    """测试铰链斜率：ρ ≥ 0 时为零，否则为 −sgn(x)/|x⁰|"""
    assert hinge_slope(1.0, -0.1, 1.0) == pytest.approx(-1.0)
    assert hinge_slope(-0.5, -0.1, 0.5) == pytest.approx(2.0)
    assert hinge_slope(1.0, 0.0, 1.0) == 0.0
    assert hinge_slope(1.0, 0.3, 1.0) == 0.0


def test_ggd_matches_finite_difference(triangle):
    """测试精确梯度与中心差分一致"""
    _, flows = laplacian_solve(triangle)
    state = _state(flows, [2])

    def evaluate(r):
        _, x = laplacian_solve(triangle.with_resistance(list(r)))
        return objective(x, state)[0]

    numeric = finite_difference(evaluate, [1.0, 1.0, 1.0])
    exact = ggd_gradient(triangle, state)
    assert np.allclose(exact, numeric, atol=1e-6)
    # 增大目标边的 r 会减小它的流量
    assert exact[2] == pytest.approx(1 / 3)


def test_message_gradient_on_triangle(triangle):
    """测试梯度消息收敛到精确梯度"""
    controller = FlowController(triangle, _grounded())
    controller.converge()
    state = select_targets(triangle, controller.flows(), _grounded(targets=[(0, 2)]), np.random.default_rng(0))
    controller.set_state(state)
    for _ in range(100):
        controller.sweep()
    assert np.allclose(controller.gradient(), ggd_gradient(triangle, state), atol=1e-8)


def test_message_gradient_on_rrg(small_undirected_rrg):
    """测试随机正则图上梯度消息的均方误差收敛到零"""
    trace = gradient_mse_trace(small_undirected_rrg, FlowControlParams(seed=2, num_targets=3), sweeps=50)
    assert len(trace) == 50
    assert trace[-1].mse < 1e-10
    assert trace[-1].flow_error < 1e-6


def test_select_targets_errors(triangle):
    """测试不存在的目标边与零基线报错"""
    flows = np.array(TRIANGLE_FLOWS)
    with pytest.raises(ConfigError):
        select_targets(triangle, flows, _grounded(targets=[(0, 0)]), np.random.default_rng(0))
    with pytest.raises(ConfigError):
        select_targets(triangle, np.zeros(3), _grounded(targets=[(0, 1)]), np.random.default_rng(0))

    state = select_targets(triangle, flows, _grounded(num_targets=2), np.random.default_rng(0))
    assert len(state.targets) == 2
    assert state.baseline[state.targets[0]] == pytest.approx(flows[state.targets[0]])


def test_update_interval(small_undirected_rrg):
    """测试默认参数更新间隔为 4|E|/10"""
    controller = FlowController(small_undirected_rrg, FlowControlParams())
    assert controller.update_interval() == round(4 * small_undirected_rrg.num_edges / 10)


def test_set_resistance_clips(triangle):
    """测试参数被投影回 [r_min, r_max]"""
    controller = FlowController(triangle, _grounded(r_min=0.5, r_max=2.0))
    controller.set_resistance(0, 5.0)
    controller.set_resistance(1, 0.01)
    assert controller.r[0] == 2.0
    assert controller.r[1] == 0.5


def test_control_respects_box(small_undirected_rrg):
    """测试调控过程中 r 始终在盒约束内"""
    params = FlowControlParams(seed=3, theta=0.2, r_min=0.5, r_max=2.0, max_sweeps=5, warmup_sweeps=5)
    result = run_flow_control(small_undirected_rrg, params)
    assert all(0.5 <= r <= 2.0 for r in result.resistance)
    assert result.trajectory[0].step == 0
    assert len(result.rho) == params.num_targets


def test_already_satisfied_targets(small_undirected_rrg):
    """测试目标已满足（θ < 0）时立即成功且不修改 r"""
    params = FlowControlParams(seed=4, theta=-0.05, warmup_sweeps=2)
    result = run_flow_control(small_undirected_rrg, params)
    assert result.success
    assert result.steps == 0
    assert result.resistance == small_undirected_rrg.resistance


def test_ggd_control_respects_box(small_undirected_rrg):
    """测试精确梯度基线的盒约束与轨迹"""
    params = FlowControlParams(seed=5, theta=0.1, r_min=0.5, r_max=2.0, max_sweeps=3)
    result = run_ggd_control(small_undirected_rrg, params)
    assert all(0.5 <= r <= 2.0 for r in result.resistance)
    assert result.trajectory
    assert result.objective >= 0.0


@pytest.mark.slow
def test_flow_control_succeeds_on_large_rrg():
    """测试 N = 200 的随机正则图上调控达到 𝒪 = 0"""
    net = generate_rrg(200, 3, seed=1, directed=False)
    result = run_flow_control(net, FlowControlParams(seed=1, theta=0.1))
    assert result.success
    assert result.objective == 0.0


def test_value_message_primitives(triangle):
    """测试收敛后的值消息不再变化，单边流量与整体一致"""
    controller = FlowController(triangle, _grounded())
    controller.converge()
    assert controller.update_value_message(2) == pytest.approx(0.0, abs=1e-8)
    assert controller.equilibrium_flow(2) == pytest.approx(-2 / 3)


def test_gradient_primitives(triangle):
    """测试边界梯度只出现在目标边上，且逐边梯度与整体一致"""
    controller = FlowController(triangle, _grounded())
    controller.converge()
    state = select_targets(triangle, controller.flows(), _grounded(targets=[(0, 2)]), np.random.default_rng(0))
    controller.set_state(state)
    for _ in range(100):
        controller.sweep()

    d_alpha, d_offset = controller.gradient_boundary(0)
    assert not d_alpha.any() and not d_offset.any()
    # 槽位 4 是节点 0 发往参考节点的消息
    _, d_offset = controller.gradient_boundary(4)
    assert d_offset.any()
    assert controller.gradient_wrt_r(2) == pytest.approx(controller.gradient()[2])


def test_message_gradient_matches_finite_difference(triangle):
    """测试梯度消息给出的 ∂𝒪/∂r 与重新求解的中心差分一致"""
    controller = FlowController(triangle, _grounded())
    controller.converge()
    state = select_targets(triangle, controller.flows(), _grounded(targets=[(0, 2)]), np.random.default_rng(0))
    controller.set_state(state)
    for _ in range(100):
        controller.sweep()

    def evaluate(r):
        _, x = laplacian_solve(triangle.with_resistance(list(r)))
        return objective(x, state)[0]

    numeric = finite_difference(evaluate, [1.0, 1.0, 1.0])
    # 并联两条路径：目标边 |x| = (r_0 + r_1) / Σr
    assert numeric == pytest.approx([-1 / 6, -1 / 6, 1 / 3], rel=1e-4)
    for k in range(3):
        assert controller.gradient_wrt_r(k) == pytest.approx(numeric[k], rel=1e-4)
