"""
边能量、收费响应曲线与单边收费优化测试
"""
import pytest
from hypothesis import given, strategies as st

from app.core.edge_profile import (
    EdgeProfile,
    EnergyPiece,
    interpolate_response,
    merge_responses,
    optimize_edge_toll
)
from app.core.errors import MessageConsistencyError


def test_smooth_argmin_with_toll():
    """测试光滑二次能量的极小点随收费左移并截断在零"""
    profile = EdgeProfile([EnergyPiece.smooth(2.0, 1.0, 0.0)])
    assert profile.argmin() == pytest.approx(2.0)
    assert profile.argmin(1.0) == pytest.approx(1.0)
    assert profile.argmin(3.0) == pytest.approx(0.0)


def test_two_pieces_balance():
    """测试两段能量之和的极小点在中点"""
    profile = EdgeProfile([EnergyPiece.smooth(1.0, 1.0, 0.0), EnergyPiece.smooth(3.0, 1.0, 0.0)])
    assert profile.argmin() == pytest.approx(2.0)


def test_pin_fixes_flow():
    """测试钉住的分段固定流量"""
    profile = EdgeProfile([EnergyPiece.pin(1.5), EnergyPiece.smooth(4.0, 1.0, 0.0)])
    assert profile.argmin() == pytest.approx(1.5)
    assert profile.argmin(10.0) == pytest.approx(1.5)


def test_kink_argmin():
    """测试折点处的次梯度区间"""
    kink = EnergyPiece(center=1.0, alpha_left=1.0, beta_left=-1.0, alpha_right=1.0, beta_right=1.0)
    profile = EdgeProfile([kink])
    assert profile.argmin(0.5) == pytest.approx(1.0)
    assert profile.argmin(1.5) == pytest.approx(0.5)
    assert profile.argmin(2.0) == pytest.approx(0.0)


def test_nonconvex_piece_rejected():
    """测试 β^R < β^L 时报错"""
    bad = EnergyPiece(center=1.0, alpha_left=1.0, beta_left=1.0, alpha_right=1.0, beta_right=-1.0)
    with pytest.raises(MessageConsistencyError):
        EdgeProfile([bad]).argmin()


def test_unbounded_energy():
    """测试线性下降的能量：无上限时报错，有上限时取上限"""
    piece = EnergyPiece.smooth(0.0, 0.0, -1.0)
    with pytest.raises(MessageConsistencyError):
        EdgeProfile([piece]).argmin()
    assert EdgeProfile([piece], cap=4.0).argmin() == pytest.approx(4.0)


def test_toll_response_breakpoints():
    """测试响应曲线的断点与插值"""
    profile = EdgeProfile([EnergyPiece.smooth(2.0, 1.0, 0.0)])
    response = profile.toll_response(3.0)
    assert [tau for tau, _ in response] == pytest.approx([0.0, 2.0, 3.0])
    assert [x for _, x in response] == pytest.approx([2.0, 0.0, 0.0])
    assert interpolate_response(response, 1.0) == pytest.approx(1.0)


def test_optimize_edge_toll():
    """测试单边收费优化：插值、零收费与平局取较小的 τ"""
    response = [(0.0, 2.0), (2.0, 0.0), (3.0, 0.0)]
    assert optimize_edge_toll(response, 0.5) == pytest.approx(1.5)
    assert optimize_edge_toll(response, 3.0) == pytest.approx(0.0)
    assert optimize_edge_toll(response, 0.0) == pytest.approx(2.0)
    assert optimize_edge_toll([], 1.0) == 0.0


def test_merge_responses():
    """测试多类别响应逐点相加"""
    first = [(0.0, 2.0), (2.0, 0.0)]
    second = [(0.0, 1.0), (1.0, 0.0), (2.0, 0.0)]
    merged = merge_responses([first, second])
    assert [tau for tau, _ in merged] == pytest.approx([0.0, 1.0, 2.0])
    assert [x for _, x in merged] == pytest.approx([3.0, 1.0, 0.0])


piece_strategy = st.builds(
    EnergyPiece.smooth,
    center=st.floats(min_value=0.0, max_value=5.0),
    alpha=st.floats(min_value=0.1, max_value=3.0),
    beta=st.floats(min_value=-2.0, max_value=2.0)
)


@given(st.lists(piece_strategy, min_size=1, max_size=3), st.floats(min_value=0.1, max_value=5.0))
def test_toll_response_nonincreasing(pieces, tau_max):
    """测试响应曲线关于收费非增"""
    response = EdgeProfile(pieces).toll_response(tau_max)
    flows = [x for _, x in response]
    for lower, upper in zip(flows[:-1], flows[1:]):
        assert upper <= lower + 1e-9
    assert all(x >= 0.0 for x in flows)
