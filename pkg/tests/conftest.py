"""
测试夹具：小型路网与无向流网络
"""
import pytest

from app.core.cost_model import AffineLatency
from app.core.network_builder import generate_rrg
from app.models.network_models import DirectedNetwork, UndirectedNetwork


def diamond(lam: float = 1.0) -> DirectedNetwork:
    """S=0 → A=1 → D=3 与 S=0 → B=2 → D=3 两条路径"""
    return DirectedNetwork(
        num_nodes=4,
        edges=[(0, 1), (1, 3), (0, 2), (2, 3)],
        resources=[lam, 0.0, 0.0, 0.0],
        destinations=[3]
    )


@pytest.fixture
def pigou():
    """庇古网络：上路 ℓ = x，下路 ℓ = 1，Λ_S = 1"""
    return diamond(1.0), AffineLatency([0.0, 0.0, 1.0, 0.0], [1.0, 0.0, 0.0, 0.0])


@pytest.fixture
def symmetric_diamond():
    """对称菱形：四条边 ℓ = x，Λ_S = 2"""
    return diamond(2.0), AffineLatency([0.0] * 4, [1.0] * 4)


@pytest.fixture
def affine_diamond():
    """两条路径代价不同的菱形：路径 A 为 1 + 2x，路径 B 为 2 + x，Λ_S = 3"""
    return diamond(3.0), AffineLatency([1.0, 0.0, 2.0, 0.0], [1.0, 1.0, 0.5, 0.5])


@pytest.fixture
def triangle():
    """三角形无向网络，所有 r = 1，Λ_0 = 1，参考节点为 2"""
    return UndirectedNetwork(
        num_nodes=3,
        edges=[(0, 1), (1, 2), (0, 2)],
        resistance=[1.0, 1.0, 1.0],
        resources=[1.0, 0.0, 0.0],
        reference=2
    )


@pytest.fixture
def small_rrg():
    """12 个节点的 3-正则有向路网"""
    return generate_rrg(12, 3, seed=7)


@pytest.fixture
def small_undirected_rrg():
    """16 个节点的 3-正则无向流网络"""
    return generate_rrg(16, 3, seed=3, directed=False)
