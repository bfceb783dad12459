"""
路网模型、预处理、生成器与文件解析测试
"""
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings as hyp_settings, strategies as st

from app.core.constants import SiouxFalls
from app.core.errors import NetworkValidationError, TriviallySolvedError
from app.core.network_builder import (
    generate_rrg,
    generate_small_world,
    place_integer_users,
    preprocess,
    trim_undirected_leaves
)
from app.core.parsers import load_tntp, write_network
from app.core.parsers.network_parser import network_parser
from app.models.network_models import DirectedNetwork, UndirectedNetwork

DATA_DIR = Path(__file__).resolve().parent.parent / "data"


def test_incidence_signs(symmetric_diamond):
    """测试关联算子：流入为 +1，流出为 -1"""
    net, _ = symmetric_diamond
    assert net.incidence(0, 0) == -1
    assert net.incidence(1, 0) == 1
    assert net.incidence(3, 0) == 0

    # 矩阵形式与逐项一致
    matrix = net.incidence_matrix().toarray()
    for i in range(net.num_nodes):
        for e in range(net.num_edges):
            assert matrix[i, e] == net.incidence(i, e)


def test_network_rejects_self_loop():
    """测试自环被拒绝"""
    with pytest.raises(ValueError):
        DirectedNetwork(num_nodes=2, edges=[(0, 0)], resources=[1.0, 0.0], destinations=[1])


def test_preprocess_moves_source_leaf_resource():
    """测试源叶子的资源转移给下游邻居"""
    net = DirectedNetwork(
        num_nodes=5,
        edges=[(4, 0), (0, 1), (1, 3), (0, 2), (2, 3)],
        resources=[0.5, 0.0, 0.0, 0.0, 1.0],
        destinations=[3]
    )
    reduced = preprocess(net)

    # 叶子被删除，资源并入原节点 0
    assert reduced.num_nodes == 4
    assert reduced.num_edges == 4
    assert reduced.resources[reduced.node_labels.index("0")] == pytest.approx(1.5)
    assert "4" not in reduced.node_labels


def test_preprocess_migrates_destination_leaf():
    """测试目的地叶子迁移到上游邻居"""
    net = DirectedNetwork(
        num_nodes=5,
        edges=[(0, 1), (1, 3), (0, 2), (2, 3), (3, 4)],
        resources=[1.0, 0.0, 0.0, 0.0, 0.0],
        destinations=[4]
    )
    reduced = preprocess(net)
    assert reduced.node_labels[reduced.destination] == "3"
    assert reduced.num_edges == 4
    # 再次预处理不再改变网络
    again = preprocess(reduced)
    assert again.edges == reduced.edges
    assert again.destinations == reduced.destinations


def test_preprocess_trivial_network():
    """测试剪枝到单节点时抛出异常"""
    net = DirectedNetwork(num_nodes=2, edges=[(0, 1)], resources=[1.0, 0.0], destinations=[1])
    with pytest.raises(TriviallySolvedError):
        preprocess(net)


def test_preprocess_trapped_resource():
    """测试资源困在无法离开的叶子上时报错"""
    net = DirectedNetwork(
        num_nodes=5,
        edges=[(0, 1), (1, 3), (0, 2), (2, 3), (0, 4)],
        resources=[1.0, 0.0, 0.0, 0.0, 0.3],
        destinations=[3]
    )
    with pytest.raises(NetworkValidationError):
        preprocess(net)


@hyp_settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(min_value=0.0, max_value=5.0), min_size=1, max_size=5))
def test_preprocess_conserves_resources(chain):
    """测试剪除源链后总资源不变，且预处理幂等"""
    k = len(chain)
    # 源链 4 → 5 → … → 0，接在菱形上
    nodes = [4 + j for j in range(k)]
    edges = [(0, 1), (1, 3), (0, 2), (2, 3)]
    edges += [(nodes[j], nodes[j + 1]) for j in range(k - 1)] + [(nodes[-1], 0)]
    net = DirectedNetwork(
        num_nodes=4 + k,
        edges=edges,
        resources=[1.0, 0.0, 0.0, 0.0] + list(chain),
        destinations=[3]
    )
    reduced = preprocess(net)
    assert reduced.num_nodes == 4
    assert sum(reduced.resources) == pytest.approx(1.0 + sum(chain))

    again = preprocess(reduced)
    assert again.edges == reduced.edges
    assert again.resources == reduced.resources


def test_generate_rrg_directed():
    """测试有向随机正则图：度数与可达性"""
    net = generate_rrg(20, 3, seed=11)
    assert net.num_nodes == 20
    assert net.num_edges == 30
    for ins, outs in net.degree_counts().values():
        assert ins + outs == 3
    assert net.is_strongly_usable()

    # 相同种子结果相同
    assert generate_rrg(20, 3, seed=11).edges == net.edges


def test_generate_rrg_multiple_destinations():
    """测试多目的地生成：每个类别一块资源"""
    net = generate_rrg(16, 3, seed=5, num_destinations=2)
    classes = net.traffic_classes()
    assert len(classes) == 2
    assert net.is_strongly_usable()
    for traffic_class in classes:
        assert traffic_class.resources[traffic_class.destination] == 0.0


def test_generate_small_world_undirected():
    """测试小世界无向网络连通且无叶子"""
    net = generate_small_world(5, 0.1, seed=2, directed=False)
    assert net.is_connected()
    assert all(net.degree(i) >= 2 for i in range(net.num_nodes))


def test_trim_undirected_leaves():
    """测试无向剪枝把叶子资源并入邻居"""
    net = UndirectedNetwork(
        num_nodes=4,
        edges=[(0, 1), (1, 2), (0, 2), (2, 3)],
        resistance=[1.0, 1.0, 1.0, 2.0],
        resources=[1.0, 0.0, 0.0, 0.5],
        reference=0
    )
    trimmed = trim_undirected_leaves(net)
    assert trimmed.num_nodes == 3
    assert trimmed.resources[trimmed.node_labels.index("2")] == pytest.approx(0.5)


def test_undirected_slots(triangle):
    """测试无向网络的槽位与带符号资源"""
    assert triangle.slot(0, 0) == 0
    assert triangle.slot(0, 1) == 1
    lam = triangle.signed_resources()
    assert lam[triangle.reference] == pytest.approx(-1.0)
    assert lam.sum() == pytest.approx(0.0)


def test_place_integer_users(small_rrg):
    """测试原子博弈的用户布置"""
    net = place_integer_users(small_rrg, 3, 4, seed=1)
    # 节点 1、13、20 各有 4 名用户
    assert sum(net.resources) == 3 * SiouxFalls.CASE_USERS["I"]
    assert net.resources[net.destination] == 0.0
    assert sorted(set(net.resources)) == [0.0, 4.0]


def test_parse_network_text():
    """测试文本解析：注释、1 起编号与 lambda 块"""
    text = "\n".join([
        "# 注释",
        "nodes 4 edges 4 destination 4",
        "~ 另一种注释",
        "1 1 2 1.0 2.0",
        "2 2 4 1.0 2.0",
        "3 1 3 2.0 1.0",
        "4 3 4 2.0 1.0",
        "lambda",
        "1 1.5"
    ])
    net = network_parser.parse(text)
    assert net.num_nodes == 4
    assert net.destination == 3
    assert net.resources == [1.5, 0.0, 0.0, 0.0]
    assert net.free_time == [1.0, 1.0, 2.0, 2.0]
    assert net.node_labels[0] == "1"


def test_parse_network_reports_line():
    """测试格式错误时带行号"""
    text = "nodes 3 edges 2 destination 3\n1 1 2 1.0\n2 2 3 1.0 1.0\n"
    with pytest.raises(NetworkValidationError) as exc:
        network_parser.parse(text)
    assert exc.value.metadata["line"] == 2


def test_write_and_load_network(tmp_path, small_rrg):
    """测试写出的路网可以被重新读入"""
    path = write_network(small_rrg, tmp_path / "net.txt")
    loaded = load_tntp(path)
    assert loaded.num_edges == small_rrg.num_edges
    assert np.allclose(loaded.free_time, small_rrg.free_time)
    assert np.allclose(loaded.resources, small_rrg.resources)


def test_siouxfalls_fixture():
    """测试苏福尔斯路网与 Case I 用户设置"""
    net = load_tntp(DATA_DIR / "siouxfalls.txt", DATA_DIR / "siouxfalls_case_I.txt")
    assert net.num_nodes == SiouxFalls.NODES
    assert net.num_edges == SiouxFalls.EDGES
    assert net.node_labels[net.destination] == str(SiouxFalls.CENTRAL_NODE)
    # 节点 1、13、20 各有 4 名用户
    assert sum(net.resources) == 3 * SiouxFalls.CASE_USERS["I"]
