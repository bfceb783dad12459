"""
网络构造：预处理（剪除叶子节点）与随机网络生成

生成器使用 networkx 的随机正则图与二维网格，随机参数取自 numpy 的 Generator：
Λ_i ~ U[0,1]（非目的地节点），t_e, c_e ~ U[0.5, 1.5]。
"""
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import networkx as nx

from ..models.network_models import DirectedNetwork, UndirectedNetwork
from .constants import Tolerances
from .errors import ConfigError, GenerationError, NetworkValidationError, TriviallySolvedError
from .logger import logger

DEFAULT_MAX_RETRIES = 100
REWIRING_PROBABILITY = 0.05
COST_RANGE = (0.5, 1.5)


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _class_blocks(net: DirectedNetwork) -> List[List[float]]:
    if net.class_resources:
        return [list(block) for block in net.class_resources]
    return [list(net.resources)]


def preprocess(net: DirectedNetwork) -> DirectedNetwork:
    """
    递归剪除叶子节点

    规则：
    - 只有一条出边的源叶子：Λ 转移给下游邻居后删除；
    - 只有一条入边的非目的地叶子：Λ = 0 时删除，否则资源无法到达目的地；
    - 只有一条入边的目的地叶子：目的地迁移到上游邻居，该边上的流量是确定的。
    总资源量保持不变（迁移到目的地上的资源被求解器忽略）。

    Args:
        net: 连通的有向路网

    Returns:
        无叶子的路网，节点和边重新连续编号，原始编号保留在标签中

    Raises:
        TriviallySolvedError: 网络退化为单个节点
        NetworkValidationError: 资源被困在无法到达目的地的叶子上
    """
    if not net.is_connected():
        raise NetworkValidationError("预处理要求网络连通")

    alive_nodes = set(range(net.num_nodes))
    alive_edges = set(range(net.num_edges))
    blocks = _class_blocks(net)
    destinations = list(net.destinations)
    free_time = list(net.free_time)
    capacity = list(net.capacity)

    def degrees(i: int) -> Tuple[List[int], List[int]]:
        return (
            [e for e in net.in_edges(i) if e in alive_edges],
            [e for e in net.out_edges(i) if e in alive_edges]
        )

    changed = True
    while changed:
        changed = False
        for i in sorted(alive_nodes):
            if len(alive_nodes) <= 1:
                break
            ins, outs = degrees(i)
            is_destination = i in destinations
            if not ins and not outs:
                if any(block[i] > Tolerances.ZERO_FLOW for a, block in enumerate(blocks) if destinations[a] != i):
                    raise NetworkValidationError(f"孤立节点 {net.node_labels[i]} 上的资源无法到达目的地")
                if is_destination:
                    continue
                alive_nodes.discard(i)
                changed = True
            elif len(outs) == 1 and not ins:
                if is_destination:
                    raise NetworkValidationError(f"目的地 {net.node_labels[i]} 不可到达")
                e = outs[0]
                neighbor = net.edges[e][1]
                for block in blocks:
                    block[neighbor] += block[i]
                    block[i] = 0.0
                alive_edges.discard(e)
                alive_nodes.discard(i)
                changed = True
            elif len(ins) == 1 and not outs:
                e = ins[0]
                neighbor = net.edges[e][0]
                for a, block in enumerate(blocks):
                    if destinations[a] == i:
                        destinations[a] = neighbor
                        block[neighbor] += block[i]
                        block[i] = 0.0
                    elif block[i] > Tolerances.ZERO_FLOW:
                        raise NetworkValidationError(f"节点 {net.node_labels[i]} 的资源无法离开")
                alive_edges.discard(e)
                alive_nodes.discard(i)
                changed = True

    if len(alive_nodes) <= 1:
        raise TriviallySolvedError("预处理后网络只剩一个节点", {"node": net.node_labels[min(alive_nodes)]})

    order = sorted(alive_nodes)
    index = {old: new for new, old in enumerate(order)}
    kept_edges = sorted(alive_edges)
    new_blocks = [[block[i] for i in order] for block in blocks]

    reduced = DirectedNetwork(
        num_nodes=len(order),
        edges=[(index[net.edges[e][0]], index[net.edges[e][1]]) for e in kept_edges],
        resources=new_blocks[0] if not net.class_resources else [sum(col) for col in zip(*new_blocks)],
        destinations=[index[d] for d in destinations],
        class_resources=new_blocks if net.class_resources else [],
        free_time=[free_time[e] for e in kept_edges] if free_time else [],
        capacity=[capacity[e] for e in kept_edges] if capacity else [],
        node_labels=[net.node_labels[i] for i in order],
        edge_labels=[net.edge_labels[e] for e in kept_edges]
    )
    if reduced.num_nodes != net.num_nodes:
        logger.info(
            "预处理剪除叶子节点",
            removed_nodes=net.num_nodes - reduced.num_nodes,
            removed_edges=net.num_edges - reduced.num_edges
        )
    return reduced


def _check_regular(n: int, degree: int):
    if (n * degree) % 2 != 0:
        raise ConfigError("n * d must be even", {"n": n, "degree": degree})
    if degree < 3 or degree >= n:
        raise ConfigError("度数需满足 3 ≤ d < n", {"n": n, "degree": degree})


def _connected_regular_graph(n: int, degree: int, rng: np.random.Generator, max_retries: int) -> nx.Graph:
    for _ in range(max_retries):
        graph = nx.random_regular_graph(degree, n, seed=int(rng.integers(2 ** 31)))
        if nx.is_connected(graph):
            return graph
    raise GenerationError("随机正则图在重试上限内不连通", {"n": n, "degree": degree})


def _strong_orientation(graph: nx.Graph, rng: np.random.Generator) -> Optional[List[Tuple[int, int]]]:
    """
    随机深度优先搜索给出强连通定向：树边指向远离根，非树边指回祖先
    有桥时不存在强连通定向，返回 None
    """
    if nx.has_bridges(graph):
        return None
    root = int(rng.integers(graph.number_of_nodes()))
    visited = {root}
    depth = {root: 0}
    oriented = set()
    arcs: List[Tuple[int, int]] = []
    stack = [(root, iter(rng.permutation(list(graph.neighbors(root))).tolist()))]
    while stack:
        node, neighbors = stack[-1]
        advanced = False
        for nxt in neighbors:
            key = (min(node, nxt), max(node, nxt))
            if key in oriented:
                continue
            oriented.add(key)
            if nxt not in visited:
                visited.add(nxt)
                depth[nxt] = depth[node] + 1
                arcs.append((node, nxt))
                stack.append((nxt, iter(rng.permutation(list(graph.neighbors(nxt))).tolist())))
                advanced = True
                break
            # 回边指向祖先
            if depth[nxt] < depth[node]:
                arcs.append((node, nxt))
            else:
                arcs.append((nxt, node))
        if not advanced:
            stack.pop()
    return arcs


def _random_parameters(
    n: int,
    num_edges: int,
    destinations: List[int],
    rng: np.random.Generator
) -> Dict[str, list]:
    blocks = []
    for d in destinations:
        lam = rng.uniform(0.0, 1.0, size=n)
        lam[d] = 0.0
        blocks.append(lam.tolist())
    return {
        "class_resources": blocks,
        "free_time": rng.uniform(*COST_RANGE, size=num_edges).tolist(),
        "capacity": rng.uniform(*COST_RANGE, size=num_edges).tolist()
    }


def orient_graph(
    graph: nx.Graph,
    destinations: List[int],
    rng: np.random.Generator,
    max_retries: int = DEFAULT_MAX_RETRIES
) -> Optional[List[Tuple[int, int]]]:
    """
    为无向图的每条边随机定向，直到所有节点都能到达每个目的地；
    重试用尽后退回强连通定向
    """
    undirected = list(graph.edges())
    n = graph.number_of_nodes()
    for _ in range(max_retries):
        flips = rng.random(len(undirected)) < 0.5
        arcs = [(j, i) if flip else (i, j) for (i, j), flip in zip(undirected, flips)]
        candidate = DirectedNetwork(num_nodes=n, edges=arcs, resources=[0.0] * n, destinations=destinations)
        if candidate.is_strongly_usable():
            return arcs
    return _strong_orientation(graph, rng)


def _directed_from_graph(
    graph: nx.Graph,
    rng: np.random.Generator,
    num_destinations: int,
    max_retries: int
) -> Optional[DirectedNetwork]:
    n = graph.number_of_nodes()
    destinations = sorted(rng.choice(n, size=num_destinations, replace=False).tolist())
    arcs = orient_graph(graph, destinations, rng, max_retries)
    if arcs is None:
        return None
    params = _random_parameters(n, len(arcs), destinations, rng)
    blocks = params["class_resources"]
    return DirectedNetwork(
        num_nodes=n,
        edges=arcs,
        resources=[sum(col) for col in zip(*blocks)] if num_destinations > 1 else blocks[0],
        destinations=destinations,
        class_resources=blocks if num_destinations > 1 else [],
        free_time=params["free_time"],
        capacity=params["capacity"]
    )


def _undirected_from_graph(graph: nx.Graph, rng: np.random.Generator) -> UndirectedNetwork:
    n = graph.number_of_nodes()
    reference = int(rng.integers(n))
    lam = rng.uniform(0.0, 1.0, size=n)
    lam[reference] = 0.0
    edges = sorted((min(i, j), max(i, j)) for i, j in graph.edges())
    return UndirectedNetwork(
        num_nodes=n,
        edges=edges,
        resistance=[1.0] * len(edges),
        resources=lam.tolist(),
        reference=reference
    )


def generate_rrg(
    n: int,
    degree: int,
    seed=None,
    directed: bool = True,
    num_destinations: int = 1,
    max_retries: int = DEFAULT_MAX_RETRIES
) -> Union[DirectedNetwork, UndirectedNetwork]:
    """
    随机正则图

    Args:
        n: 节点数
        degree: 度数（≥ 3，n·d 为偶数）
        seed: 随机种子或 numpy Generator
        directed: True 时生成有向路网（每条无向边随机定向）
        num_destinations: 目的地数量 N_d
        max_retries: 重试上限

    Returns:
        有向路网或无向流网络
    """
    _check_regular(n, degree)
    if not 1 <= num_destinations <= n:
        raise ConfigError("目的地数量超出范围", {"num_destinations": num_destinations})
    rng = _rng(seed)
    for _ in range(max_retries):
        graph = _connected_regular_graph(n, degree, rng, max_retries)
        if not directed:
            return _undirected_from_graph(graph, rng)
        net = _directed_from_graph(graph, rng, num_destinations, max_retries)
        if net is not None:
            return net
    raise GenerationError("有向随机正则图在重试上限内无法满足可达性", {"n": n, "degree": degree})


def _lattice_graph(side: int) -> nx.Graph:
    grid = nx.grid_2d_graph(side, side)
    return nx.convert_node_labels_to_integers(grid, ordering="sorted")


def rewire(graph: nx.Graph, p_rw: float, rng: np.random.Generator) -> nx.Graph:
    """每条边以概率 p_rw 将一个端点换到随机节点（避免自环与重边）"""
    rewired = graph.copy()
    n = rewired.number_of_nodes()
    for u, v in list(graph.edges()):
        if rng.random() >= p_rw:
            continue
        candidates = [w for w in range(n) if w != u and not rewired.has_edge(u, w)]
        if not candidates:
            continue
        w = int(candidates[int(rng.integers(len(candidates)))])
        rewired.remove_edge(u, v)
        rewired.add_edge(u, w)
    return rewired


def generate_small_world(
    side: int,
    p_rw: float = REWIRING_PROBABILITY,
    seed=None,
    directed: bool = True,
    num_destinations: int = 1,
    max_retries: int = DEFAULT_MAX_RETRIES
) -> Union[DirectedNetwork, UndirectedNetwork]:
    """
    小世界网络：side×side 方格以概率 p_rw 重连出随机捷径，不连通时重新采样
    """
    if side < 3:
        raise ConfigError("方格边长必须 ≥ 3", {"side": side})
    if not 0.0 <= p_rw <= 1.0:
        raise ConfigError("重连概率必须在 [0, 1] 内", {"p_rw": p_rw})
    rng = _rng(seed)
    lattice = _lattice_graph(side)
    for _ in range(max_retries):
        graph = rewire(lattice, p_rw, rng) if p_rw > 0 else lattice
        if not nx.is_connected(graph):
            continue
        if directed:
            net = _directed_from_graph(graph, rng, num_destinations, max_retries)
            if net is None:
                continue
        else:
            net = trim_undirected_leaves(_undirected_from_graph(graph, rng))
        return net
    raise GenerationError("小世界网络在重试上限内无法生成", {"side": side, "p_rw": p_rw})


def generate_lattice(side: int, seed=None, directed: bool = False, num_destinations: int = 1):
    """不重连的方格网络"""
    return generate_small_world(side, 0.0, seed, directed, num_destinations)


def trim_undirected_leaves(net: UndirectedNetwork) -> UndirectedNetwork:
    """
    递归剪除度为 1 的节点，资源并入邻居；参考节点为叶子时迁移到邻居
    """
    alive = set(range(net.num_nodes))
    edges = {k: edge for k, edge in enumerate(net.edges)}
    lam = list(net.resources)
    reference = net.reference

    changed = True
    while changed and len(alive) > 2:
        changed = False
        for i in sorted(alive):
            incident = [k for k, (a, b) in edges.items() if i in (a, b)]
            if len(incident) != 1:
                continue
            a, b = edges[incident[0]]
            neighbor = b if a == i else a
            if i == reference:
                reference = neighbor
            lam[neighbor] += lam[i]
            del edges[incident[0]]
            alive.discard(i)
            changed = True
            break

    if len(alive) <= 1:
        raise TriviallySolvedError("无向网络剪枝后只剩一个节点")
    order = sorted(alive)
    index = {old: new for new, old in enumerate(order)}
    kept = sorted(edges)
    result_lam = [lam[i] for i in order]
    result_lam[index[reference]] = 0.0
    return UndirectedNetwork(
        num_nodes=len(order),
        edges=[(index[edges[k][0]], index[edges[k][1]]) for k in kept],
        resistance=[net.resistance[k] for k in kept],
        resources=result_lam,
        reference=index[reference],
        node_labels=[net.node_labels[i] for i in order]
    )


def place_integer_users(
    net: DirectedNetwork,
    num_sources: int,
    users_per_source: int,
    seed=None,
    sources: Optional[List[int]] = None
) -> DirectedNetwork:
    """
    原子博弈的资源布置：随机选择 num_sources 个源节点，每个放 users_per_source 个用户
    """
    rng = _rng(seed)
    candidates = [i for i in range(net.num_nodes) if i != net.destination]
    if sources is None:
        if num_sources > len(candidates):
            raise ConfigError("源节点数量超过可用节点", {"num_sources": num_sources})
        sources = sorted(rng.choice(candidates, size=num_sources, replace=False).tolist())
    lam = [0.0] * net.num_nodes
    for s in sources:
        if s == net.destination:
            raise ConfigError("源节点不能是目的地", {"source": s})
        lam[s] = float(users_per_source)
    data = net.dict()
    data["resources"] = lam
    data["class_resources"] = []
    return DirectedNetwork(**data)
