"""
网络结构定义：有向路网 DirectedNetwork、无向流网络 UndirectedNetwork、出行类别 TrafficClass

有向边 e=(head, tail) 表示流量从 head 流向 tail，
关联算子 B(i,e) = +1 当 e 流入 i，-1 当 e 流出 i。
"""
from typing import List, Tuple, Dict, Optional

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from pydantic import BaseModel, Field, PrivateAttr, validator, root_validator


class TrafficClass(BaseModel):
    """出行类别：同一目的地的所有流量"""
    destination: int = Field(..., description="目的地节点")
    resources: List[float] = Field(..., description="各节点的出行需求 Λ_i^a")

    @property
    def total_resource(self) -> float:
        return float(sum(r for i, r in enumerate(self.resources) if i != self.destination))


class DirectedNetwork(BaseModel):
    """
    有向路网
    节点与边编号在构造后连续，原始编号保留在 node_labels / edge_labels 中
    """
    num_nodes: int = Field(..., description="节点数 N")
    edges: List[Tuple[int, int]] = Field(..., description="有向边列表 (head, tail)")
    resources: List[float] = Field(..., description="单目的地情形下的节点资源 Λ_i")
    destinations: List[int] = Field(..., description="目的地列表，长度 N_d ≥ 1")
    class_resources: List[List[float]] = Field(default_factory=list, description="多目的地情形下每个类别的资源")
    free_time: List[float] = Field(default_factory=list, description="自由行驶时间 t_e")
    capacity: List[float] = Field(default_factory=list, description="通行能力 c_e")
    node_labels: List[str] = Field(default_factory=list, description="原始节点编号")
    edge_labels: List[str] = Field(default_factory=list, description="原始边编号")

    _in_adj: List[List[int]] = PrivateAttr(default_factory=list)
    _out_adj: List[List[int]] = PrivateAttr(default_factory=list)
    _heads: Optional[np.ndarray] = PrivateAttr(default=None)
    _tails: Optional[np.ndarray] = PrivateAttr(default=None)

    class Config:
        schema_extra = {
            "example": {
                "num_nodes": 4,
                "edges": [[0, 1], [1, 3], [0, 2], [2, 3]],
                "resources": [2.0, 0.0, 0.0, 0.0],
                "destinations": [3],
                "free_time": [1.0, 1.0, 1.0, 1.0],
                "capacity": [1.0, 1.0, 1.0, 1.0]
            }
        }

    @validator("num_nodes")
    def num_nodes_must_be_positive(cls, v):
        if v < 1:
            raise ValueError("节点数必须大于等于1")
        return v

    @root_validator(skip_on_failure=True)
    def check_consistency(cls, values):
        n = values["num_nodes"]
        edges = values["edges"]
        for head, tail in edges:
            if not (0 <= head < n and 0 <= tail < n):
                raise ValueError(f"边 ({head}, {tail}) 引用了不存在的节点")
            if head == tail:
                raise ValueError(f"不允许自环 ({head}, {tail})")
        if len(values["resources"]) != n:
            raise ValueError("资源向量长度必须等于节点数")
        if not values["destinations"]:
            raise ValueError("至少需要一个目的地")
        for d in values["destinations"]:
            if not 0 <= d < n:
                raise ValueError(f"目的地 {d} 不存在")
        for i, r in enumerate(values["resources"]):
            if r < 0 and i not in values["destinations"]:
                raise ValueError(f"节点 {i} 的资源为负")
        class_resources = values.get("class_resources") or []
        if class_resources and len(class_resources) != len(values["destinations"]):
            raise ValueError("类别资源数量必须等于目的地数量")
        for block in class_resources:
            if len(block) != n or any(r < 0 for r in block):
                raise ValueError("类别资源长度错误或含负值")
        for name in ("free_time", "capacity"):
            column = values.get(name) or []
            if column and len(column) != len(edges):
                raise ValueError(f"{name} 长度必须等于边数")
            if any(v <= 0 for v in column):
                raise ValueError(f"{name} 必须为正")
        if not values.get("node_labels"):
            values["node_labels"] = [str(i) for i in range(n)]
        if not values.get("edge_labels"):
            values["edge_labels"] = [str(e) for e in range(len(edges))]
        return values

    def __init__(self, **data):
        super().__init__(**data)
        self._in_adj = [[] for _ in range(self.num_nodes)]
        self._out_adj = [[] for _ in range(self.num_nodes)]
        for e, (head, tail) in enumerate(self.edges):
            self._out_adj[head].append(e)
            self._in_adj[tail].append(e)
        self._heads = np.array([h for h, _ in self.edges], dtype=int)
        self._tails = np.array([t for _, t in self.edges], dtype=int)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def heads(self) -> np.ndarray:
        return self._heads

    @property
    def tails(self) -> np.ndarray:
        return self._tails

    @property
    def destination(self) -> int:
        """单目的地情形下的目的地"""
        return self.destinations[0]

    @property
    def total_resource(self) -> float:
        return float(sum(self.resources))

    def in_edges(self, i: int) -> List[int]:
        return self._in_adj[i]

    def out_edges(self, i: int) -> List[int]:
        return self._out_adj[i]

    def incident_edges(self, i: int) -> List[int]:
        return self._in_adj[i] + self._out_adj[i]

    def incidence(self, i: int, e: int) -> int:
        """B(i,e)"""
        head, tail = self.edges[e]
        if tail == i:
            return 1
        if head == i:
            return -1
        return 0

    def other_end(self, e: int, i: int) -> int:
        head, tail = self.edges[e]
        return tail if head == i else head

    def incidence_matrix(self) -> sparse.csr_matrix:
        """N×|E| 关联矩阵 B"""
        m = self.num_edges
        rows = np.concatenate([self._tails, self._heads])
        cols = np.concatenate([np.arange(m), np.arange(m)])
        data = np.concatenate([np.ones(m), -np.ones(m)])
        return sparse.csr_matrix((data, (rows, cols)), shape=(self.num_nodes, m))

    def adjacency_matrix(self) -> sparse.csr_matrix:
        """有向邻接矩阵（平行边合并）"""
        data = np.ones(self.num_edges)
        matrix = sparse.csr_matrix((data, (self._heads, self._tails)), shape=(self.num_nodes, self.num_nodes))
        matrix.data[:] = 1.0
        return matrix

    def is_connected(self) -> bool:
        """弱连通性"""
        count, _ = csgraph.connected_components(self.adjacency_matrix(), directed=True, connection="weak")
        return count == 1

    def nodes_reaching(self, target: int) -> np.ndarray:
        """能到达 target 的节点（在反向图上做广度优先搜索）"""
        order = csgraph.breadth_first_order(
            self.adjacency_matrix().T.tocsr(), target, directed=True, return_predecessors=False
        )
        return np.sort(order)

    def is_strongly_usable(self) -> bool:
        """每个目的地都能被所有节点到达"""
        return all(len(self.nodes_reaching(d)) == self.num_nodes for d in self.destinations)

    def traffic_classes(self) -> List[TrafficClass]:
        """按目的地划分的出行类别"""
        if self.class_resources:
            return [
                TrafficClass(destination=d, resources=list(block))
                for d, block in zip(self.destinations, self.class_resources)
            ]
        return [TrafficClass(destination=self.destinations[0], resources=list(self.resources))]

    def degree_counts(self) -> Dict[int, Tuple[int, int]]:
        """每个节点的 (入度, 出度)"""
        return {i: (len(self._in_adj[i]), len(self._out_adj[i])) for i in range(self.num_nodes)}


class UndirectedNetwork(BaseModel):
    """
    无向流网络
    每条边只存一次，规范方向 i < j；x_ij 表示从 j 流向 i 的流量，x_ij = -x_ji
    """
    num_nodes: int = Field(..., description="节点数 N")
    edges: List[Tuple[int, int]] = Field(..., description="无向边 (i, j)，i < j")
    resistance: List[float] = Field(..., description="控制参数 r_ij > 0")
    resources: List[float] = Field(..., description="节点资源 Λ_i（参考节点除外）")
    reference: int = Field(..., description="参考节点 𝒟")
    node_labels: List[str] = Field(default_factory=list, description="原始节点编号")

    _neighbors: List[List[Tuple[int, int]]] = PrivateAttr(default_factory=list)

    @validator("edges", each_item=True)
    def edge_must_be_canonical(cls, v):
        i, j = v
        if i == j:
            raise ValueError("不允许自环")
        return (min(i, j), max(i, j))

    @validator("resistance", each_item=True)
    def resistance_must_be_positive(cls, v):
        if v <= 0:
            raise ValueError("r_ij 必须为正")
        return v

    @root_validator(skip_on_failure=True)
    def check_consistency(cls, values):
        n = values["num_nodes"]
        edges = values["edges"]
        if len(set(edges)) != len(edges):
            raise ValueError("无向网络不允许重复边")
        if len(values["resistance"]) != len(edges):
            raise ValueError("r 向量长度必须等于边数")
        if len(values["resources"]) != n:
            raise ValueError("资源向量长度必须等于节点数")
        if not 0 <= values["reference"] < n:
            raise ValueError("参考节点不存在")
        for i, j in edges:
            if not (0 <= i < n and 0 <= j < n):
                raise ValueError(f"边 ({i}, {j}) 引用了不存在的节点")
        if not values.get("node_labels"):
            values["node_labels"] = [str(i) for i in range(n)]
        return values

    def __init__(self, **data):
        super().__init__(**data)
        self._neighbors = [[] for _ in range(self.num_nodes)]
        for k, (i, j) in enumerate(self.edges):
            self._neighbors[i].append((j, k))
            self._neighbors[j].append((i, k))

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def neighbors(self, i: int) -> List[Tuple[int, int]]:
        """(邻居, 边编号) 列表"""
        return self._neighbors[i]

    def degree(self, i: int) -> int:
        return len(self._neighbors[i])

    def slot(self, k: int, source: int) -> int:
        """边 k 上从 source 发出的消息槽位：2k 为 i→j，2k+1 为 j→i"""
        return 2 * k if self.edges[k][0] == source else 2 * k + 1

    def edge_index(self, i: int, j: int) -> int:
        for neighbor, k in self._neighbors[i]:
            if neighbor == j:
                return k
        raise KeyError(f"边 ({i}, {j}) 不存在")

    def signed_resources(self) -> np.ndarray:
        """参考节点带符号的资源向量：Λ_𝒟 = -Σ_{i≠𝒟} Λ_i"""
        lam = np.array(self.resources, dtype=float)
        lam[self.reference] = 0.0
        lam[self.reference] = -lam.sum()
        return lam

    def is_connected(self) -> bool:
        if self.num_edges == 0:
            return self.num_nodes == 1
        rows = [i for i, _ in self.edges]
        cols = [j for _, j in self.edges]
        matrix = sparse.csr_matrix((np.ones(self.num_edges), (rows, cols)), shape=(self.num_nodes, self.num_nodes))
        count, _ = csgraph.connected_components(matrix, directed=False)
        return count == 1

    def with_resistance(self, resistance: List[float]) -> "UndirectedNetwork":
        """返回替换 r 之后的新网络"""
        data = self.dict()
        data["resistance"] = list(resistance)
        return UndirectedNetwork(**data)
