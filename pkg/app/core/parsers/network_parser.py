"""
路网文件解析器

文本格式（UTF-8，LF 换行，# 或 ~ 开头的行为注释）：
    nodes N edges M destination D
    edge_id head tail t c          （M 行）
    lambda                         （可选）
    node value
节点编号可以是 0..N-1 或 1..N，构造后统一为连续的内部编号，原编号保存在 node_labels。
"""
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

from ...models.network_models import DirectedNetwork, UndirectedNetwork
from ..errors import NetworkValidationError
from ..logger import logger

PathLike = Union[str, Path]


def _content_lines(text: str) -> List[Tuple[int, List[str]]]:
    rows = []
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#") or line.startswith("~"):
            continue
        rows.append((number, line.rstrip(";").split()))
    return rows


def _number(token: str, line: int, kind=float):
    try:
        return kind(token)
    except ValueError:
        raise NetworkValidationError(f"第 {line} 行无法解析数值 '{token}'", {"line": line})


class NetworkParser:
    """路网文本格式的读写"""

    def parse_header(self, tokens: List[str], line: int) -> Dict[str, int]:
        if len(tokens) < 6 or tokens[0] != "nodes" or tokens[2] != "edges" or tokens[4] != "destination":
            raise NetworkValidationError(
                f"第 {line} 行头部格式应为 'nodes N edges M destination D'",
                {"line": line}
            )
        return {
            "nodes": _number(tokens[1], line, int),
            "edges": _number(tokens[3], line, int),
            "destination": _number(tokens[5], line, int)
        }

    def parse(self, text: str, source: str = "<string>") -> DirectedNetwork:
        """
        解析路网文本

        Args:
            text: 文件内容
            source: 来源（用于日志）

        Returns:
            有向路网，t_e 和 c_e 已填入

        Raises:
            NetworkValidationError: 格式错误（带行号）、悬空节点、重复边编号或空边表
        """
        rows = _content_lines(text)
        if not rows:
            raise NetworkValidationError("路网文件为空", {"source": source})

        header_line, header_tokens = rows[0]
        header = self.parse_header(header_tokens, header_line)
        n, m = header["nodes"], header["edges"]
        if n < 2:
            raise NetworkValidationError("节点数必须至少为 2", {"line": header_line})

        raw_edges: List[Tuple[int, int, int, float, float, int]] = []
        resource_rows: List[Tuple[int, int, float]] = []
        seen_ids = set()
        in_lambda = False
        for line, tokens in rows[1:]:
            if tokens[0].lower() == "lambda":
                in_lambda = True
                continue
            if in_lambda:
                if len(tokens) != 2:
                    raise NetworkValidationError(f"第 {line} 行资源格式应为 'node value'", {"line": line})
                resource_rows.append((line, _number(tokens[0], line, int), _number(tokens[1], line)))
                continue
            if len(tokens) != 5:
                raise NetworkValidationError(f"第 {line} 行边格式应为 'edge_id head tail t c'", {"line": line})
            edge_id = _number(tokens[0], line, int)
            if edge_id in seen_ids:
                raise NetworkValidationError(f"第 {line} 行边编号 {edge_id} 重复", {"line": line})
            seen_ids.add(edge_id)
            raw_edges.append((
                edge_id,
                _number(tokens[1], line, int),
                _number(tokens[2], line, int),
                _number(tokens[3], line),
                _number(tokens[4], line),
                line
            ))

        if not raw_edges:
            raise NetworkValidationError("边表为空", {"source": source})
        if len(raw_edges) != m:
            raise NetworkValidationError(
                f"头部声明 {m} 条边，实际读到 {len(raw_edges)} 条",
                {"declared": m, "found": len(raw_edges)}
            )

        referenced = [h for _, h, _, _, _, _ in raw_edges] + [t for _, _, t, _, _, _ in raw_edges]
        referenced += [header["destination"]] + [node for _, node, _ in resource_rows]
        base = 1 if (min(referenced) >= 1 and max(referenced) == n) else 0

        def internal(node: int, line: int) -> int:
            idx = node - base
            if not 0 <= idx < n:
                raise NetworkValidationError(f"第 {line} 行引用了不存在的节点 {node}", {"line": line, "node": node})
            return idx

        resources = [0.0] * n
        for line, node, value in resource_rows:
            resources[internal(node, line)] += value

        net = DirectedNetwork(
            num_nodes=n,
            edges=[(internal(h, line), internal(t, line)) for _, h, t, _, _, line in raw_edges],
            resources=resources,
            destinations=[internal(header["destination"], header_line)],
            free_time=[t for _, _, _, t, _, _ in raw_edges],
            capacity=[c for _, _, _, _, c, _ in raw_edges],
            node_labels=[str(i + base) for i in range(n)],
            edge_labels=[str(edge_id) for edge_id, _, _, _, _, _ in raw_edges]
        )
        logger.debug("路网文件已解析", source=source, nodes=n, edges=m)
        return net

    def parse_resources(self, text: str, net: DirectedNetwork) -> List[float]:
        """解析 'node value' 资源文件，节点使用路网的原始编号"""
        labels = {label: i for i, label in enumerate(net.node_labels)}
        resources = [0.0] * net.num_nodes
        for line, tokens in _content_lines(text):
            if len(tokens) != 2:
                raise NetworkValidationError(f"第 {line} 行资源格式应为 'node value'", {"line": line})
            if tokens[0] not in labels:
                raise NetworkValidationError(f"第 {line} 行引用了不存在的节点 {tokens[0]}", {"line": line})
            resources[labels[tokens[0]]] += _number(tokens[1], line)
        return resources

    def format(self, net: DirectedNetwork) -> str:
        lines = [f"nodes {net.num_nodes} edges {net.num_edges} destination {net.node_labels[net.destination]}"]
        free_time = net.free_time or [1.0] * net.num_edges
        capacity = net.capacity or [1.0] * net.num_edges
        for e, (head, tail) in enumerate(net.edges):
            lines.append(
                f"{net.edge_labels[e]} {net.node_labels[head]} {net.node_labels[tail]} "
                f"{free_time[e]!r} {capacity[e]!r}"
            )
        if any(net.resources):
            lines.append("lambda")
            for i, value in enumerate(net.resources):
                if value:
                    lines.append(f"{net.node_labels[i]} {value!r}")
        return "\n".join(lines) + "\n"

    def format_undirected(self, net: UndirectedNetwork) -> str:
        """无向网络：头部以参考节点代替目的地，边行为 'k i j r'"""
        lines = [f"nodes {net.num_nodes} edges {net.num_edges} destination {net.node_labels[net.reference]}"]
        for k, (i, j) in enumerate(net.edges):
            lines.append(f"{k} {net.node_labels[i]} {net.node_labels[j]} {net.resistance[k]!r} 1.0")
        lines.append("lambda")
        for i, value in enumerate(net.resources):
            if value and i != net.reference:
                lines.append(f"{net.node_labels[i]} {value!r}")
        return "\n".join(lines) + "\n"


network_parser = NetworkParser()


def load_tntp(path: PathLike, resource_path: Optional[PathLike] = None) -> DirectedNetwork:
    """
    读取路网文件，可选地合并资源文件（资源文件覆盖路网文件中的 lambda 块）
    """
    path = Path(path)
    if not path.exists():
        raise NetworkValidationError(f"路网文件不存在: {path}", {"path": str(path)})
    net = network_parser.parse(path.read_text(encoding="utf-8"), source=str(path))
    if resource_path is not None:
        net = load_resources(resource_path, net)
    return net


def load_resources(path: PathLike, net: DirectedNetwork) -> DirectedNetwork:
    path = Path(path)
    if not path.exists():
        raise NetworkValidationError(f"资源文件不存在: {path}", {"path": str(path)})
    data = net.dict()
    data["resources"] = network_parser.parse_resources(path.read_text(encoding="utf-8"), net)
    data["class_resources"] = []
    return DirectedNetwork(**data)


def write_network(net: Union[DirectedNetwork, UndirectedNetwork], path: PathLike) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if isinstance(net, UndirectedNetwork):
        text = network_parser.format_undirected(net)
    else:
        text = network_parser.format(net)
    path.write_text(text, encoding="utf-8", newline="\n")
    return path
