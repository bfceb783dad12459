"""
运行产物服务
所有输出文件的第一行是元数据头：# version=… seed=… config_digest=…
"""
import csv
import logging
from pathlib import Path
from typing import Any, Iterable, List, Sequence

from ..config import APP_VERSION
from ..models.result_models import RunSummary
from ..schemas.run_schemas import RunConfig


class ArtifactService:
    """CSV 轨迹、向量转储与多实现汇总"""

    def __init__(self, output_dir: str):
        self.output_dir = Path(output_dir)
        self.logger = logging.getLogger("ArtifactService")

    def header(self, config: RunConfig) -> str:
        return f"# version={APP_VERSION} seed={config.seed} config_digest={config.digest()}"

    def run_dir(self, config: RunConfig) -> Path:
        path = self.output_dir / config.subcommand / f"seed_{config.seed}"
        path.mkdir(parents=True, exist_ok=True)
        return path

    def write_csv(self, config: RunConfig, name: str, columns: Sequence[str], rows: Iterable[Sequence[Any]]) -> Path:
        """写入带元数据头的 CSV"""
        path = self.run_dir(config) / name
        with path.open("w", encoding="utf-8", newline="") as handle:
            handle.write(self.header(config) + "\n")
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(columns)
            for row in rows:
                writer.writerow([_format(value) for value in row])
        self.logger.debug(f"写入 {path}")
        return path

    def write_vector(self, config: RunConfig, name: str, lines: Iterable[Sequence[Any]]) -> Path:
        """空格分隔的向量转储，例如 `i j r`"""
        path = self.run_dir(config) / name
        with path.open("w", encoding="utf-8", newline="\n") as handle:
            handle.write(self.header(config) + "\n")
            for line in lines:
                handle.write(" ".join(_format(value) for value in line) + "\n")
        return path

    def write_config(self, config: RunConfig) -> Path:
        path = self.run_dir(config) / "config.json"
        path.write_text(config.canonical_json() + "\n", encoding="utf-8")
        return path

    def write_summary(self, config: RunConfig, summaries: List[RunSummary]) -> Path:
        """多实现汇总，按种子排序"""
        summaries = sorted(summaries, key=lambda s: s.seed)
        keys = sorted({key for summary in summaries for key in summary.metrics})
        path = self.output_dir / config.subcommand / "summary.csv"
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8", newline="") as handle:
            handle.write(f"# version={APP_VERSION} seed={config.seed} config_digest={config.digest()}\n")
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(["seed", "exit_code"] + keys)
            for summary in summaries:
                writer.writerow([summary.seed, summary.exit_code] + [_format(summary.metrics.get(key, "")) for key in keys])
        return path


def _format(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, float):
        return repr(value)
    return str(value)
