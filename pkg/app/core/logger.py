"""
日志模块
求解器、基准求解器和命令行运行共用的结构化日志
"""
import json
import logging
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, List, Optional

from ..config import get_config

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


def _parse_level(name: str) -> int:
    level = logging.getLevelName(str(name).upper())
    return level if isinstance(level, int) else logging.INFO


class Logger:
    """
    日志记录器

    消息正文之后附加一个 JSON 对象，包含调用方给出的上下文字段与 UTC 时间戳。
    处理器挂在根记录器上，求解器类自己的 logging.getLogger(...) 也走同一出口。
    """

    def __init__(self, name: str = "FlowNet"):
        options = get_config()["log"]
        self.level = _parse_level(options.get("level", "INFO"))
        self.file = options.get("file", "")
        self.handlers: List[logging.Handler] = []
        self._install_handlers()
        self.logger = logging.getLogger(name)

    def _install_handlers(self):
        formatter = logging.Formatter(LOG_FORMAT)
        # 控制台输出到 stderr，stdout 只给结果
        self.handlers.append(logging.StreamHandler())
        if self.file:
            Path(self.file).parent.mkdir(parents=True, exist_ok=True)
            self.handlers.append(logging.FileHandler(self.file, encoding="utf-8"))

        root = logging.getLogger()
        root.setLevel(self.level)
        for handler in self.handlers:
            handler.setLevel(self.level)
            handler.setFormatter(formatter)
            root.addHandler(handler)

    def set_level(self, name: str):
        """运行时调整级别（--log-level）"""
        self.level = _parse_level(name)
        logging.getLogger().setLevel(self.level)
        for handler in self.handlers:
            handler.setLevel(self.level)

    def debug(self, message: str, **context):
        self._emit(logging.DEBUG, message, context)

    def info(self, message: str, **context):
        self._emit(logging.INFO, message, context)

    def warning(self, message: str, **context):
        self._emit(logging.WARNING, message, context)

    def error(self, message: str, **context):
        self._emit(logging.ERROR, message, context)

    def critical(self, message: str, **context):
        self._emit(logging.CRITICAL, message, context)

    def _emit(self, level: int, message: str, context: Dict[str, Any]):
        if not self.logger.isEnabledFor(level):
            return
        context["timestamp"] = datetime.utcnow().isoformat()
        self.logger.log(level, f"{message} {json.dumps(context, ensure_ascii=False, default=str)}")

    # 领域事件

    def log_solver_event(
        self,
        solver: str,
        event_type: str,
        sweep: Optional[int] = None,
        data: Optional[Dict[str, Any]] = None,
        level: int = logging.INFO
    ):
        """
        求解器事件，例如 converged、not_converged、toll_recorded、leaf_activated

        Args:
            solver: 求解器名称
            event_type: 事件类型
            sweep: 扫描轮次
            data: 事件数据
            level: 日志级别
        """
        self._emit(level, f"[{solver}] {event_type}", {"sweep": sweep, "data": data or {}})

    def log_sweep(
        self,
        solver: str,
        sweep: int,
        change: float,
        flow_error: Optional[float] = None,
        extra: Optional[Dict[str, Any]] = None
    ):
        """单轮扫描的收敛轨迹，调试级别"""
        self._emit(logging.DEBUG, f"[{solver}] sweep {sweep}", {
            "change": change,
            "flow_error": flow_error,
            **(extra or {})
        })

    def log_oracle_call(
        self,
        oracle_id: str,
        parameters: Optional[Dict[str, Any]] = None,
        result: Optional[Dict[str, Any]] = None,
        success: bool = True,
        error: Optional[str] = None,
        execution_time: Optional[float] = None
    ):
        """
        基准求解器调用；失败记为 ERROR

        Args:
            parameters: 参数摘要，不含网络本体
            execution_time: 毫秒
        """
        status = "certified" if success else "refused"
        self._emit(logging.INFO if success else logging.ERROR, f"[oracle:{oracle_id}] {status}", {
            "parameters": parameters or {},
            "result": result or {},
            "error": error,
            "execution_time": execution_time
        })

    def log_run(
        self,
        subcommand: str,
        seed: int,
        digest: str,
        exit_code: int,
        elapsed: float,
        error: Optional[str] = None
    ):
        """一次实现的结束记录，非零退出码记为 ERROR"""
        self._emit(logging.INFO if exit_code == 0 else logging.ERROR, f"[run:{subcommand}] exit {exit_code}", {
            "seed": seed,
            "config_digest": digest,
            "elapsed": round(elapsed, 3),
            "error": error
        })


# 全局日志记录器实例
logger = Logger()
