"""
基准求解器基础类
集中式精确求解器的统一接口：校验参数、计时、记录日志，失败时返回错误报告而不抛出
"""
import json
import time
from abc import ABC, abstractmethod
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field

from ..core.errors import OracleError
from ..core.logger import logger


class OracleReport(BaseModel):
    """基准求解器执行结果"""

    success: bool = Field(True, description="是否给出认证结果")
    content: Any = Field(None, description="认证解，通常为 OracleSolution.dict()")
    error: Optional[str] = Field(None, description="拒绝认证的原因")
    metadata: Dict[str, Any] = Field(default_factory=dict, description="代价、迭代次数等摘要")
    elapsed_ms: Optional[float] = Field(None, description="执行时间（毫秒）")

    def to_dict(self) -> Dict[str, Any]:
        return self.dict()

    def to_json(self) -> str:
        # numpy 标量与数组按字符串兜底
        return json.dumps(self.dict(), ensure_ascii=False, default=str)

    @classmethod
    def success_result(cls, content: Any, metadata: Optional[Dict[str, Any]] = None) -> "OracleReport":
        return cls(content=content, metadata=metadata or {})

    @classmethod
    def error_result(cls, error: str, metadata: Optional[Dict[str, Any]] = None) -> "OracleReport":
        return cls(success=False, error=error, metadata=metadata or {})


def _summarize(parameters: Dict[str, Any]) -> Dict[str, Any]:
    """日志里只保留标量参数，网络与代价模型只记类型名"""
    summary = {}
    for key, value in parameters.items():
        if isinstance(value, (int, float, str, bool)) or value is None:
            summary[key] = value
        else:
            summary[key] = type(value).__name__
    return summary


class BaseOracle(ABC):
    """
    基准求解器基础类

    子类实现 oracle_id、display_name、description 与 _execute；
    直接调用的函数接口（convex_equilibrium 等）会抛出 OracleError，
    经由 execute 调用时错误被转换为 OracleReport.error_result。
    """

    @property
    @abstractmethod
    def oracle_id(self) -> str:
        """全局唯一 ID，也是命令行 --id 的取值"""

    @property
    @abstractmethod
    def display_name(self) -> str:
        ...

    @property
    @abstractmethod
    def description(self) -> str:
        ...

    @property
    def parameters(self) -> Dict[str, Any]:
        return {}

    @property
    def required_parameters(self) -> List[str]:
        return []

    def validate_parameters(self, parameters: Dict[str, Any]) -> Dict[str, Any]:
        missing = [name for name in self.required_parameters if parameters.get(name) is None]
        if missing:
            raise OracleError(f"缺少必需参数: {', '.join(missing)}", {"missing": missing})
        return parameters

    def execute(self, parameters: Dict[str, Any]) -> OracleReport:
        """
        执行基准求解器

        Args:
            parameters: network、cost 以及可选的 tolls、classes

        Returns:
            执行结果；不抛出异常
        """
        summary = _summarize(parameters)
        start = time.perf_counter()
        try:
            report = self._execute(self.validate_parameters(parameters))
        except OracleError as e:
            report = OracleReport.error_result(e.message, e.metadata)
        except Exception as e:
            logger.error(f"基准求解器 {self.oracle_id} 内部错误", exception=repr(e))
            report = OracleReport.error_result(f"基准求解器执行错误: {e}")

        report.elapsed_ms = (time.perf_counter() - start) * 1000
        logger.log_oracle_call(
            oracle_id=self.oracle_id,
            parameters=summary,
            result=report.metadata,
            success=report.success,
            error=report.error,
            execution_time=report.elapsed_ms
        )
        return report

    @abstractmethod
    def _execute(self, parameters: Dict[str, Any]) -> OracleReport:
        ...

    def to_dict(self) -> Dict[str, Any]:
        """注册表列表中的描述项"""
        return {
            "oracle_id": self.oracle_id,
            "name": self.display_name,
            "description": self.description,
            "parameters": self.parameters,
            "required_parameters": self.required_parameters
        }
