"""
错误定义模块
所有求解器异常都携带消息和元数据，命令行层据此映射退出码
"""
from typing import Dict, Any

from .constants import ExitCodes


class FlowNetError(Exception):
    """求解套件的基础异常"""

    exit_code = ExitCodes.RUNTIME_ERROR

    def __init__(self, message: str, metadata: Dict[str, Any] = None):
        self.message = message
        self.metadata = metadata or {}
        super().__init__(message)

    def to_dict(self) -> Dict[str, Any]:
        """转换为机器可读的错误记录"""
        return {
            "success": False,
            "error": self.message,
            "error_type": self.__class__.__name__,
            "metadata": self.metadata
        }


class ConfigError(FlowNetError):
    """参数或配置错误"""

    exit_code = ExitCodes.CONFIG_ERROR


class NetworkValidationError(FlowNetError):
    """网络结构不合法或文件格式错误"""

    exit_code = ExitCodes.CONFIG_ERROR


class GenerationError(FlowNetError):
    """随机网络生成在重试上限内失败"""


class TriviallySolvedError(FlowNetError):
    """预处理后网络退化为单个节点"""


class DomainError(FlowNetError):
    """代价函数的定义域错误（负流量）"""


class CavityInfeasibleError(FlowNetError):
    """空腔守恒约束在给定边流量下无解"""

    def __init__(self, message: str, residual_sign: int, metadata: Dict[str, Any] = None):
        self.residual_sign = residual_sign
        super().__init__(message, metadata)


class MessageConsistencyError(FlowNetError):
    """消息内部不一致（β^R < β^L、α < r 等）"""


class NonConvergenceError(FlowNetError):
    """求解器在预算内未收敛"""

    exit_code = ExitCodes.NON_CONVERGENCE


class OracleError(FlowNetError):
    """基准求解器拒绝给出认证结果"""


class OracleMismatchError(FlowNetError):
    """测试模式下消息传递结果与基准不一致"""

    exit_code = ExitCodes.ORACLE_MISMATCH
