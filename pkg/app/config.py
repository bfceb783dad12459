"""
配置文件
"""
import os
from typing import Dict, Any
from dotenv import load_dotenv

# 加载环境变量
load_dotenv()

# 应用配置
APP_NAME = "flownet-mp"
APP_VERSION = "0.1.0"
DEBUG = os.getenv("DEBUG", "False").lower() == "true"

# 输出配置
OUTPUT_DIR = os.getenv("FLOWNET_OUTPUT_DIR", "results")

# 日志配置
LOG_LEVEL = os.getenv("LOG_LEVEL", "INFO")
LOG_FILE = os.getenv("LOG_FILE", "")

# 均衡求解配置
MP_LEARNING_RATE = float(os.getenv("MP_LEARNING_RATE", "0.1"))
MP_SWEEP_FACTOR = int(os.getenv("MP_SWEEP_FACTOR", "40"))  # 每轮扫描 40|E| 次局部更新
MP_CONVERGENCE_TOL = float(os.getenv("MP_CONVERGENCE_TOL", "1e-8"))
MP_LEAF_THRESHOLD = float(os.getenv("MP_LEAF_THRESHOLD", "1e-3"))
MP_CONFIRM_LEAVES = os.getenv("MP_CONFIRM_LEAVES", "True").lower() == "true"
MP_MAX_SWEEPS = int(os.getenv("MP_MAX_SWEEPS", "400"))
WARDROP_TOL = float(os.getenv("WARDROP_TOL", "1e-6"))

# 收费优化配置
TOLL_UPDATES_PER_SWEEP = int(os.getenv("TOLL_UPDATES_PER_SWEEP", "100"))
TOLL_WARMUP_SWEEPS = int(os.getenv("TOLL_WARMUP_SWEEPS", "5"))
TOLL_SWEEPS = int(os.getenv("TOLL_SWEEPS", "50"))

# 原子博弈配置
ATOMIC_WINDOW = int(os.getenv("ATOMIC_WINDOW", "1"))
ATOMIC_TOLL_STEP_FRACTION = float(os.getenv("ATOMIC_TOLL_STEP_FRACTION", "0.1"))
ATOMIC_TRIALS = int(os.getenv("ATOMIC_TRIALS", "5"))
ATOMIC_THRESHOLD_FRACTION = float(os.getenv("ATOMIC_THRESHOLD_FRACTION", "0.1"))
ATOMIC_MAX_SWEEPS = int(os.getenv("ATOMIC_MAX_SWEEPS", "60"))
ATOMIC_RESTARTS = int(os.getenv("ATOMIC_RESTARTS", "4"))

# 流量调控配置
FLOW_CONTROL_STEP = float(os.getenv("FLOW_CONTROL_STEP", "0.05"))
FLOW_CONTROL_R_MIN = float(os.getenv("FLOW_CONTROL_R_MIN", "0.9"))
FLOW_CONTROL_R_MAX = float(os.getenv("FLOW_CONTROL_R_MAX", "1.1"))
FLOW_CONTROL_MAX_SWEEPS = int(os.getenv("FLOW_CONTROL_MAX_SWEEPS", "200"))

# 基准求解器配置
ORACLE_MAX_ITERATIONS = int(os.getenv("ORACLE_MAX_ITERATIONS", "2000"))
ORACLE_TOL = float(os.getenv("ORACLE_TOL", "1e-9"))


# 获取完整配置
def get_config() -> Dict[str, Any]:
    """获取完整配置"""
    return {
        "app": {
            "name": APP_NAME,
            "version": APP_VERSION,
            "debug": DEBUG
        },
        "output": {
            "dir": OUTPUT_DIR
        },
        "log": {
            "level": LOG_LEVEL,
            "file": LOG_FILE
        },
        "equilibrium": {
            "learning_rate": MP_LEARNING_RATE,
            "sweep_factor": MP_SWEEP_FACTOR,
            "convergence_tol": MP_CONVERGENCE_TOL,
            "leaf_threshold": MP_LEAF_THRESHOLD,
            "confirm_leaves": MP_CONFIRM_LEAVES,
            "max_sweeps": MP_MAX_SWEEPS,
            "wardrop_tol": WARDROP_TOL
        },
        "toll": {
            "updates_per_sweep": TOLL_UPDATES_PER_SWEEP,
            "warmup_sweeps": TOLL_WARMUP_SWEEPS,
            "sweeps": TOLL_SWEEPS
        },
        "atomic": {
            "window": ATOMIC_WINDOW,
            "toll_step_fraction": ATOMIC_TOLL_STEP_FRACTION,
            "trials": ATOMIC_TRIALS,
            "threshold_fraction": ATOMIC_THRESHOLD_FRACTION,
            "max_sweeps": ATOMIC_MAX_SWEEPS,
            "restarts": ATOMIC_RESTARTS
        },
        "flow_control": {
            "step": FLOW_CONTROL_STEP,
            "r_min": FLOW_CONTROL_R_MIN,
            "r_max": FLOW_CONTROL_R_MAX,
            "max_sweeps": FLOW_CONTROL_MAX_SWEEPS
        },
        "oracle": {
            "max_iterations": ORACLE_MAX_ITERATIONS,
            "tol": ORACLE_TOL
        }
    }


# 创建settings对象，供其他模块导入
class Settings:
    """配置设置类"""
    def __init__(self):
        # 应用配置
        self.APP_NAME = APP_NAME
        self.APP_VERSION = APP_VERSION
        self.DEBUG = DEBUG

        # 输出配置
        self.OUTPUT_DIR = OUTPUT_DIR

        # 日志配置
        self.LOG_LEVEL = LOG_LEVEL
        self.LOG_FILE = LOG_FILE

        # 均衡求解配置
        self.MP_LEARNING_RATE = MP_LEARNING_RATE
        self.MP_SWEEP_FACTOR = MP_SWEEP_FACTOR
        self.MP_CONVERGENCE_TOL = MP_CONVERGENCE_TOL
        self.MP_LEAF_THRESHOLD = MP_LEAF_THRESHOLD
        self.MP_CONFIRM_LEAVES = MP_CONFIRM_LEAVES
        self.MP_MAX_SWEEPS = MP_MAX_SWEEPS
        self.WARDROP_TOL = WARDROP_TOL

        # 收费优化配置
        self.TOLL_UPDATES_PER_SWEEP = TOLL_UPDATES_PER_SWEEP
        self.TOLL_WARMUP_SWEEPS = TOLL_WARMUP_SWEEPS
        self.TOLL_SWEEPS = TOLL_SWEEPS

        # 原子博弈配置
        self.ATOMIC_WINDOW = ATOMIC_WINDOW
        self.ATOMIC_TOLL_STEP_FRACTION = ATOMIC_TOLL_STEP_FRACTION
        self.ATOMIC_TRIALS = ATOMIC_TRIALS
        self.ATOMIC_THRESHOLD_FRACTION = ATOMIC_THRESHOLD_FRACTION
        self.ATOMIC_MAX_SWEEPS = ATOMIC_MAX_SWEEPS
        self.ATOMIC_RESTARTS = ATOMIC_RESTARTS

        # 流量调控配置
        self.FLOW_CONTROL_STEP = FLOW_CONTROL_STEP
        self.FLOW_CONTROL_R_MIN = FLOW_CONTROL_R_MIN
        self.FLOW_CONTROL_R_MAX = FLOW_CONTROL_R_MAX
        self.FLOW_CONTROL_MAX_SWEEPS = FLOW_CONTROL_MAX_SWEEPS

        # 基准求解器配置
        self.ORACLE_MAX_ITERATIONS = ORACLE_MAX_ITERATIONS
        self.ORACLE_TOL = ORACLE_TOL


# 创建全局settings实例
settings = Settings()
