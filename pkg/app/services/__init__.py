"""
服务模块
"""
from .artifact_service import ArtifactService
from .experiment_service import ExperimentService, execute
