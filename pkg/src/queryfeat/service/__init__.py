"""HTTP workbench service: FastAPI app over the core pipeline."""

from .app import create_app, run_server
from .state import Job, JobStore, ModelRecord, SessionState

__all__ = ["Job", "JobStore", "ModelRecord", "SessionState", "create_app", "run_server"]
