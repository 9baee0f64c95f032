"""Human-recognition study: session backend and HTTP service."""

from .core import StudyDataset, StudyError, StudyReport, StudyService, StudySession
from .service import build_service, create_app

__all__ = [
    "StudyDataset",
    "StudyError",
    "StudyReport",
    "StudyService",
    "StudySession",
    "build_service",
    "create_app",
]
