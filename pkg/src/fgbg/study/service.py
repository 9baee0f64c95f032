"""HTTP surface for the study service (FastAPI).

Endpoints:
    POST /sessions                    {condition, trial_count, seed}
    GET  /sessions/{id}/next          -> {trial_id, image_url, remaining}
    GET  /images/{trial_id}           -> PNG
    POST /sessions/{id}/responses     {trial_id, picks[], elapsed_ms?}
    GET  /sessions/{id}/report?net=x  -> StudyReport

Errors carry {code, message} bodies with a matching HTTP status.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Request
from fastapi.responses import FileResponse, JSONResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .core import StudyDataset, StudyError, StudyService

__all__ = ["create_app", "build_service"]


class CreateSessionBody(BaseModel):
    condition: str
    trial_count: int = Field(gt=0)
    seed: int = 0


class ResponseBody(BaseModel):
    trial_id: str
    picks: list[str]
    elapsed_ms: Optional[float] = None


def build_service(data_dir: Path, store_dir: Path,
                  nets_dir: Optional[Path] = None) -> StudyService:
    """Open fg/bg test manifests under ``data_dir`` and assemble the service."""
    data_dir = Path(data_dir)
    datasets = {}
    for condition in ("fg", "bg"):
        manifest = data_dir / condition / "test" / "manifest.jsonl"
        if manifest.exists():
            datasets[condition] = StudyDataset.open(condition, manifest)
    if not datasets:
        raise StudyError(
            "no_datasets", f"no fg/test or bg/test manifests under {data_dir}", status=404
        )
    return StudyService(datasets, store_dir=store_dir, nets_dir=nets_dir)


def create_app(service: StudyService, ui_dir: Optional[Path] = None) -> FastAPI:
    app = FastAPI(title="fgbg study service")

    @app.exception_handler(StudyError)
    async def study_error_handler(_: Request, exc: StudyError):
        return JSONResponse(
            status_code=exc.status, content={"code": exc.code, "message": str(exc)}
        )

    @app.post("/sessions")
    def create_session(body: CreateSessionBody):
        session = service.create_session(body.condition, body.trial_count, body.seed)
        return {
            "session_id": session.session_id,
            "condition": session.condition,
            "trial_count": len(session.trials),
            "roster": service.roster(session.condition),
        }

    @app.get("/sessions/{session_id}/next")
    def next_trial(session_id: str):
        trial = service.next_trial(session_id)
        session = service.get_session(session_id)
        if trial is None:
            return {"trial_id": None, "image_url": None, "remaining": 0}
        return {
            "trial_id": trial.trial_id,
            "image_url": f"/images/{trial.trial_id}",
            "remaining": session.remaining,
        }

    @app.get("/images/{trial_id}")
    def trial_image(trial_id: str):
        path = service.image_for_trial(trial_id)
        return FileResponse(path, media_type="image/png")

    @app.post("/sessions/{session_id}/responses")
    def submit(session_id: str, body: ResponseBody):
        service.submit_response(
            session_id, body.trial_id, body.picks, elapsed_ms=body.elapsed_ms
        )
        session = service.get_session(session_id)
        return {"accepted": True, "remaining": session.remaining}

    @app.get("/sessions/{session_id}/report")
    def report(session_id: str, net: Optional[str] = None):
        return service.report(session_id, net_id=net).to_dict()

    if ui_dir is not None and Path(ui_dir).exists():
        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")
    return app
