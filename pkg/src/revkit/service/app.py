"""HTTP review service over a workspace.

Thin JSON layer over the Engine: ingest contracts, read the flag queue,
run optimization, and record reviewer decisions. Auth is a single bearer
token from REVKIT_API_TOKEN; when unset the service is open (PoC posture).
"""

from __future__ import annotations

from pathlib import Path

from fastapi import Depends, FastAPI, Header, HTTPException
from pydantic import BaseModel, Field

from ..corpus import contract_from_dict
from ..errors import MalformedDocument, RevkitError, ValidationError
from .config import api_token, load_config
from .engine import DecisionConflict, Engine, UnknownId
from .workspace import Verdict, Workspace


class ProvisionIn(BaseModel):
    number: str
    title: str = ""
    text: str
    template_text: str | None = None


class ContractIn(BaseModel):
    id: str
    kind: str = "Other"
    provisions: list[ProvisionIn] = Field(min_length=1)


class OptimizeIn(BaseModel):
    best_of_n: int | None = None
    n_demonstrations: int | None = None
    seed: int | None = None


class DecisionIn(BaseModel):
    verdict: str
    reviewer: str = "anonymous"
    candidate_index: int | None = None
    final_text: str = ""
    force: bool = False


def create_app(
    workspace_root: str | Path,
    config: dict | None = None,
    token: str | None = None,
) -> FastAPI:
    workspace = Workspace(Path(workspace_root))
    workspace.require_exists()
    if config is None:
        config = load_config(workspace.config_path)
    engine = Engine(workspace, config)
    required_token = token if token is not None else api_token()

    app = FastAPI(title="revkit review service")
    app.state.engine = engine

    def check_auth(authorization: str | None = Header(default=None)) -> None:
        if required_token is None:
            return
        if authorization != f"Bearer {required_token}":
            raise HTTPException(status_code=401, detail="missing or invalid bearer token")

    guarded = Depends(check_auth)

    @app.get("/health")
    def health() -> dict:
        return {
            "status": "ok",
            "model_version": workspace.current_model_version(),
        }

    @app.post("/contracts", dependencies=[guarded])
    def ingest(body: ContractIn) -> dict:
        try:
            contract = contract_from_dict(body.model_dump())
            flags = engine.ingest_contract(contract)
        except (MalformedDocument, ValidationError) as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        except RevkitError as exc:
            raise HTTPException(status_code=500, detail=str(exc)) from exc
        return {"contract_id": contract.id, "flags": [f.to_dict() for f in flags]}

    @app.get("/contracts/{contract_id}/flags", dependencies=[guarded])
    def flags(contract_id: str) -> dict:
        try:
            records = engine.flags_for(contract_id)
        except UnknownId as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        return {"contract_id": contract_id, "flags": [f.to_dict() for f in records]}

    @app.get("/revisions/{revision_id}", dependencies=[guarded])
    def revision_detail(revision_id: str) -> dict:
        try:
            return engine.queue_item(revision_id)
        except UnknownId as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc

    @app.post("/revisions/{revision_id}/optimize", dependencies=[guarded])
    def optimize(revision_id: str, body: OptimizeIn | None = None) -> dict:
        overrides = {
            k: v
            for k, v in (body.model_dump() if body else {}).items()
            if v is not None
        }
        try:
            return engine.optimize_revision(revision_id, **overrides)
        except UnknownId as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        except ValidationError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        except RevkitError as exc:
            raise HTTPException(status_code=500, detail=str(exc)) from exc

    @app.post("/revisions/{revision_id}/decision", dependencies=[guarded])
    def decide(revision_id: str, body: DecisionIn) -> dict:
        try:
            verdict = Verdict(body.verdict)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=f"unknown verdict {body.verdict!r}") from exc
        try:
            return engine.decide(
                revision_id,
                verdict,
                body.reviewer,
                candidate_index=body.candidate_index,
                final_text=body.final_text,
                force=body.force,
            )
        except UnknownId as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        except DecisionConflict as exc:
            raise HTTPException(status_code=409, detail=str(exc)) from exc
        except ValidationError as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc

    @app.post("/retrain", dependencies=[guarded])
    def retrain(min_decisions: int | None = None) -> dict:
        try:
            return engine.retrain_snapshot(min_decisions=min_decisions)
        except RevkitError as exc:
            raise HTTPException(status_code=500, detail=str(exc)) from exc

    return app
