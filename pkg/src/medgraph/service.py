"""HTTP surface over one engine instance.

Every mutation is a thin wrapper over the corresponding library call;
responses carry the same numbers the library produced. Domain errors map to
structured bodies {"error": code, "detail": message} with 404 for missing
elements and 422 for everything else. The graph snapshot is persisted on
shutdown via the engine's write-then-rename save.
"""

from __future__ import annotations

from contextlib import asynccontextmanager

from fastapi import FastAPI, Query, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field

from .engine import Engine
from .errors import (
    DiseaseNotFound,
    EdgeNotFound,
    ElementNotFound,
    MedGraphError,
    UnknownNode,
)
from .extraction import Document
from .feedback import FeedbackEvent, LikertScores
from .reasoning import Budget, PatientProfile, UtilityWeights

_NOT_FOUND = (DiseaseNotFound, EdgeNotFound, ElementNotFound, UnknownNode)


class DocumentBody(BaseModel):
    doc_id: str
    source: str = "clinical_report"
    context_tag: str = ""
    text: str


class IngestRequest(BaseModel):
    documents: list[DocumentBody]


class DiagnoseRequest(BaseModel):
    symptoms: list[str]
    epsilon: float | None = None


class RecommendRequest(BaseModel):
    symptoms: list[str]
    profile: dict[str, float] = Field(default_factory=dict)
    c_max: float | None = None
    eta: float = 0.1
    max_iter: int = 50
    w1: float | None = None
    w2: float | None = None


class LikertBody(BaseModel):
    accuracy: int = Field(ge=1, le=5)
    reliability: int = Field(ge=1, le=5)
    usability: int = Field(ge=1, le=5)


class FeedbackRequest(BaseModel):
    case_id: str
    diagnosis_correct: bool
    treatment_accepted: bool
    likert: LikertBody | None = None
    corrected_diagnosis: str | None = None
    clinician_id: str = "unknown"


def create_app(engine: Engine, persist_on_shutdown: bool = False) -> FastAPI:
    @asynccontextmanager
    async def lifespan(app: FastAPI):
        yield
        if persist_on_shutdown:
            engine.save()

    app = FastAPI(title="medgraph", lifespan=lifespan)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],  # no auth by design; deployment concern
        allow_methods=["*"],
        allow_headers=["*"],
    )

    @app.exception_handler(MedGraphError)
    async def domain_error_handler(request: Request, exc: MedGraphError):
        status = 404 if isinstance(exc, _NOT_FOUND) else 422
        return JSONResponse(
            status_code=status, content={"error": exc.code, "detail": str(exc)}
        )

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.get("/graph/stats")
    def graph_stats():
        return engine.stats()

    @app.get("/params")
    def get_params():
        return {"params": engine.params.to_dict(), "audit": engine.audit_log}

    @app.post("/ingest")
    def ingest(body: IngestRequest):
        corpus = [
            Document(
                doc_id=d.doc_id,
                source=d.source,
                text=d.text,
                context_tag=d.context_tag,
            )
            for d in body.documents
        ]
        return engine.ingest(corpus).to_dict()

    @app.post("/diagnose")
    def diagnose(body: DiagnoseRequest):
        posterior = engine.diagnose_case(body.symptoms, body.epsilon)
        return {
            "entries": [
                {"disease": d, "probability": p} for d, p in posterior.entries
            ],
            "epsilon": posterior.epsilon,
        }

    @app.get("/explain")
    def explain(disease: str = Query(...), symptoms: str = Query(...)):
        ids = [s for s in symptoms.split(",") if s]
        paths = engine.explain_case(disease, ids)
        return {
            "disease": disease,
            "paths": [
                {
                    "symptom": p.symptom,
                    "edge_type": p.edge_type.value if p.edge_type else None,
                    "weight": p.weight,
                    "floored": p.floored,
                }
                for p in paths
            ],
        }

    @app.post("/recommend")
    def recommend(body: RecommendRequest):
        params = engine.params
        weights = UtilityWeights(
            body.w1 if body.w1 is not None else params.w1,
            body.w2 if body.w2 is not None else params.w2,
        )
        budget = (
            Budget(c_max=body.c_max, eta=body.eta, max_iter=body.max_iter)
            if body.c_max is not None
            else None
        )
        posterior, plan = engine.recommend_case(
            body.symptoms,
            profile=PatientProfile(features=body.profile),
            budget=budget,
            weights=weights,
        )
        return {
            "posterior": [
                {"disease": d, "probability": p} for d, p in posterior.entries
            ],
            "plan": plan.to_dict(),
            "constrained": budget is not None,
        }

    @app.post("/feedback")
    def feedback(body: FeedbackRequest):
        event = FeedbackEvent(
            case_id=body.case_id,
            diagnosis_correct=body.diagnosis_correct,
            treatment_accepted=body.treatment_accepted,
            likert=(
                LikertScores(
                    accuracy=body.likert.accuracy,
                    reliability=body.likert.reliability,
                    usability=body.likert.usability,
                )
                if body.likert
                else None
            ),
            corrected_diagnosis=body.corrected_diagnosis,
            clinician_id=body.clinician_id,
        )
        audit = engine.submit_feedback(event)
        return {"accepted": True, "params_updated": True, "audit": audit}

    @app.post("/params/update")
    def params_update():
        return engine.retune(seed=engine.cfg.seed)

    return app


def serve(engine: Engine, host: str = "127.0.0.1", port: int = 8000) -> None:
    """Run the service until interrupted; persists the graph on shutdown."""
    import uvicorn

    app = create_app(engine, persist_on_shutdown=True)
    uvicorn.run(app, host=host, port=port, log_level="warning")
