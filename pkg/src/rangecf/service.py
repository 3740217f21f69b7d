"""Stateless HTTP facade over the enumerator for interactive exploration.

Endpoints: GET /api/schema, POST /api/predict, POST /api/explain. Every
request carries its full constraint set, so identical requests always get
identical responses; the server keeps no session state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any, Sequence

import numpy as np
from fastapi import FastAPI, HTTPException, Request
from fastapi.exceptions import RequestValidationError
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .baselines import brute_force_minimal_subsets
from .enumerator import (
    ConstraintError,
    ConstraintSpec,
    enumerate_explanations,
)
from .features import FeatureSpace, partition_features
from .metrics import PercentileTable
from .models import Classifier

DEFAULT_REQUEST_BUDGET = 100_000


@dataclass
class ServiceBundle:
    """Immutable shared state for the service: one model, one schema."""

    classifier: Classifier
    space: FeatureSpace
    percentiles: PercentileTable | None = None
    budget: int = DEFAULT_REQUEST_BUDGET


class PredictRequest(BaseModel):
    instance: list[float]


class ExplainRequest(BaseModel):
    instance: list[float]
    constraints: dict[str, Any] | None = None
    method: str = "minsat"


def _validate_instance(values: Sequence[float], d: int) -> np.ndarray:
    if len(values) != d:
        raise HTTPException(status_code=400, detail=f"instance must have {d} values, got {len(values)}")
    arr = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise HTTPException(status_code=400, detail="instance values must be finite")
    return arr


def create_app(bundle: ServiceBundle | None = None) -> FastAPI:
    app = FastAPI(title="rangecf explain service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    app.state.bundle = bundle

    @app.exception_handler(RequestValidationError)
    async def validation_handler(request: Request, exc: RequestValidationError):
        return JSONResponse(status_code=400, content={"detail": exc.errors()})

    def require_bundle() -> ServiceBundle:
        if app.state.bundle is None:
            raise HTTPException(status_code=503, detail="model and schema not loaded")
        return app.state.bundle

    @app.get("/api/schema")
    def get_schema():
        b = require_bundle()
        features = []
        for i, entry in enumerate(b.space.to_json_obj()):
            entry["percentiles"] = (
                b.percentiles.summary(i) if b.percentiles is not None else None
            )
            features.append(entry)
        return {"features": features, "threshold": b.classifier.threshold}

    @app.post("/api/predict")
    def post_predict(req: PredictRequest):
        b = require_bundle()
        arr = _validate_instance(req.instance, b.space.d)
        probability = float(b.classifier.predict_proba(arr))
        partition = partition_features(arr, b.space)
        return {
            "probability": probability,
            "label": int(probability >= b.classifier.threshold),
            "partition": {
                "abnormal": [i + 1 for i in partition.abnormal],
                "normal": [i + 1 for i in partition.normal],
            },
        }

    @app.post("/api/explain")
    def post_explain(req: ExplainRequest):
        b = require_bundle()
        arr = _validate_instance(req.instance, b.space.d)
        try:
            spec = ConstraintSpec.from_json_obj(req.constraints or {})
        except (ConstraintError, ValueError, TypeError) as exc:
            raise HTTPException(status_code=400, detail=f"invalid constraints: {exc}")
        try:
            if req.method == "minsat":
                result = enumerate_explanations(arr, b.classifier, b.space, spec, budget=b.budget)
            elif req.method == "brute":
                result = brute_force_minimal_subsets(arr, b.classifier, b.space, spec)
            else:
                raise HTTPException(status_code=400, detail=f"unknown method {req.method!r}")
        except ConstraintError as exc:
            raise HTTPException(status_code=400, detail=f"invalid constraints: {exc}")
        explanations = []
        for e in result.explanations:
            changed = e.subset.sorted()
            explanations.append(
                {
                    "changed_indices": [i + 1 for i in changed],
                    "cfe": [float(v) for v in e.cfe],
                    "probability": e.probability,
                    "endpoints": {str(i + 1): float(e.cfe[i]) for i in changed},
                }
            )
        return {
            "status": result.status.value,
            "probability": float(b.classifier.predict_proba(arr)),
            "model_calls": result.model_calls,
            "explanations": explanations,
        }

    return app
