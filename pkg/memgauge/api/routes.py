#api/routes.py

from fastapi import APIRouter, HTTPException, Request

from memgauge.models.oracle import OracleRequest, OracleResponse
from memgauge.services import refmodel

router = APIRouter()


def _model(request: Request):
    model = getattr(request.app.state, "model", None)
    if model is None:
        raise HTTPException(status_code=503, detail="No model loaded")
    return model


@router.post("/predict", response_model=OracleResponse)
async def predict(body: OracleRequest, request: Request):
    """Predict the label of one token sequence"""
    model = _model(request)
    prediction = refmodel.predict(model, body.tokens, body.query_tokens)
    return OracleResponse(id=body.id, prediction=prediction.label, score=prediction.score)


@router.get("/health")
async def health_check(request: Request):
    """Server health check endpoint"""
    model = getattr(request.app.state, "model", None)
    return {
        "status": "healthy" if model is not None else "no-model",
        "classes": len(model.classes) if model is not None else 0,
        "parameters": model.parameter_count if model is not None else 0,
        "checkpoint": getattr(request.app.state, "checkpoint", None),
    }
