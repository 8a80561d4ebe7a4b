#api/app.py

import logging
from typing import Optional

import uvicorn
from fastapi import FastAPI

from memgauge import __version__
from memgauge.api.routes import router
from memgauge.config import get_settings

logger = logging.getLogger("memgauge")


def create_app(model=None, checkpoint: Optional[str] = None) -> FastAPI:
    """Oracle server exposing a reference model over HTTP"""
    app = FastAPI(
        title="memgauge oracle",
        description="Reference-model predictions for critical sample probing",
        version=__version__,
    )
    app.state.model = model
    app.state.checkpoint = checkpoint
    app.include_router(router)
    return app


def serve(model, checkpoint: Optional[str] = None, host: Optional[str] = None, port: Optional[int] = None):
    settings = get_settings()
    host = host or settings.HOST
    port = port or settings.PORT
    logger.info(f"Serving oracle for {checkpoint or 'in-memory model'} on {host}:{port}")
    uvicorn.run(create_app(model, checkpoint), host=host, port=port, log_level="warning")
