# nlslab/main.py
import logging
from typing import get_args

from fastapi import FastAPI, Path, Query, Request, status
from fastapi.responses import JSONResponse

from nlslab import __version__
from nlslab.errors import NlsLabError
from nlslab.middleware import LoggingMiddleware
from nlslab.models import ExperimentConfig, GridParams, GroundStateCertificate, RunManifest, Scenario
from nlslab.service import ExperimentService

logger = logging.getLogger("nlslab.api")

app = FastAPI(title="NLS Lab", version=__version__)

# Add logging middleware
app.add_middleware(LoggingMiddleware)

# Initialize service
experiment_service = ExperimentService()


@app.get("/")
def read_root():
    return {
        "message": "NLS Lab is running",
        "scenarios": list(get_args(Scenario)),
        "version": __version__,
    }


@app.post("/api/runs", response_model=RunManifest)
def create_run(config: ExperimentConfig):
    """Run a scenario synchronously and return its manifest"""
    return experiment_service.run(config)


@app.get("/api/ground-state/{d}", response_model=GroundStateCertificate)
def get_ground_state(d: int = Path(..., ge=1), M: int = Query(512, ge=16), rmax: float = Query(30.0, gt=0)):
    """Certificate of the ground state on the requested grid (computed once per grid)"""
    return experiment_service.ground_state_certificate(GridParams(d=d, M=M, rmax=rmax))


@app.post("/api/operators/verify", response_model=RunManifest)
def verify_operators(grid: GridParams):
    """Operator-suite probes on the given grid"""
    return experiment_service.run(ExperimentConfig(scenario="operator-suite", grid=grid))


@app.exception_handler(NlsLabError)
async def lab_exception_handler(request: Request, exc: NlsLabError):
    logger.error(f"{exc.title}: {exc.status_code} - {exc.message}")
    return JSONResponse(
        status_code=exc.status_code,
        content={
            **exc.detail,
            "status_code": exc.status_code,
            "path": str(request.url.path),
        },
    )


@app.exception_handler(Exception)
async def general_exception_handler(request: Request, exc: Exception):
    """Global exception handler for unexpected errors"""
    logger.exception(f"Unhandled exception: {str(exc)}")
    return JSONResponse(
        status_code=status.HTTP_500_INTERNAL_SERVER_ERROR,
        content={
            "error": "Internal Server Error",
            "message": "An unexpected error occurred",
            "status_code": 500,
            "path": str(request.url.path),
        },
    )
