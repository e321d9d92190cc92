"""
Edge Kernel Lab API
Kernel evaluation and Fredholm gap probabilities over HTTP
"""
import logging
from contextlib import asynccontextmanager

from fastapi import FastAPI, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse

from app.config import settings, setup_logging
from app.exceptions import LabError
from app.middleware import LoggingMiddleware
from app.routers import gaps, kernels
from app.services.percolation_service import get_percolation_service

setup_logging()
logger = logging.getLogger(__name__)


@asynccontextmanager
async def lifespan(app: FastAPI):
    """Handle application startup and shutdown"""
    logger.info(f"Starting {settings.APP_NAME} {settings.APP_VERSION} with {settings.WORKERS} workers")

    try:
        get_percolation_service().warm_up()
        app.state.dp_ready = True
        logger.info("Last-passage dynamic programme compiled")
    except Exception as e:
        logger.error(f"Warm-up of the last-passage kernel failed: {e}")
        logger.warning("Continuing without warm-up - the first sampling request will compile it")
        app.state.dp_ready = False

    yield

    logger.info("Shutting down...")


app = FastAPI(
    title="Edge Kernel Lab API",
    description="Extended Airy kernels, finite-p kernels and Fredholm determinants",
    version=settings.APP_VERSION,
    lifespan=lifespan
)

app.add_middleware(LoggingMiddleware)
app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=False,
    allow_methods=["GET", "POST", "OPTIONS"],
    allow_headers=["*"],
)

app.include_router(kernels.router, prefix="/api/kernel", tags=["kernels"])
app.include_router(gaps.router, prefix="/api/gap", tags=["gaps"])


@app.get("/")
async def root():
    return {
        "message": "Edge Kernel Lab API",
        "version": settings.APP_VERSION,
        "status": "operational",
        "docs": "/docs"
    }


@app.get("/api/health")
async def health_check():
    """Report service status"""
    return {
        "status": "healthy",
        "services": {
            "kernels": "operational",
            "fredholm": "operational",
            "sampling": "operational" if getattr(app.state, "dp_ready", False) else "cold"
        }
    }


@app.exception_handler(LabError)
async def lab_error_handler(request: Request, exc: LabError):
    """Input, geometry and numerical failures are reported to the caller"""
    logger.warning(f"{type(exc).__name__} on {request.url.path}: {exc.message}")
    return JSONResponse(status_code=422, content=exc.to_dict())


@app.exception_handler(Exception)
async def global_exception_handler(request, exc):
    """Handle unexpected errors gracefully"""
    logger.error(f"Unhandled exception: {exc}", exc_info=True)
    return JSONResponse(
        status_code=500,
        content={
            "error": "Internal server error",
            "message": "An unexpected error occurred.",
            "detail": str(exc) if settings.DEBUG else None
        }
    )


if __name__ == "__main__":
    import uvicorn

    uvicorn.run(
        "main:app",
        host=settings.HOST,
        port=settings.PORT,
        reload=settings.DEBUG,
        log_level=settings.LOG_LEVEL.lower()
    )
