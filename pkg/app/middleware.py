"""
Request timing for the kernel and gap endpoints
"""
import logging
import time

from fastapi import Request
from starlette.middleware.base import BaseHTTPMiddleware

from app.config import settings

logger = logging.getLogger(__name__)


class LoggingMiddleware(BaseHTTPMiddleware):
    """
    Logs each request with its status and compute time, and reports the time in
    the X-Process-Time header. Requests slower than SLOW_REQUEST_SECONDS are logged
    as warnings together with their query string.
    """

    async def dispatch(self, request: Request, call_next):
        started = time.perf_counter()
        route = request.url.path
        logger.debug(f"Request: {request.method} {route}")

        response = await call_next(request)

        elapsed = time.perf_counter() - started
        response.headers["X-Process-Time"] = f"{elapsed:.3f}"
        if elapsed > settings.SLOW_REQUEST_SECONDS:
            logger.warning(
                f"Slow {request.method} {route}?{request.url.query}: {elapsed:.1f}s "
                f"(limit {settings.SLOW_REQUEST_SECONDS:.0f}s)"
            )
        else:
            logger.info(f"{request.method} {route} -> {response.status_code} in {elapsed:.3f}s")
        return response
