# nlslab/middleware.py
import logging
import time
from contextlib import contextmanager

from fastapi import Request
from starlette.middleware.base import BaseHTTPMiddleware

from nlslab import config

# Configure logging
logging.basicConfig(
    level=getattr(logging, config.LOG_LEVEL.upper(), logging.INFO),
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
)
logger = logging.getLogger("nlslab")


class LoggingMiddleware(BaseHTTPMiddleware):
    """Log every request with its status and processing time"""

    async def dispatch(self, request: Request, call_next):
        start_time = time.time()
        logger.info(
            f"Request: {request.method} {request.url.path} | "
            f"Client: {request.client.host if request.client else 'unknown'}"
        )
        try:
            response = await call_next(request)
        except Exception as e:
            process_time = time.time() - start_time
            logger.error(
                f"Exception: {request.method} {request.url.path} | Error: {str(e)} | "
                f"Process time: {process_time:.3f}s"
            )
            raise

        process_time = time.time() - start_time
        logger.info(
            f"Response: {request.method} {request.url.path} | Status: {response.status_code} | "
            f"Process time: {process_time:.3f}s"
        )
        return response


@contextmanager
def log_timing(label: str, log: logging.Logger = logger):
    """Same start / finish / process-time lines as the HTTP middleware, for scenario runs"""
    start_time = time.time()
    log.info(f"Start: {label}")
    try:
        yield
    except Exception as e:
        log.error(f"Failed: {label} | Error: {str(e)} | Process time: {time.time() - start_time:.3f}s")
        raise
    log.info(f"Finish: {label} | Process time: {time.time() - start_time:.3f}s")
