"""
Middleware components for the node's HTTP binding.

Request size and media-type checks for frame traffic, consistent error
bodies, and structured request logging.
"""

import time
import logging

from fastapi import Request
from fastapi.responses import JSONResponse
from starlette.middleware.base import BaseHTTPMiddleware

from src.utils.logging_config import log_api_request


logger = logging.getLogger(__name__)

FRAME_MEDIA_TYPE = "application/octet-stream"
JSON_MEDIA_TYPE = "application/json"


class RequestValidationMiddleware(BaseHTTPMiddleware):
    """
    Rejects oversized bodies and wrong content types before routing.

    ``/frames`` carries binary frames; the admin endpoints take JSON.
    """

    def __init__(self, app, max_request_size: int):
        super().__init__(app)
        self.max_request_size = max_request_size

    async def dispatch(self, request: Request, call_next):
        content_length = request.headers.get("content-length")
        if content_length:
            try:
                size = int(content_length)
            except ValueError:
                logger.warning(f"Invalid Content-Length header: {content_length}")
                return _error(400, "Invalid Content-Length header")
            if size > self.max_request_size:
                logger.warning(f"Request too large: {size} bytes")
                return _error(413, f"Request too large. Maximum size is {self.max_request_size} bytes.")

        if request.method == "POST":
            content_type = request.headers.get("content-type", "")
            expected = FRAME_MEDIA_TYPE if request.url.path == "/frames" else JSON_MEDIA_TYPE
            needs_body = request.url.path == "/frames" or request.url.path == "/admin/adversary"
            if needs_body and not content_type.startswith(expected):
                logger.warning(f"Invalid content type: {content_type} for POST {request.url.path}")
                return _error(415, f"Unsupported Media Type. Content-Type must be {expected}")

        return await call_next(request)


class ErrorHandlingMiddleware(BaseHTTPMiddleware):
    """Turns anything unhandled into a generic 500 JSON body."""

    async def dispatch(self, request: Request, call_next):
        try:
            return await call_next(request)
        except Exception as exc:
            logger.error(
                f"Unhandled exception in {request.method} {request.url.path}: {exc}",
                exc_info=True
            )
            return JSONResponse(
                status_code=500,
                content={
                    "error": "Internal Server Error",
                    "message": "An unexpected error occurred",
                    "path": str(request.url.path)
                }
            )


class LoggingMiddleware(BaseHTTPMiddleware):
    """Request/response logging with the serving node's name."""

    def __init__(self, app, node_name: str):
        super().__init__(app)
        self.node_name = node_name

    async def dispatch(self, request: Request, call_next):
        start_time = time.time()
        response = await call_next(request)
        process_time = time.time() - start_time
        log_api_request(request.method, request.url.path, response.status_code, process_time, self.node_name)
        response.headers["X-Process-Time"] = str(process_time)
        return response


def _error(status_code: int, message: str) -> JSONResponse:
    return JSONResponse(
        status_code=status_code,
        content={"error": "HTTP Error", "message": message, "status_code": status_code},
    )
