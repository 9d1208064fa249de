"""
FastAPI binding of one bank node.

Clients post length-prefixed canonical ``ClientMessage`` frames to
``/frames``; a 204 reply means the operator dropped the message. The admin
endpoints let a harness or an operator console steer the node: set the
adversary policy, run a tick, and read a state summary.
"""

import logging
from typing import Any, Dict, Optional

from fastapi import FastAPI, HTTPException, Request, Response
from fastapi.responses import JSONResponse
from pydantic import BaseModel, Field, ValidationError

from src.agents.bank_node import BankNode, NodeError
from src.api.middleware import (
    FRAME_MEDIA_TYPE,
    ErrorHandlingMiddleware,
    LoggingMiddleware,
    RequestValidationMiddleware,
)
from src.enclave import EnclaveError
from src.models.node import AdversaryPolicy
from src.utils.config import Settings, get_config


logger = logging.getLogger(__name__)

TICK_KINDS = ("batch", "sync", "relay", "block")


class HealthResponse(BaseModel):
    """Response model for health check."""
    status: str = Field(description="Service status")
    version: str = Field(description="API version")
    instance_id: Optional[str] = Field(default=None, description="IPSC address of the served instance")
    ledger_version: int = Field(description="Latest ledger version held by the operator")
    virtual_time: int = Field(description="Current virtual clock value")


class TickResponse(BaseModel):
    """Result of one admin tick."""
    kind: str
    result: Any = Field(default=None, description="Tick-specific result (header id, tx hashes, indices)")
    virtual_time: int


def create_app(node: BankNode, settings: Optional[Settings] = None) -> FastAPI:
    """Build the HTTP app serving ``node``."""
    config = settings or get_config()
    app = FastAPI(
        title=f"{config.app_name} node API",
        description="Frame endpoint and admin controls of one CBDC instance operator.",
        version=config.app_version,
        openapi_tags=[
            {"name": "frames", "description": "Client message frames"},
            {"name": "admin", "description": "Harness and operator controls"},
            {"name": "health", "description": "Service health"},
        ],
    )

    # Last added runs first.
    app.add_middleware(LoggingMiddleware, node_name=node.name)
    app.add_middleware(ErrorHandlingMiddleware)
    app.add_middleware(RequestValidationMiddleware, max_request_size=config.max_frame_bytes + 64)

    @app.get("/health", response_model=HealthResponse, tags=["health"])
    async def health_check():
        instance_id = node.config.instance_id if node.config is not None else None
        return HealthResponse(
            status="healthy" if node.reader is not None else "starting",
            version=config.app_version,
            instance_id=instance_id,
            ledger_version=node.history.version,
            virtual_time=node.clock.now(),
        )

    @app.post("/frames", tags=["frames"], response_class=Response)
    async def post_frame(request: Request):
        """One framed ClientMessage in; one framed NodeResponse out, or 204 when dropped."""
        reply = node.handle_frame(await request.body())
        if reply is None:
            return Response(status_code=204)
        return Response(content=reply, media_type=FRAME_MEDIA_TYPE)

    @app.post("/admin/adversary", tags=["admin"])
    async def set_adversary(request: Request):
        # Keys arrive hex-encoded, which only JSON-mode validation decodes.
        policy = AdversaryPolicy.model_validate_json(await request.body())
        node.set_adversary(policy)
        return {"adversary": policy.model_dump(mode="json", exclude_defaults=True)}

    @app.post("/admin/tick/{kind}", response_model=TickResponse, tags=["admin"])
    async def tick(kind: str):
        if kind not in TICK_KINDS:
            raise HTTPException(status_code=404, detail=f"Unknown tick kind {kind}")
        if kind == "batch":
            header = node.batch_tick()
            result = header.id if header is not None else None
        elif kind == "sync":
            result = [tx_hash.hex() for tx_hash in node.sync_tick()]
        elif kind == "relay":
            result = node.relay_tick()
        else:
            result = node.chain.produce_block().height
        return TickResponse(kind=kind, result=result, virtual_time=node.clock.now())

    @app.get("/admin/state", tags=["admin"])
    async def dump_state() -> Dict[str, Any]:
        return node.dump_state()

    @app.exception_handler(ValidationError)
    async def validation_exception_handler(request, exc):
        logger.warning(f"Validation error: {exc}")
        return JSONResponse(
            status_code=422,
            content={
                "error": "Validation Error",
                "message": "Request data validation failed",
                "details": str(exc)
            }
        )

    @app.exception_handler(NodeError)
    @app.exception_handler(EnclaveError)
    async def domain_exception_handler(request, exc):
        logger.warning(f"{type(exc).__name__} on {request.url.path}: {exc}")
        return JSONResponse(
            status_code=409,
            content={"error": type(exc).__name__, "message": str(exc), "status_code": 409}
        )

    @app.exception_handler(HTTPException)
    async def http_exception_handler(request, exc):
        return JSONResponse(
            status_code=exc.status_code,
            content={"error": "HTTP Error", "message": exc.detail, "status_code": exc.status_code}
        )

    logger.info(f"Node API ready for {node.name}")
    return app
