"""FastAPI application: completion endpoint plus pipeline commands.

The completions route serves the deterministic stub, so the service
doubles as a reference implementation of the wire contract any real
inference server can be swapped in for. Command routes take a resolved
configuration document and run the corresponding pipeline step in
process; domain errors map onto HTTP statuses by their error class.
"""

from __future__ import annotations

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..config import resolve_config_dict
from ..errors import MutaprobeError, ValidationError
from ..pipeline import COMMANDS, run_command
from .schemas import (
    CommandRequest,
    CommandResponse,
    CompletionChoice,
    CompletionRequest,
    CompletionResponse,
    HealthResponse,
)
from .stub import stub_completions

_STATUS_BY_CLASS = {
    "validation": 400,
    "missing_input": 404,
    "endpoint": 502,
    "internal": 500,
}


def create_app() -> FastAPI:
    app = FastAPI(title="mutaprobe", version=__version__)

    @app.exception_handler(MutaprobeError)
    async def _domain_error(request: Request, exc: MutaprobeError) -> JSONResponse:
        status = _STATUS_BY_CLASS.get(exc.error_class, 500)
        return JSONResponse(
            status_code=status,
            content={"error_class": exc.error_class, "detail": str(exc)},
        )

    @app.get("/health", response_model=HealthResponse)
    async def health() -> HealthResponse:
        return HealthResponse(status="ok", version=__version__)

    @app.post("/v1/completions", response_model=CompletionResponse)
    async def completions(req: CompletionRequest) -> CompletionResponse:
        pairs = stub_completions(req.model, req.prompt, req.temperature, req.n, req.max_tokens, req.seed)
        return CompletionResponse(
            model=req.model,
            choices=[CompletionChoice(text=t, finish_reason=fr) for t, fr in pairs],
        )

    @app.post("/v1/commands/{command}", response_model=CommandResponse)
    async def command(command: str, req: CommandRequest) -> CommandResponse:
        if command not in COMMANDS:
            raise ValidationError(f"unknown command {command!r}")
        config = resolve_config_dict(req.config)
        summary = run_command(command, config)
        return CommandResponse(command=command, summary=summary)

    return app
