"""Request and response bodies for the HTTP service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class CompletionRequest(BaseModel):
    model: str
    prompt: str
    temperature: float = Field(default=0.0, ge=0.0)
    n: int = Field(default=1, ge=1)
    max_tokens: int = Field(default=1024, ge=1)
    seed: int | None = None


class CompletionChoice(BaseModel):
    text: str
    finish_reason: str


class CompletionResponse(BaseModel):
    model: str
    choices: list[CompletionChoice]


class CommandRequest(BaseModel):
    """A fully resolved configuration, file-shaped; clients apply flag and
    environment precedence before posting."""

    config: dict


class CommandResponse(BaseModel):
    command: str
    summary: dict


class ErrorBody(BaseModel):
    error_class: str
    detail: str


class HealthResponse(BaseModel):
    status: str
    version: str
