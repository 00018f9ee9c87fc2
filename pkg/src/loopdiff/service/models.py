"""Request and response schemas for the HTTP service."""

from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator


class TaskSpecModel(BaseModel):
    model_config = ConfigDict(extra="forbid")
    kind: str
    params: dict = Field(default_factory=dict)


class CompileRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    task: TaskSpecModel
    n_slots: Optional[int] = Field(default=None, ge=1)


class GenerateRequest(BaseModel):
    """Exactly one prior source: an inline document, a file path, or a task."""
    model_config = ConfigDict(extra="forbid")
    prior: Optional[dict] = None
    prior_path: Optional[str] = None
    task: Optional[TaskSpecModel] = None
    T: Optional[int] = Field(default=None, ge=1)
    top_p: Optional[float] = Field(default=None, gt=0.0, le=1.0)
    seed: int = 0
    checkpoint: Optional[str] = None
    output: Literal["tokens", "midi", "both"] = "both"

    @model_validator(mode="after")
    def _one_source(self):
        given = [x is not None for x in (self.prior, self.prior_path, self.task)]
        if sum(given) != 1:
            raise ValueError("give exactly one of 'prior', 'prior_path', "
                             "'task'")
        return self


class Versions(BaseModel):
    vocabulary: str
    checkpoint: str


class JobRecord(BaseModel):
    job_id: str
    kind: str
    status: Literal["queued", "running", "done", "failed"]
    created: float
    started: Optional[float] = None
    finished: Optional[float] = None
    error: Optional[str] = None
    echo: Optional[dict] = None
    versions: Versions


class HealthResponse(BaseModel):
    status: str
    n_slots: int
    jobs: dict
    versions: Versions


class CompileResponse(BaseModel):
    prior: dict
    suggested: dict
    issues: list
    versions: Versions


class SubmitResponse(BaseModel):
    job_id: str
    status: str
    versions: Versions
