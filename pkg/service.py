from dotenv import load_dotenv
load_dotenv()

from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, Field
from typing import Optional

from configuration_values import ConfigurationValues
from dsl import format_program, parse_program
from errors import DslError
from runner import run_source
from loguru import logger

app = FastAPI(title="DiffSpace API")

app.add_middleware(
    CORSMiddleware,
    allow_origins=ConfigurationValues.get_service_origins(),
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)

# scripts above this size are refused
MAX_SOURCE_CHARS = 200_000


class CheckRequest(BaseModel):
    source: str = Field(max_length=MAX_SOURCE_CHARS)


class Diagnostic(BaseModel):
    line: int
    col: int
    kind: str
    message: str
    expected: list[str]


class CheckResponse(BaseModel):
    ok: bool
    statements: Optional[int] = None
    program: Optional[str] = None
    diagnostic: Optional[Diagnostic] = None


class RunRequest(BaseModel):
    source: str = Field(max_length=MAX_SOURCE_CHARS)
    seed: Optional[int] = None
    hex_floats: bool = False


class RunResponse(BaseModel):
    exit_status: int
    records: list[dict]


@app.get("/health")
def health():
    return {"status": "ok"}


@app.post("/check", response_model=CheckResponse, response_model_exclude_none=True)
def check(request: CheckRequest):
    # Parse and resolve a script; diagnostics come back as data, not HTTP errors.
    try:
        program = parse_program(request.source)
    except DslError as e:
        return CheckResponse(ok=False, diagnostic=Diagnostic(
            line=e.line, col=e.col, kind=e.kind, message=e.message, expected=sorted(e.expected)))
    return CheckResponse(ok=True, statements=len(program.statements), program=format_program(program))


@app.post("/run", response_model=RunResponse)
def run(request: RunRequest):
    try:
        result = run_source(request.source, seed=request.seed, hex_floats=request.hex_floats)
    except Exception as e:
        logger.exception(f"Run failed: {str(e)}")
        raise HTTPException(status_code=500, detail=str(e))
    records = [r.model_dump(mode="json", exclude_none=True) for r in result.records]
    logger.info(f"Run finished with {len(records)} records, exit {result.exit_status}")
    return RunResponse(exit_status=result.exit_status, records=records)
