"""Report records written by the runner, one per command, as a JSON lines stream."""
from __future__ import annotations

import math
from typing import Annotated, Literal, Optional, Union

from pydantic import BaseModel, Field, TypeAdapter

Real = Union[float, str]


def real(value: float, hex_floats: bool = False) -> Real:
    # 10 significant digits, or the exact bit pattern under --hex-floats
    value = float(value)
    if not math.isfinite(value):
        return str(value)
    if hex_floats:
        return value.hex()
    return float(f"{value:.10g}")


def reals(values, hex_floats: bool = False) -> list[Real]:
    return [real(v, hex_floats) for v in values]


class RecordBase(BaseModel):
    line: int
    seed: int


class EvalRecord(RecordBase):
    command: Literal["eval"] = "eval"
    space: str
    target: str
    point: str
    value: Real


class EvalHomRecord(RecordBase):
    command: Literal["eval_hom"] = "eval_hom"
    space: str
    target: str
    assignment: dict[str, Real]
    value: Real


class ClassifyRecord(RecordBase):
    command: Literal["classify"] = "classify"
    space: str
    outcome: Literal["evaluation", "obstructed"]
    points: list[str] = Field(default_factory=list)
    side: Optional[str] = None
    witness: Optional[str] = None
    probe: Optional[list[str]] = None
    diagnosis: Optional[str] = None
    values: Optional[list[Real]] = None
    detail: Optional[str] = None


class XiRecord(RecordBase):
    command: Literal["xi"] = "xi"
    point: str
    value: Real
    k0: int
    terms_evaluated: int
    trace: list[tuple[int, Real, Real]]


class ProbeRecord(RecordBase):
    command: Literal["probe"] = "probe"
    space: str
    target: str
    toward: str
    ks: list[int]
    values: list[Real]
    diverges: bool
    limit: Optional[Real] = None


class TildeRecord(RecordBase):
    command: Literal["tilde"] = "tilde"
    space: str
    point: str
    prolongable: bool
    values: Optional[dict[str, Real]] = None
    witness: Optional[str] = None
    probe_index: Optional[int] = None
    probe_values: Optional[list[Real]] = None
    reason: Optional[str] = None


class SpecRecord(RecordBase):
    command: Literal["spec"] = "spec"
    space: str
    spectrum: str
    generators: list[str]
    elements: list[str]
    size: int
    points: list[str]


class DensityRecord(RecordBase):
    command: Literal["density"] = "density"
    space: str
    tol: Real
    family: list[str]
    point: str
    gaps: list[Real]


class ErrorRecord(RecordBase):
    command: Literal["error"] = "error"
    statement: str
    kind: str
    error: str


Record = Annotated[
    Union[EvalRecord, EvalHomRecord, ClassifyRecord, XiRecord, ProbeRecord, TildeRecord, SpecRecord,
          DensityRecord, ErrorRecord],
    Field(discriminator="command"),
]

_RECORD = TypeAdapter(Record)


def record_line(record: BaseModel) -> str:
    return record.model_dump_json(exclude_none=True)


def parse_record(text: str):
    return _RECORD.validate_json(text)


def dump_records(records) -> str:
    return "".join(record_line(r) + "\n" for r in records)
