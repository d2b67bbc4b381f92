"""Metadata templates and the quality-control validator (the chaincode check)."""

from __future__ import annotations

import datetime as dt
import json
import re
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from importlib import resources
from pathlib import Path

from .errors import BadTemplate, TemplateMismatch

DUBLIN_CORE_ID = "dublin-core-1.1"

DUBLIN_CORE_ELEMENTS = (
    "title", "creator", "subject", "description", "publisher", "contributor", "date", "type",
    "format", "identifier", "source", "language", "relation", "coverage", "rights",
)

_DATE_RE = re.compile(r"\d{4}-\d{2}-\d{2}")


class Kind(str, Enum):
    FREE_TEXT = "FREE_TEXT"
    ISO639_1 = "ISO639_1"
    ISO8601_DATE = "ISO8601_DATE"
    ENUM = "ENUM"
    REGEX = "REGEX"


class Failure(str, Enum):
    MISSING = "MISSING"
    BAD_FORMAT = "BAD_FORMAT"
    UNKNOWN_ELEMENT = "UNKNOWN_ELEMENT"


@lru_cache(maxsize=1)
def iso639_1_codes() -> frozenset[str]:
    text = resources.files("fairledger").joinpath("data/iso639_1.txt").read_text(encoding="utf-8")
    return frozenset(line.strip() for line in text.splitlines() if line.strip() and not line.startswith("#"))


@dataclass(frozen=True)
class ElementConstraint:
    element_name: str
    kind: Kind = Kind.FREE_TEXT
    required: bool = True
    values: tuple[str, ...] = ()  # ENUM
    pattern: str = ""  # REGEX

    def __post_init__(self):
        if not self.element_name:
            raise BadTemplate("element name must be nonempty")
        if self.kind is Kind.ENUM and not self.values:
            raise BadTemplate(f"{self.element_name}: ENUM needs at least one value")
        if self.kind is Kind.REGEX:
            try:
                re.compile(self.pattern)
            except re.error as exc:
                raise BadTemplate(f"{self.element_name}: bad pattern: {exc}") from exc

    def to_dict(self) -> dict:
        params: dict = {}
        if self.kind is Kind.ENUM:
            params["values"] = list(self.values)
        if self.kind is Kind.REGEX:
            params["pattern"] = self.pattern
        return {"name": self.element_name, "kind": self.kind.value, "required": self.required, "params": params}

    @classmethod
    def from_dict(cls, d: dict) -> "ElementConstraint":
        params = d.get("params") or {}
        return cls(d["name"], Kind(d["kind"]), bool(d.get("required", True)),
                   tuple(params.get("values", ())), params.get("pattern", ""))


@dataclass(frozen=True)
class Template:
    template_id: str
    elements: tuple[ElementConstraint, ...]

    def __post_init__(self):
        names = [e.element_name for e in self.elements]
        if len(set(names)) != len(names):
            raise BadTemplate(f"duplicate element names in {self.template_id}")

    def element(self, name: str) -> ElementConstraint | None:
        for e in self.elements:
            if e.element_name == name:
                return e
        return None

    def to_dict(self) -> dict:
        return {"template_id": self.template_id, "elements": [e.to_dict() for e in self.elements]}

    @classmethod
    def from_dict(cls, d: dict) -> "Template":
        try:
            return cls(d["template_id"], tuple(ElementConstraint.from_dict(e) for e in d["elements"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise BadTemplate(f"malformed template: {exc}") from exc


def load_template(path: str | Path) -> Template:
    return Template.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class MetadataRecord:
    experiment_name: str
    experiment_id: str
    elements: dict[str, str] = field(default_factory=dict)
    template_id: str = DUBLIN_CORE_ID

    def __post_init__(self):
        if not self.experiment_name or not self.experiment_id:
            raise ValueError("experiment_name and experiment_id must be nonempty")

    def to_dict(self) -> dict:
        return {
            "experiment_name": self.experiment_name,
            "experiment_id": self.experiment_id,
            "template_id": self.template_id,
            "elements": dict(self.elements),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetadataRecord":
        elements = d.get("elements") or {}
        if not isinstance(elements, dict) or not all(isinstance(v, str) for v in elements.values()):
            raise ValueError("elements must map names to strings")
        return cls(d["experiment_name"], d["experiment_id"], dict(elements), d.get("template_id", DUBLIN_CORE_ID))

    def with_elements(self, **changes: str) -> "MetadataRecord":
        return MetadataRecord(self.experiment_name, self.experiment_id, {**self.elements, **changes}, self.template_id)

    def without(self, name: str) -> "MetadataRecord":
        rest = {k: v for k, v in self.elements.items() if k != name}
        return MetadataRecord(self.experiment_name, self.experiment_id, rest, self.template_id)


def load_record(path: str | Path) -> MetadataRecord:
    return MetadataRecord.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class ValidationReport:
    failures: tuple[tuple[str, Failure], ...] = ()

    @property
    def valid(self) -> bool:
        return not self.failures

    def to_dict(self) -> dict:
        return {"valid": self.valid, "failures": [[n, f.value] for n, f in self.failures]}


def dublin_core_template() -> Template:
    kinds = {"language": Kind.ISO639_1, "date": Kind.ISO8601_DATE}
    return Template(
        DUBLIN_CORE_ID,
        tuple(ElementConstraint(name, kinds.get(name, Kind.FREE_TEXT)) for name in DUBLIN_CORE_ELEMENTS),
    )


def _is_calendar_date(value: str) -> bool:
    if not _DATE_RE.fullmatch(value):
        return False
    try:
        dt.date.fromisoformat(value)
    except ValueError:
        return False
    return True


def validate_element(value: str | None, constraint: ElementConstraint) -> Failure | None:
    if value is None or value == "":
        return Failure.MISSING if constraint.required else None
    kind = constraint.kind
    if kind is Kind.ISO639_1:
        ok = value in iso639_1_codes()
    elif kind is Kind.ISO8601_DATE:
        ok = _is_calendar_date(value)
    elif kind is Kind.ENUM:
        ok = value in constraint.values
    elif kind is Kind.REGEX:
        ok = re.fullmatch(constraint.pattern, value) is not None
    else:
        ok = True
    return None if ok else Failure.BAD_FORMAT


def validate_record(record: MetadataRecord, template: Template) -> ValidationReport:
    if record.template_id != template.template_id:
        raise TemplateMismatch(f"record uses {record.template_id!r}, template is {template.template_id!r}")
    failures = []
    for constraint in template.elements:
        failure = validate_element(record.elements.get(constraint.element_name), constraint)
        if failure is not None:
            failures.append((constraint.element_name, failure))
    for name in sorted(record.elements):
        if template.element(name) is None:
            failures.append((name, Failure.UNKNOWN_ELEMENT))
    return ValidationReport(tuple(failures))


def default_templates() -> dict[str, Template]:
    t = dublin_core_template()
    return {t.template_id: t}
