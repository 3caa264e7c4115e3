"""Diagnostic records shared by the parser and the validator."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Optional

from amn.model import SourceSpan

NO_SPAN_FILE = "<model>"


@dataclass(frozen=True)
class Diagnostic:
    code: str
    severity: str  # "error" | "warning"
    message: str
    span: Optional[SourceSpan] = None
    related: tuple[SourceSpan, ...] = field(default=())

    @property
    def is_error(self) -> bool:
        return self.severity == "error"

    def sort_key(self) -> tuple:
        if self.span is None:
            return (NO_SPAN_FILE, (0, 0), (0, 0), self.code, self.message)
        return (self.span.file, self.span.start, self.span.end, self.code, self.message)

    def location(self) -> tuple[str, int, int]:
        if self.span is None:
            return NO_SPAN_FILE, 0, 0
        return self.span.file, self.span.start[0], self.span.start[1]

    def to_line(self) -> str:
        file, line, col = self.location()
        return f"{file}:{line}:{col}: {self.severity} {self.code} {self.message}"

    def to_dict(self) -> dict:
        if self.span is None:
            file, start, end = NO_SPAN_FILE, [0, 0], [0, 0]
        else:
            file, start, end = self.span.file, list(self.span.start), list(self.span.end)
        return {
            "code": self.code,
            "severity": self.severity,
            "message": self.message,
            "file": file,
            "start": start,
            "end": end,
        }


def sort_diagnostics(diags: Iterable[Diagnostic]) -> list[Diagnostic]:
    return sorted(diags, key=Diagnostic.sort_key)


def has_errors(diags: Iterable[Diagnostic]) -> bool:
    return any(d.is_error for d in diags)


def to_json(diags: Iterable[Diagnostic]) -> str:
    return json.dumps([d.to_dict() for d in diags], ensure_ascii=False, indent=2)
