"""Textual concrete syntax for AMN models (``.amn`` files)."""

from __future__ import annotations

from amn.diagnostics import Diagnostic, has_errors
from amn.dsl.parser import KEYWORDS, parse, parse_objspec
from amn.dsl.printer import connection_text, format_percent, objspec_text, print_model

__all__ = [
    "KEYWORDS",
    "FormatRefused",
    "connection_text",
    "fmt",
    "format_percent",
    "objspec_text",
    "parse",
    "parse_objspec",
    "print_model",
]


class FormatRefused(Exception):
    """The input has syntax errors; it is left untouched."""

    def __init__(self, diagnostics: list[Diagnostic]):
        super().__init__(f"{sum(d.is_error for d in diagnostics)} syntax error(s)")
        self.diagnostics = diagnostics


def fmt(text: str, file: str = "<input>") -> str:
    """Canonical reformatting: ``print_model(parse(text))``.

    Comments are not preserved. Raises :class:`FormatRefused` when the text
    does not parse cleanly.
    """
    model, diags = parse(text, file)
    if has_errors(diags):
        raise FormatRefused(diags)
    return print_model(model)
