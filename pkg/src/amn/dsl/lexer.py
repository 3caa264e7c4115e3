"""Tokenizer for .amn text."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

from amn.diagnostics import Diagnostic
from amn.model import SourceSpan

PUNCT = (
    "-->", "->", "..", "==", "!=", "<=", ">=",
    "{", "}", "[", "]", "(", ")", ":", ",", ".", "=", "%", "/", "@", "<", ">", "+", "-", "*",
)

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>//[^\n]*)
  | (?P<number>\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z][A-Za-z0-9_]*)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<punct>""" + "|".join(re.escape(p) for p in PUNCT) + r""")
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str  # IDENT | INT | FLOAT | STRING | PUNCT | EOF
    text: str
    value: object
    line: int
    col: int
    end_line: int
    end_col: int

    def is_(self, text: str) -> bool:
        return self.kind in ("PUNCT", "IDENT") and self.text == text


def tokenize(text: str, file: str) -> tuple[list[Token], list[Diagnostic]]:
    tokens: list[Token] = []
    diags: list[Diagnostic] = []
    pos, line, col = 0, 1, 1
    n = len(text)
    while pos < n:
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            ch = text[pos]
            if ch == '"':
                end = text.find("\n", pos)
                end = n if end < 0 else end
                msg = "unterminated string literal"
            else:
                end = pos + 1
                msg = f"unexpected character {ch!r}"
            diags.append(Diagnostic(
                "AMN-SYN-01", "error", msg,
                SourceSpan(file, (line, col), (line, col + end - pos)),
            ))
            col += end - pos
            pos = end
            continue
        kind = m.lastgroup
        raw = m.group()
        end_col = col + len(raw)
        if kind == "nl":
            line, col = line + 1, 1
            pos = m.end()
            continue
        if kind == "number":
            if re.fullmatch(r"\d+", raw):
                tokens.append(Token("INT", raw, int(raw), line, col, line, end_col))
            else:
                tokens.append(Token("FLOAT", raw, float(raw), line, col, line, end_col))
        elif kind == "ident":
            tokens.append(Token("IDENT", raw, raw, line, col, line, end_col))
        elif kind == "string":
            try:
                value = json.loads(raw)
            except json.JSONDecodeError:
                diags.append(Diagnostic(
                    "AMN-SYN-01", "error", f"invalid escape in string {raw}",
                    SourceSpan(file, (line, col), (line, end_col)),
                ))
                value = raw[1:-1]
            tokens.append(Token("STRING", raw, value, line, col, line, end_col))
        elif kind == "punct":
            tokens.append(Token("PUNCT", raw, raw, line, col, line, end_col))
        col = end_col
        pos = m.end()
    tokens.append(Token("EOF", "", None, line, col, line, col))
    return tokens, diags
