"""Recursive-descent parser for .amn text with statement-level error recovery.

The parser is deliberately lenient about *semantic* content: unknown
specialization arguments, out-of-range percentages, duplicate declarations
and the like are kept in the model for the validator to report. Only text
that cannot be mapped onto the model types produces ``AMN-SYN-*``
diagnostics.
"""

from __future__ import annotations

from dataclasses import replace
from decimal import Decimal
from typing import Optional

from amn import expr as ex
from amn.diagnostics import Diagnostic, sort_diagnostics
from amn.dsl.lexer import Token, tokenize
from amn.model import (
    ARCHETYPES,
    AUTONOMY_TYPES,
    ETHICAL_CONCEPTS,
    MODALITY_BASES,
    PARAM_NAMES,
    PRIMITIVE_TYPES,
    QUANTS,
    SOCIAL_CONCEPTS,
    SPEC_VARIANTS,
    Abort,
    AgentDef,
    Behavior,
    ChannelParams,
    Commit,
    Connection,
    Delegate,
    Emit,
    Endpoint,
    EventObjectSpec,
    EventPattern,
    Goal,
    Instancing,
    Interface,
    Modality,
    Model,
    Nature,
    PayloadEntry,
    Rule,
    Select,
    SetState,
    ShareRef,
    SourceSpan,
    Specialization,
    StartWindow,
    StateDecl,
    UtilityFunction,
)

KEYWORDS = frozenset({
    "agent", "calling", "global", "sensor", "actuator", "shares", "social", "ethics",
    "type", "archetype", "functional", "goal", "utility", "rule", "state", "carries",
    "on", "if", "then", "emit", "set", "select", "window", "commit", "abort",
    "delegate", "else", "any", "at", "from", "true", "false", "and", "or", "not",
})

NATURE_VALUES = {
    "social": SOCIAL_CONCEPTS,
    "ethics": ETHICAL_CONCEPTS,
    "type": AUTONOMY_TYPES,
    "archetype": ARCHETYPES,
}
_NATURE_ATTR = {"social": "social", "ethics": "ethics", "type": "autonomy_type", "archetype": "archetype"}

_COMPARISONS = ("==", "!=", "<=", ">=", "<", ">")


class _Abort(Exception):
    """Raised to unwind to the nearest statement boundary."""


class Parser:
    def __init__(self, text: str, file: str):
        self.file = file
        self.tokens, self.diags = tokenize(text, file)
        self.pos = 0

    # -- token plumbing ----------------------------------------------------

    @property
    def tok(self) -> Token:
        return self.tokens[self.pos]

    def peek(self, k: int = 1) -> Token:
        return self.tokens[min(self.pos + k, len(self.tokens) - 1)]

    def advance(self) -> Token:
        t = self.tokens[self.pos]
        if t.kind != "EOF":
            self.pos += 1
        return t

    def at(self, text: str) -> bool:
        return self.tok.is_(text)

    def accept(self, text: str) -> Optional[Token]:
        if self.at(text):
            return self.advance()
        return None

    def span_from(self, start: Token) -> SourceSpan:
        last = self.tokens[self.pos - 1] if self.pos > 0 else start
        if last.line < start.line or (last.line == start.line and last.end_col < start.col):
            last = start
        return SourceSpan(self.file, (start.line, start.col), (last.end_line, last.end_col))

    def error(self, msg: str, tok: Optional[Token] = None, code: str = "AMN-SYN-02") -> _Abort:
        t = tok or self.tok
        self.diags.append(Diagnostic(
            code, "error", msg, SourceSpan(self.file, (t.line, t.col), (t.end_line, t.end_col)),
        ))
        return _Abort()

    def describe(self, t: Token) -> str:
        return "end of input" if t.kind == "EOF" else repr(t.text)

    def expect(self, text: str) -> Token:
        if self.at(text):
            return self.advance()
        raise self.error(f"expected {text!r}, found {self.describe(self.tok)}")

    def ident(self, what: str = "identifier") -> str:
        t = self.tok
        if t.kind != "IDENT":
            raise self.error(f"expected {what}, found {self.describe(t)}")
        if t.text in KEYWORDS:
            raise self.error(f"{t.text!r} is a reserved word and cannot be used as {what}")
        self.advance()
        return t.text

    def word(self, allowed: tuple[str, ...], what: str) -> str:
        t = self.tok
        if t.kind != "IDENT":
            raise self.error(f"expected {what}, found {self.describe(t)}")
        if t.text not in allowed:
            raise self.error(
                f"unknown {what} {t.text!r} (expected one of: {', '.join(allowed)})", code="AMN-SYN-03"
            )
        self.advance()
        return t.text

    def integer(self, what: str) -> int:
        t = self.tok
        if t.kind != "INT":
            raise self.error(f"expected {what}, found {self.describe(t)}")
        self.advance()
        return t.value

    def number(self, what: str = "number") -> float | int:
        neg = self.accept("-") is not None
        t = self.tok
        if t.kind not in ("INT", "FLOAT"):
            raise self.error(f"expected {what}, found {self.describe(t)}")
        self.advance()
        return -t.value if neg else t.value

    def string(self, what: str = "string") -> str:
        t = self.tok
        if t.kind != "STRING":
            raise self.error(f"expected {what}, found {self.describe(t)}")
        self.advance()
        return t.value

    def sync(self, err_line: int) -> None:
        """Skip to the next statement start at the current nesting depth."""
        depth = 0
        while self.tok.kind != "EOF":
            t = self.tok
            if t.is_("{"):
                depth += 1
            elif t.is_("}"):
                if depth == 0:
                    return
                depth -= 1
                if depth == 0:
                    self.advance()
                    continue
            elif depth == 0 and t.line > err_line and self._starts_statement():
                return
            self.advance()

    def _starts_statement(self) -> bool:
        t = self.tok
        if t.kind != "IDENT":
            return False
        if t.text in ("agent", "calling", "global", "sensor", "actuator", "shares", "social",
                      "ethics", "type", "archetype", "functional", "goal", "utility", "rule", "state"):
            return True
        return t.text not in KEYWORDS and self.peek().is_(".")

    # -- top level ---------------------------------------------------------

    def parse_model(self) -> Model:
        agents: list[AgentDef] = []
        globals_: list[AgentDef] = []
        self.connections: list[Connection] = []
        while self.tok.kind != "EOF":
            start = self.tok
            try:
                if self.at("global"):
                    self.advance()
                    globals_.append(self.agentdef())
                elif self.at("agent") or self.at("calling"):
                    agents.append(self.agentdef())
                elif self.tok.kind == "IDENT" and self.peek().is_("."):
                    self.connections.append(self.connection())
                else:
                    raise self.error(f"expected an agent, global or connection, found {self.describe(self.tok)}")
            except _Abort:
                if self.tok is start:
                    self.advance()
                self.sync(start.line)
                if self.at("}"):
                    self.advance()
        return Model(tuple(agents), tuple(globals_), tuple(self.connections))

    # -- agents ------------------------------------------------------------

    def agentdef(self) -> AgentDef:
        start = self.tok
        kind = "standard"
        if self.accept("calling"):
            kind = "calling"
        self.expect("agent")
        name = self.ident("agent name")
        instancing = Instancing()
        if self.at("["):
            instancing = self.card()
        if self.accept(":"):
            ref = self.ident("global agent name")
            return AgentDef(name, "global_ref", instancing, ref=ref, span=self.span_from(start))
        self.expect("{")
        body = _Body()
        while not self.at("}"):
            if self.tok.kind == "EOF":
                raise self.error(f"unclosed body of agent {name!r}")
            clause_start = self.tok
            try:
                self.clause(body)
            except _Abort:
                if self.tok is clause_start:
                    self.advance()
                self.sync(clause_start.line)
        self.expect("}")
        behavior = Behavior(
            goals=tuple(body.goals),
            utility=body.utility,
            rules=tuple(body.rules),
            states=tuple(body.states),
        )
        return AgentDef(
            name=name,
            kind=kind,
            instancing=instancing,
            sensors=tuple(body.sensors),
            actuators=tuple(body.actuators),
            shares=tuple(body.shares),
            nature=Nature(**{k: tuple(v) for k, v in body.nature.items()}),
            behavior=behavior,
            children=tuple(body.children),
            span=self.span_from(start),
        )

    def card(self) -> Instancing:
        self.expect("[")
        lo = self.integer("minimum cardinality")
        self.expect("..")
        if self.accept("*"):
            hi = None
        else:
            hi = self.integer("maximum cardinality or '*'")
        self.expect("]")
        return Instancing("multi", lo, hi)

    def clause(self, body: "_Body") -> None:
        start = self.tok
        t = self.tok
        if t.is_("sensor") or t.is_("actuator"):
            direction = self.advance().text
            name = self.ident("interface name")
            self.expect(":")
            modality = self.modality()
            iface = Interface(name, direction, modality, span=self.span_from(start))
            (body.sensors if direction == "sensor" else body.actuators).append(iface)
        elif t.is_("shares"):
            self.advance()
            path, sensor = self.dotted_endpoint()
            body.shares.append(ShareRef(path, sensor, span=self.span_from(start)))
        elif t.text in NATURE_VALUES and t.kind == "IDENT":
            key = self.advance().text
            value = self.word(NATURE_VALUES[key], f"{key} value")
            body.nature[_NATURE_ATTR[key]].append(value)
        elif t.is_("functional"):
            self.advance()
            body.nature["functional"].append(self.string("functional type tag"))
        elif t.is_("goal"):
            self.advance()
            name = self.ident("goal name")
            priority = self.integer("goal priority")
            self.expect(":")
            target = self.expr()
            body.goals.append(Goal(name, priority, target, span=self.span_from(start)))
        elif t.is_("utility"):
            self.advance()
            terms = [self.utility_term()]
            while self.accept(","):
                terms.append(self.utility_term())
            if body.utility is not None:
                raise self.error("an agent has at most one utility function", start, code="AMN-SYN-04")
            body.utility = UtilityFunction(tuple(terms), span=self.span_from(start))
        elif t.is_("rule"):
            body.rules.append(self.rule())
        elif t.is_("state"):
            self.advance()
            name = self.ident("state name")
            self.expect("=")
            value = self.literal()
            body.states.append(StateDecl(name, value, span=self.span_from(start)))
        elif t.is_("agent") or t.is_("calling"):
            body.children.append(self.agentdef())
        elif t.kind == "IDENT" and t.text not in KEYWORDS and self.peek().is_("."):
            self.connections.append(self.connection())
        else:
            raise self.error(f"expected an agent clause, found {self.describe(t)}")

    def utility_term(self) -> tuple[str, float]:
        name = self.ident("metric name")
        self.expect(":")
        return name, self.number("weight")

    def literal(self):
        t = self.tok
        if t.is_("true") or t.is_("false"):
            self.advance()
            return t.text == "true"
        if t.kind == "STRING":
            self.advance()
            return t.value
        return self.number("literal")

    def modality(self) -> Modality:
        base = self.word(MODALITY_BASES, "modality")
        param = None
        if self.accept("("):
            t = self.tok
            if t.kind == "STRING":
                param = t.value
            elif t.kind == "IDENT":
                param = t.text
            else:
                raise self.error(f"expected modality parameter, found {self.describe(t)}")
            self.advance()
            self.expect(")")
        return Modality(base, param)

    # -- connections -------------------------------------------------------

    def dotted(self) -> list[str]:
        parts = [self.ident("agent path")]
        while self.accept("."):
            parts.append(self.ident("path segment"))
        return parts

    def dotted_endpoint(self) -> tuple[str, str]:
        t = self.tok
        parts = self.dotted()
        if len(parts) < 2:
            raise self.error("expected <agent path>.<interface>", t)
        return ".".join(parts[:-1]), parts[-1]

    def connection(self) -> Connection:
        start = self.tok
        src = Endpoint(*self.dotted_endpoint())
        if self.accept("->"):
            style = "continuous"
        elif self.accept("-->"):
            style = "discontinuous"
        else:
            raise self.error(f"expected '->' or '-->', found {self.describe(self.tok)}")
        dst = Endpoint(*self.dotted_endpoint())
        params = ChannelParams()
        if self.accept("{"):
            values: dict[str, float] = {}
            if not self.at("}"):
                while True:
                    ptok = self.tok
                    name = self.word(PARAM_NAMES, "channel parameter")
                    self.expect("=")
                    value = self.percent()
                    if name in values:
                        raise self.error(f"parameter {name!r} given twice", ptok, code="AMN-SYN-04")
                    values[name] = value
                    if not self.accept(","):
                        break
            self.expect("}")
            params = ChannelParams(**values)
        carries: list[EventObjectSpec] = []
        if self.accept("carries"):
            carries.append(self.objspec(schema=True))
            while self.accept(","):
                carries.append(self.objspec(schema=True))
        return Connection(src, dst, style, params, tuple(carries), span=self.span_from(start))

    def percent(self) -> float:
        """``NUMBER %`` as a fraction, divided exactly in decimal before rounding."""
        neg = self.accept("-") is not None
        t = self.tok
        if t.kind not in ("INT", "FLOAT"):
            raise self.error(f"expected percentage, found {self.describe(t)}")
        self.advance()
        self.expect("%")
        value = float(Decimal(t.text) / 100)
        return -value if neg else value

    # -- event objects -----------------------------------------------------

    def specialization(self) -> Specialization:
        variant = self.word(SPEC_VARIANTS, "event object specialization")
        arg = None
        if self.accept("("):
            t = self.tok
            if t.kind in ("IDENT", "STRING"):
                arg = t.value if t.kind == "STRING" else t.text
                self.advance()
            else:
                raise self.error(f"expected specialization argument, found {self.describe(t)}")
            self.expect(")")
        return Specialization(variant, arg)

    def objspec(self, schema: bool) -> EventObjectSpec:
        start = self.tok
        spec = self.specialization()
        quant = None
        media = None
        fields = None
        if self.accept("/"):
            quant = self.word(QUANTS, "quantitative indicator")
        if self.accept("@"):
            media = self.modality()
        if schema and self.at("{"):
            self.advance()
            items: list[tuple[str, str]] = []
            if not self.at("}"):
                while True:
                    fname = self.ident("payload field")
                    self.expect(":")
                    items.append((fname, self.word(PRIMITIVE_TYPES, "payload type")))
                    if not self.accept(","):
                        break
            self.expect("}")
            fields = tuple(items)
        return EventObjectSpec(spec, quant, media, fields, span=self.span_from(start))

    # -- behavior ----------------------------------------------------------

    def rule(self) -> Rule:
        start = self.expect("rule")
        name = self.ident("rule name")
        self.expect(":")
        self.expect("on")
        trigger = self.pattern()
        guard = None
        if self.accept("if"):
            guard = self.expr()
        self.expect("then")
        actions = self.actions()
        return Rule(name, trigger, actions, guard, span=self.span_from(start))

    def pattern(self) -> EventPattern:
        spec = None
        if not self.accept("any"):
            spec = self.specialization()
        quant = media = sensor = sender = None
        if self.accept("/"):
            quant = self.word(QUANTS, "quantitative indicator")
        if self.accept("@"):
            media = self.modality()
        if self.accept("at"):
            sensor = self.ident("sensor name")
        if self.accept("from"):
            sender = ".".join(self.dotted())
        return EventPattern(spec, quant, media, sensor, sender)

    def actions(self) -> tuple:
        out = [self.action()]
        while self.accept(","):
            out.append(self.action())
        return tuple(out)

    def block(self) -> tuple:
        self.expect("{")
        if self.accept("}"):
            return ()
        acts = self.actions()
        self.expect("}")
        return acts

    def action(self):
        t = self.tok
        if self.accept("emit"):
            actuator = self.ident("actuator name")
            obj = self.objspec(schema=False)
            payload = self.payload() if self.at("{") else None
            return Emit(actuator, obj, payload)
        if self.accept("set"):
            name = self.ident("state name")
            self.expect("=")
            return SetState(name, self.expr())
        if self.accept("select"):
            strategy = self.word(("utility", "first", "named"), "selection strategy")
            name = self.ident("candidate name") if strategy == "named" else None
            return Select(strategy, name)
        if self.accept("window"):
            duration = self.integer("window duration in ticks")
            return StartWindow(duration, self.block())
        if self.accept("commit"):
            return Commit()
        if self.accept("abort"):
            return Abort()
        if self.accept("delegate"):
            probability = self.percent()
            then = self.block()
            otherwise = self.block() if self.accept("else") else ()
            return Delegate(probability, then, otherwise)
        raise self.error(f"expected an action, found {self.describe(t)}")

    def payload(self) -> tuple:
        self.expect("{")
        entries: list[PayloadEntry] = []
        if not self.at("}"):
            while True:
                name = self.ident("payload field")
                if self.accept("="):
                    entries.append(PayloadEntry(name, self.expr()))
                elif self.at("{"):
                    entries.append(PayloadEntry(name, self.payload()))
                else:
                    raise self.error(f"expected '=' or '{{' after {name!r}")
                if not self.accept(","):
                    break
        self.expect("}")
        return tuple(entries)

    # -- expressions -------------------------------------------------------

    def expr(self) -> ex.Expr:
        return self._binary(1)

    def _binary(self, level: int) -> ex.Expr:
        if level > 5:
            return self._unary()
        left = self._binary(level + 1)
        while True:
            t = self.tok
            op = t.text if t.kind in ("PUNCT", "IDENT") else None
            if op is None or ex.PRECEDENCE.get(op) != level:
                return left
            self.advance()
            right = self._binary(level + 1)
            left = ex.Binary(op, left, right)

    def _unary(self) -> ex.Expr:
        if self.accept("not"):
            return ex.Unary("not", self._unary())
        if self.at("-"):
            if self.peek().kind in ("INT", "FLOAT"):
                self.advance()
                return ex.Lit(-self.advance().value)
            self.advance()
            return ex.Unary("-", self._unary())
        return self._primary()

    def _primary(self) -> ex.Expr:
        t = self.tok
        if t.kind in ("INT", "FLOAT", "STRING"):
            self.advance()
            return ex.Lit(t.value)
        if t.is_("true") or t.is_("false"):
            self.advance()
            return ex.Lit(t.text == "true")
        if self.accept("("):
            inner = self.expr()
            self.expect(")")
            return inner
        if t.kind == "IDENT":
            return ex.Name(self.ident("name"))
        raise self.error(f"expected an expression, found {self.describe(t)}")


class _Body:
    def __init__(self) -> None:
        self.sensors: list = []
        self.actuators: list = []
        self.shares: list = []
        self.nature: dict[str, list] = {
            "social": [], "ethics": [], "autonomy_type": [], "archetype": [], "functional": [],
        }
        self.goals: list = []
        self.utility = None
        self.rules: list = []
        self.states: list = []
        self.children: list = []


def parse(text: str, file: str = "<input>") -> tuple[Model, list[Diagnostic]]:
    """Parse ``text``; never raises on malformed input."""
    p = Parser(text, file)
    model = p.parse_model()
    return model, sort_diagnostics(p.diags)


def parse_objspec(text: str, file: str = "<input>") -> tuple[Optional[EventObjectSpec], list[Diagnostic]]:
    """Parse a lone event object spec such as ``reaction(veto)/single``."""
    p = Parser(text, file)
    try:
        obj = p.objspec(schema=True)
        if p.tok.kind != "EOF":
            raise p.error(f"unexpected {p.describe(p.tok)} after event object")
    except _Abort:
        return None, sort_diagnostics(p.diags)
    return replace(obj, span=None), sort_diagnostics(p.diags)


def parse_injected_emit(text: str) -> tuple[EventObjectSpec, Optional[tuple], Optional[str]]:
    """Parse ``<objspec> [{payload}] [via <actuator>]`` from an injection line.

    Raises ``ValueError`` with the first diagnostic message on malformed text.
    """
    p = Parser(text, "<inject>")
    try:
        obj = p.objspec(schema=False)
        payload = p.payload() if p.at("{") else None
        via = None
        if p.tok.kind == "IDENT" and p.tok.text == "via":
            p.advance()
            via = p.ident("actuator name")
        if p.tok.kind != "EOF":
            raise p.error(f"unexpected {p.describe(p.tok)} after event object")
    except _Abort:
        pass
    if p.diags:
        raise ValueError(p.diags[0].message)
    return replace(obj, span=None), payload, via
