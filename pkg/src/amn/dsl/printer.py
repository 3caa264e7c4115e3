"""Canonical text form of a Model.

Layout: two-space indentation, one clause per line, clauses in the order
header (kind, instancing), interfaces, nature, behavior, children. Globals
come first, then root agents, then all connections sorted by endpoint.
"""

from __future__ import annotations

from decimal import Decimal

from amn.expr import format_literal, format_number, to_source
from amn.model import (
    Abort,
    AgentDef,
    Commit,
    Connection,
    Delegate,
    Emit,
    EventObjectSpec,
    EventPattern,
    Model,
    Select,
    SetState,
    StartWindow,
)

INDENT = "  "


def format_percent(value: float) -> str:
    """Shortest decimal percentage that reads back to exactly ``value``.

    The reader divides the decimal text by 100 exactly before rounding to a
    float, so ``repr(value)`` scaled by 100 always qualifies as a fallback.
    """
    for digits in range(1, 18):
        text = format(Decimal(f"{value * 100:.{digits}g}"), "f")
        if float(Decimal(text) / 100) == value:
            return text
    text = format(Decimal(repr(value)) * 100, "f")
    return text.rstrip("0").rstrip(".") if "." in text else text


def objspec_text(obj: EventObjectSpec, schema: bool = True) -> str:
    text = obj.label()
    if obj.media is not None:
        text += f"@{obj.media}"
    if schema and obj.schema is not None:
        text += " {" + ", ".join(f"{n}: {t}" for n, t in obj.schema) + "}"
    return text


def pattern_text(p: EventPattern) -> str:
    text = "any" if p.spec is None else str(p.spec)
    if p.quant is not None:
        text += "/" + p.quant
    if p.media is not None:
        text += f"@{p.media}"
    if p.sensor is not None:
        text += f" at {p.sensor}"
    if p.sender is not None:
        text += f" from {p.sender}"
    return text


def payload_text(entries) -> str:
    parts = []
    for e in entries:
        if isinstance(e.value, tuple):
            parts.append(f"{e.name} {payload_text(e.value)}")
        else:
            parts.append(f"{e.name} = {to_source(e.value)}")
    return "{" + ", ".join(parts) + "}"


def block_text(actions) -> str:
    if not actions:
        return "{}"
    return "{ " + ", ".join(action_text(a) for a in actions) + " }"


def action_text(a) -> str:
    if isinstance(a, Emit):
        text = f"emit {a.actuator} {objspec_text(a.obj, schema=False)}"
        if a.payload is not None:
            text += " " + payload_text(a.payload)
        return text
    if isinstance(a, SetState):
        return f"set {a.name} = {to_source(a.expr)}"
    if isinstance(a, Select):
        return f"select {a.strategy}" + (f" {a.name}" if a.name else "")
    if isinstance(a, StartWindow):
        return f"window {a.duration} {block_text(a.on_expiry)}"
    if isinstance(a, Commit):
        return "commit"
    if isinstance(a, Abort):
        return "abort"
    if isinstance(a, Delegate):
        text = f"delegate {format_percent(a.probability)}% {block_text(a.then)}"
        if a.otherwise:
            text += f" else {block_text(a.otherwise)}"
        return text
    raise TypeError(f"not an action: {a!r}")


def connection_text(c: Connection) -> str:
    arrow = "->" if c.style == "continuous" else "-->"
    text = f"{c.source} {arrow} {c.target}"
    params = c.params.items()
    if params:
        text += " {" + ", ".join(f"{n} = {format_percent(v)}%" for n, v in params) + "}"
    if c.carries:
        text += " carries " + ", ".join(objspec_text(o) for o in c.carries)
    return text


def _agent_lines(agent: AgentDef, depth: int, prefix: str = "") -> list[str]:
    pad = INDENT * depth
    head = prefix + ("calling agent " if agent.kind == "calling" else "agent ") + agent.name
    card = str(agent.instancing)
    if card:
        head += " " + card
    if agent.kind == "global_ref":
        return [f"{pad}{head}: {agent.ref}"]

    inner = INDENT * (depth + 1)
    body: list[str] = []
    for s in agent.sensors:
        body.append(f"{inner}sensor {s.name}: {s.modality}")
    for a in agent.actuators:
        body.append(f"{inner}actuator {a.name}: {a.modality}")
    for sh in agent.shares:
        body.append(f"{inner}shares {sh.path}.{sh.sensor}")
    n = agent.nature
    for v in n.social:
        body.append(f"{inner}social {v}")
    for v in n.ethics:
        body.append(f"{inner}ethics {v}")
    for v in n.autonomy_type:
        body.append(f"{inner}type {v}")
    for v in n.archetype:
        body.append(f"{inner}archetype {v}")
    for v in n.functional:
        body.append(f"{inner}functional {format_literal(v)}")
    b = agent.behavior
    for g in b.goals:
        body.append(f"{inner}goal {g.name} {g.priority}: {to_source(g.target)}")
    if b.utility is not None:
        terms = ", ".join(f"{m}: {format_number(w)}" for m, w in b.utility.terms)
        body.append(f"{inner}utility {terms}")
    for r in b.rules:
        text = f"{inner}rule {r.name}: on {pattern_text(r.trigger)}"
        if r.guard is not None:
            text += f" if {to_source(r.guard)}"
        text += " then " + ", ".join(action_text(a) for a in r.actions)
        body.append(text)
    for s in b.states:
        body.append(f"{inner}state {s.name} = {format_literal(s.value)}")
    for c in agent.children:
        body.extend(_agent_lines(c, depth + 1))
    if not body:
        return [f"{pad}{head} {{}}"]
    return [f"{pad}{head} {{", *body, f"{pad}}}"]


def print_model(model: Model) -> str:
    blocks: list[str] = []
    for g in model.globals:
        blocks.append("\n".join(_agent_lines(g, 0, prefix="global ")))
    for a in model.agents:
        blocks.append("\n".join(_agent_lines(a, 0)))
    conns = sorted(model.connections, key=Connection.sort_key)
    if conns:
        blocks.append("\n".join(connection_text(c) for c in conns))
    if not blocks:
        return ""
    return "\n\n".join(blocks) + "\n"
