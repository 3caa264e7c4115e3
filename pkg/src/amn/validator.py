"""Conformance checks for AMN models.

Every finding carries a code from :data:`CATALOGUE`. ``AMN-DR<k>-<nn>`` codes
are grouped by the design requirement they enforce; ``AMN-GEN-<nn>`` codes
cover general well-formedness. The validator never raises on a parsed model.
"""

from __future__ import annotations

from typing import Iterator, Optional

from amn.diagnostics import Diagnostic, sort_diagnostics
from amn.expr import names
from amn.model import (
    INSTRUCTION_KINDS,
    NOTIFICATION_MODES,
    QUANTS,
    REACTION_KINDS,
    AgentDef,
    Delegate,
    Emit,
    EventObjectSpec,
    Model,
    ResolveError,
    SetState,
    SourceSpan,
    Specialization,
    StartWindow,
    compatible,
    global_cycle,
    resolve,
)

# code -> (severity, summary)
CATALOGUE: dict[str, tuple[str, str]] = {
    "AMN-DR1-01": ("error", "containment cycle through global agent references"),
    "AMN-DR1-02": ("error", "calling agent declares sub-agents"),
    "AMN-DR1-03": ("error", "global reference does not resolve to a global agent"),
    "AMN-DR2-01": ("error", "connection joins interfaces with incompatible modalities"),
    "AMN-DR2-02": ("error", "event object media differs from the emitting actuator's modality"),
    "AMN-DR2-03": ("error", "malformed modality (generic without parameter, or parameter on a sense)"),
    "AMN-DR3-01": ("error", "connection source is not an actuator or target is not a sensor"),
    "AMN-DR4-01": ("error", "rule refers to an interface the agent does not have"),
    "AMN-DR4-02": ("error", "rule refers to an undeclared state"),
    "AMN-DR4-03": ("error", "rule action argument out of range"),
    "AMN-DR5-01": ("error", "two goals of one agent share a priority"),
    "AMN-DR5-02": ("warning", "utility metric is produced by no inbound metric/candidates object or state"),
    "AMN-DR6-01": ("error", "attention outside [0, 1]"),
    "AMN-DR7-01": ("error", "more than one social/ethical/type/archetype value on one agent"),
    "AMN-DR7-02": ("error", "invalid multi-instance cardinality (min > max or max < 1)"),
    "AMN-DR7-03": ("warning", "cooperative agent whose sub-agents are all socially self-interested"),
    "AMN-DR8-01": ("error", "reliability, conformity or security outside [0, 1]"),
    "AMN-DR8-02": ("warning", "security declared on a connection that carries no event objects"),
    "AMN-DR9-01": ("error", "malformed task object (tasks take no argument)"),
    "AMN-DR10-01": ("error", "reaction or instruction without a valid kind"),
    "AMN-DR11-01": ("error", "event object without quantitative indicator, or malformed candidates object"),
    "AMN-DR12-01": ("error", "notification without a valid mode"),
    "AMN-GEN-01": ("error", "duplicate name in one scope"),
    "AMN-GEN-02": ("error", "connection or share endpoint does not resolve"),
    "AMN-GEN-03": ("error", "malformed generic or metric object"),
}


class _Collector:
    def __init__(self) -> None:
        self.items: list[Diagnostic] = []

    def add(self, code: str, message: str, span: Optional[SourceSpan], related=()) -> None:
        severity = CATALOGUE[code][0]
        self.items.append(Diagnostic(code, severity, message, span, tuple(r for r in related if r)))


# ---------------------------------------------------------------------------
# Event object checks
# ---------------------------------------------------------------------------


def _check_spec(out: _Collector, spec: Specialization, span, where: str) -> None:
    v, arg = spec.variant, spec.arg
    if v == "reaction" and arg not in REACTION_KINDS:
        out.add("AMN-DR10-01", f"{where}: reaction needs one of {', '.join(REACTION_KINDS)}, got {arg!r}", span)
    elif v == "instruction" and not arg:
        out.add("AMN-DR10-01", f"{where}: instruction needs a kind ({', '.join(INSTRUCTION_KINDS)} or custom)", span)
    elif v == "notification" and arg not in NOTIFICATION_MODES:
        out.add("AMN-DR12-01", f"{where}: notification needs one of {', '.join(NOTIFICATION_MODES)}, got {arg!r}", span)
    elif v == "task" and arg is not None:
        out.add("AMN-DR9-01", f"{where}: task objects take no argument, got {arg!r}", span)
    elif v == "candidates" and arg is not None:
        out.add("AMN-DR11-01", f"{where}: candidates scope is given by /single|/selection|/all, not {arg!r}", span)
    elif v == "generic" and not arg:
        out.add("AMN-GEN-03", f"{where}: generic object needs a tag string", span)
    elif v == "metric" and arg is not None:
        out.add("AMN-GEN-03", f"{where}: metric objects take no argument, got {arg!r}", span)


def _check_objspec(out: _Collector, obj: EventObjectSpec, span, where: str) -> None:
    span = obj.span or span
    _check_spec(out, obj.spec, span, where)
    if obj.quant is None or obj.quant not in QUANTS:
        out.add("AMN-DR11-01", f"{where}: {obj.label()} lacks a quantitative indicator (/single, /selection, /all)", span)
    if obj.media is not None:
        _check_modality(out, obj.media, span, where)
    if obj.schema:
        seen: set[str] = set()
        for name, _ in obj.schema:
            if name in seen:
                out.add("AMN-GEN-01", f"{where}: payload field {name!r} declared twice", span)
            seen.add(name)


def _check_modality(out: _Collector, modality, span, where: str) -> None:
    if modality.base == "generic" and not modality.parameter:
        out.add("AMN-DR2-03", f"{where}: generic modality needs a parameter, e.g. generic(\"email\")", span)
    elif modality.base != "generic" and modality.parameter is not None:
        out.add("AMN-DR2-03", f"{where}: {modality.base} takes no parameter", span)


# ---------------------------------------------------------------------------
# Agent checks
# ---------------------------------------------------------------------------


def _dupes(out: _Collector, items, key, what: str, where: str) -> None:
    first: dict = {}
    for item in items:
        k = key(item)
        if k in first:
            out.add("AMN-GEN-01", f"{where}: {what} {k!r} declared more than once",
                    getattr(item, "span", None), [getattr(first[k], "span", None)])
        else:
            first[k] = item


def _walk_actions(actions) -> Iterator:
    for a in actions:
        yield a
        if isinstance(a, StartWindow):
            yield from _walk_actions(a.on_expiry)
        elif isinstance(a, Delegate):
            yield from _walk_actions(a.then)
            yield from _walk_actions(a.otherwise)


def _check_agent(out: _Collector, model: Model, path: str, agent: AgentDef, produced: set[str]) -> None:
    where = path
    span = agent.span
    if agent.kind == "global_ref":
        try:
            model.global_def(agent.ref)
        except ResolveError as exc:
            out.add("AMN-DR1-03", f"{where}: {exc}", span)
        if agent.instancing.mode == "multi":
            _check_card(out, agent, where)
        return

    if agent.kind == "calling" and agent.children:
        out.add("AMN-DR1-02", f"{where}: calling agents cannot contain sub-agents "
                f"({len(agent.children)} declared)", span, [c.span for c in agent.children])
    if agent.instancing.mode == "multi":
        _check_card(out, agent, where)

    _dupes(out, agent.sensors, lambda i: i.name, "sensor", where)
    _dupes(out, agent.actuators, lambda i: i.name, "actuator", where)
    _dupes(out, agent.children, lambda c: c.name, "sub-agent", where)
    for iface in agent.sensors + agent.actuators:
        _check_modality(out, iface.modality, iface.span, f"{where}.{iface.name}")

    for sh in agent.shares:
        target = _try_resolve(model, sh.path)
        if target is None or target.interface(sh.sensor, "sensor") is None:
            out.add("AMN-GEN-02", f"{where}: shared sensor {sh.path}.{sh.sensor} does not exist", sh.span or span)

    n = agent.nature
    for attr, label in (("social", "social self-concept"), ("ethics", "ethical self-concept"),
                        ("autonomy_type", "autonomy type"), ("archetype", "processing archetype")):
        values = getattr(n, attr)
        if len(values) > 1:
            out.add("AMN-DR7-01", f"{where}: {len(values)} {label} values ({', '.join(values)}); at most one allowed", span)

    if n.one("social") == "cooperative" and agent.children:
        kids = [_effective(model, c) for c in agent.children]
        if all(k is not None and k.nature.one("social") == "self_interested" for k in kids):
            out.add("AMN-DR7-03", f"{where}: cooperative agent whose sub-agents are all socially self-interested "
                    "(heuristic consistency check)", span)

    b = agent.behavior
    _dupes(out, b.rules, lambda r: r.name, "rule", where)
    _dupes(out, b.states, lambda s: s.name, "state", where)
    _dupes(out, b.goals, lambda g: g.name, "goal", where)
    seen_prio: dict[int, object] = {}
    for g in b.goals:
        if g.priority in seen_prio:
            out.add("AMN-DR5-01", f"{where}: goals {seen_prio[g.priority].name!r} and {g.name!r} share priority "
                    f"{g.priority}", g.span or span, [seen_prio[g.priority].span])
        else:
            seen_prio[g.priority] = g
    if b.utility is not None:
        metrics = [m for m, _ in b.utility.terms]
        for m in sorted({m for m in metrics if metrics.count(m) > 1}):
            out.add("AMN-GEN-01", f"{where}: utility metric {m!r} declared more than once", b.utility.span or span)
        states = {s.name for s in b.states}
        for metric, _ in b.utility.terms:
            if metric not in states and metric not in produced:
                out.add("AMN-DR5-02", f"{where}: utility metric {metric!r} is neither a state nor a field of any "
                        "inbound metric/candidates object", b.utility.span or span)

    states = {s.name for s in b.states}
    for rule in b.rules:
        rwhere = f"{where} rule {rule.name}"
        rspan = rule.span or span
        trig = rule.trigger
        if trig.spec is not None:
            _check_spec(out, trig.spec, rspan, rwhere)
        if trig.media is not None:
            _check_modality(out, trig.media, rspan, rwhere)
        if trig.sensor is not None and agent.interface(trig.sensor, "sensor") is None:
            out.add("AMN-DR4-01", f"{rwhere}: trigger names sensor {trig.sensor!r} which {where} does not have", rspan)
        if rule.guard is not None:
            for name in sorted(set(names(rule.guard)) - states):
                out.add("AMN-DR4-02", f"{rwhere}: guard uses undeclared state {name!r}", rspan)
        if not rule.actions:
            out.add("AMN-DR4-03", f"{rwhere}: a rule needs at least one action", rspan)
        for act in _walk_actions(rule.actions):
            if isinstance(act, Emit):
                iface = agent.interface(act.actuator, "actuator")
                if iface is None:
                    out.add("AMN-DR4-01", f"{rwhere}: emits on actuator {act.actuator!r} which {where} does not have", rspan)
                elif act.obj.media is not None and act.obj.media != iface.modality:
                    out.add("AMN-DR2-02", f"{rwhere}: object media {act.obj.media} differs from actuator "
                            f"{act.actuator} ({iface.modality})", rspan)
                _check_objspec(out, act.obj, rspan, rwhere)
                for expr in _payload_exprs(act.payload or ()):
                    for name in sorted(set(names(expr)) - states):
                        out.add("AMN-DR4-02", f"{rwhere}: payload uses undeclared state {name!r}", rspan)
            elif isinstance(act, SetState):
                for name in sorted(({act.name} | set(names(act.expr))) - states):
                    out.add("AMN-DR4-02", f"{rwhere}: set uses undeclared state {name!r}", rspan)
            elif isinstance(act, StartWindow) and act.duration < 1:
                out.add("AMN-DR4-03", f"{rwhere}: window duration must be at least 1 tick", rspan)
            elif isinstance(act, Delegate) and not 0.0 <= act.probability <= 1.0:
                out.add("AMN-DR4-03", f"{rwhere}: delegation probability {act.probability:g} outside [0, 1]", rspan)

    for child in agent.children:
        _check_agent(out, model, f"{path}.{child.name}", child, _produced_for(model, f"{path}.{child.name}"))


def _payload_exprs(entries) -> Iterator:
    for e in entries:
        if isinstance(e.value, tuple):
            yield from _payload_exprs(e.value)
        else:
            yield e.value


def _check_card(out: _Collector, agent: AgentDef, where: str) -> None:
    inst = agent.instancing
    if inst.max is not None and (inst.min > inst.max or inst.max < 1):
        out.add("AMN-DR7-02", f"{where}: cardinality [{inst.min}..{inst.max}] is empty", agent.span)


def _effective(model: Model, agent: AgentDef) -> Optional[AgentDef]:
    seen = set()
    while agent.kind == "global_ref":
        if agent.ref in seen:
            return None
        seen.add(agent.ref)
        try:
            agent = model.global_def(agent.ref)
        except ResolveError:
            return None
    return agent


def _try_resolve(model: Model, path: str) -> Optional[AgentDef]:
    try:
        return resolve(model, path)
    except ResolveError:
        return None


def _produced_for(model: Model, path: str) -> set[str]:
    """Payload fields of metric/candidates objects flowing into ``path`` or below."""
    fields: set[str] = set()
    for c in model.connections:
        t = c.target.path
        if t == path or t.startswith(path + "."):
            for obj in c.carries:
                if obj.spec.variant in ("metric", "candidates") and obj.schema:
                    fields.update(name for name, _ in obj.schema)
    return fields


# ---------------------------------------------------------------------------
# Connections
# ---------------------------------------------------------------------------


def _check_connection(out: _Collector, model: Model, conn) -> None:
    where = f"connection {conn.source} -> {conn.target}"
    span = conn.span
    src_agent = _try_resolve(model, conn.source.path)
    dst_agent = _try_resolve(model, conn.target.path)
    act = sen = None
    if src_agent is None:
        out.add("AMN-GEN-02", f"{where}: no agent {conn.source.path!r}", span)
    else:
        act = src_agent.interface(conn.source.name, "actuator")
        if act is None:
            if src_agent.interface(conn.source.name, "sensor") is not None:
                out.add("AMN-DR3-01", f"{where}: source {conn.source} is a sensor; connections run from actuators", span)
            else:
                out.add("AMN-GEN-02", f"{where}: {conn.source.path} has no interface {conn.source.name!r}", span)
    if dst_agent is None:
        out.add("AMN-GEN-02", f"{where}: no agent {conn.target.path!r}", span)
    else:
        sen = dst_agent.interface(conn.target.name, "sensor")
        if sen is None:
            if dst_agent.interface(conn.target.name, "actuator") is not None:
                out.add("AMN-DR3-01", f"{where}: target {conn.target} is an actuator; connections end at sensors", span)
            else:
                out.add("AMN-GEN-02", f"{where}: {conn.target.path} has no interface {conn.target.name!r}", span)
    if act is not None and sen is not None and not compatible(act.modality, sen.modality):
        out.add("AMN-DR2-01", f"{where}: {act.modality} actuator cannot reach {sen.modality} sensor", span,
                [act.span, sen.span])

    p = conn.params
    if p.attention is not None and not 0.0 <= p.attention <= 1.0:
        out.add("AMN-DR6-01", f"{where}: attention {p.attention * 100:g}% outside 0..100%", span)
    for name in ("reliability", "conformity", "security"):
        value = getattr(p, name)
        if value is not None and not 0.0 <= value <= 1.0:
            out.add("AMN-DR8-01", f"{where}: {name} {value * 100:g}% outside 0..100%", span)
    if p.security is not None and not conn.carries:
        out.add("AMN-DR8-02", f"{where}: security declared but the connection carries no event objects", span)

    for obj in conn.carries:
        _check_objspec(out, obj, span, where)
        if act is not None and obj.media is not None and obj.media != act.modality:
            out.add("AMN-DR2-02", f"{where}: object {obj.label()} has media {obj.media} but actuator "
                    f"{conn.source} is {act.modality}", obj.span or span)


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


def validate(model: Model) -> list[Diagnostic]:
    """All findings for ``model``, sorted by (file, span, code)."""
    out = _Collector()

    _dupes(out, model.agents, lambda a: a.name, "root agent", "model")
    _dupes(out, model.globals, lambda a: a.name, "global agent", "model")

    cycle = global_cycle(model)
    if cycle:
        culprit = next((g for g in model.globals if g.name == cycle[0]), None)
        out.add("AMN-DR1-01", "containment cycle: " + " -> ".join(cycle), culprit.span if culprit else None)

    for g in model.globals:
        _check_agent(out, model, g.name, g, set())
    for a in model.agents:
        _check_agent(out, model, a.name, a, _produced_for(model, a.name))

    for conn in model.connections:
        _check_connection(out, model, conn)

    return sort_diagnostics(_unique(out.items))


def _unique(items: list[Diagnostic]) -> list[Diagnostic]:
    seen = set()
    out = []
    for d in items:
        key = (d.code, d.message, d.sort_key())
        if key not in seen:
            seen.add(key)
            out.append(d)
    return out


def error_count(diags: list[Diagnostic]) -> int:
    return sum(d.is_error for d in diags)


__all__ = ["CATALOGUE", "validate", "error_count"]
