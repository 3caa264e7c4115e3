"""Deterministic discrete-tick execution of AMN models.

Every tick runs the same phases in a fixed order:

1. injected external actions (human decisions such as a veto) are emitted;
2. in-flight objects are delivered, at most ``capacity`` per channel;
3. reliability gating decides whether a delivered object is considered;
4. each instance, in document order, processes its inbox: the first rule
   whose trigger matches an object (and whose guard holds) fires, running its
   actions inline, including candidate selection;
5. (selection happens inside phase 4 when a rule selects);
6. pending veto windows whose time is up commit and run their actions;
7. the tick counter advances.

Objects emitted during phase 4 or 6 travel over the channel and are
delivered in phase 2 of the next tick. Injected objects are delivered in the
same tick. All randomness comes from one seeded ``random.Random``.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
from dataclasses import dataclass, field
from typing import Any, Iterable, Optional

from amn.diagnostics import has_errors
from amn.expr import EvalError, evaluate
from amn.model import (
    Abort,
    AgentDef,
    Commit,
    Connection,
    Delegate,
    Emit,
    EventObjectSpec,
    EventPattern,
    Instancing,
    Modality,
    Model,
    Payload,
    Rule,
    Select,
    SetState,
    Specialization,
    StartWindow,
)

ATTENTION_BASE = 4
RELIABILITY_THRESHOLD = 0.5
DETRIMENT_LIMIT = 0.0
CONFORMITY_TOL = 0.15

TRACE_KINDS = (
    "emitted",
    "delivered",
    "dropped",
    "rule_fired",
    "state_changed",
    "candidate_selected",
    "window_opened",
    "window_vetoed",
    "window_committed",
    "instruction_followed",
    "instruction_ignored",
)


class ValidationRequired(Exception):
    def __init__(self, diagnostics):
        super().__init__(f"model has {sum(d.is_error for d in diagnostics)} validation error(s)")
        self.diagnostics = diagnostics


class CardinalityExceeded(Exception):
    pass


class MissingConcept(Exception):
    pass


class TraceModelMismatch(Exception):
    pass


class InjectionError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Configuration and world state
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RunConfig:
    attention_base: int = ATTENTION_BASE
    reliability_threshold: float = RELIABILITY_THRESHOLD
    stochastic: bool = False
    overflow: str = "drop_newest"  # or "queue"
    detriment_limit: float = DETRIMENT_LIMIT
    instance_counts: tuple[tuple[str, int], ...] = ()

    def __post_init__(self) -> None:
        if self.overflow not in ("drop_newest", "queue"):
            raise ValueError(f"overflow must be drop_newest or queue, not {self.overflow!r}")
        if self.attention_base < 1:
            raise ValueError("attention_base must be positive")


@dataclass
class DeliveredObject:
    id: str
    spec: Specialization
    quant: Optional[str]
    media: Optional[Modality]
    payload: dict
    sender: str  # instance id
    sender_path: str  # agent path of the sender
    channel: int  # connection index, -1 for none
    sensor: str

    @property
    def label(self) -> str:
        text = str(self.spec)
        return text + "/" + self.quant if self.quant else text


@dataclass
class AgentInstance:
    id: str
    path: str
    index: int
    agent: AgentDef
    states: dict
    inbox: list = field(default_factory=list)


@dataclass
class ChannelState:
    connection: int
    receiver: str  # instance id
    sensor: str
    capacity: Optional[int]  # None = unlimited
    overflow: str
    in_flight: list = field(default_factory=list)


@dataclass
class VetoWindow:
    id: str
    owner: str
    opened_at: int
    duration: int
    on_expiry: tuple
    context: dict
    vetoed: bool = False


@dataclass
class World:
    model: Model
    config: RunConfig
    instances: list[AgentInstance]
    channels: list[ChannelState]
    rng_seed: int
    rng: random.Random
    tick: int = 0
    pending_windows: list[VetoWindow] = field(default_factory=list)
    seq: int = 0
    emission_counter: int = 0
    window_counter: int = 0

    def instance(self, iid: str) -> AgentInstance:
        for inst in self.instances:
            if inst.id == iid:
                return inst
        raise KeyError(iid)

    def in_flight(self) -> int:
        return sum(len(c.in_flight) for c in self.channels)


@dataclass(frozen=True)
class TraceEvent:
    tick: int
    seq: int
    kind: str
    subject: str
    object: Optional[str]
    detail: dict

    def to_json(self) -> str:
        return json.dumps(
            {
                "tick": self.tick,
                "seq": self.seq,
                "kind": self.kind,
                "subject": self.subject,
                "object": self.object,
                "detail": self.detail,
            },
            sort_keys=False,
            separators=(",", ":"),
        )

    @classmethod
    def from_dict(cls, d: dict) -> "TraceEvent":
        return cls(d["tick"], d["seq"], d["kind"], d["subject"], d.get("object"), d.get("detail", {}))


@dataclass
class Trace:
    events: list[TraceEvent]
    model_digest: str
    final_tick: int
    in_flight: dict  # channel key -> objects still travelling at the end

    def to_jsonl(self) -> str:
        return "".join(e.to_json() + "\n" for e in self.events)

    def of_kind(self, *kinds: str) -> list[TraceEvent]:
        return [e for e in self.events if e.kind in kinds]


def model_digest(model: Model) -> str:
    from amn.dsl import print_model

    return hashlib.sha256(print_model(model).encode("utf-8")).hexdigest()


def _sorted(value: Any) -> Any:
    """Deep copy with dict keys sorted so serialisation is canonical."""
    if isinstance(value, dict):
        return {k: _sorted(value[k]) for k in sorted(value)}
    if isinstance(value, list):
        return [_sorted(v) for v in value]
    return value


# ---------------------------------------------------------------------------
# Instantiation
# ---------------------------------------------------------------------------


def _agent_tree(model: Model) -> list[tuple[str, AgentDef, Instancing]]:
    """(path, effective definition, declared instancing) in document order."""
    out: list[tuple[str, AgentDef, Instancing]] = []

    def rec(prefix: str, agent: AgentDef, seen: frozenset) -> None:
        path = f"{prefix}.{agent.name}" if prefix else agent.name
        instancing = agent.instancing
        eff = agent
        visited = set(seen)
        while eff.kind == "global_ref":
            if eff.ref in visited:
                return
            visited.add(eff.ref)
            eff = model.global_def(eff.ref)
            if instancing.mode == "single":
                instancing = eff.instancing
        out.append((path, eff, instancing))
        for c in eff.children:
            rec(path, c, frozenset(visited))

    for a in model.agents:
        rec("", a, frozenset())
    return out


def capacity_for(attention: Optional[float], base: int = ATTENTION_BASE) -> Optional[int]:
    if attention is None:
        return None
    return max(1, math.ceil(attention * base))


def instantiate(model: Model, seed: int = 0, config: RunConfig = RunConfig()) -> World:
    """Expand the model into a world at tick 0.

    Multi-instance agents get ``min`` instances unless ``config`` asks for more.
    """
    from amn.validator import validate

    diags = validate(model)
    if has_errors(diags):
        raise ValidationRequired(diags)

    counts = dict(config.instance_counts)
    instances: list[AgentInstance] = []
    by_path: dict[str, list[AgentInstance]] = {}
    for path, agent, inst in _agent_tree(model):
        if inst.mode == "single":
            n = counts.get(path, 1)
            if n != 1:
                raise CardinalityExceeded(f"{path} is single-instance; requested {n}")
            ids = [path]
        else:
            n = counts.get(path, inst.min)
            if n < inst.min or (inst.max is not None and n > inst.max):
                raise CardinalityExceeded(f"{path} allows {inst}, requested {n}")
            ids = [f"{path}#{i}" for i in range(n)]
        for i, iid in enumerate(ids):
            ai = AgentInstance(iid, path, i, agent, dict(agent.behavior.state_map()))
            instances.append(ai)
            by_path.setdefault(path, []).append(ai)

    sharers: dict[tuple[str, str], list[str]] = {}
    for path, agent, _ in _agent_tree(model):
        for sh in agent.shares:
            sharers.setdefault((sh.path, sh.sensor), []).append(path)

    channels: list[ChannelState] = []
    for ci, conn in enumerate(model.connections):
        cap = capacity_for(conn.params.attention, config.attention_base)
        receivers = [conn.target.path] + sharers.get((conn.target.path, conn.target.name), [])
        for rpath in receivers:
            for ai in by_path.get(rpath, []):
                channels.append(ChannelState(ci, ai.id, conn.target.name, cap, config.overflow))
    return World(model, config, instances, channels, seed, random.Random(seed))


# ---------------------------------------------------------------------------
# Injected actions
# ---------------------------------------------------------------------------

_SHORTHANDS = {
    "veto": EventObjectSpec(Specialization("reaction", "veto"), "single"),
    "approve": EventObjectSpec(Specialization("reaction", "acceptance"), "single"),
    "refuse": EventObjectSpec(Specialization("reaction", "refusal"), "single"),
    "request": EventObjectSpec(Specialization("generic", "request"), "single"),
}


@dataclass(frozen=True)
class InjectedAction:
    """An external decision performed by ``agent`` (a path or instance id)."""

    agent: str
    obj: EventObjectSpec
    payload: Optional[Payload] = None
    actuator: Optional[str] = None

    @classmethod
    def shorthand(cls, agent: str, action: str) -> "InjectedAction":
        if action not in _SHORTHANDS:
            raise InjectionError(f"unknown action {action!r}")
        return cls(agent, _SHORTHANDS[action])


def parse_injection_line(line: str) -> tuple[int, InjectedAction]:
    """``tick=<n> <agent-path> <action> [args]``.

    Actions: ``veto``, ``approve``, ``refuse``, ``request`` or
    ``emit <objspec> [{payload}] [via <actuator>]``.
    """
    from amn.dsl.parser import parse_injected_emit

    parts = line.split(None, 3)
    if len(parts) < 3 or not parts[0].startswith("tick="):
        raise InjectionError(f"expected 'tick=<n> <agent> <action> [args]', got {line!r}")
    try:
        tick = int(parts[0][5:])
    except ValueError:
        raise InjectionError(f"bad tick in {line!r}") from None
    if tick < 0:
        raise InjectionError(f"negative tick in {line!r}")
    agent, action = parts[1], parts[2]
    if action == "emit":
        if len(parts) < 4:
            raise InjectionError(f"emit needs an object: {line!r}")
        try:
            obj, payload, via = parse_injected_emit(parts[3])
        except ValueError as exc:
            raise InjectionError(str(exc)) from None
        return tick, InjectedAction(agent, obj, payload, via)
    if len(parts) > 3:
        raise InjectionError(f"{action} takes no arguments: {line!r}")
    return tick, InjectedAction.shorthand(agent, action)


def parse_injections(text: str) -> list[tuple[int, InjectedAction]]:
    out = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#") or line.startswith("//"):
            continue
        out.append(parse_injection_line(line))
    return out


# ---------------------------------------------------------------------------
# Conflict resolution
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Proposal:
    candidate: str
    own: float
    group: float


@dataclass(frozen=True)
class Resolution:
    candidate: str
    warning: Optional[str] = None


def _argmax(items: list[Proposal], key) -> Proposal:
    return min(items, key=lambda p: (-key(p), p.candidate))


def resolve_conflict(
    concept: Optional[str], proposals: Iterable[Proposal], detriment_limit: float = DETRIMENT_LIMIT
) -> Resolution:
    """Pick a candidate according to a social self-concept.

    Ties go to the lowest candidate id. If the concept's constraint excludes
    every candidate, the unconstrained optimum is chosen with a warning.
    """
    props = list(proposals)
    if not props:
        raise ValueError("no proposals")
    if concept is None:
        raise MissingConcept("no social self-concept to resolve the conflict")
    if concept == "self_interested":
        objective, ok = (lambda p: p.own), (lambda p: p.group >= -detriment_limit)
    elif concept == "helpful":
        objective, ok = (lambda p: p.group), (lambda p: p.own >= 0)
    elif concept == "cooperative":
        objective, ok = (lambda p: p.group), (lambda p: True)
    else:
        raise MissingConcept(f"unknown social concept {concept!r}")
    allowed = [p for p in props if ok(p)]
    if allowed:
        return Resolution(_argmax(allowed, objective).candidate)
    return Resolution(_argmax(props, objective).candidate, f"no candidate satisfies the {concept} constraint")


# ---------------------------------------------------------------------------
# Stepping
# ---------------------------------------------------------------------------


class _Stepper:
    """Executes one tick; collects the trace events."""

    def __init__(self, world: World):
        self.w = world
        self.events: list[TraceEvent] = []
        self.tree = {p: a for p, a, _ in _agent_tree(world.model)}

    def trace(self, kind: str, subject: str, obj: Optional[str] = None, **detail: Any) -> None:
        self.w.seq += 1
        self.events.append(TraceEvent(self.w.tick, self.w.seq, kind, subject, obj, _sorted(detail)))

    # -- emission ----------------------------------------------------------

    def emit(self, inst: AgentInstance, actuator: Optional[str], obj: EventObjectSpec, payload: dict,
             injected: bool = False) -> None:
        w = self.w
        w.emission_counter += 1
        eid = f"e{w.emission_counter}"
        routes = [
            (ci, c) for ci, c in enumerate(w.model.connections)
            if c.source.path == inst.path and (actuator is None or c.source.name == actuator)
            and c.accepts(obj.spec, obj.quant)
        ]
        if actuator is None and routes:
            first = routes[0][1].source.name
            routes = [(ci, c) for ci, c in routes if c.source.name == first]
        label = obj.label()
        if not routes:
            self.trace("dropped", inst.id, label, id=eid, reason="no_route", channel=None)
            return
        actuator = routes[0][1].source.name
        iface = inst.agent.interface(actuator, "actuator")
        media = obj.media or (iface.modality if iface else None)
        for ci, _ in routes:
            for ch in w.channels:
                if ch.connection != ci:
                    continue
                item = DeliveredObject(eid, obj.spec, obj.quant, media, payload, inst.id, inst.path, ci, ch.sensor)
                ch.in_flight.append(item)
                extra = {"injected": True} if injected else {}
                self.trace("emitted", inst.id, label, id=eid, channel=ci, to=ch.receiver, payload=payload, **extra)

    # -- phases --------------------------------------------------------------

    def inject(self, injected: list[InjectedAction]) -> None:
        for act in injected:
            targets = [i for i in self.w.instances if i.id == act.agent or i.path == act.agent]
            if not targets:
                self.w.emission_counter += 1
                self.trace("dropped", act.agent, act.obj.label(), id=f"e{self.w.emission_counter}",
                           reason="unknown_agent", channel=None)
                continue
            for inst in targets:
                payload = self.payload(act.payload, inst) if act.payload is not None else {}
                if payload is None:
                    payload = {}
                self.emit(inst, act.actuator, act.obj, payload, injected=True)

    def deliver(self) -> None:
        w = self.w
        for ch in w.channels:
            if not ch.in_flight:
                continue
            limit = len(ch.in_flight) if ch.capacity is None else ch.capacity
            now, rest = ch.in_flight[:limit], ch.in_flight[limit:]
            ch.in_flight = rest if ch.overflow == "queue" else []
            reliability = w.model.connections[ch.connection].params.reliability
            receiver = w.instance(ch.receiver)
            for item in now:
                if reliability is None:
                    considered = True
                elif w.config.stochastic:
                    considered = w.rng.random() < reliability
                else:
                    considered = reliability >= w.config.reliability_threshold
                self.trace("delivered", ch.receiver, item.label, id=item.id, channel=ch.connection,
                           sender=item.sender, considered=considered)
                if considered:
                    receiver.inbox.append(item)
                elif item.spec.variant == "instruction":
                    self.trace("instruction_ignored", ch.receiver, item.label, id=item.id,
                               channel=ch.connection, reason="unreliable")
            if ch.overflow == "drop_newest":
                for item in rest:
                    self.trace("dropped", ch.receiver, item.label, id=item.id, channel=ch.connection,
                               reason="capacity")

    def matches(self, pattern: EventPattern, item: DeliveredObject) -> bool:
        if pattern.spec is not None:
            if pattern.spec.variant != item.spec.variant:
                return False
            if pattern.spec.arg is not None and pattern.spec.arg != item.spec.arg:
                return False
        if pattern.quant is not None and pattern.quant != item.quant:
            return False
        if pattern.media is not None and pattern.media != item.media:
            return False
        if pattern.sensor is not None and pattern.sensor != item.sensor:
            return False
        if pattern.sender is not None:
            s = pattern.sender
            if not (item.sender_path == s or item.sender_path.startswith(s + ".")):
                return False
        return True

    def guard_holds(self, rule: Rule, inst: AgentInstance) -> bool:
        if rule.guard is None:
            return True
        try:
            return evaluate(rule.guard, inst.states) is True
        except EvalError:
            return False

    def evaluate_rules(self) -> None:
        for inst in self.w.instances:
            inbox, inst.inbox = inst.inbox, []
            for item in inbox:
                rule = next(
                    (r for r in inst.agent.behavior.rules
                     if self.matches(r.trigger, item) and self.guard_holds(r, inst)),
                    None,
                )
                if rule is None:
                    if item.spec.variant == "instruction":
                        self.trace("instruction_ignored", inst.id, item.label, id=item.id,
                                   channel=item.channel, reason="no_rule")
                    continue
                self.trace("rule_fired", inst.id, rule.name, id=item.id)
                if item.spec.variant == "instruction":
                    self.trace("instruction_followed", inst.id, item.label, id=item.id, channel=item.channel)
                ctx = {"trigger": item.payload, "selected": None}
                self.run_actions(inst, rule.actions, ctx)

    def expire_windows(self) -> None:
        w = self.w
        due = [win for win in w.pending_windows if w.tick >= win.opened_at + win.duration]
        for win in due:
            if win not in w.pending_windows:
                continue  # resolved by an earlier window's actions
            w.pending_windows.remove(win)
            self.trace("window_committed", win.owner, win.id, opened_at=win.opened_at, early=False)
            self.run_actions(w.instance(win.owner), win.on_expiry, win.context)

    # -- actions -------------------------------------------------------------

    def payload(self, entries: Optional[Payload], inst: AgentInstance) -> Optional[dict]:
        out: dict = {}
        for e in entries or ():
            if isinstance(e.value, tuple):
                sub = self.payload(e.value, inst)
                if sub is None:
                    return None
                out[e.name] = sub
            else:
                try:
                    out[e.name] = evaluate(e.value, inst.states)
                except EvalError:
                    return None
        return out

    def select(self, inst: AgentInstance, action: Select, ctx: dict) -> None:
        trigger = ctx["trigger"] or {}
        cands = {k: v for k, v in trigger.items() if isinstance(v, dict)}
        if not cands:
            return
        detail: dict = {"strategy": action.strategy}
        if action.strategy == "first":
            chosen: Optional[str] = next(iter(cands))
        elif action.strategy == "named":
            chosen = action.name if action.name in cands else None
            if chosen is None:
                return
        else:
            own_fn = inst.agent.behavior.utility
            group_fn = self.group_utility(inst.path) or own_fn
            props = [
                Proposal(cid,
                         own_fn.evaluate(m) if own_fn else 0.0,
                         group_fn.evaluate(m) if group_fn else 0.0)
                for cid, m in sorted(cands.items())
            ]
            concept = self.social_concept(inst.path)
            if concept is None:
                res = Resolution(_argmax(props, lambda p: p.own).candidate)
            else:
                res = resolve_conflict(concept, props, self.w.config.detriment_limit)
            chosen = res.candidate
            picked = next(p for p in props if p.candidate == chosen)
            detail.update(own=picked.own, group=picked.group, concept=concept)
            if res.warning:
                detail["warning"] = res.warning
        ctx["selected"] = {chosen: cands[chosen]}
        self.trace("candidate_selected", inst.id, chosen, **detail)

    def ancestors(self, path: str) -> list[str]:
        parts = path.split(".")
        return [".".join(parts[:i]) for i in range(len(parts) - 1, 0, -1)]

    def group_utility(self, path: str):
        for p in self.ancestors(path):
            u = self.tree[p].behavior.utility
            if u is not None:
                return u
        return None

    def social_concept(self, path: str) -> Optional[str]:
        for p in [path] + self.ancestors(path):
            c = self.tree[p].nature.one("social")
            if c is not None:
                return c
        return None

    def run_actions(self, inst: AgentInstance, actions, ctx: dict) -> None:
        w = self.w
        for a in actions:
            if isinstance(a, Emit):
                if a.payload is not None:
                    payload = self.payload(a.payload, inst)
                    if payload is None:
                        w.emission_counter += 1
                        self.trace("dropped", inst.id, a.obj.label(), id=f"e{w.emission_counter}",
                                   reason="bad_payload", channel=None)
                        continue
                elif ctx["selected"] is not None:
                    payload = ctx["selected"]
                else:
                    payload = ctx["trigger"] or {}
                self.emit(inst, a.actuator, a.obj, payload)
            elif isinstance(a, SetState):
                try:
                    value = evaluate(a.expr, inst.states)
                except EvalError as exc:
                    self.trace("state_changed", inst.id, a.name, error=str(exc))
                    continue
                old = inst.states.get(a.name)
                inst.states[a.name] = value
                self.trace("state_changed", inst.id, a.name, old=old, new=value)
            elif isinstance(a, Select):
                self.select(inst, a, ctx)
            elif isinstance(a, StartWindow):
                w.window_counter += 1
                win = VetoWindow(f"w{w.window_counter}", inst.id, w.tick, a.duration, a.on_expiry,
                                 {"trigger": ctx["trigger"], "selected": ctx["selected"]})
                w.pending_windows.append(win)
                self.trace("window_opened", inst.id, win.id, duration=a.duration, expires=w.tick + a.duration)
            elif isinstance(a, Commit):
                for win in [x for x in w.pending_windows if x.owner == inst.id]:
                    if win not in w.pending_windows:
                        continue  # resolved by an earlier window's actions
                    w.pending_windows.remove(win)
                    self.trace("window_committed", inst.id, win.id, opened_at=win.opened_at, early=True)
                    self.run_actions(inst, win.on_expiry, win.context)
            elif isinstance(a, Abort):
                for win in [x for x in w.pending_windows if x.owner == inst.id]:
                    if win not in w.pending_windows:
                        continue
                    w.pending_windows.remove(win)
                    win.vetoed = True
                    self.trace("window_vetoed", inst.id, win.id, opened_at=win.opened_at)
            elif isinstance(a, Delegate):
                branch = a.then if w.rng.random() < a.probability else a.otherwise
                self.run_actions(inst, branch, ctx)


def step(world: World, injected: Iterable[InjectedAction] = ()) -> tuple[World, list[TraceEvent]]:
    """Advance ``world`` by one tick (in place) and return it with the tick's events."""
    s = _Stepper(world)
    s.inject(list(injected))
    s.deliver()
    s.evaluate_rules()
    s.expire_windows()
    world.tick += 1
    return world, s.events


def quiescent(world: World) -> bool:
    return world.in_flight() == 0 and not world.pending_windows


def run(
    model: Model,
    seed: int = 0,
    max_ticks: int = 30,
    injections: Iterable[tuple[int, InjectedAction]] = (),
    config: RunConfig = RunConfig(),
) -> Trace:
    """Run until ``max_ticks`` or quiescence (nothing travelling, no windows, no injections left)."""
    if max_ticks < 1:
        raise ValueError("max_ticks must be at least 1")
    world = instantiate(model, seed, config)
    schedule: dict[int, list[InjectedAction]] = {}
    for tick, act in injections:
        schedule.setdefault(tick, []).append(act)
    events: list[TraceEvent] = []
    while world.tick < max_ticks:
        if quiescent(world) and not any(t >= world.tick for t in schedule):
            break
        _, evs = step(world, schedule.get(world.tick, []))
        events.extend(evs)
    in_flight = {f"{c.connection}:{c.receiver}": len(c.in_flight) for c in world.channels if c.in_flight}
    return Trace(events, model_digest(model), world.tick, in_flight)


def read_trace(text: str) -> list[TraceEvent]:
    return [TraceEvent.from_dict(json.loads(line)) for line in text.splitlines() if line.strip()]


# ---------------------------------------------------------------------------
# Trace checks
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ChannelConformity:
    connection: int
    channel: str
    declared: float
    measured: Optional[float]
    delivered: int
    flagged: bool


@dataclass(frozen=True)
class ConformanceReport:
    channels: tuple[ChannelConformity, ...]
    notification_violations: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.notification_violations and not any(c.flagged for c in self.channels)

    def to_dict(self) -> dict:
        return {
            "schema": "amn.conformance/1",
            "ok": self.ok,
            "channels": [
                {"connection": c.connection, "channel": c.channel, "declared": c.declared,
                 "measured": c.measured, "delivered": c.delivered, "flagged": c.flagged}
                for c in self.channels
            ],
            "notification_violations": list(self.notification_violations),
        }


def _instance_ids(model: Model) -> set[str]:
    return {path for path, _, _ in _agent_tree(model)}


def check_trace(trace: "Trace | list[TraceEvent]", model: Model, tolerance: float = CONFORMITY_TOL) -> ConformanceReport:
    """Measure conformity per channel and re-check notification discipline."""
    from amn.dsl import connection_text

    if isinstance(trace, Trace):
        if trace.model_digest != model_digest(model):
            raise TraceModelMismatch("trace was produced by a different model")
        events = trace.events
    else:
        events = list(trace)
    known = _instance_ids(model)
    for e in events:
        if e.subject.split("#")[0] not in known:
            raise TraceModelMismatch(f"trace mentions unknown agent {e.subject!r}")

    channels = []
    for ci, conn in enumerate(model.connections):
        declared = conn.params.conformity
        if declared is None:
            continue
        delivered = sum(
            1 for e in events
            if e.kind == "delivered" and e.detail.get("channel") == ci and str(e.object).startswith("instruction")
        )
        followed = sum(1 for e in events if e.kind == "instruction_followed" and e.detail.get("channel") == ci)
        measured = followed / delivered if delivered else None
        flagged = measured is not None and abs(measured - declared) > tolerance + 1e-12
        channels.append(ChannelConformity(ci, connection_text(conn), declared, measured, delivered, flagged))

    violations = []
    modes: dict[str, set[str]] = {}
    for conn in model.connections:
        for o in conn.carries:
            if o.spec.variant == "notification" and o.spec.arg:
                modes.setdefault(conn.source.path, set()).add(o.spec.arg)
    for path in sorted(modes):
        mine = [e for e in events if e.subject.split("#")[0] == path]
        if "always" in modes[path]:
            decisions = sum(1 for e in mine if e.kind == "candidate_selected")
            notes = len({e.detail.get("id") for e in mine
                         if e.kind == "emitted" and e.object and e.object.startswith("notification(always)")})
            if notes < decisions:
                violations.append(f"{path}: {decisions} decision(s) but only {notes} always-mode notification(s)")
        if "on_request" in modes[path]:
            requests = 0
            sent = 0
            seen_ids: set = set()
            for e in events:
                if e.kind == "delivered" and e.subject.split("#")[0] == path and e.object \
                        and e.object.startswith('generic("request")') and e.detail.get("considered"):
                    requests += 1
                if e.kind == "emitted" and e.subject.split("#")[0] == path and e.object \
                        and e.object.startswith("notification(on_request)") and e.detail.get("id") not in seen_ids:
                    seen_ids.add(e.detail.get("id"))
                    sent += 1
                    if sent > requests:
                        violations.append(f"{path}: on-request notification at tick {e.tick} without a request")
    return ConformanceReport(tuple(channels), tuple(violations))


def conservation(trace: Trace) -> dict[str, tuple[int, int, int, int]]:
    """Per channel key ``conn:receiver``: (emitted, delivered, dropped, in flight)."""
    counts: dict[str, list[int]] = {}
    for e in trace.events:
        ch = e.detail.get("channel")
        if ch is None or e.kind not in ("emitted", "delivered", "dropped"):
            continue
        receiver = e.detail["to"] if e.kind == "emitted" else e.subject
        row = counts.setdefault(f"{ch}:{receiver}", [0, 0, 0, 0])
        row[("emitted", "delivered", "dropped").index(e.kind)] += 1
    for key, n in trace.in_flight.items():
        counts.setdefault(key, [0, 0, 0, 0])[3] = n
    return {k: tuple(v) for k, v in sorted(counts.items())}
