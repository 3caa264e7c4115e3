"""Core AMN domain types and structure-preserving construction operations.

All values are frozen dataclasses holding tuples, so a Model can be shared
freely; every construction operation returns a new Model. Source spans are
carried on elements but excluded from equality, which makes ``==`` the
structural comparison used by the round-trip tests.

The dataclasses deliberately accept ill-formed content (duplicate names,
out-of-range parameters, several social concepts, ...) so that a parsed file
can be represented faithfully and reported on by the validator. The
construction operations in this module (:func:`compose`, :func:`connect`)
refuse to create such content.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterator, Literal, Optional, Union

from amn.expr import Expr

# ---------------------------------------------------------------------------
# Vocabularies
# ---------------------------------------------------------------------------

MODALITY_BASES = ("visual", "auditory", "olfactory", "gustatory", "tactile", "generic")
SOCIAL_CONCEPTS = ("self_interested", "helpful", "cooperative")
ETHICAL_CONCEPTS = ("non_ethical", "implicit", "explicit", "full")
AUTONOMY_TYPES = (
    "interpretation",
    "know_how",
    "plan",
    "goal",
    "reasoning",
    "monitoring",
    "skill",
    "resource",
    "condition",
)
ARCHETYPES = ("reflex", "internal_state", "goal_based", "utility_based")
QUANTS = ("single", "selection", "all")
SPEC_VARIANTS = ("generic", "reaction", "task", "candidates", "instruction", "notification", "metric")
REACTION_KINDS = ("acceptance", "refusal", "veto")
INSTRUCTION_KINDS = ("instantiate", "suspend", "abort")
NOTIFICATION_MODES = ("discretion", "on_request", "always")
PRIMITIVE_TYPES = ("number", "string", "boolean")
SELECT_STRATEGIES = ("utility", "first", "named")
PARAM_NAMES = ("attention", "reliability", "conformity", "security")

# Suggested vocabulary for ``functional`` tags. "human" is the one tag the
# toolchain interprets (it separates human from machine agents).
FUNCTIONAL_SUGGESTIONS = ("human", "filter", "transformer", "pattern_detector", "analyzer")

Literal_ = Union[int, float, str, bool]
Direction = Literal["sensor", "actuator"]


# ---------------------------------------------------------------------------
# Errors
# ---------------------------------------------------------------------------


class StructureError(Exception):
    """A construction operation would break a structural invariant."""


class ParentIsCalling(StructureError):
    pass


class DuplicateName(StructureError):
    pass


class CycleWouldForm(StructureError):
    pass


class IncompatibleModality(StructureError):
    pass


class WrongDirection(StructureError):
    pass


class UnresolvedEndpoint(StructureError):
    pass


class ParamOutOfRange(StructureError):
    pass


class ResolveError(Exception):
    pass


class NotFound(ResolveError):
    pass


class AmbiguousGlobal(ResolveError):
    pass


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True, order=True)
class SourceSpan:
    """1-based (line, column) range inside ``file``."""

    file: str
    start: tuple[int, int]
    end: tuple[int, int]

    def __str__(self) -> str:
        return f"{self.file}:{self.start[0]}:{self.start[1]}"


def _span() -> Optional[SourceSpan]:
    return field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Modality:
    base: str
    parameter: Optional[str] = None

    def __str__(self) -> str:
        if self.parameter is None:
            return self.base
        return f"{self.base}({_quote(self.parameter)})"


@dataclass(frozen=True)
class Interface:
    name: str
    direction: Direction
    modality: Modality
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class ShareRef:
    """Reference to a sensor owned by another agent that this agent also reads."""

    path: str
    sensor: str
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class Nature:
    """Declared nature values, in declaration order.

    Each attribute is a tuple so that repeated declarations survive parsing;
    a well-formed agent has at most one value per attribute.
    """

    social: tuple[str, ...] = ()
    ethics: tuple[str, ...] = ()
    autonomy_type: tuple[str, ...] = ()
    archetype: tuple[str, ...] = ()
    functional: tuple[str, ...] = ()

    def one(self, attr: str) -> Optional[str]:
        values = getattr(self, attr)
        return values[0] if values else None

    @property
    def is_human(self) -> bool:
        return "human" in self.functional


@dataclass(frozen=True)
class Specialization:
    variant: str
    arg: Optional[str] = None

    def __str__(self) -> str:
        if self.variant == "candidates" and self.arg is None:
            return "candidates"
        if self.arg is None:
            return self.variant
        if self.variant == "generic" or not _is_ident(self.arg):
            return f"{self.variant}({_quote(self.arg)})"
        return f"{self.variant}({self.arg})"


@dataclass(frozen=True)
class EventObjectSpec:
    """Typed payload descriptor. ``media`` of None means "inherit from actuator"."""

    spec: Specialization
    quant: Optional[str] = None
    media: Optional[Modality] = None
    schema: Optional[tuple[tuple[str, str], ...]] = None
    span: Optional[SourceSpan] = _span()

    def label(self) -> str:
        text = str(self.spec)
        if self.quant is not None:
            text += "/" + self.quant
        return text

    def matches(self, spec: Specialization, quant: Optional[str]) -> bool:
        return self.spec == spec and self.quant == quant


@dataclass(frozen=True)
class EventPattern:
    """Rule trigger. ``spec`` of None matches any object."""

    spec: Optional[Specialization] = None
    quant: Optional[str] = None
    media: Optional[Modality] = None
    sensor: Optional[str] = None
    sender: Optional[str] = None


@dataclass(frozen=True)
class PayloadEntry:
    """``name = expr`` or a nested ``name { ... }`` block (a candidate)."""

    name: str
    value: Union[Expr, tuple["PayloadEntry", ...]]


Payload = tuple[PayloadEntry, ...]


@dataclass(frozen=True)
class Emit:
    actuator: str
    obj: EventObjectSpec
    payload: Optional[Payload] = None


@dataclass(frozen=True)
class SetState:
    name: str
    expr: Expr


@dataclass(frozen=True)
class Select:
    strategy: str
    name: Optional[str] = None


@dataclass(frozen=True)
class StartWindow:
    duration: int
    on_expiry: tuple["Action", ...] = ()


@dataclass(frozen=True)
class Commit:
    pass


@dataclass(frozen=True)
class Abort:
    pass


@dataclass(frozen=True)
class Delegate:
    """Run ``then`` with the given probability, ``otherwise`` else."""

    probability: float
    then: tuple["Action", ...]
    otherwise: tuple["Action", ...] = ()


Action = Union[Emit, SetState, Select, StartWindow, Commit, Abort, Delegate]


@dataclass(frozen=True)
class Rule:
    name: str
    trigger: EventPattern
    actions: tuple[Action, ...]
    guard: Optional[Expr] = None
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class Goal:
    name: str
    priority: int
    target: Expr
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class UtilityFunction:
    terms: tuple[tuple[str, float], ...]
    span: Optional[SourceSpan] = _span()

    def evaluate(self, metrics: dict) -> float:
        total = 0.0
        for metric, weight in self.terms:
            value = metrics.get(metric, 0)
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                value = 0
            total += weight * value
        return total


@dataclass(frozen=True)
class StateDecl:
    name: str
    value: Literal_
    span: Optional[SourceSpan] = _span()


@dataclass(frozen=True)
class Behavior:
    goals: tuple[Goal, ...] = ()
    utility: Optional[UtilityFunction] = None
    rules: tuple[Rule, ...] = ()
    states: tuple[StateDecl, ...] = ()

    def state_map(self) -> dict:
        return {s.name: s.value for s in self.states}


@dataclass(frozen=True)
class Instancing:
    mode: Literal["single", "multi"] = "single"
    min: int = 1
    max: Optional[int] = 1  # None = unbounded ("*")

    def __str__(self) -> str:
        if self.mode == "single":
            return ""
        upper = "*" if self.max is None else str(self.max)
        return f"[{self.min}..{upper}]"


SINGLE = Instancing()


@dataclass(frozen=True)
class AgentDef:
    name: str
    kind: Literal["standard", "calling", "global_ref"] = "standard"
    instancing: Instancing = SINGLE
    sensors: tuple[Interface, ...] = ()
    actuators: tuple[Interface, ...] = ()
    shares: tuple[ShareRef, ...] = ()
    nature: Nature = Nature()
    behavior: Behavior = Behavior()
    children: tuple["AgentDef", ...] = ()
    ref: Optional[str] = None
    span: Optional[SourceSpan] = _span()

    def interface(self, name: str, direction: Optional[str] = None) -> Optional[Interface]:
        pools = {"sensor": self.sensors, "actuator": self.actuators}
        for d in ("actuator", "sensor") if direction is None else (direction,):
            for iface in pools[d]:
                if iface.name == name:
                    return iface
        return None

    def child(self, name: str) -> Optional["AgentDef"]:
        for c in self.children:
            if c.name == name:
                return c
        return None


@dataclass(frozen=True)
class Endpoint:
    path: str
    name: str

    def __str__(self) -> str:
        return f"{self.path}.{self.name}"

    @classmethod
    def parse(cls, text: str) -> "Endpoint":
        path, _, name = text.rpartition(".")
        if not path or not name:
            raise UnresolvedEndpoint(f"endpoint {text!r} must be <agent path>.<interface>")
        return cls(path, name)


@dataclass(frozen=True)
class ChannelParams:
    attention: Optional[float] = None
    reliability: Optional[float] = None
    conformity: Optional[float] = None
    security: Optional[float] = None

    def items(self) -> list[tuple[str, float]]:
        return [(n, getattr(self, n)) for n in PARAM_NAMES if getattr(self, n) is not None]


@dataclass(frozen=True)
class Connection:
    source: Endpoint
    target: Endpoint
    style: Literal["continuous", "discontinuous"] = "continuous"
    params: ChannelParams = ChannelParams()
    carries: tuple[EventObjectSpec, ...] = ()
    span: Optional[SourceSpan] = _span()

    def sort_key(self) -> tuple:
        return (self.source.path, self.source.name, self.target.path, self.target.name)

    def accepts(self, spec: Specialization, quant: Optional[str]) -> bool:
        if not self.carries:
            return True
        return any(o.matches(spec, quant) for o in self.carries)


@dataclass(frozen=True)
class Model:
    agents: tuple[AgentDef, ...] = ()
    globals: tuple[AgentDef, ...] = ()
    connections: tuple[Connection, ...] = ()

    def global_def(self, name: str) -> AgentDef:
        found = [g for g in self.globals if g.name == name]
        if not found:
            raise NotFound(f"no global agent named {name!r}")
        if len(found) > 1:
            raise AmbiguousGlobal(f"global agent {name!r} is defined {len(found)} times")
        return found[0]


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def _quote(text: str) -> str:
    import json

    return json.dumps(text, ensure_ascii=False)


def _is_ident(text: str) -> bool:
    return bool(text) and text[0].isascii() and text[0].isalpha() and all(
        c.isascii() and (c.isalnum() or c == "_") for c in text
    )


def compatible(a: Modality, b: Modality) -> bool:
    """Same base and, for generic interfaces, the same parameter (case-sensitive)."""
    if a.base != b.base:
        return False
    if a.base == "generic":
        return a.parameter == b.parameter
    return True


def walk(model: Model) -> Iterator[tuple[str, AgentDef]]:
    """Yield ``(path, agent)`` over declared root trees, depth first, document order.

    Global references are not expanded.
    """

    def rec(prefix: str, agent: AgentDef) -> Iterator[tuple[str, AgentDef]]:
        path = f"{prefix}.{agent.name}" if prefix else agent.name
        yield path, agent
        for c in agent.children:
            yield from rec(path, c)

    for a in model.agents:
        yield from rec("", a)


def walk_resolved(model: Model, max_depth: int = 64) -> Iterator[tuple[str, AgentDef]]:
    """Like :func:`walk` but substitutes global definitions for references.

    Yields the *effective* definition at every tree path. Unresolvable or
    cyclic references are skipped.
    """

    def rec(prefix: str, agent: AgentDef, depth: int, seen: frozenset) -> Iterator[tuple[str, AgentDef]]:
        path = f"{prefix}.{agent.name}" if prefix else agent.name
        eff = agent
        visited = set(seen)
        while eff.kind == "global_ref":
            if eff.ref in visited:
                return
            visited.add(eff.ref)
            try:
                eff = model.global_def(eff.ref)
            except ResolveError:
                return
        if depth > max_depth:
            return
        yield path, eff
        for c in eff.children:
            yield from rec(path, c, depth + 1, frozenset(visited))

    for a in model.agents:
        yield from rec("", a, 0, frozenset())


def _deref(model: Model, agent: AgentDef) -> AgentDef:
    seen = set()
    while agent.kind == "global_ref":
        if agent.ref in seen:
            raise NotFound(f"global reference cycle through {agent.ref!r}")
        seen.add(agent.ref)
        agent = model.global_def(agent.ref)
    return agent


def resolve(model: Model, path: str) -> AgentDef:
    """Return the agent at dotted ``path``, following global references."""
    if not path:
        raise NotFound("empty agent path")
    parts = path.split(".")
    current: Optional[AgentDef] = None
    for i, part in enumerate(parts):
        pool = model.agents if current is None else _deref(model, current).children
        matches = [a for a in pool if a.name == part]
        if not matches:
            raise NotFound(f"no agent {'.'.join(parts[: i + 1])!r}")
        if len(matches) > 1:
            raise NotFound(f"agent path {'.'.join(parts[: i + 1])!r} is ambiguous")
        current = matches[0]
    assert current is not None
    return _deref(model, current)


def _global_cycle(model: Model) -> Optional[list[str]]:
    """Return a cycle of global names in the reference graph, if any."""
    graph: dict[str, set[str]] = {}

    def refs(agent: AgentDef) -> Iterator[str]:
        if agent.kind == "global_ref" and agent.ref:
            yield agent.ref
        for c in agent.children:
            yield from refs(c)

    for g in model.globals:
        graph.setdefault(g.name, set()).update(refs(g))

    color: dict[str, int] = {}
    stack: list[str] = []

    def dfs(node: str) -> Optional[list[str]]:
        color[node] = 1
        stack.append(node)
        for nxt in sorted(graph.get(node, ())):
            if color.get(nxt) == 1:
                return stack[stack.index(nxt):] + [nxt]
            if nxt in graph and color.get(nxt, 0) == 0:
                found = dfs(nxt)
                if found:
                    return found
        stack.pop()
        color[node] = 2
        return None

    for node in sorted(graph):
        if color.get(node, 0) == 0:
            found = dfs(node)
            if found:
                return found
    return None


def global_cycle(model: Model) -> Optional[list[str]]:
    return _global_cycle(model)


# ---------------------------------------------------------------------------
# Construction operations
# ---------------------------------------------------------------------------


def _update_at(agents: tuple[AgentDef, ...], parts: list[str], fn) -> tuple[AgentDef, ...]:
    out = []
    hit = False
    for a in agents:
        if a.name == parts[0] and not hit:
            hit = True
            if len(parts) == 1:
                a = fn(a)
            else:
                a = replace(a, children=_update_at(a.children, parts[1:], fn))
        out.append(a)
    if not hit:
        raise NotFound(f"no agent {parts[0]!r}")
    return tuple(out)


def _locate(model: Model, path: str) -> tuple[str, list[str], AgentDef]:
    """Find a declared (not dereferenced) agent; roots first, then globals."""
    parts = path.split(".")
    for pool_name, pool in (("agents", model.agents), ("globals", model.globals)):
        node = None
        candidates = pool
        for part in parts:
            node = next((a for a in candidates if a.name == part), None)
            if node is None:
                break
            candidates = node.children
        if node is not None:
            return pool_name, parts, node
    raise NotFound(f"no agent {path!r}")


def compose(model: Model, parent_path: str, child: AgentDef) -> Model:
    """Append ``child`` under ``parent_path`` ("" for a new root agent)."""
    if not parent_path:
        if any(a.name == child.name for a in model.agents):
            raise DuplicateName(f"root agent {child.name!r} already exists")
        out = replace(model, agents=model.agents + (child,))
    else:
        try:
            pool_name, parts, parent = _locate(model, parent_path)
        except NotFound as exc:
            raise StructureError(str(exc)) from exc
        if parent.kind == "calling":
            raise ParentIsCalling(f"calling agent {parent_path!r} cannot contain sub-agents")
        if parent.kind == "global_ref":
            raise StructureError(f"{parent_path!r} is a global reference; compose into the global instead")
        if parent.child(child.name) is not None:
            raise DuplicateName(f"{parent_path!r} already has a child {child.name!r}")

        def add(a: AgentDef) -> AgentDef:
            return replace(a, children=a.children + (child,))

        out = replace(model, **{pool_name: _update_at(getattr(model, pool_name), parts, add)})
    if _global_cycle(out):
        raise CycleWouldForm(f"adding {child.name!r} under {parent_path or '<root>'!r} creates a containment cycle")
    return out


def remove(model: Model, path: str) -> Model:
    """Inverse of :func:`compose`: drop the last-declared agent at ``path``."""
    parts = path.split(".")
    if len(parts) == 1:
        idx = max((i for i, a in enumerate(model.agents) if a.name == parts[0]), default=None)
        if idx is None:
            raise NotFound(f"no agent {path!r}")
        return replace(model, agents=model.agents[:idx] + model.agents[idx + 1:])
    pool_name, parent_parts, _ = _locate(model, ".".join(parts[:-1]))

    def drop(a: AgentDef) -> AgentDef:
        idx = max((i for i, c in enumerate(a.children) if c.name == parts[-1]), default=None)
        if idx is None:
            raise NotFound(f"no agent {path!r}")
        return replace(a, children=a.children[:idx] + a.children[idx + 1:])

    return replace(model, **{pool_name: _update_at(getattr(model, pool_name), parent_parts, drop)})


def _endpoint(model: Model, ref: Union[Endpoint, str]) -> tuple[Endpoint, AgentDef]:
    ep = ref if isinstance(ref, Endpoint) else Endpoint.parse(ref)
    try:
        agent = resolve(model, ep.path)
    except ResolveError as exc:
        raise UnresolvedEndpoint(str(exc)) from exc
    return ep, agent


def connect(
    model: Model,
    source: Union[Endpoint, str],
    target: Union[Endpoint, str],
    style: str = "continuous",
    params: ChannelParams = ChannelParams(),
    carries: tuple[EventObjectSpec, ...] = (),
) -> Model:
    """Append an actuator->sensor connection after checking both endpoints."""
    src, src_agent = _endpoint(model, source)
    dst, dst_agent = _endpoint(model, target)
    act = src_agent.interface(src.name, "actuator")
    if act is None:
        if src_agent.interface(src.name, "sensor") is not None:
            raise WrongDirection(f"{src} is a sensor; connections start at actuators")
        raise UnresolvedEndpoint(f"{src_agent.name!r} has no actuator {src.name!r}")
    sen = dst_agent.interface(dst.name, "sensor")
    if sen is None:
        if dst_agent.interface(dst.name, "actuator") is not None:
            raise WrongDirection(f"{dst} is an actuator; connections end at sensors")
        raise UnresolvedEndpoint(f"{dst_agent.name!r} has no sensor {dst.name!r}")
    if not compatible(act.modality, sen.modality):
        raise IncompatibleModality(f"{src} ({act.modality}) cannot reach {dst} ({sen.modality})")
    for name, value in params.items():
        if not 0.0 <= value <= 1.0:
            raise ParamOutOfRange(f"{name} = {value} is outside [0, 1]")
    if style not in ("continuous", "discontinuous"):
        raise StructureError(f"unknown connection style {style!r}")
    conn = Connection(src, dst, style, params, tuple(carries))
    return replace(model, connections=model.connections + (conn,))


def canonical(model: Model) -> Model:
    """Model with connections in the printer's canonical order."""
    return replace(model, connections=tuple(sorted(model.connections, key=Connection.sort_key)))


def structurally_equal(a: Model, b: Model) -> bool:
    """Equality ignoring source spans and connection order."""
    return canonical(a) == canonical(b)
