"""Graphviz DOT rendering of AMN models.

Agents become boxes; an agent with sub-agents becomes a ``cluster_`` subgraph
holding its children. Edges to such an agent attach to the first node inside
the cluster and are clipped at its border (``lhead``/``ltail``). Connections
run actuator -> sensor, dashed when discontinuous. Carried event objects
become note-shaped nodes tied to their connection's target by a dotted line.
Nature values are shown as bracketed text badges in front of the agent name;
:func:`legend` lists them all.

Every emitted node, cluster and edge has a ``class`` attribute (``agent``,
``connection``, ``object``, ``carries``) so counts can be checked after
parsing the output.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from amn.diagnostics import has_errors
from amn.dsl.printer import format_percent, objspec_text
from amn.model import (
    ARCHETYPES,
    AUTONOMY_TYPES,
    ETHICAL_CONCEPTS,
    FUNCTIONAL_SUGGESTIONS,
    SOCIAL_CONCEPTS,
    AgentDef,
    Connection,
    Model,
    canonical,
)


class RefusesInvalid(Exception):
    def __init__(self, diagnostics):
        super().__init__(f"model has {sum(d.is_error for d in diagnostics)} validation error(s); not rendered")
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class RenderOptions:
    show_params: bool = True
    show_behavior: bool = False
    collapse_below_depth: Optional[int] = None
    badge_style: str = "short_codes"  # or "words"

    def __post_init__(self) -> None:
        if self.collapse_below_depth is not None and self.collapse_below_depth < 1:
            raise ValueError("collapse_below_depth must be at least 1")
        if self.badge_style not in ("short_codes", "words"):
            raise ValueError(f"badge_style must be short_codes or words, not {self.badge_style!r}")


# ---------------------------------------------------------------------------
# Badges
# ---------------------------------------------------------------------------

SOCIAL_CODES = {"self_interested": "self", "helpful": "help", "cooperative": "coop"}
ETHICS_CODES = {"non_ethical": "none", "implicit": "implicit", "explicit": "explicit", "full": "full"}
TYPE_CODES = {
    "interpretation": "interp",
    "know_how": "knowhow",
    "plan": "plan",
    "goal": "goal",
    "reasoning": "reason",
    "monitoring": "monitor",
    "skill": "skill",
    "resource": "resource",
    "condition": "cond",
}
ARCHETYPE_CODES = {"reflex": "reflex", "internal_state": "state", "goal_based": "goal", "utility_based": "utility"}
FUNCTIONAL_CODES = {"human": "H", "filter": "F", "transformer": "T", "pattern_detector": "P", "analyzer": "A"}

_CATEGORIES = (
    # (nature attribute, short prefix, word prefix, code table, vocabulary)
    ("social", "SOC", "social", SOCIAL_CODES, SOCIAL_CONCEPTS),
    ("ethics", "ETH", "ethics", ETHICS_CODES, ETHICAL_CONCEPTS),
    ("autonomy_type", "TYP", "type", TYPE_CODES, AUTONOMY_TYPES),
    ("archetype", "ARC", "archetype", ARCHETYPE_CODES, ARCHETYPES),
)


def _words(value: str) -> str:
    return value.replace("_", " ")


def badges(agent: AgentDef, style: str = "short_codes") -> str:
    out = []
    for attr, short, word, codes, _ in _CATEGORIES:
        for v in getattr(agent.nature, attr):
            out.append(f"[{short}:{codes.get(v, v)}]" if style == "short_codes" else f"[{word}: {_words(v)}]")
    for v in agent.nature.functional:
        if style == "short_codes":
            out.append(f"[{FUNCTIONAL_CODES[v]}]" if v in FUNCTIONAL_CODES else f"[F:{v}]")
        else:
            out.append(f"[function: {v}]")
    return "".join(out)


# ---------------------------------------------------------------------------
# DOT helpers
# ---------------------------------------------------------------------------


def quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n") + '"'


def _attrs(pairs: list[tuple[str, str]]) -> str:
    return "[" + ", ".join(f"{k}={quote(v)}" for k, v in pairs) + "]"


_PARAM_SHORT = {"attention": "att", "reliability": "rel", "conformity": "conf", "security": "sec"}


def param_label(conn: Connection) -> str:
    return " ".join(f"{_PARAM_SHORT[n]}={format_percent(v)}%" for n, v in conn.params.items())


def _agent_label(agent: AgentDef, opts: RenderOptions, hidden_children: int = 0) -> str:
    name = agent.name
    card = str(agent.instancing)
    if card:
        name += " " + card
    if agent.kind == "global_ref":
        name += f": {agent.ref}"
    head = badges(agent, opts.badge_style)
    lines = [f"{head} {name}" if head else name]
    if opts.show_behavior:
        b = agent.behavior
        if b.utility is not None:
            lines.append("utility " + ", ".join(f"{m}:{w:g}" for m, w in b.utility.terms))
        lines.extend(f"rule {r.name}" for r in b.rules)
    if hidden_children:
        lines.append(f"(+{hidden_children} sub-agents)")
    return "\n".join(lines)


def _count(agent: AgentDef) -> int:
    return sum(1 + _count(c) for c in agent.children)


# ---------------------------------------------------------------------------
# Rendering
# ---------------------------------------------------------------------------


class _Writer:
    def __init__(self, opts: RenderOptions):
        self.opts = opts
        self.lines: list[str] = []
        self.nodes: set[str] = set()
        self.order: list[str] = []
        # composite agent path -> first node drawn inside its cluster
        self.clusters: dict[str, str] = {}

    def emit(self, depth: int, text: str) -> None:
        self.lines.append("  " * depth + text)

    def agent(self, path: str, agent: AgentDef, depth: int, level: int, is_global: bool = False) -> None:
        limit = self.opts.collapse_below_depth
        collapsed = limit is not None and level >= limit
        border = []
        if agent.kind == "calling":
            border.append("dashed")
        if is_global or agent.kind == "global_ref":
            border.append("bold")
        if agent.children and not collapsed:
            self.emit(depth, f"subgraph {quote('cluster_' + path)} {{")
            cluster_style = ",".join(border) or "solid"
            self.emit(depth + 1, "graph " + _attrs([
                ("class", "agent"), ("label", _agent_label(agent, self.opts)), ("style", cluster_style),
            ]) + ";")
            first = len(self.order)
            for c in agent.children:
                self.agent(f"{path}.{c.name}", c, depth + 1, level + 1)
            self.clusters[path] = self.order[first]
            self.emit(depth, "}")
            return
        hidden = _count(agent) if collapsed else 0
        pairs = [("class", "agent"), ("label", _agent_label(agent, self.opts, hidden)), ("shape", "box")]
        if border:
            pairs.append(("style", ",".join(border)))
        self.emit(depth, f"{quote(path)} {_attrs(pairs)};")
        self.nodes.add(path)
        self.order.append(path)

    def node_for(self, path: str) -> Optional[tuple[str, str, Optional[str]]]:
        """(agent, node, cluster) for the nearest rendered agent at or above ``path``.

        Edges touching a composite agent attach to the first node inside its
        cluster and are clipped at the cluster border.
        """
        parts = path.split(".")
        for i in range(len(parts), 0, -1):
            candidate = ".".join(parts[:i])
            if candidate in self.nodes:
                return candidate, candidate, None
            if candidate in self.clusters:
                return candidate, self.clusters[candidate], "cluster_" + candidate
        return None


def to_dot(model: Model, opts: RenderOptions = RenderOptions()) -> str:
    """DOT digraph for ``model``; byte-identical for equal inputs."""
    from amn.validator import validate

    diags = validate(model)
    if has_errors(diags):
        raise RefusesInvalid(diags)
    model = canonical(model)
    w = _Writer(opts)
    w.emit(0, "digraph AMN {")
    w.emit(1, 'graph [compound="true", rankdir="LR", fontname="Helvetica"];')
    w.emit(1, 'node [fontname="Helvetica"];')
    w.emit(1, 'edge [fontname="Helvetica"];')
    for g in model.globals:
        w.agent(f"global:{g.name}", g, 1, 1, is_global=True)
    for a in model.agents:
        w.agent(a.name, a, 1, 1)

    collapsing = opts.collapse_below_depth is not None
    for ci, conn in enumerate(model.connections):
        src, dst = w.node_for(conn.source.path), w.node_for(conn.target.path)
        if src is None or dst is None:
            continue
        if collapsing and src[0] == dst[0] and (src[0] != conn.source.path or dst[0] != conn.target.path):
            continue  # both ends folded into the same collapsed agent
        pairs = [("class", "connection"), ("taillabel", conn.source.name), ("headlabel", conn.target.name)]
        if src[2]:
            pairs.append(("ltail", src[2]))
        if dst[2]:
            pairs.append(("lhead", dst[2]))
        label = []
        if opts.show_params and conn.params.items():
            label.append(param_label(conn))
        if collapsing and conn.carries:
            label.append(", ".join(objspec_text(o) for o in conn.carries))
        if label:
            pairs.append(("label", "\n".join(label)))
        if conn.style == "discontinuous":
            pairs.append(("style", "dashed"))
        w.emit(1, f"{quote(src[1])} -> {quote(dst[1])} {_attrs(pairs)};")
        if collapsing:
            continue
        for k, obj in enumerate(conn.carries):
            oid = f"object:{ci}.{k}"
            w.emit(1, f"{quote(oid)} {_attrs([('class', 'object'), ('label', objspec_text(obj)), ('shape', 'note')])};")
            w.emit(1, f"{quote(oid)} -> {quote(dst[1])} "
                      f"{_attrs([('class', 'carries'), ('style', 'dotted'), ('arrowhead', 'none')])};")
    w.emit(0, "}")
    return "\n".join(w.lines) + "\n"


def legend(opts: RenderOptions = RenderOptions()) -> str:
    """Standalone digraph listing every badge and border/edge convention."""
    rows: list[tuple[str, str]] = []
    for attr, short, word, codes, vocab in _CATEGORIES:
        for v in vocab:
            badge = f"[{short}:{codes[v]}]" if opts.badge_style == "short_codes" else f"[{word}: {_words(v)}]"
            rows.append((f"{short}_{v}", f"{badge} {word}: {_words(v)}"))
    for v in FUNCTIONAL_SUGGESTIONS:
        badge = f"[{FUNCTIONAL_CODES[v]}]" if opts.badge_style == "short_codes" else f"[function: {v}]"
        rows.append((f"F_{v}", f"{badge} function: {_words(v)}"))
    rows.append(("F_custom", ("[F:<name>]" if opts.badge_style == "short_codes" else "[function: <name>]")
                 + " function: custom tag"))
    lines = ["digraph AMN_legend {", '  graph [rankdir="TB", fontname="Helvetica", label="AMN legend"];',
             '  node [shape="plaintext", fontname="Helvetica"];']
    for key, label in rows:
        lines.append(f"  {quote('legend:' + key)} {_attrs([('class', 'badge'), ('label', label)])};")
    conventions = [
        ("calling", "calling agent (cannot contain sub-agents)", [("shape", "box"), ("style", "dashed")]),
        ("global", "global agent definition or reference", [("shape", "box"), ("style", "bold")]),
        ("multi", "multi-instance agent: name [min..max]", [("shape", "box")]),
        ("object", "event object carried by a connection", [("shape", "note")]),
    ]
    for key, label, extra in conventions:
        lines.append(f"  {quote('legend:' + key)} {_attrs([('class', 'convention'), ('label', label)] + extra)};")
    lines.append('  "legend:a" [class="convention", label="actuator", shape="box"];')
    lines.append('  "legend:b" [class="convention", label="sensor", shape="box"];')
    lines.append('  "legend:a" -> "legend:b" [class="convention", label="continuous connection"];')
    lines.append('  "legend:a" -> "legend:b" [class="convention", label="discontinuous connection", style="dashed"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
