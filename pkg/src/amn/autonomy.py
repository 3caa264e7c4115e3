"""Autonomy levels and human-machine interaction patterns.

A human/machine pair in a model is summarised as an :class:`InteractionProfile`
(:func:`extract_features`), which is matched against a 20-row decision table
(:data:`LEVEL_TABLE`). Several rows may match at once; the levels form no
total order. :func:`classify_pattern` derives the A-H topology from the
human/machine communication graph, and :func:`scaffold_level` builds a
minimal model for any level.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from itertools import product
from typing import Iterable, Iterator, Optional

from amn.model import (
    AgentDef,
    Connection,
    Delegate,
    EventObjectSpec,
    Model,
    Rule,
    Select,
    StartWindow,
    resolve,
    walk_resolved,
)

# ---------------------------------------------------------------------------
# Profile
# ---------------------------------------------------------------------------

PROFILE_DOMAINS: dict[str, tuple] = {
    "decision_authority": ("machine", "human", "shared"),
    "veto": ("none", "unlimited", "time_limited", "approval_required"),
    "candidate_flow": (
        "none",
        "machine_offers_single",
        "machine_offers_selection",
        "machine_offers_all",
        "human_supplies",
        "joint_definition",
    ),
    "notification": ("none", "discretion", "on_request", "always"),
    "task_transfer": ("none", "human_to_machine", "machine_to_human", "handover_mid_task"),
    "monitoring": ("none", "partial", "full"),
    "executor": ("machine", "human", "mixed"),
    "random_delegation": (False, True),
}


@dataclass(frozen=True)
class InteractionProfile:
    decision_authority: str
    veto: str
    candidate_flow: str
    notification: str
    task_transfer: str
    monitoring: str
    executor: str
    random_delegation: bool

    def __post_init__(self) -> None:
        for name, domain in PROFILE_DOMAINS.items():
            if getattr(self, name) not in domain:
                raise ValueError(f"{name}={getattr(self, name)!r} not in {domain}")


def all_profiles() -> Iterator[InteractionProfile]:
    names = list(PROFILE_DOMAINS)
    for values in product(*PROFILE_DOMAINS.values()):
        yield InteractionProfile(**dict(zip(names, values)))


class NoRelationship(Exception):
    pass


class PatternError(Exception):
    pass


# ---------------------------------------------------------------------------
# Feature extraction
# ---------------------------------------------------------------------------


def _within(path: str, root: str) -> bool:
    return path == root or path.startswith(root + ".")


def _actions(actions) -> Iterator:
    for a in actions:
        yield a
        if isinstance(a, StartWindow):
            yield from _actions(a.on_expiry)
        elif isinstance(a, Delegate):
            yield from _actions(a.then)
            yield from _actions(a.otherwise)


def _rules(tree: dict[str, AgentDef], root: str) -> list[Rule]:
    return [r for p, a in tree.items() if _within(p, root) for r in a.behavior.rules]


def _carried(conns: Iterable[Connection], variant: str, arg: Optional[str] = None) -> list[EventObjectSpec]:
    return [
        o for c in conns for o in c.carries
        if o.spec.variant == variant and (arg is None or o.spec.arg == arg)
    ]


def _triggered_by(rules: list[Rule], variant: str, arg: Optional[str] = None) -> list[Rule]:
    out = []
    for r in rules:
        s = r.trigger.spec
        if s is not None and s.variant == variant and (arg is None or s.arg == arg):
            out.append(r)
    return out


def _has_action(rules: list[Rule], kind: type) -> bool:
    return any(isinstance(a, kind) for r in rules for a in _actions(r.actions))


def extract_features(model: Model, human: str, machine: str) -> InteractionProfile:
    """Profile the relationship between the agents at ``human`` and ``machine``.

    Both paths include their sub-agents. Raises :class:`NoRelationship` when
    the two are neither connected, nested under a common agent, nor both
    connected to a common third agent.
    """
    resolve(model, human)
    resolve(model, machine)
    if _within(human, machine) or _within(machine, human):
        raise NoRelationship(f"{human!r} and {machine!r} are nested in one another")
    tree = dict(walk_resolved(model))

    def side(path: str) -> str:
        if _within(path, human):
            return "H"
        if _within(path, machine):
            return "M"
        return "X"

    flows: dict[tuple[str, str], list[Connection]] = {}
    third: dict[str, set[str]] = {}
    for c in model.connections:
        s, t = side(c.source.path), side(c.target.path)
        flows.setdefault((s, t), []).append(c)
        if s == "X" and t != "X":
            third.setdefault(c.source.path, set()).add(t)
        if t == "X" and s != "X":
            third.setdefault(c.target.path, set()).add(s)

    m2h, h2m = flows.get(("M", "H"), []), flows.get(("H", "M"), [])
    m2x, h2x = flows.get(("M", "X"), []), flows.get(("H", "X"), [])
    common_parent = human.rpartition(".")[0] and human.rpartition(".")[0] == machine.rpartition(".")[0]
    shared_third = any(sides >= {"H", "M"} for sides in third.values())
    if not (m2h or h2m or common_parent or shared_third):
        raise NoRelationship(f"no channel or shared coordinator links {human!r} and {machine!r}")

    m_rules, h_rules = _rules(tree, machine), _rules(tree, human)

    # veto
    windows = _has_action(m_rules, StartWindow)
    if windows and _carried(h2m, "reaction", "veto"):
        veto = "time_limited"
    elif _carried(h2m, "reaction", "acceptance") and _triggered_by(m_rules, "reaction", "acceptance"):
        veto = "approval_required"
    elif _carried(h2m, "reaction", "veto") and _triggered_by(m_rules, "reaction", "veto"):
        veto = "unlimited"
    else:
        veto = "none"

    # candidates
    offered = {o.quant for o in _carried(m2h, "candidates")}
    supplied = _carried(h2m, "candidates")
    if offered and supplied:
        candidate_flow = "joint_definition"
    elif offered:
        scope = next((q for q in ("all", "selection", "single") if q in offered), "single")
        candidate_flow = f"machine_offers_{scope}"
    elif supplied:
        candidate_flow = "human_supplies"
    else:
        candidate_flow = "none"

    modes = {o.spec.arg for o in _carried(m2h, "notification")}
    notification = next((m for m in ("always", "on_request", "discretion") if m in modes), "none")

    human_directs = bool(_carried(h2m, "task") or _carried(h2m, "instruction"))
    human_acts = bool(h2x)
    machine_acts = bool(m2x)
    if human_directs and human_acts:
        task_transfer = "handover_mid_task"
    elif human_directs:
        task_transfer = "human_to_machine"
    elif _carried(m2h, "task"):
        task_transfer = "machine_to_human"
    else:
        task_transfer = "none"

    metric_outputs = {
        (c.source.path, c.source.name)
        for c in model.connections
        if side(c.source.path) == "M" and _carried([c], "metric")
    }
    to_human = {(c.source.path, c.source.name) for c in m2h if _carried([c], "metric")}
    if not to_human:
        monitoring = "none"
    elif to_human == metric_outputs:
        monitoring = "full"
    else:
        monitoring = "partial"

    if machine_acts and human_acts:
        executor = "mixed"
    elif machine_acts:
        executor = "machine"
    elif human_acts:
        executor = "human"
    elif task_transfer == "machine_to_human":
        executor = "human"
    else:
        executor = "machine"

    machine_selects = _has_action(m_rules, Select)
    gated = human_directs and bool(_triggered_by(m_rules, "instruction") or _triggered_by(m_rules, "task"))
    if machine_selects:
        authority = "shared" if gated else "machine"
    elif (human_directs or human_acts or candidate_flow.startswith("machine_offers")
          or candidate_flow == "joint_definition" or _has_action(h_rules, Select)):
        authority = "human"
    else:
        authority = "machine"

    return InteractionProfile(
        decision_authority=authority,
        veto=veto,
        candidate_flow=candidate_flow,
        notification=notification,
        task_transfer=task_transfer,
        monitoring=monitoring,
        executor=executor,
        random_delegation=_has_action(m_rules, Delegate),
    )


# ---------------------------------------------------------------------------
# Level table
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LevelRow:
    level: int
    summary: str
    required: dict

    def violations(self, profile: InteractionProfile) -> int:
        return sum(getattr(profile, f) not in allowed for f, allowed in self.required.items())

    def matches(self, profile: InteractionProfile) -> bool:
        return self.violations(profile) == 0


_NOT_INVOLVED = {
    "veto": {"none"},
    "candidate_flow": {"none"},
    "notification": {"none"},
    "monitoring": {"none"},
    "task_transfer": {"none"},
    "random_delegation": {False},
}

LEVEL_TABLE: tuple[LevelRow, ...] = (
    LevelRow(1, "machine decides and acts alone; human not involved",
             {"decision_authority": {"machine"}, "executor": {"machine"}, **_NOT_INVOLVED}),
    LevelRow(2, "machine decides and acts; human watches some of its outputs",
             {"decision_authority": {"machine"}, "executor": {"machine"}, "monitoring": {"partial"}}),
    LevelRow(3, "machine decides and acts; human watches all of its outputs",
             {"decision_authority": {"machine"}, "executor": {"machine"}, "monitoring": {"full"}}),
    LevelRow(4, "machine decides and acts but hands random cases to the human",
             {"decision_authority": {"machine"}, "random_delegation": {True}}),
    LevelRow(5, "machine decides and acts until the human vetoes",
             {"decision_authority": {"machine"}, "veto": {"unlimited"}}),
    LevelRow(6, "machine decides; human may veto within a bounded window",
             {"decision_authority": {"machine"}, "veto": {"time_limited"}}),
    LevelRow(7, "machine decides; execution waits for human approval",
             {"decision_authority": {"machine"}, "veto": {"approval_required"}}),
    LevelRow(8, "machine offers one candidate; human accepts or refuses",
             {"decision_authority": {"human"}, "candidate_flow": {"machine_offers_single"}}),
    LevelRow(9, "machine offers a preselection of candidates; human chooses",
             {"decision_authority": {"human"}, "candidate_flow": {"machine_offers_selection"}}),
    LevelRow(10, "machine offers every candidate; human chooses",
             {"decision_authority": {"human"}, "candidate_flow": {"machine_offers_all"}}),
    LevelRow(11, "both sides contribute candidates; human chooses",
             {"decision_authority": {"human"}, "candidate_flow": {"joint_definition"}}),
    LevelRow(12, "human supplies candidates; machine chooses and acts",
             {"decision_authority": {"machine"}, "candidate_flow": {"human_supplies"}}),
    LevelRow(13, "machine acts and informs the human when it sees fit",
             {"executor": {"machine"}, "notification": {"discretion"}}),
    LevelRow(14, "machine acts and informs the human when asked",
             {"executor": {"machine"}, "notification": {"on_request"}}),
    LevelRow(15, "machine acts and always informs the human",
             {"executor": {"machine"}, "notification": {"always"}}),
    LevelRow(16, "human decides and starts acting, machine finishes the remaining work",
             {"decision_authority": {"human"}, "task_transfer": {"handover_mid_task"}}),
    LevelRow(17, "human decides and passes tasks to the machine for execution",
             {"decision_authority": {"human"}, "task_transfer": {"human_to_machine"},
              "executor": {"machine"}, "monitoring": {"none"}}),
    LevelRow(18, "human decides and steers the machine using its feedback",
             {"decision_authority": {"human"}, "task_transfer": {"human_to_machine"},
              "executor": {"machine"}, "monitoring": {"partial", "full"}}),
    LevelRow(19, "human steers the machine, which also runs sub-tasks on its own",
             {"decision_authority": {"shared"}, "task_transfer": {"human_to_machine"}}),
    LevelRow(20, "human decides and acts alone; machine not involved",
             {"decision_authority": {"human"}, "executor": {"human"}, **_NOT_INVOLVED}),
)


@dataclass(frozen=True)
class LevelMatch:
    levels: tuple[int, ...]
    approximate: bool


def classify_level(profile: InteractionProfile) -> LevelMatch:
    """All rows whose predicates hold; nearest rows (fewest violated fields) otherwise."""
    exact = tuple(r.level for r in LEVEL_TABLE if r.matches(profile))
    if exact:
        return LevelMatch(exact, False)
    scores = {r.level: r.violations(profile) for r in LEVEL_TABLE}
    best = min(scores.values())
    return LevelMatch(tuple(sorted(lvl for lvl, s in scores.items() if s == best)), True)


# ---------------------------------------------------------------------------
# Interaction patterns
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PatternReport:
    pattern: str  # "A".."H" or "composite"
    human_groups: tuple[tuple[str, ...], ...]
    machine_groups: tuple[tuple[str, ...], ...]


def _groups(members: list[str], links: set[frozenset]) -> list[tuple[str, ...]]:
    parent = {m: m for m in members}

    def find(x: str) -> str:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    def union(a: str, b: str) -> None:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    for a in members:
        for b in members:
            if a < b:
                pa, pb = a.rpartition(".")[0], b.rpartition(".")[0]
                if (pa and pa == pb) or frozenset((a, b)) in links:
                    union(a, b)
    comps: dict[str, list[str]] = {}
    for m in members:
        comps.setdefault(find(m), []).append(m)
    return sorted(tuple(sorted(c)) for c in comps.values())


def _shape(groups: list[tuple[str, ...]]) -> Optional[str]:
    if len(groups) == 1:
        return "one" if len(groups[0]) == 1 else "group"
    if all(len(g) == 1 for g in groups):
        return "independent"
    return None


_PATTERNS = {
    ("one", "one"): "A",
    ("one", "independent"): "B",
    ("one", "group"): "C",
    ("group", "one"): "D",
    ("group", "independent"): "E",
    ("group", "group"): "F",
    ("independent", "one"): "G",
    ("independent", "group"): "H",
}


def classify_pattern(model: Model) -> PatternReport:
    """Interaction pattern (A-H or composite) of the humans and machines that talk to each other."""
    tree = dict(walk_resolved(model))
    humans = {p for p, a in tree.items() if a.nature.is_human}
    machines = {p for p in tree if p not in humans}
    if not humans:
        raise PatternError("model has no agent tagged functional \"human\"")
    if not machines:
        raise PatternError("model has no machine agent")

    def owner(path: str, pool: set[str]) -> Optional[str]:
        return path if path in pool else None

    talking_h: set[str] = set()
    talking_m: set[str] = set()
    links: set[frozenset] = set()
    for c in model.connections:
        s, t = c.source.path, c.target.path
        for a, b in ((s, t), (t, s)):
            if owner(a, humans) and owner(b, machines):
                talking_h.add(a)
                talking_m.add(b)
        if s != t:
            links.add(frozenset((s, t)))
    if not talking_h:
        raise PatternError("no connection joins a human and a machine")

    hg = _groups(sorted(talking_h), links)
    mg = _groups(sorted(talking_m), links)
    pattern = _PATTERNS.get((_shape(hg), _shape(mg)), "composite")
    return PatternReport(pattern, tuple(hg), tuple(mg))


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

CLASSIFY_SCHEMA = "amn.classify/1"


def classification_report(model: Model, human: str, machine: str) -> dict:
    profile = extract_features(model, human, machine)
    match = classify_level(profile)
    try:
        pattern = classify_pattern(model).pattern
    except PatternError:
        pattern = None
    return {
        "schema": CLASSIFY_SCHEMA,
        "pattern": pattern,
        "levels": list(match.levels),
        "profile": asdict(profile),
        "approximate": match.approximate,
    }


def report_json(report: dict) -> str:
    return json.dumps(report, indent=2)


# ---------------------------------------------------------------------------
# Scaffolds
# ---------------------------------------------------------------------------

_BUS = 'generic("bus")'
_OFFER = "{a {gain = 2}, b {gain = 5}}"


def _scaffold_parts(level: int) -> tuple[list[str], list[str], list[str], list[str]]:
    """(human clauses, machine clauses, environment clauses, connections) with {H}/{M} placeholders."""
    h_in, h_out, h_act = f"sensor in: {_BUS}", f"actuator out: {_BUS}", f"actuator act: {_BUS}"
    m_in, m_work, m_status = f"sensor in: {_BUS}", f"actuator work: {_BUS}", f"actuator status: {_BUS}"
    env = [f"sensor in: {_BUS}", f"actuator out: {_BUS}"]
    offers = 'Environment.out -> {M}.in carries candidates/all {gain: number}'
    work = "{M}.work -> Environment.in carries task/single"
    decide = "rule decide: on candidates/all from Environment then select utility, emit work task/single"
    case = 'Environment.out -> {M}.in carries generic("case")/single'

    if level == 1:
        return ([h_in], [m_in, m_work, "utility gain: 1", decide], env,
                [offers, work, 'Environment.out -> {H}.in carries generic("status")/single'])
    if level in (2, 3):
        m = [m_in, m_work, m_status, "utility gain: 1",
             "rule decide: on candidates/all from Environment then select utility, emit work task/single, "
             "emit status metric/single {load = 1}" + (", emit log metric/single {load = 1}" if level == 2 else "")]
        conns = [offers, work, "{M}.status -> {H}.in carries metric/single {load: number}"]
        if level == 2:
            m.insert(3, f"actuator log: {_BUS}")
            conns.append("{M}.log -> Environment.in carries metric/single {load: number}")
        return [h_in], m, env, conns
    if level == 4:
        return ([h_in], [m_in, m_work, f"actuator handoff: {_BUS}", "utility gain: 1",
                         "rule decide: on candidates/all from Environment then select utility, "
                         "delegate 25% { emit handoff task/single } else { emit work task/single }"],
                env, [offers, work, "{M}.handoff -> {H}.in carries task/single"])
    if level == 5:
        return ([h_in, h_out],
                [m_in, m_work, m_status, "utility gain: 1",
                 "rule decide: on candidates/all from Environment if not halted then select utility, "
                 'emit work task/single, emit status generic("progress")/single',
                 "rule stop: on reaction(veto) from {H} then set halted = true",
                 "state halted = false"],
                env, [offers, work, '{M}.status -> {H}.in carries generic("progress")/single',
                      "{H}.out -> {M}.in carries reaction(veto)/single"])
    if level == 6:
        return ([h_in, h_out],
                [m_in, m_work, m_status, "utility gain: 1",
                 "rule decide: on candidates/all from Environment then select utility, "
                 "emit status notification(always)/single, emit status candidates/single, "
                 "window 5 { emit work task/single }",
                 "rule vetoed: on reaction(veto) from {H} then abort"],
                env, [offers, work,
                      "{M}.status -> {H}.in carries notification(always)/single, candidates/single {gain: number}",
                      "{H}.out -> {M}.in carries reaction(veto)/single"])
    if level == 7:
        return ([h_in, h_out],
                [m_in, m_work, m_status, "utility gain: 1",
                 "rule decide: on candidates/all from Environment then select utility, emit status candidates/single",
                 "rule approved: on reaction(acceptance) from {H} then emit work task/single"],
                env, [offers, work, "{M}.status -> {H}.in carries candidates/single {gain: number}",
                      "{H}.out -> {M}.in carries reaction(acceptance)/single, reaction(refusal)/single"])
    if level in (8, 9, 10):
        quant = {8: "single", 9: "selection", 10: "all"}[level]
        offer = "{a {gain = 2}}" if level == 8 else _OFFER
        return ([h_in, h_out],
                [m_in, m_work, m_status,
                 f'rule propose: on generic("case") from Environment then emit status candidates/{quant} {offer}',
                 "rule act: on reaction(acceptance) from {H} then emit work task/single"],
                env, [case, work, f"{{M}}.status -> {{H}}.in carries candidates/{quant} {{gain: number}}",
                      "{H}.out -> {M}.in carries reaction(acceptance)/single, reaction(refusal)/single"])
    if level == 11:
        return ([h_in, h_out],
                [m_in, m_work, m_status,
                 f'rule propose: on generic("case") from Environment then emit status candidates/selection {_OFFER}',
                 "rule act: on reaction(acceptance) from {H} then emit work task/single"],
                env, [case, work, "{M}.status -> {H}.in carries candidates/selection {gain: number}",
                      "{H}.out -> {M}.in carries candidates/selection {gain: number}, reaction(acceptance)/single"])
    if level == 12:
        return ([h_out], [m_in, m_work, "utility gain: 1",
                          "rule decide: on candidates/all from {H} then select utility, emit work task/single"],
                env, [work, "{H}.out -> {M}.in carries candidates/all {gain: number}"])
    if level in (13, 15):
        mode = "discretion" if level == 13 else "always"
        return ([h_in], [m_in, m_work, m_status, "utility gain: 1",
                         "rule decide: on candidates/all from Environment then select utility, "
                         f"emit work task/single, emit status notification({mode})/single"],
                env, [offers, work, f"{{M}}.status -> {{H}}.in carries notification({mode})/single"])
    if level == 14:
        return ([h_in, h_out], [m_in, m_work, m_status, "utility gain: 1", decide,
                                'rule report: on generic("request") from {H} then '
                                "emit status notification(on_request)/single"],
                env, [offers, work, "{M}.status -> {H}.in carries notification(on_request)/single",
                      '{H}.out -> {M}.in carries generic("request")/single'])
    if level in (16, 17):
        h = [h_out] + ([h_act] if level == 16 else [])
        conns = [work, "{H}.out -> {M}.in carries task/single"]
        if level == 16:
            conns.append("{H}.act -> Environment.in carries task/single")
        return (h, [m_in, m_work, "rule execute: on task from {H} then emit work task/single"], env, conns)
    if level == 18:
        return ([h_in, h_out],
                [m_in, m_work, m_status,
                 "rule follow: on instruction(adjust) from {H} then emit work task/single, "
                 "emit status metric/single {load = 1}"],
                env, [work, "{H}.out -> {M}.in carries instruction(adjust)/single",
                      "{M}.status -> {H}.in carries metric/single {load: number}"])
    if level == 19:
        return ([h_out],
                [m_in, m_work, "utility gain: 1", decide,
                 "rule follow: on instruction(instantiate) from {H} then emit work task/single"],
                env, [offers, work, "{H}.out -> {M}.in carries instruction(instantiate)/single"])
    if level == 20:
        return ([h_act], [m_in], env,
                ["{H}.act -> Environment.in carries task/single",
                 'Environment.out -> {M}.in carries generic("status")/single'])
    raise ValueError(f"autonomy level must be in 1..20, got {level}")


def scaffold_text(level: int, names: tuple[str, str] = ("Human", "Machine")) -> str:
    h_lines, m_lines, e_lines, conns = _scaffold_parts(level)
    human, machine = names

    def fill(text: str) -> str:
        return text.replace("{H}", human).replace("{M}", machine)

    def block(name: str, clauses: list[str]) -> str:
        return "agent " + name + " {\n" + "".join(f"  {fill(c)}\n" for c in clauses) + "}\n"

    return (
        f"// autonomy level {level} scaffold\n"
        + block(human, h_lines + ['functional "human"'])
        + "\n" + block(machine, m_lines)
        + "\n" + block("Environment", e_lines)
        + "\n" + "".join(fill(c) + "\n" for c in conns)
    )


def scaffold_level(level: int, names: tuple[str, str] = ("Human", "Machine")) -> Model:
    """Minimal valid model whose human/machine profile classifies to ``level``."""
    from amn.dsl import parse

    model, diags = parse(scaffold_text(level, names), f"<scaffold-{level}>")
    if diags:
        raise AssertionError(f"scaffold {level} does not parse: {diags}")
    return model
