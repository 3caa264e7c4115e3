"""Simulator: scenarios, phases, conflict resolution, trace checks, oracle."""

from __future__ import annotations

import json
import random

import pytest

from amn.autonomy import scaffold_level
from amn.dsl import parse
from amn.model import Model
from amn.simulator import (
    CardinalityExceeded,
    InjectedAction,
    InjectionError,
    MissingConcept,
    Proposal,
    RunConfig,
    TraceEvent,
    TraceModelMismatch,
    ValidationRequired,
    capacity_for,
    check_trace,
    conservation,
    instantiate,
    parse_injection_line,
    parse_injections,
    read_trace,
    resolve_conflict,
    run,
)
from conftest import corpus_models, corpus_text, load
from modelgen import random_injections, random_sim_model
from oracle_sim import oracle_run

REFUSAL = parse_injections(corpus_text("scenario_refusal.inject"))


def _model(text: str) -> Model:
    model, diags = parse(text)
    assert diags == [], [d.to_line() for d in diags]
    return model


def _veto(tick: int):
    return (tick, InjectedAction.shorthand("Family", "veto"))


def _supplier_tasks(trace):
    return [e for e in trace.of_kind("emitted") if e.object == "task/single" and e.detail["to"] == "Supplier"]


def _family_notes(trace):
    return [e for e in trace.of_kind("emitted")
            if e.object.startswith("notification") and e.detail["to"] == "Family"]


PAIR = """agent A {
  actuator a: generic("bus")
}

agent B {
  sensor s: generic("bus")
}

A.a -> B.s%s
"""


# ---------------------------------------------------------------------------
# Instantiation
# ---------------------------------------------------------------------------


def test_single_instances(helpful):
    world = instantiate(helpful)
    assert [i.id for i in world.instances] == [
        "Family", "Supplier", "Producer", "Producer.RawDataAnalyzer", "Producer.DecisionMaker"]
    assert world.tick == 0
    assert world.instance("Producer.DecisionMaker").states == {"awaiting_reorder": False}


def test_multi_instance_min_expansion():
    world = instantiate(_model("agent Crew [2..5] { }\n"))
    assert [i.id for i in world.instances] == ["Crew#0", "Crew#1"]


def test_multi_instance_config_count():
    world = instantiate(_model("agent Crew [2..5] { }\n"), config=RunConfig(instance_counts=(("Crew", 4),)))
    assert len(world.instances) == 4


def test_multi_instance_over_max():
    with pytest.raises(CardinalityExceeded):
        instantiate(_model("agent Crew [2..5] { }\n"), config=RunConfig(instance_counts=(("Crew", 7),)))


def test_invalid_model_refused():
    with pytest.raises(ValidationRequired):
        instantiate(load("mutations/AMN-DR1-02.amn"))


@pytest.mark.parametrize("attention, expected", [(None, None), (0.5, 2), (0.0, 1), (0.1, 1), (1.0, 4), (0.26, 2)])
def test_capacity_formula(attention, expected):
    assert capacity_for(attention, 4) == expected


# ---------------------------------------------------------------------------
# Scenario: helpful producer
# ---------------------------------------------------------------------------


def test_helpful_refusal_flow(helpful):
    trace = run(helpful, 42, 30, REFUSAL)
    cands = [e for e in trace.of_kind("emitted") if e.object == "candidates/all"]
    assert len(cands) == 1 and cands[0].subject == "Producer.RawDataAnalyzer"
    (sel,) = trace.of_kind("candidate_selected")
    assert sel.subject == "Producer.DecisionMaker" and sel.object == "oak"
    assert sel.detail["concept"] == "helpful"
    (opened,) = trace.of_kind("window_opened")
    assert opened.detail["duration"] == 14
    assert len(_family_notes(trace)) >= 1


def test_helpful_commit_after_window(helpful):
    trace = run(helpful, 42, 30, REFUSAL)
    (opened,) = trace.of_kind("window_opened")
    (committed,) = trace.of_kind("window_committed")
    (task,) = _supplier_tasks(trace)
    assert committed.tick == task.tick == opened.tick + 14
    assert task.detail["payload"] == {"oak": {"margin": 0, "satisfaction": 10}}
    assert not trace.of_kind("window_vetoed")


@pytest.mark.parametrize("offset", [0, 1, 7, 13, 14])
def test_helpful_veto_inside_window(helpful, offset):
    opened = run(helpful, 42, 30, REFUSAL).of_kind("window_opened")[0].tick
    trace = run(helpful, 42, 30, REFUSAL + [_veto(opened + offset)])
    assert _supplier_tasks(trace) == []
    assert len(trace.of_kind("window_vetoed")) == 1
    assert not trace.of_kind("window_committed")
    changed = [e for e in trace.of_kind("state_changed") if e.object == "awaiting_reorder"]
    assert changed[-1].detail["new"] is True


def test_helpful_veto_at_five(helpful):
    trace = run(helpful, 42, 30, REFUSAL + [_veto(5)])
    assert _supplier_tasks(trace) == []


def test_helpful_veto_after_window_is_too_late(helpful):
    opened = run(helpful, 42, 30, REFUSAL).of_kind("window_opened")[0].tick
    trace = run(helpful, 42, 30, REFUSAL + [_veto(opened + 15)])
    assert len(_supplier_tasks(trace)) == 1


def test_helpful_notification_discipline(helpful):
    report = check_trace(run(helpful, 42, 30, REFUSAL), helpful)
    assert report.ok and report.notification_violations == ()


# ---------------------------------------------------------------------------
# Scenario: self-interested producer
# ---------------------------------------------------------------------------


def test_selfish_immediate_order(selfish):
    trace = run(selfish, 42, 30, REFUSAL)
    (task,) = _supplier_tasks(trace)
    assert task.tick - REFUSAL[0][0] <= 3
    assert trace.of_kind("candidate_selected")[0].object == "pine"
    assert _family_notes(trace) == []
    assert not trace.of_kind("window_opened")


# ---------------------------------------------------------------------------
# Delivery, capacity and reliability
# ---------------------------------------------------------------------------


def _three_at_once(attention: str, overflow: str):
    model = _model(PAIR % f" {{ attention = {attention} }}")
    inj = [(0, InjectedAction.shorthand("A", "request")) for _ in range(3)]
    return run(model, 0, 5, inj, RunConfig(overflow=overflow))


def test_capacity_drop_newest():
    trace = _three_at_once("50%", "drop_newest")
    assert len(trace.of_kind("delivered")) == 2
    (dropped,) = trace.of_kind("dropped")
    assert dropped.detail["reason"] == "capacity" and dropped.detail["id"] == "e3"


def test_capacity_queue():
    trace = _three_at_once("50%", "queue")
    ticks = [e.tick for e in trace.of_kind("delivered")]
    assert ticks == [0, 0, 1]
    assert not trace.of_kind("dropped")


def test_unlimited_capacity_without_attention():
    model = _model(PAIR % "")
    inj = [(0, InjectedAction.shorthand("A", "request")) for _ in range(10)]
    assert len(run(model, 0, 3, inj).of_kind("delivered")) == 10


@pytest.mark.parametrize("reliability, considered", [("30%", False), ("50%", True), ("90%", True)])
def test_reliability_gating(reliability, considered):
    model = _model(PAIR % f" {{ reliability = {reliability} }}")
    trace = run(model, 0, 3, [(0, InjectedAction.shorthand("A", "request"))])
    (delivered,) = trace.of_kind("delivered")
    assert delivered.detail["considered"] is considered


def test_unreliable_instruction_is_ignored():
    model = _model(PAIR % " { reliability = 10%, conformity = 100% }")
    inj = parse_injections("tick=0 A emit instruction(instantiate)/single\n")
    trace = run(model, 0, 3, inj)
    (ignored,) = trace.of_kind("instruction_ignored")
    assert ignored.detail["reason"] == "unreliable"


def test_stochastic_gating_is_seeded():
    model = _model(PAIR % " { reliability = 50% }")
    inj = [(0, InjectedAction.shorthand("A", "request")) for _ in range(40)]
    cfg = RunConfig(stochastic=True)
    a = run(model, 7, 3, inj, cfg)
    assert a.to_jsonl() == run(model, 7, 3, inj, cfg).to_jsonl()
    flags = [e.detail["considered"] for e in a.of_kind("delivered")]
    assert True in flags and False in flags


def test_unknown_injection_agent_is_dropped(helpful):
    trace = run(helpful, 0, 3, [(0, InjectedAction.shorthand("Nobody", "veto"))])
    assert trace.events[0].kind == "dropped" and trace.events[0].detail["reason"] == "unknown_agent"


def test_no_route_is_dropped():
    model = _model(PAIR % " carries task/single")
    trace = run(model, 0, 3, [(0, InjectedAction.shorthand("A", "veto"))])
    assert [e.detail["reason"] for e in trace.of_kind("dropped")] == ["no_route"]


# ---------------------------------------------------------------------------
# Rules
# ---------------------------------------------------------------------------


RULES = """agent A {
  actuator a: generic("bus")
}

agent B {
  sensor s: generic("bus")
  state n = 0
  rule first: on task if n < 1 then set n = n + 1
  rule second: on task then set n = n + 10
}

A.a -> B.s
"""


def test_first_matching_rule_per_object():
    inj = [(0, InjectedAction("A", parse_injections("tick=0 A emit task/single")[0][1].obj))] * 3
    trace = run(_model(RULES), 0, 3, inj)
    assert [e.object for e in trace.of_kind("rule_fired")] == ["first", "second", "second"]
    assert [e.detail["new"] for e in trace.of_kind("state_changed")] == [1, 11, 21]


def test_delegate_is_seeded():
    text = RULES.replace("rule first: on task if n < 1 then set n = n + 1",
                         "rule first: on task then delegate 50% { set n = 1 } else { set n = 2 }")
    inj = parse_injections("\n".join("tick=0 A emit task/single" for _ in range(20)))
    a, b = run(_model(text), 3, 2, inj), run(_model(text), 3, 2, inj)
    assert a.to_jsonl() == b.to_jsonl()
    assert {e.detail["new"] for e in a.of_kind("state_changed")} == {1, 2}


# ---------------------------------------------------------------------------
# Run contract
# ---------------------------------------------------------------------------


def test_empty_model_is_quiescent():
    trace = run(Model(), 5, 10, [])
    assert trace.events == [] and trace.final_tick == 0


def test_max_ticks_must_be_positive(helpful):
    with pytest.raises(ValueError):
        run(helpful, 0, 0, [])


@pytest.mark.parametrize("name", corpus_models())
def test_same_seed_same_bytes(name):
    model = load(name)
    assert run(model, 42, 30, REFUSAL).to_jsonl() == run(model, 42, 30, REFUSAL).to_jsonl()


def test_trace_key_order_and_round_trip(helpful):
    trace = run(helpful, 42, 30, REFUSAL)
    for line in trace.to_jsonl().splitlines():
        assert list(json.loads(line)) == ["tick", "seq", "kind", "subject", "object", "detail"]
    assert read_trace(trace.to_jsonl()) == trace.events
    seqs = [(e.tick, e.seq) for e in trace.events]
    assert seqs == sorted(seqs) and len(set(e.seq for e in trace.events)) == len(seqs)


def test_level6_liveness():
    model = scaffold_level(6)
    inj = parse_injections("tick=0 Environment emit candidates/all {a {gain = 2}, b {gain = 5}}\n")
    trace = run(model, 0, 30, inj)
    (opened,) = trace.of_kind("window_opened")
    (committed,) = trace.of_kind("window_committed")
    assert committed.tick == opened.tick + opened.detail["duration"]
    assert trace.of_kind("candidate_selected")[0].object == "b"


# ---------------------------------------------------------------------------
# Invariants over generated models
# ---------------------------------------------------------------------------


def _generated(seed: int):
    rng = random.Random(seed)
    model = _model(random_sim_model(rng))
    ticks = rng.randint(1, 5)
    names = [a.name for a in model.agents] + ["Ghost"]
    return model, ticks, parse_injections(random_injections(rng, names, ticks))


@pytest.mark.parametrize("seed", range(200))
def test_oracle_equivalence(seed):
    model, ticks, inj = _generated(seed)
    assert run(model, seed, ticks, inj).to_jsonl() == oracle_run(model, seed, ticks, inj)


@pytest.mark.parametrize("seed", range(60))
def test_oracle_equivalence_stochastic_queue(seed):
    model, ticks, inj = _generated(seed)
    cfg = RunConfig(stochastic=True, overflow="queue")
    got = run(model, seed, ticks, inj, cfg).to_jsonl()
    assert got == oracle_run(model, seed, ticks, inj, stochastic=True, overflow="queue")


@pytest.mark.parametrize("seed", range(100))
def test_generated_invariants(seed):
    model, ticks, inj = _generated(seed)
    trace = run(model, seed, ticks * 3, inj)
    for key, (emitted, delivered, dropped, in_flight) in conservation(trace).items():
        assert emitted == delivered + dropped + in_flight, key
    caps = {ci: capacity_for(c.params.attention) for ci, c in enumerate(model.connections)}
    per_tick: dict = {}
    for e in trace.of_kind("delivered"):
        k = (e.tick, e.detail["channel"], e.subject)
        per_tick[k] = per_tick.get(k, 0) + 1
    for (_, ci, _), n in per_tick.items():
        assert caps[ci] is None or n <= caps[ci]
    vetoed = {e.object for e in trace.of_kind("window_vetoed")}
    assert vetoed.isdisjoint(e.object for e in trace.of_kind("window_committed"))


# ---------------------------------------------------------------------------
# Conflict resolution
# ---------------------------------------------------------------------------


def test_helpful_prefers_group_benefit():
    res = resolve_conflict("helpful", [Proposal("A", 0, 10), Proposal("B", 5, 2)])
    assert res.candidate == "A" and res.warning is None


def test_cooperative_accepts_own_loss():
    assert resolve_conflict("cooperative", [Proposal("only", -3, 9)]).candidate == "only"


@pytest.mark.parametrize("concept", ["self_interested", "helpful", "cooperative"])
def test_ties_go_to_lowest_id(concept):
    props = [Proposal(c, 1, 1) for c in ("c", "a", "b")]
    assert resolve_conflict(concept, props).candidate == "a"


def test_self_interested_respects_detriment_limit():
    props = [Proposal("greedy", 10, -5), Proposal("fair", 3, 0)]
    assert resolve_conflict("self_interested", props).candidate == "fair"
    assert resolve_conflict("self_interested", props, detriment_limit=5).candidate == "greedy"


def test_empty_constraint_falls_back_with_warning():
    res = resolve_conflict("helpful", [Proposal("x", -1, 3), Proposal("y", -2, 8)])
    assert res.candidate == "y" and res.warning


def test_missing_concept():
    with pytest.raises(MissingConcept):
        resolve_conflict(None, [Proposal("x", 0, 0)])


# ---------------------------------------------------------------------------
# Trace checks
# ---------------------------------------------------------------------------


def _instruction_events(followed: int, total: int) -> list[TraceEvent]:
    events, seq = [], 0
    for i in range(total):
        seq += 1
        events.append(TraceEvent(i, seq, "delivered", "B", "instruction(instantiate)/single",
                                 {"id": f"e{i}", "channel": 0, "sender": "A", "considered": True}))
        seq += 1
        kind = "instruction_followed" if i < followed else "instruction_ignored"
        events.append(TraceEvent(i, seq, kind, "B", "instruction(instantiate)/single", {"id": f"e{i}", "channel": 0}))
    return events


def test_perfect_conformity():
    model = _model(PAIR % " { conformity = 100% }")
    (ch,) = check_trace(_instruction_events(10, 10), model).channels
    assert ch.measured == 1.0 and not ch.flagged


def test_low_conformity_flagged():
    model = _model(PAIR % " { conformity = 90% }")
    report = check_trace(_instruction_events(5, 10), model)
    (ch,) = report.channels
    assert ch.measured == 0.5 and ch.flagged and not report.ok
    assert report.to_dict()["schema"] == "amn.conformance/1"


def test_always_mode_needs_notifications(helpful):
    trace = run(helpful, 42, 30, REFUSAL)
    stripped = [e for e in trace.events if not (e.kind == "emitted" and e.object.startswith("notification"))]
    assert check_trace(stripped, helpful).notification_violations


def test_trace_from_other_model(helpful, selfish):
    with pytest.raises(TraceModelMismatch):
        check_trace(run(helpful, 42, 30, REFUSAL), selfish)


def test_trace_with_unknown_agent(helpful):
    with pytest.raises(TraceModelMismatch):
        check_trace([TraceEvent(0, 1, "rule_fired", "Stranger", "r", {})], helpful)


# ---------------------------------------------------------------------------
# Injection schedules
# ---------------------------------------------------------------------------


def test_injection_file_parsing():
    text = "# comment\n\ntick=3 Family veto\n// other\ntick=0 Env emit candidates/all {a {gain = 1}} via out\n"
    (t1, veto), (t2, emit) = parse_injections(text)
    assert (t1, veto.agent, veto.obj.label()) == (3, "Family", "reaction(veto)/single")
    assert (t2, emit.actuator, emit.obj.label()) == (0, "out", "candidates/all")


@pytest.mark.parametrize(
    "line",
    ["3 Family veto", "tick=x Family veto", "tick=-1 Family veto", "tick=1 Family dance",
     "tick=1 Family veto now", "tick=1 Family emit", "tick=1 Family emit nonsense(("],
)
def test_bad_injection_lines(line):
    with pytest.raises(InjectionError):
        parse_injection_line(line)
