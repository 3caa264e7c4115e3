"""Core model operations: compose, connect, compatible, resolve."""

from __future__ import annotations

import pytest

from amn.model import (
    AgentDef,
    ChannelParams,
    CycleWouldForm,
    DuplicateName,
    IncompatibleModality,
    Interface,
    Modality,
    Model,
    NotFound,
    ParamOutOfRange,
    ParentIsCalling,
    ResolveError,
    UnresolvedEndpoint,
    WrongDirection,
    canonical,
    compatible,
    compose,
    connect,
    remove,
    resolve,
    structurally_equal,
)

EMAIL = Modality("generic", "email")
EDI = Modality("generic", "edi")


def _box(name: str, *, sensors=(), actuators=(), kind="standard", children=(), ref=None) -> AgentDef:
    return AgentDef(name, kind, sensors=tuple(sensors), actuators=tuple(actuators), children=tuple(children), ref=ref)


# ---------------------------------------------------------------------------
# compose / remove
# ---------------------------------------------------------------------------


def test_compose_adds_child(helpful):
    analyzer = _box("Extra")
    out = compose(helpful, "Producer", analyzer)
    assert len(resolve(out, "Producer").children) == 3
    assert resolve(out, "Producer.Extra") == analyzer


def test_compose_into_empty_root():
    out = compose(Model(), "", _box("Producer"))
    assert [a.name for a in out.agents] == ["Producer"]


def test_compose_analyzer_under_producer():
    m = compose(Model(), "", _box("Producer"))
    m = compose(m, "Producer", _box("RawDataAnalyzer"))
    assert len(resolve(m, "Producer").children) == 1


def test_compose_under_calling_agent_refused():
    m = compose(Model(), "", _box("CallingAgentX", kind="calling"))
    with pytest.raises(ParentIsCalling):
        compose(m, "CallingAgentX", _box("Child"))


def test_compose_duplicate_name_refused():
    m = compose(Model(), "", _box("A"))
    with pytest.raises(DuplicateName):
        compose(m, "", _box("A"))


def test_compose_cycle_through_global_refused():
    m = Model(globals=(_box("G"),))
    with pytest.raises(CycleWouldForm):
        compose(m, "G", _box("loop", kind="global_ref", ref="G"))


def test_remove_is_inverse_of_compose(helpful):
    assert remove(compose(helpful, "Producer", _box("X")), "Producer.X") == helpful


# ---------------------------------------------------------------------------
# compatible / connect
# ---------------------------------------------------------------------------


@pytest.mark.parametrize(
    "a, b, expected",
    [
        (Modality("tactile"), Modality("tactile"), True),
        (EMAIL, EDI, False),
        (EMAIL, EMAIL, True),
        (Modality("visual"), Modality("auditory"), False),
        (Modality("visual"), Modality("generic", "visual"), False),
    ],
)
def test_compatible(a, b, expected):
    assert compatible(a, b) is expected
    assert compatible(b, a) is expected


def _two(src_mod: Modality, dst_mod: Modality) -> Model:
    return Model(agents=(
        _box("Producer", actuators=[Interface("out", "actuator", src_mod)]),
        _box("Family", sensors=[Interface("inbox", "sensor", dst_mod)]),
    ))


def test_connect_email_ok():
    m = connect(_two(EMAIL, EMAIL), "Producer.out", "Family.inbox")
    assert len(m.connections) == 1


def test_connect_visual_ok():
    m = connect(_two(Modality("visual"), Modality("visual")), "Producer.out", "Family.inbox")
    assert m.connections[0].style == "continuous"


def test_connect_incompatible():
    with pytest.raises(IncompatibleModality):
        connect(_two(Modality("visual"), Modality("auditory")), "Producer.out", "Family.inbox")


def test_connect_wrong_direction():
    with pytest.raises(WrongDirection):
        connect(_two(EMAIL, EMAIL), "Family.inbox", "Producer.out")


def test_connect_unresolved():
    with pytest.raises(UnresolvedEndpoint):
        connect(_two(EMAIL, EMAIL), "Nobody.out", "Family.inbox")


def test_connect_param_range():
    with pytest.raises(ParamOutOfRange):
        connect(_two(EMAIL, EMAIL), "Producer.out", "Family.inbox", params=ChannelParams(reliability=1.3))


# ---------------------------------------------------------------------------
# resolve
# ---------------------------------------------------------------------------


def test_resolve_decision_maker(helpful):
    dm = resolve(helpful, "Producer.DecisionMaker")
    assert dm.name == "DecisionMaker"
    assert [r.name for r in dm.behavior.rules] == ["choose", "vetoed"]


def test_resolve_empty_path(helpful):
    with pytest.raises(NotFound):
        resolve(helpful, "")


def test_resolve_reference_gives_global_definition():
    g = _box("G", sensors=[Interface("s", "sensor", EMAIL)])
    m = Model(agents=(_box("ref_to_G", kind="global_ref", ref="G"),), globals=(g,))
    assert resolve(m, "ref_to_G") == g


def test_resolve_missing_global():
    m = Model(agents=(_box("r", kind="global_ref", ref="Nope"),))
    with pytest.raises(ResolveError):
        resolve(m, "r")


def test_canonical_sorts_connections(helpful):
    flipped = type(helpful)(helpful.agents, helpful.globals, tuple(reversed(helpful.connections)))
    assert flipped != helpful
    assert structurally_equal(flipped, helpful)
    assert canonical(flipped) == canonical(helpful)
