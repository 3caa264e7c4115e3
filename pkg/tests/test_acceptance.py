"""Acceptance criteria 1-9, one check each.

Each check returns ``(passed, detail)``. Under pytest every criterion is a
test and its PASS/FAIL line is printed in the terminal summary; run as a
script (``python tests/test_acceptance.py``) the lines go to stdout.
"""

from __future__ import annotations

import io
import json
import random
import sys
import time
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from conftest import CORPUS, corpus_models, corpus_text, load  # noqa: E402

RESULTS: dict[int, tuple[bool, str]] = {}

TITLES = {
    1: "helpful scenario reproduction",
    2: "self-interested scenario reproduction",
    3: "level round-trip 20/20",
    4: "pattern suite 9/9",
    5: "validator mutation corpus",
    6: "DSL round-trip on 1000 generated models",
    7: "simulator determinism and oracle equivalence (200 models)",
    8: "per-channel conservation on corpus simulations",
    9: "render determinism and DOT grammar",
}


def _cli(*argv: str) -> tuple[int, str, str]:
    from amn.cli import main

    out, err = io.StringIO(), io.StringIO()
    code = main(list(argv), out, err)
    return code, out.getvalue(), err.getvalue()


def _events(jsonl: str) -> list[dict]:
    return [json.loads(line) for line in jsonl.splitlines()]


def _simulate(model_file: str, inject_text: str, tmp: Path) -> list[dict]:
    inj = tmp / "schedule.inject"
    inj.write_text(inject_text, encoding="utf-8")
    code, out, err = _cli("simulate", model_file, "--ticks", "30", "--seed", "42", "--inject", str(inj))
    assert code == 0, err
    return _events(out)


# ---------------------------------------------------------------------------
# Criteria
# ---------------------------------------------------------------------------


def criterion_1(tmp: Path) -> tuple[bool, str]:
    from amn.validator import error_count, validate

    started = time.perf_counter()
    path = str(CORPUS / "scenario_helpful.amn")
    refusal = corpus_text("scenario_refusal.inject")
    errors = error_count(validate(load("scenario_helpful.amn")))
    code, out, _ = _cli("classify", path, "--human", "Family", "--machine", "Producer")
    levels = json.loads(out)["levels"] if code == 0 else []
    events = _simulate(path, refusal, tmp)
    elapsed = time.perf_counter() - started

    opened = [e["tick"] for e in events if e["kind"] == "window_opened"]
    tasks = [e for e in events if e["kind"] == "emitted" and e["object"].startswith("task")
             and e["detail"]["to"] == "Supplier"]
    notes = [e for e in events if e["kind"] == "emitted" and e["object"].startswith("notification")
             and e["detail"]["to"] == "Family"]
    ok = (errors == 0 and 6 in levels and len(opened) == 1 and len(tasks) == 1
          and tasks[0]["tick"] == opened[0] + 14 and len(notes) >= 1 and elapsed < 1.0)

    leaks = []
    if opened:
        for t in range(opened[0], opened[0] + 15):
            vetoed = _simulate(path, refusal + f"tick={t} Family veto\n", tmp)
            if any(e["kind"] == "emitted" and e["object"].startswith("task") for e in vetoed):
                leaks.append(t)
    ok = ok and not leaks and bool(opened)
    detail = (f"errors={errors} levels={levels} window@{opened} task@{[e['tick'] for e in tasks]} "
              f"notifications={len(notes)} veto-leaks={leaks} runtime={elapsed:.3f}s")
    return ok, detail


def criterion_2(tmp: Path) -> tuple[bool, str]:
    from amn.simulator import parse_injections

    started = time.perf_counter()
    path = str(CORPUS / "scenario_selfinterested.amn")
    code, out, _ = _cli("classify", path, "--human", "Family", "--machine", "Producer")
    levels = json.loads(out)["levels"] if code == 0 else []
    refusal = corpus_text("scenario_refusal.inject")
    events = _simulate(path, refusal, tmp)
    elapsed = time.perf_counter() - started
    (refused_at, _), = parse_injections(refusal)
    notes = [e for e in events if e["kind"] == "emitted" and e["object"].startswith("notification")
             and e["detail"]["to"] == "Family"]
    tasks = [e["tick"] for e in events if e["kind"] == "emitted" and e["object"].startswith("task")
             and e["detail"]["to"] == "Supplier"]
    ok = 1 in levels and not notes and bool(tasks) and tasks[0] - refused_at <= 3 and elapsed < 1.0
    return ok, f"levels={levels} notifications={len(notes)} task@{tasks} refusal@{refused_at} runtime={elapsed:.3f}s"


def criterion_3(tmp: Path) -> tuple[bool, str]:
    passed = []
    for level in range(1, 21):
        code, text, _ = _cli("scaffold", "--level", str(level))
        target = tmp / f"level{level}.amn"
        target.write_text(text, encoding="utf-8")
        valid = _cli("validate", str(target)) == (0, "", "")
        code, out, _ = _cli("classify", str(target), "--human", "Human", "--machine", "Machine")
        if valid and code == 0 and level in json.loads(out)["levels"]:
            passed.append(level)
    return len(passed) == 20, f"{len(passed)}/20 levels round-trip"


def criterion_4(tmp: Path) -> tuple[bool, str]:
    from amn.autonomy import classify_pattern

    got = {}
    for name in list("ABCDEFGH") + ["composite"]:
        got[name] = classify_pattern(load(f"patterns/{name}.amn")).pattern
    hits = sum(k == v for k, v in got.items())
    return hits == 9, f"{hits}/9 fixtures classified as expected"


def criterion_5(tmp: Path) -> tuple[bool, str]:
    from amn.validator import CATALOGUE

    covered, crashes = [], []
    for code in sorted(CATALOGUE):
        fixture = CORPUS / "mutations" / f"{code}.amn"
        if not fixture.exists():
            continue
        status, out, err = _cli("validate", str(fixture), "--format", "json")
        if status == 3:
            crashes.append(code)
            continue
        if code in {d["code"] for d in json.loads(out)["diagnostics"]}:
            covered.append(code)
    ok = len(CATALOGUE) >= 20 and len(covered) == len(CATALOGUE) and not crashes
    return ok, f"{len(covered)}/{len(CATALOGUE)} catalogue codes reproduced, crashes={crashes}"


def criterion_6(tmp: Path) -> tuple[bool, str]:
    from amn.diagnostics import has_errors
    from amn.dsl import fmt, parse, print_model
    from amn.model import canonical
    from modelgen import random_model

    started = time.perf_counter()
    failures = []
    for seed in range(1000):
        model = random_model(random.Random(seed))
        text = print_model(model)
        parsed, diags = parse(text)
        if has_errors(diags) or canonical(parsed) != canonical(model) or fmt(text) != text:
            failures.append(seed)
    elapsed = time.perf_counter() - started
    return not failures and elapsed < 30, f"failures={len(failures)} runtime={elapsed:.2f}s"


def criterion_7(tmp: Path) -> tuple[bool, str]:
    from amn.dsl import parse
    from amn.simulator import parse_injections, run
    from modelgen import random_injections, random_sim_model
    from oracle_sim import oracle_run

    divergent, unstable = [], []
    for seed in range(200):
        rng = random.Random(seed)
        model, _ = parse(random_sim_model(rng))
        ticks = rng.randint(1, 5)
        inj = parse_injections(random_injections(rng, [a.name for a in model.agents] + ["Ghost"], ticks))
        first = run(model, seed, ticks, inj).to_jsonl()
        if first != run(model, seed, ticks, inj).to_jsonl():
            unstable.append(seed)
        if first != oracle_run(model, seed, ticks, inj):
            divergent.append(seed)
    return not divergent and not unstable, f"divergences={len(divergent)} non-reproducible={len(unstable)}"


def criterion_8(tmp: Path) -> tuple[bool, str]:
    from amn.simulator import RunConfig, conservation, parse_injections, run

    refusal = corpus_text("scenario_refusal.inject")
    schedules = [refusal, refusal + "tick=5 Family veto\n", ""]
    runs, broken = 0, []
    for name in corpus_models():
        model = load(name)
        roots = [a.name for a in model.agents]
        extra = "".join(f"tick={i} {r} emit instruction(instantiate)/single\n" for i, r in enumerate(roots))
        for text in schedules + [extra]:
            for overflow in ("drop_newest", "queue"):
                trace = run(model, 42, 30, parse_injections(text), RunConfig(overflow=overflow))
                runs += 1
                for key, (emitted, delivered, dropped, flying) in conservation(trace).items():
                    if emitted != delivered + dropped + flying:
                        broken.append((name, key))
    return not broken, f"{runs} corpus runs, unbalanced channels={len(broken)}"


def criterion_9(tmp: Path) -> tuple[bool, str]:
    import pydot

    from amn.render import to_dot

    unstable, rejected = [], []
    for name in corpus_models():
        outputs = {to_dot(load(name)) for _ in range(3)}
        if len(outputs) != 1:
            unstable.append(name)
        for text in outputs:
            if not pydot.graph_from_dot_data(text):
                rejected.append(name)
    ok = not unstable and not rejected
    return ok, f"{len(corpus_models())} models, non-deterministic={unstable} grammar-rejected={rejected}"


CHECKS = {n: globals()[f"criterion_{n}"] for n in TITLES}


def _line(n: int) -> str:
    passed, detail = RESULTS[n]
    return f"criterion {n} [{'PASS' if passed else 'FAIL'}] {TITLES[n]}: {detail}"


# ---------------------------------------------------------------------------
# pytest entry points
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("number", list(TITLES))
def test_criterion(number, tmp_path):
    try:
        RESULTS[number] = CHECKS[number](tmp_path)
    except Exception as exc:  # a crash is a failure of the criterion, reported as such
        RESULTS[number] = (False, f"raised {type(exc).__name__}: {exc}")
    print(_line(number))
    assert RESULTS[number][0], _line(number)


if __name__ == "__main__":
    import tempfile

    with tempfile.TemporaryDirectory() as tmp:
        for n in TITLES:
            try:
                RESULTS[n] = CHECKS[n](Path(tmp))
            except Exception as exc:
                RESULTS[n] = (False, f"raised {type(exc).__name__}: {exc}")
            print(_line(n))
    sys.exit(0 if all(ok for ok, _ in RESULTS.values()) else 1)
