"""``amn`` command-line tool.

Exit codes: 0 success, 1 findings (syntax/validation errors, flagged
conformance, failed ``fmt --check``), 2 usage error or unreadable input,
3 internal fault. A file argument of ``-`` reads standard input.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import traceback
from typing import Optional, TextIO

from amn import __version__
from amn.diagnostics import Diagnostic, has_errors, to_json

EXIT_OK, EXIT_FINDINGS, EXIT_USAGE, EXIT_FAULT = 0, 1, 2, 3


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def _read(path: str) -> str:
    if path == "-":
        return sys.stdin.read()
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None


def _write(path: Optional[str], text: str, out: TextIO) -> None:
    if path is None or path == "-":
        out.write(text)
        return
    try:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc.strerror}") from None


def _color(stream: TextIO) -> bool:
    return "AMN_NO_COLOR" not in os.environ and hasattr(stream, "isatty") and stream.isatty()


def _print_diags(diags: list[Diagnostic], stream: TextIO) -> None:
    paint = _color(stream)
    for d in diags:
        line = d.to_line()
        if paint:
            code = "31" if d.is_error else "33"
            line = line.replace(f" {d.severity} ", f" \x1b[{code}m{d.severity}\x1b[0m ", 1)
        stream.write(line + "\n")


def _load(path: str, err: TextIO):
    """Parse a file; report syntax errors. Returns (model, diags) or None."""
    from amn.dsl import parse

    text = _read(path)
    model, diags = parse(text, "<stdin>" if path == "-" else path)
    if has_errors(diags):
        _print_diags(diags, err)
        return None
    return model, diags


def _load_valid(path: str, err: TextIO):
    from amn.validator import validate

    loaded = _load(path, err)
    if loaded is None:
        return None
    diags = validate(loaded[0])
    if has_errors(diags):
        _print_diags(diags, err)
        return None
    return loaded[0]


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_fmt(args, out: TextIO, err: TextIO) -> int:
    from amn.dsl import FormatRefused, fmt

    text = _read(args.file)
    try:
        formatted = fmt(text, "<stdin>" if args.file == "-" else args.file)
    except FormatRefused as exc:
        _print_diags(exc.diagnostics, err)
        return EXIT_FINDINGS
    if args.check:
        if formatted != text:
            err.write(f"{args.file}: not canonically formatted\n")
            return EXIT_FINDINGS
        return EXIT_OK
    if args.write and args.file != "-":
        if formatted != text:
            _write(args.file, formatted, out)
        return EXIT_OK
    out.write(formatted)
    return EXIT_OK


def cmd_validate(args, out: TextIO, err: TextIO) -> int:
    from amn.dsl import parse
    from amn.validator import validate

    text = _read(args.file)
    model, diags = parse(text, "<stdin>" if args.file == "-" else args.file)
    if not has_errors(diags):
        diags = diags + validate(model)
    if args.format == "json":
        out.write(json.dumps({"schema": "amn.diagnostics/1", "diagnostics": json.loads(to_json(diags))},
                             indent=2) + "\n")
    else:
        _print_diags(diags, out)
    return EXIT_FINDINGS if has_errors(diags) else EXIT_OK


def cmd_classify(args, out: TextIO, err: TextIO) -> int:
    from amn.autonomy import NoRelationship, classification_report
    from amn.model import ResolveError

    model = _load_valid(args.file, err)
    if model is None:
        return EXIT_FINDINGS
    try:
        report = classification_report(model, args.human, args.machine)
    except (NoRelationship, ResolveError) as exc:
        err.write(f"error: {exc}\n")
        return EXIT_FINDINGS
    if args.format == "json":
        out.write(json.dumps(report, indent=2) + "\n")
    else:
        out.write(f"pattern: {report['pattern'] or '-'}\n")
        levels = ", ".join(str(lvl) for lvl in report["levels"])
        out.write(f"levels: {levels}{' (approximate)' if report['approximate'] else ''}\n")
        for k, v in report["profile"].items():
            out.write(f"  {k}: {str(v).lower() if isinstance(v, bool) else v}\n")
    return EXIT_OK


def cmd_scaffold(args, out: TextIO, err: TextIO) -> int:
    from amn.autonomy import scaffold_level
    from amn.dsl import print_model

    if not 1 <= args.level <= 20:
        raise UsageError("--level must be between 1 and 20")
    model = scaffold_level(args.level, (args.human, args.machine))
    _write(args.output, print_model(model), out)
    return EXIT_OK


def cmd_simulate(args, out: TextIO, err: TextIO) -> int:
    from amn.simulator import InjectionError, RunConfig, check_trace, parse_injections, run

    if args.ticks < 1:
        raise UsageError("--ticks must be at least 1")
    model = _load_valid(args.file, err)
    if model is None:
        return EXIT_FINDINGS
    injections = []
    if args.inject:
        try:
            injections = parse_injections(_read(args.inject))
        except InjectionError as exc:
            raise UsageError(f"{args.inject}: {exc}") from None
    config = RunConfig(attention_base=args.attention_base, stochastic=args.stochastic, overflow=args.overflow)
    trace = run(model, args.seed, args.ticks, injections, config)
    _write(args.trace, trace.to_jsonl(), out)
    status = EXIT_OK
    if args.check_conformance:
        report = check_trace(trace, model)
        stream = out if args.trace else err
        stream.write(json.dumps(report.to_dict(), indent=2) + "\n")
        if not report.ok:
            status = EXIT_FINDINGS
    return status


def cmd_render(args, out: TextIO, err: TextIO) -> int:
    from amn.render import RenderOptions, legend, to_dot

    try:
        opts = RenderOptions(
            show_params=not args.no_params,
            show_behavior=args.behavior,
            collapse_below_depth=args.collapse,
            badge_style="words" if args.words else "short_codes",
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if args.legend:
        _write(args.output, legend(opts), out)
        return EXIT_OK
    if args.file is None:
        raise UsageError("render needs a model file (or --legend)")
    model = _load_valid(args.file, err)
    if model is None:
        return EXIT_FINDINGS
    _write(args.output, to_dot(model, opts), out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would call sys.exit itself
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="amn", description="Autonomy Model and Notation toolkit")
    p.add_argument("--version", action="store_true", help="print the version and exit")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    f = sub.add_parser("fmt", help="print the canonical form of a model")
    f.add_argument("file")
    g = f.add_mutually_exclusive_group()
    g.add_argument("--check", action="store_true", help="exit 1 if the file is not canonical")
    g.add_argument("-w", "--write", action="store_true", help="rewrite the file in place")
    f.set_defaults(func=cmd_fmt)

    v = sub.add_parser("validate", help="check well-formedness rules")
    v.add_argument("file")
    v.add_argument("--format", choices=("text", "json"), default="text")
    v.set_defaults(func=cmd_validate)

    c = sub.add_parser("classify", help="autonomy level and interaction pattern of a human/machine pair")
    c.add_argument("file")
    c.add_argument("--human", required=True, help="agent path of the human side")
    c.add_argument("--machine", required=True, help="agent path of the machine side")
    c.add_argument("--format", choices=("json", "text"), default="json")
    c.set_defaults(func=cmd_classify)

    s = sub.add_parser("scaffold", help="print a minimal model for an autonomy level")
    s.add_argument("--level", type=int, required=True)
    s.add_argument("--human", default="Human", help="name of the human agent")
    s.add_argument("--machine", default="Machine", help="name of the machine agent")
    s.add_argument("-o", "--output")
    s.set_defaults(func=cmd_scaffold)

    r = sub.add_parser("simulate", help="run a model and write a JSON Lines trace")
    r.add_argument("file")
    r.add_argument("--ticks", type=int, required=True)
    r.add_argument("--seed", type=int, required=True)
    r.add_argument("--inject", help="injection schedule file")
    r.add_argument("--trace", help="write the trace here instead of standard output")
    r.add_argument("--check-conformance", action="store_true")
    r.add_argument("--attention-base", type=int, default=4)
    r.add_argument("--stochastic", action="store_true", help="reliability gates with probability")
    r.add_argument("--overflow", choices=("drop_newest", "queue"), default="drop_newest")
    r.set_defaults(func=cmd_simulate)

    d = sub.add_parser("render", help="emit the model as a Graphviz DOT graph")
    d.add_argument("file", nargs="?")
    d.add_argument("-o", "--output")
    d.add_argument("--collapse", type=int, metavar="N", help="fold agents at depth N and below into one node")
    d.add_argument("--no-params", action="store_true", help="omit channel parameter labels")
    d.add_argument("--behavior", action="store_true", help="list utility and rules in agent labels")
    d.add_argument("--words", action="store_true", help="spell badges out in words")
    d.add_argument("--legend", action="store_true", help="emit the badge legend instead of a model")
    d.set_defaults(func=cmd_render)
    return p


def main(argv: Optional[list[str]] = None, out: Optional[TextIO] = None, err: Optional[TextIO] = None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    try:
        parser = build_parser()
        args = parser.parse_args(argv)
        if args.version:
            out.write(f"amn {__version__}\n")
            return EXIT_OK
        if args.command is None:
            raise UsageError(parser.format_usage() + "amn: error: a subcommand is required")
        return args.func(args, out, err)
    except UsageError as exc:
        msg = str(exc)
        err.write(msg if msg.endswith("\n") else msg + "\n")
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except Exception:
        err.write("internal error:\n" + traceback.format_exc())
        return EXIT_FAULT


if __name__ == "__main__":
    sys.exit(main())
