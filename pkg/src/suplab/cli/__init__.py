"""Command-line entry point: ``suplab <subcommand> <scenario> <out-dir>``.

Exit codes: 0 when every check passes, 1 when any check fails, 2 for a
configuration or validation error (the message names the offending key).
A scenario argument that is not an existing file may name a bundled
scenario (``heat``, ``porous``, ``ou``, ``jumps``).
"""

from __future__ import annotations

import argparse
import logging
import sys
from importlib import resources
from pathlib import Path

from ..core.scenario import Scenario, validate_scenario
from ..errors import CflViolation, ScenarioError, SuplabError
from .commands import COMMANDS
from .report import Context, Report

log = logging.getLogger("suplab")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2

ALL_ORDER = ("solve-fpe", "solve-porous", "simulate", "superposition", "flow", "domination",
             "dirichlet", "represent", "lyapunov", "jumps", "resolvent", "capacity", "energy")


def bundled_scenarios() -> list[str]:
    root = resources.files("suplab") / "scenarios"
    return sorted(p.name[: -len(".scenario")] for p in root.iterdir()
                  if p.name.endswith(".scenario"))


def load_scenario(arg: str) -> Scenario:
    p = Path(arg)
    if p.is_file():
        return Scenario.load(p)
    name = p.name[: -len(".scenario")] if p.name.endswith(".scenario") else p.name
    res = resources.files("suplab") / "scenarios" / f"{name}.scenario"
    if res.is_file():
        return Scenario.loads(res.read_text(), f"bundled:{name}")
    raise ScenarioError("scenario", f"no such file or bundled scenario: {arg}")


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="suplab", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in (*ALL_ORDER, "all", "validate"):
        sp = sub.add_parser(name)
        sp.add_argument("scenario")
        sp.add_argument("out", type=Path)
    sp = sub.add_parser("list-scenarios")
    return ap


def _validate(sc: Scenario, rep: Report):
    vr = validate_scenario(sc)
    for c in vr.conditions:
        if not c.name.startswith("catalog"):
            rep.info(c.line())
    for c in vr.failures:
        raise ScenarioError(c.key, f"{c.name} fails at {c.where}: {c.message}")
    return vr


def run(command: str, scenario: str, out: Path) -> int:
    """Run one subcommand; returns the exit code."""
    try:
        sc = load_scenario(scenario)
        rep = Report(sc["sde.seed"])
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "effective.scenario", "w", newline="\n") as fh:
            fh.write(sc.dumps())
        _validate(sc, rep)
        ctx = Context(sc, out, rep)
        names = ALL_ORDER if command == "all" else () if command == "validate" else (command,)
        for name in names:
            log.info("running %s", name)
            COMMANDS[name](ctx)
        rep.write(out / "report.txt")
    except CflViolation as exc:
        msg = str(exc)
        print(f"error: {msg if 'time.dt' in msg else 'time.dt: ' + msg}", file=sys.stderr)
        return EXIT_CONFIG
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SuplabError, ValueError, KeyError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print("\n".join(rep.lines))
    return EXIT_FAIL if rep.n_fail else EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "list-scenarios":
        print("\n".join(bundled_scenarios()))
        return EXIT_OK
    return run(args.command, args.scenario, args.out)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
