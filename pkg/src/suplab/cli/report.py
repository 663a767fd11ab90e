"""Report lines and run context shared by the subcommands."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from ..core.scenario import Scenario


def _fmt(v) -> str:
    return f"{v:.6g}"


@dataclass
class Report:
    seed: int
    lines: list = field(default_factory=list)
    n_fail: int = 0

    def check(self, name, label, passed, statistic, tolerance, note=""):
        v = "PASS" if passed else "FAIL"
        self.n_fail += not passed
        extra = f" {note}" if note else ""
        self.lines.append(f"{name} {label} {v} statistic={_fmt(statistic)} "
                          f"tolerance={_fmt(tolerance)} seed={self.seed}{extra}")

    def row(self, r, label=None):
        """A ``CheckRow``; the label defaults to ``t=<checkpoint>``."""
        self.check(r.check, label or f"t={r.checkpoint:g}", r.passed, r.statistic, r.threshold)

    def skip(self, name, reason):
        self.lines.append(f"{name} SKIP reason={reason} seed={self.seed}")

    def info(self, text):
        self.lines.append(f"# {text}")

    def write(self, path: Path):
        with open(path, "w", newline="\n") as fh:
            fh.write("\n".join(self.lines) + "\n")


@dataclass
class Context:
    sc: Scenario
    out: Path
    report: Report
    cache: dict = field(default_factory=dict)

    def path(self, name) -> Path:
        return self.out / name
