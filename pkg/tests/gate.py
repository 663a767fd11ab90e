"""Collects one verdict line per acceptance criterion for the run summary."""

from __future__ import annotations

LINES: list[str] = []


class Criterion:
    """Sub-checks of one criterion; the criterion passes iff all of them do."""

    def __init__(self, number: int, title: str):
        self.number = number
        self.title = title
        self.parts: list[tuple[str, bool, float, float]] = []
        self.notes: list[str] = []

    def check(self, name, ok, statistic, tolerance):
        self.parts.append((name, bool(ok), float(statistic), float(tolerance)))

    def note(self, text):
        self.notes.append(text)

    @property
    def passed(self) -> bool:
        return bool(self.parts) and all(ok for _, ok, _, _ in self.parts)

    def finish(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        line = f"criterion {self.number} {self.title} {verdict}"
        LINES.append(line)
        for name, ok, s, t in self.parts:
            LINES.append(f"    {name} {'PASS' if ok else 'FAIL'} statistic={s:.6g} tolerance={t:.6g}")
        LINES.extend(f"    # {n}" for n in self.notes)
        print(line)
        return line
