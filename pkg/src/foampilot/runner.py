"""Solver execution backends and log triage.

A run is classified from its exit status, log text and residual history:
CrashedEarly (fatal banner or nonzero exit), CompletedNotConverged (finished
but residuals above threshold) or Converged. The subprocess backend drives a
real solver; the simulated backend replays scripted logs and synthetic
residual series through the same classifier, which is what makes the
correction loop testable offline.
"""

from __future__ import annotations

import json
import re
import subprocess
from dataclasses import dataclass, field
from pathlib import Path

from .casemodel import CaseLayout

RESIDUAL_THRESHOLD = 1e-4
EXCERPT_LIMIT = 40

CRASHED_EARLY = "CrashedEarly"
COMPLETED_NOT_CONVERGED = "CompletedNotConverged"
CONVERGED = "Converged"

ERROR_KINDS = ("keyword-missing", "bad-value", "divergence", "solver-abort", "unknown")


class SpawnFailure(Exception):
    pass


@dataclass(frozen=True)
class ErrorDigest:
    kind: str
    excerpt: str
    implicated_path: str | None = None

    def __post_init__(self):
        if self.kind not in ERROR_KINDS:
            raise ValueError(f"unknown error kind {self.kind!r}")


@dataclass
class RunOutcome:
    exit_status: int
    log: str
    classification: str
    residuals: dict[str, list[float]] = field(default_factory=dict)
    digest: ErrorDigest | None = None

    @property
    def converged(self) -> bool:
        return self.classification == CONVERGED

    def final_residuals(self) -> dict[str, float]:
        return {name: series[-1] for name, series in self.residuals.items() if series}


_SOLVE_LINE = re.compile(
    r"Solving for (\w+), Initial residual = ([0-9eE+.-]+)")
_FATAL = re.compile(r"FOAM FATAL (?:IO )?ERROR")
_KEYWORD_MISSING = re.compile(
    r"(?:keyword|[Ee]ntry)\s+'?\"?([\w().,|*]+)'?\"?\s+(?:is undefined|not found)")
_BAD_VALUE = re.compile(
    r"wrong token type|[Bb]ad (?:value|token)|Cannot (?:find|read)|"
    r"expected .* found|unknown .*(?:type|scheme|model)|[Cc]ould not find")
_FPE = re.compile(r"[Ff]loating point exception|sigFpe")
_FILE_REF = re.compile(r'file: (\S+?)(?:\s+(?:at|near|from) line|$)', re.MULTILINE)
_DICT_REF = re.compile(r'in dictionary "([^"]+)"')


def parse_residuals(log: str) -> dict[str, list[float]]:
    """Initial-residual series per field, in encounter order."""
    series: dict[str, list[float]] = {}
    for match in _SOLVE_LINE.finditer(log):
        name, value = match.group(1), float(match.group(2))
        series.setdefault(name, []).append(value)
    return series


def diverging(series: list[float]) -> bool:
    """Strict growth across three consecutive samples."""
    for i in range(len(series) - 2):
        if series[i] < series[i + 1] < series[i + 2]:
            return True
    return False


def _extract_excerpt(lines: list[str], anchor: int) -> str:
    start = max(0, anchor - 5)
    return "\n".join(lines[start : start + EXCERPT_LIMIT])


def _normalize_scope(scope: str) -> str:
    # Dictionary scope strings append sub-dict names after the file path
    # ("/case/system/fvSchemes.divSchemes"); reduce to a case-relative file.
    for marker in ("/system/", "/constant/", "/0/"):
        if marker in scope:
            tail = scope[scope.index(marker) + 1 :]
            return tail.split(".")[0]
    return scope


def _implicated_path(excerpt: str) -> str | None:
    match = _FILE_REF.search(excerpt)
    if match:
        return _normalize_scope(match.group(1).rstrip("."))
    match = _DICT_REF.search(excerpt)
    if match:
        return _normalize_scope(match.group(1))
    return None


def build_digest(log: str, exit_status: int,
                 residuals: dict[str, list[float]] | None = None) -> ErrorDigest | None:
    """Triage a failed run's log; None when there is nothing to report."""
    lines = log.splitlines()
    anchor = next((i for i, line in enumerate(lines) if _FATAL.search(line)), None)
    if anchor is None and exit_status == 0:
        residuals = residuals if residuals is not None else parse_residuals(log)
        if any(diverging(series) for series in residuals.values()):
            return ErrorDigest("divergence", _extract_excerpt(lines, max(0, len(lines) - EXCERPT_LIMIT)))
        return None
    if anchor is None:
        anchor = max(0, len(lines) - EXCERPT_LIMIT)
    excerpt = _extract_excerpt(lines, anchor)
    implicated = _implicated_path(excerpt)

    if _KEYWORD_MISSING.search(excerpt):
        kind = "keyword-missing"
    elif _BAD_VALUE.search(excerpt):
        kind = "bad-value"
    elif _FPE.search(excerpt) or any(
            diverging(s) for s in (residuals or parse_residuals(log)).values()):
        kind = "divergence"
    elif _FATAL.search(excerpt) or exit_status != 0:
        kind = "solver-abort"
    else:
        kind = "unknown"
    return ErrorDigest(kind, excerpt, implicated)


def classify(log: str, exit_status: int,
             residuals: dict[str, list[float]] | None = None,
             threshold: float = RESIDUAL_THRESHOLD) -> RunOutcome:
    if residuals is None:
        residuals = parse_residuals(log)
    fatal = _FATAL.search(log) is not None
    if exit_status != 0 or fatal:
        return RunOutcome(exit_status, log, CRASHED_EARLY, residuals,
                          build_digest(log, exit_status or 1, residuals))
    finals = {n: s[-1] for n, s in residuals.items() if s}
    if finals and all(value < threshold for value in finals.values()):
        return RunOutcome(exit_status, log, CONVERGED, residuals, None)
    if any(diverging(series) for series in residuals.values()):
        digest = ErrorDigest("divergence",
                             _extract_excerpt(log.splitlines(),
                                              max(0, len(log.splitlines()) - EXCERPT_LIMIT)))
    else:
        above = sorted(n for n, v in finals.items() if v >= threshold)
        digest = ErrorDigest(
            "unknown",
            "run completed but residuals stayed above "
            f"{threshold:g} for: {', '.join(above) if above else 'all fields'}")
    return RunOutcome(exit_status, log, COMPLETED_NOT_CONVERGED, residuals, digest)


class SubprocessRunner:
    """Launches the solver named by controlDict in the case directory."""

    def __init__(self, timeout: float | None = None,
                 threshold: float = RESIDUAL_THRESHOLD):
        self.timeout = timeout
        self.threshold = threshold

    def run(self, case: CaseLayout) -> RunOutcome:
        solver = case.solver()
        if not solver:
            raise SpawnFailure("controlDict names no application")
        try:
            completed = subprocess.run(
                [solver], cwd=case.root, stdout=subprocess.PIPE,
                stderr=subprocess.STDOUT, text=True, timeout=self.timeout)
        except FileNotFoundError as exc:
            raise SpawnFailure(f"solver {solver!r} not found: {exc}") from exc
        except subprocess.TimeoutExpired as exc:
            log = (exc.stdout or "")
            if isinstance(log, bytes):
                log = log.decode(errors="replace")
            log += f"\n[runner] timed out after {self.timeout}s"
            return RunOutcome(
                -1, log, CRASHED_EARLY, parse_residuals(log),
                ErrorDigest("solver-abort", log.splitlines()[-1]))
        return classify(completed.stdout or "", completed.returncode,
                        threshold=self.threshold)


class ScriptExhausted(Exception):
    pass


class SimulatedRunner:
    """Replays scripted runs; each scripted entry flows through the same
    classifier as real solver output.

    Script JSON: {"runs": [{"exit_code": int, "log": str | "log_file": path,
    "residuals": {field: [values]}}...], "repeat_last": bool}
    """

    def __init__(self, runs: list[dict], repeat_last: bool = False,
                 threshold: float = RESIDUAL_THRESHOLD):
        self.runs = runs
        self.repeat_last = repeat_last
        self.threshold = threshold
        self.cursor = 0

    @classmethod
    def load(cls, path: Path | str, threshold: float = RESIDUAL_THRESHOLD) -> "SimulatedRunner":
        path = Path(path)
        data = json.loads(path.read_text())
        runs = []
        for raw in data["runs"]:
            entry = dict(raw)
            if "log_file" in entry:
                entry["log"] = (path.parent / entry.pop("log_file")).read_text()
            runs.append(entry)
        return cls(runs, repeat_last=bool(data.get("repeat_last", False)),
                   threshold=threshold)

    def run(self, case: CaseLayout) -> RunOutcome:
        if self.cursor >= len(self.runs):
            if not (self.repeat_last and self.runs):
                raise ScriptExhausted(
                    f"script has only {len(self.runs)} runs")
            entry = self.runs[-1]
        else:
            entry = self.runs[self.cursor]
            self.cursor += 1
        residuals = entry.get("residuals")
        if residuals is not None:
            residuals = {name: [float(v) for v in series]
                         for name, series in residuals.items()}
        return classify(entry.get("log", ""), int(entry.get("exit_code", 0)),
                        residuals, threshold=self.threshold)
