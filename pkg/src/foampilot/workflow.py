"""Self-correcting simulation workflow.

Stages run Prechecking -> Generating -> (Running -> Correcting)* until the
solver converges or the correction budget is spent. The generator and
corrector are LLM calls through the gateway; the runner is pluggable so the
whole loop is drivable by a scripted mock plus a simulated solver.

Generator and corrector replies use a fenced-file grammar: each file opens
with a line ``===FILE: <case-relative-path>===`` and closes with ``===END===``;
anything outside blocks is reasoning and gets ignored.
"""

from __future__ import annotations

import re
import shutil
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

from .casemodel import (
    ARCHIVE_DIR,
    CaseBundle,
    CaseLayout,
    apply_bundle,
    list_patches,
    precheck,
)
from .events import EventBus
from .foamdict import FoamFile, FoamSyntaxError, parse_dict
from .llm import ChatRequest, Gateway, Message, TokenUsage
from .runner import CONVERGED, COMPLETED_NOT_CONVERGED, ErrorDigest, RunOutcome

STAGES = ("Prechecking", "Generating", "Running", "Correcting",
          "Completed", "Converged", "Failed")

_FILE_OPEN = re.compile(r"^===FILE: (.+?)===\s*$")
_FILE_CLOSE = "===END==="

# 0/ fields a bundle must carry per solver; unknown solvers only need the
# system trio.
REQUIRED_FIELDS = {
    "simpleFoam": ("0/U", "0/p"),
    "pimpleFoam": ("0/U", "0/p"),
    "icoFoam": ("0/U", "0/p"),
}
REQUIRED_SYSTEM = ("system/controlDict", "system/fvSchemes", "system/fvSolution")

GENERATOR_SYSTEM = (
    "You configure OpenFOAM cases from natural-language requests. Reply with "
    "one block per file: a line '===FILE: <case-relative-path>===', the "
    "literal file content, then a line '===END==='. No other output is read.")

CORRECTOR_SYSTEM = (
    "You repair failing OpenFOAM cases. You receive the error digest and the "
    "offending file. Reply only with the files you change, each as a "
    "'===FILE: <case-relative-path>===' block closed by '===END==='.")


class MalformedResponse(Exception):
    """LLM output violates the response grammar or produced unparseable files."""

    def __init__(self, message: str, path: str | None = None):
        self.path = path
        super().__init__(message)

    def digest(self) -> ErrorDigest:
        return ErrorDigest("bad-value", str(self), self.path)


class IterationBudgetExhausted(Exception):
    pass


@dataclass
class WorkflowLimits:
    max_iterations: int = 10
    run_timeout: float | None = None
    trials: int = 10
    residual_threshold: float = 1e-4

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("at least one correction iteration is required")
        if self.trials < 1:
            raise ValueError("at least one trial is required")


@dataclass
class WorkflowState:
    case: CaseLayout
    limits: WorkflowLimits
    prompt: str
    stage: str = "Prechecking"
    iteration: int = 0  # corrections performed so far
    last_outcome: RunOutcome | None = None
    last_digest: ErrorDigest | None = None

    def enter(self, stage: str, bus: EventBus | None) -> None:
        if stage not in STAGES:
            raise ValueError(f"unknown stage {stage!r}")
        self.stage = stage
        if bus is not None:
            bus.emit("stage", name=stage, iteration=self.iteration)


@dataclass
class WorkflowReport:
    final_state: str
    converged: bool
    completed: bool
    iterations: int
    tokens: TokenUsage
    timeline: list[str]
    warnings: list[str] = field(default_factory=list)
    error: str | None = None

    def to_json(self) -> dict:
        return {
            "final_state": self.final_state,
            "converged": self.converged,
            "completed": self.completed,
            "iterations": self.iterations,
            "prompt_tokens": self.tokens.prompt_tokens,
            "completion_tokens": self.tokens.completion_tokens,
            "total_tokens": self.tokens.total,
            "timeline": list(self.timeline),
            "warnings": list(self.warnings),
            "error": self.error,
        }


def parse_file_blocks(text: str) -> dict[str, str]:
    """Extract fenced file blocks; text outside blocks is ignored."""
    files: dict[str, str] = {}
    current: str | None = None
    body: list[str] = []
    for line in text.splitlines():
        opened = _FILE_OPEN.match(line)
        if current is None:
            if opened:
                current = opened.group(1).strip()
                body = []
            continue
        if line.strip() == _FILE_CLOSE:
            files[current] = "\n".join(body) + ("\n" if body else "")
            current = None
        elif opened:
            raise MalformedResponse(
                f"block for {current!r} not closed before next ===FILE:", current)
        else:
            body.append(line)
    if current is not None:
        raise MalformedResponse(f"unterminated block for {current!r}", current)
    if not files:
        raise MalformedResponse("response contains no ===FILE: blocks")
    return files


def build_bundle(text: str, iteration: int) -> CaseBundle:
    """Parse a grammar-conforming reply into a bundle; every file must parse."""
    blocks = parse_file_blocks(text)
    parsed: dict[str, FoamFile] = {}
    for path, content in blocks.items():
        try:
            parsed[path] = parse_dict(content, path)
        except FoamSyntaxError as exc:
            raise MalformedResponse(
                f"file {path!r} does not parse: {exc}", path) from exc
    return CaseBundle(files=parsed, iteration=iteration)


def check_bundle_complete(bundle: CaseBundle, solver: str | None) -> None:
    present = set(bundle.normalized_paths())
    missing = [p for p in REQUIRED_SYSTEM if p not in present]
    for required in REQUIRED_FIELDS.get(solver or "", ()):
        if required not in present:
            missing.append(required)
    if missing:
        raise MalformedResponse(
            "generated bundle is missing required files: " + ", ".join(missing))


def _case_inventory(case: CaseLayout) -> str:
    files = case.zero_files + case.constant_files + case.system_files
    try:
        patches = ", ".join(list_patches(case))
    except Exception:
        patches = "(boundary unreadable)"
    return (f"Solver: {case.solver() or 'unspecified'}\n"
            f"Patches: {patches}\n"
            "Existing files:\n" + "\n".join(f"  {f}" for f in files))


def generate_config(gateway: Gateway, prompt: str, case: CaseLayout,
                    history: list[ErrorDigest],
                    temperature: float = 0.6) -> CaseBundle:
    """One generator call; history digests are quoted verbatim."""
    sections = [prompt, "", _case_inventory(case)]
    if history:
        sections.append("\nPrevious attempts failed with:")
        for digest in history:
            sections.append(f"[{digest.kind}]")
            sections.append(digest.excerpt)
    request = ChatRequest(
        messages=(Message("system", GENERATOR_SYSTEM),
                  Message("user", "\n".join(sections))),
        temperature=temperature)
    response = gateway.complete(request)
    bundle = build_bundle(response.content, iteration=1)
    check_bundle_complete(bundle, case.solver())
    return bundle


def _archived_previous(case: CaseLayout, relative: str) -> str | None:
    base = case.root / ARCHIVE_DIR
    if not base.is_dir():
        return None
    candidates = sorted(
        (p for p in base.glob("iter-*") if p.is_dir()),
        key=lambda p: int(p.name.split("-")[1]) if p.name.split("-")[1].lstrip("-").isdigit() else -1,
        reverse=True)
    for folder in candidates:
        candidate = folder / relative
        if candidate.is_file():
            return candidate.read_text()
    return None


def resolve_implicated(case: CaseLayout, digest: ErrorDigest) -> str | None:
    """Map a digest's path hint onto an existing case-relative file."""
    hint = digest.implicated_path
    if not hint:
        return None
    hint = hint.lstrip("/")
    known = case.zero_files + case.constant_files + case.system_files
    if hint in known:
        return hint
    for candidate in known:
        if candidate.endswith("/" + hint) or hint.endswith("/" + candidate) \
                or candidate.split("/")[-1] == hint.split("/")[-1]:
            return candidate
    return None


def correct(gateway: Gateway, state: WorkflowState,
            temperature: float = 0.6) -> CaseBundle:
    """One corrector call. Increments the iteration counter."""
    if state.iteration >= state.limits.max_iterations:
        raise IterationBudgetExhausted(
            f"correction budget of {state.limits.max_iterations} spent")
    state.iteration += 1
    digest = state.last_digest or ErrorDigest("unknown", "no digest recorded")
    sections = [
        "The last run did not converge.",
        f"Error kind: {digest.kind}",
        "Log excerpt:",
        digest.excerpt,
    ]
    implicated = resolve_implicated(state.case, digest)
    if implicated:
        current = (state.case.root / implicated).read_text()
        sections += ["", f"File {implicated} currently contains:", current]
        previous = _archived_previous(state.case, implicated)
        if previous is not None and previous != current:
            sections += [f"Previous version of {implicated}:", previous]
    sections.append("Return only the files you change.")
    request = ChatRequest(
        messages=(Message("system", CORRECTOR_SYSTEM),
                  Message("user", "\n".join(sections))),
        temperature=temperature)
    response = gateway.complete(request)
    return build_bundle(response.content, iteration=state.iteration + 1)


def _scope_warnings(bundle: CaseBundle, digest: ErrorDigest | None,
                    case: CaseLayout) -> list[str]:
    if digest is None:
        return []
    implicated = resolve_implicated(case, digest)
    if not implicated:
        return []
    return [
        f"scope-warning: correction touched {path} but the error implicated "
        f"{implicated}"
        for path in bundle.normalized_paths() if path != implicated
    ]


def _run_label(outcome: RunOutcome) -> str:
    if outcome.classification == CONVERGED:
        return "Run(converged)"
    if outcome.classification == COMPLETED_NOT_CONVERGED:
        return "Run(completed)"
    return "Run(fail)"


def run_workflow(prompt: str, case: CaseLayout, limits: WorkflowLimits,
                 gateway: Gateway, runner, bus: EventBus | None = None) -> WorkflowReport:
    """Drive one case from prompt to converged, failed or budget-exhausted."""
    state = WorkflowState(case=case, limits=limits, prompt=prompt)
    timeline: list[str] = []
    warnings: list[str] = []
    tokens_before = gateway.session_tokens()

    def report(final_state: str, error: str | None = None) -> WorkflowReport:
        outcome = state.last_outcome
        completed = outcome is not None and outcome.classification in (
            CONVERGED, COMPLETED_NOT_CONVERGED)
        converged = outcome is not None and outcome.classification == CONVERGED
        tokens = _usage_delta(gateway.session_tokens(), tokens_before)
        result = WorkflowReport(
            final_state=final_state,
            converged=converged,
            completed=completed,
            iterations=state.iteration,
            tokens=tokens,
            timeline=timeline,
            warnings=warnings,
            error=error,
        )
        if bus is not None:
            bus.emit("report", **result.to_json())
        return result

    state.enter("Prechecking", bus)
    try:
        check = precheck(case, prompt)
    except Exception as exc:
        return report("Failed", f"precheck error: {exc}")
    if not check.passed:
        details = "; ".join(str(f) for f in check.findings)
        return report("Failed", f"precheck failed: {details}")

    state.enter("Generating", bus)
    timeline.append("Generate")
    history: list[ErrorDigest] = []
    try:
        bundle = generate_config(gateway, prompt, case, history)
    except MalformedResponse as exc:
        state.last_digest = exc.digest()
        bundle = None
    except Exception as exc:
        return report("Failed", f"generation error: {exc}")

    while True:
        if bundle is not None:
            try:
                state.case = apply_bundle(state.case, bundle)
            except Exception as exc:
                return report("Failed", f"cannot apply bundle: {exc}")

            state.enter("Running", bus)
            try:
                outcome = runner.run(state.case)
            except Exception as exc:
                return report("Failed", f"runner error: {exc}")
            state.last_outcome = outcome
            state.last_digest = outcome.digest
            timeline.append(_run_label(outcome))
            if bus is not None:
                bus.emit("run", classification=outcome.classification,
                         iteration=state.iteration)
            if outcome.converged:
                state.enter("Converged", bus)
                return report("Converged")

        if state.iteration >= limits.max_iterations:
            state.enter("Failed", bus)
            return report(
                "Failed",
                f"correction budget of {limits.max_iterations} exhausted")

        state.enter("Correcting", bus)
        timeline.append("Correct")
        if state.last_digest is not None:
            history.append(state.last_digest)
        try:
            bundle = correct(gateway, state)
        except IterationBudgetExhausted as exc:
            state.enter("Failed", bus)
            return report("Failed", str(exc))
        except MalformedResponse as exc:
            state.last_digest = exc.digest()
            bundle = None
            continue
        except Exception as exc:
            return report("Failed", f"correction error: {exc}")
        warnings.extend(_scope_warnings(bundle, state.last_digest, state.case))


def _usage_delta(now: TokenUsage, before: TokenUsage) -> TokenUsage:
    return TokenUsage(now.prompt_tokens - before.prompt_tokens,
                      now.completion_tokens - before.completion_tokens)


def run_trials(prompt: str, template: Path, limits: WorkflowLimits,
               make_gateway: Callable[[int], Gateway],
               make_runner: Callable[[int], object],
               workdir: Path, bus: EventBus | None = None) -> list[WorkflowReport]:
    """Evaluation mode: fresh case copy, gateway and runner per trial."""
    reports: list[WorkflowReport] = []
    for index in range(limits.trials):
        trial_dir = workdir / f"trial-{index + 1}"
        if trial_dir.exists():
            shutil.rmtree(trial_dir)
        shutil.copytree(template, trial_dir)
        case = CaseLayout.scan(trial_dir)
        gateway = make_gateway(index)
        runner = make_runner(index)
        if bus is not None:
            bus.emit("trial", index=index + 1, total=limits.trials)
        reports.append(run_workflow(prompt, case, limits, gateway, runner, bus))
    return reports
