"""Plan execution: dictionary merge, command run, result assembly.

Two interchangeable backends run the constructed command: a subprocess
backend for hosts with a solver installed, and a simulated backend that
fabricates the expected output files with deterministic synthetic data so
every downstream consumer works offline.
"""

from __future__ import annotations

import shlex
import subprocess
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

from ..casemodel import CaseLayout
from ..foamdict import (
    Dimensioned,
    DictNode,
    FoamFile,
    ListNode,
    Scalar,
    emit_dict,
    make_header,
)
from ..mcp import ContentItem, ToolCallResult, ToolExecutionError
from .plans import PlanError, ToolInvocationPlan
from .registry import Registry

LOG_TAIL_LINES = 20


class ToolBackend(Protocol):
    def run(self, plan: ToolInvocationPlan,
            case_root: Path) -> tuple[int, str]: ...


def _ramp_rows(columns: int, rows: int = 8) -> str:
    # deterministic, nonzero, exactly representable values
    out = []
    for i in range(rows):
        out.append(" ".join(f"{(i + 1) * 0.125 * (j + 1):g}"
                            for j in range(columns)))
    return "\n".join(out) + "\n"


def _field_file_text(name: str) -> str:
    root = DictNode.of(
        dimensions=Dimensioned((0, 0, -1, 0, 0, 0, 0)),
        internalField=ListNode([Scalar("uniform"), Scalar("0", 0)], bare=True),
        boundaryField=DictNode(),
    )
    return emit_dict(FoamFile(root=root,
                              header=make_header("volScalarField", name)))


def synthetic_output(relative: str) -> str:
    """Plausible stand-in content for one expected output file."""
    path = Path(relative)
    name = path.name
    time_name = path.parent.name
    if name.endswith(".raw"):
        field = name.rsplit(".", 1)[0].split("_")[0]
        return f"# x y z {field}\n" + _ramp_rows(4)
    if name == "coefficient.dat":
        return ("# Time          Cd              Cl              CmPitch\n"
                f"{time_name}\t0.0125\t0.875\t0.003125\n")
    if name.endswith(".dat"):
        return f"# Time value\n{time_name}\t0.5\n"
    if name.endswith(".vtk"):
        return ("# vtk DataFile Version 2.0\nparticle tracks\nASCII\n"
                "DATASET POLYDATA\nPOINTS 2 float\n-5 -20 0\n-5 20 0\n")
    return _field_file_text(name)


@dataclass
class SimulatedToolBackend:
    """Pretends the command ran: writes the declared outputs and a short log."""

    time_name: str = "100"
    exit_code: int = 0
    log_text: str | None = None

    def run(self, plan: ToolInvocationPlan, case_root: Path) -> tuple[int, str]:
        if self.exit_code != 0:
            return self.exit_code, self.log_text or "simulated tool failure\n"
        lines = [f"simulated: {plan.command}"]
        for template in plan.outputs:
            rel = template.replace("<time>", self.time_name)
            target = case_root / rel
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_text(synthetic_output(rel))
            lines.append(f"wrote {rel}")
        lines.append("End")
        return 0, "\n".join(lines) + "\n"


@dataclass
class SubprocessToolBackend:
    timeout: float = 600.0

    def run(self, plan: ToolInvocationPlan, case_root: Path) -> tuple[int, str]:
        argv = shlex.split(plan.command)
        try:
            proc = subprocess.run(argv, cwd=case_root, capture_output=True,
                                  text=True, timeout=self.timeout)
        except FileNotFoundError:
            return 127, f"command not found: {argv[0]}\n"
        except subprocess.TimeoutExpired:
            return 124, f"timed out after {self.timeout:g}s: {plan.command}\n"
        return proc.returncode, proc.stdout + proc.stderr


def merge_function_object(plan: ToolInvocationPlan, case: CaseLayout) -> None:
    """Insert (or replace, same func_id) the plan body in its target dict."""
    if case.has_file(plan.dict_path):
        file = case.read(plan.dict_path)
    else:
        file = FoamFile(root=DictNode(),
                        header=make_header("dictionary",
                                           Path(plan.dict_path).name, "system"))
    functions = file.root.get("functions")
    if not isinstance(functions, DictNode):
        functions = DictNode()
        file.root.set("functions", functions)
    functions.set(plan.func_id, plan.body)
    target = case.root / plan.dict_path
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(emit_dict(file))


def resolve_outputs(plan: ToolInvocationPlan, case_root: Path) -> list[str]:
    """Expected outputs with <time> resolved against what actually exists."""
    produced: list[str] = []
    for template in plan.outputs:
        if "<time>" in template:
            matches = sorted(case_root.glob(template.replace("<time>", "*")))
            if matches:
                produced.extend(str(m.relative_to(case_root)) for m in matches)
            else:
                produced.append(template)
        else:
            produced.append(template)
    return produced


def execute_plan(plan: ToolInvocationPlan, case: CaseLayout,
                 backend: ToolBackend) -> ToolCallResult:
    try:
        if plan.body is not None:
            merge_function_object(plan, case)
    except OSError as exc:
        return ToolCallResult(
            [ContentItem("text",
                         text=f"cannot update {plan.dict_path}: {exc}")],
            is_error=True)
    exit_code, log = backend.run(plan, case.root)
    if exit_code != 0:
        tail = "\n".join(log.splitlines()[-LOG_TAIL_LINES:])
        return ToolCallResult(
            [ContentItem("text", text=(f"command: {plan.command}\n"
                                       f"exit status: {exit_code}\n{tail}"))],
            is_error=True)
    produced = resolve_outputs(plan, case.root)
    summary = "\n".join(
        [f"command: {plan.command}", "exit status: 0", "outputs:"]
        + [f"  {p}" for p in produced])
    items = [ContentItem("text", text=summary)]
    items.extend(ContentItem("file", path=p) for p in produced)
    return ToolCallResult(items)


class CaseToolProvider:
    """Binds registry + case + backend into the shape the MCP server hosts."""

    def __init__(self, registry: Registry, case: CaseLayout,
                 backend: ToolBackend):
        self.registry = registry
        self.case = case
        self.backend = backend

    def descriptors(self):
        return self.registry.descriptors()

    def execute(self, name: str, arguments: dict) -> ToolCallResult:
        tool = self.registry.get(name)
        if tool is None:
            raise ToolExecutionError(f"no tool named {name!r}")
        try:
            plan = tool.planner(arguments, self.case)
        except (PlanError, ValueError, KeyError, TypeError) as exc:
            raise ToolExecutionError(str(exc)) from exc
        return execute_plan(plan, self.case, self.backend)
