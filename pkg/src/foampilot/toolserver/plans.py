"""Invocation planning: functionObject bodies and solver command lines.

Each planner turns validated arguments plus a case snapshot into a
ToolInvocationPlan: the dictionary entry to merge into
system/postProcessingDict (when one is needed), the shell command to run,
and the output files the run is expected to leave behind. Planners are pure;
given the same arguments and case state they produce the same plan.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from ..casemodel import CaseLayout, list_patches
from ..foamdict import DictNode, ListNode, Scalar

POSTPROCESS_DICT = "system/postProcessingDict"

# loose enough for 4-decimal direction vectors, tight enough to catch mixups
DIRECTION_TOLERANCE = 1e-3


class PlanError(Exception):
    """Request cannot be turned into a runnable plan for this case."""


class UnknownPatch(PlanError):
    def __init__(self, name: str):
        self.name = name
        shown = name if name else "(empty patch list)"
        super().__init__(f"patch {shown!r} is not in the mesh boundary")


class UnknownField(PlanError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"no field file named {name!r} in any time directory")


class NonOrthogonalDirections(PlanError):
    pass


class DegenerateSeedLine(PlanError):
    pass


class BadTimeSelection(PlanError):
    pass


@dataclass(frozen=True)
class TimeSelector:
    mode: str  # latest | range | all
    start: float = 0.0
    end: float = 0.0

    def __post_init__(self):
        if self.mode not in ("latest", "range", "all"):
            raise ValueError(f"unknown time mode {self.mode!r}")
        if self.mode == "range" and self.start > self.end:
            raise ValueError("time range start exceeds end")

    @staticmethod
    def latest() -> "TimeSelector":
        return TimeSelector("latest")

    @staticmethod
    def all_times() -> "TimeSelector":
        return TimeSelector("all")

    @staticmethod
    def span(start: float, end: float) -> "TimeSelector":
        return TimeSelector("range", start, end)

    @staticmethod
    def parse(text: str) -> "TimeSelector":
        cleaned = text.strip()
        if cleaned in ("", "latest"):
            return TimeSelector.latest()
        if cleaned == "all":
            return TimeSelector.all_times()
        if ":" in cleaned:
            first, _, second = cleaned.partition(":")
            try:
                return TimeSelector.span(float(first), float(second))
            except ValueError as exc:
                raise BadTimeSelection(
                    f"cannot read time range {text!r}") from exc
        raise BadTimeSelection(
            f"time must be 'latest', 'all', or '<start>:<end>', got {text!r}")

    def flags(self) -> tuple[str, ...]:
        if self.mode == "latest":
            return ("-latestTime",)
        if self.mode == "range":
            return ("-time", f"{self.start:g}:{self.end:g}")
        return ()


@dataclass(frozen=True)
class ToolInvocationPlan:
    func_id: str
    command: str
    body: DictNode | None = None  # None for -func shortcut tools
    dict_path: str = POSTPROCESS_DICT
    outputs: tuple[str, ...] = ()  # case-relative, "<time>" placeholder


def _norm(v: tuple[float, float, float]) -> float:
    return math.sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2])


def _dot(a, b) -> float:
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


def as_vector(value, name: str) -> tuple[float, float, float]:
    if (not isinstance(value, (list, tuple)) or len(value) != 3
            or any(isinstance(c, bool) or not isinstance(c, (int, float))
                   for c in value)):
        raise PlanError(f"{name} must be a 3-component numeric vector")
    return (float(value[0]), float(value[1]), float(value[2]))


@dataclass(frozen=True)
class ForceCoeffsArgs:
    patches: tuple[str, ...]
    lift_dir: tuple[float, float, float]
    drag_dir: tuple[float, float, float]
    pitch_axis: tuple[float, float, float]
    speed: float
    ref_length: float = 1.0
    ref_area: float = 1.0
    rho_inf: float = 1.0
    centre_of_rotation: tuple[float, float, float] = (0.0, 0.0, 0.0)
    time: TimeSelector = TimeSelector.latest()

    def __post_init__(self):
        if not self.patches:
            raise UnknownPatch("")
        for label, v in (("lift", self.lift_dir), ("drag", self.drag_dir)):
            if abs(_norm(v) - 1.0) > DIRECTION_TOLERANCE:
                raise ValueError(f"{label} direction is not unit length")
        if abs(_dot(self.lift_dir, self.drag_dir)) > DIRECTION_TOLERANCE:
            raise NonOrthogonalDirections(
                "lift and drag directions are not perpendicular")
        for label, v in (("speed", self.speed),
                         ("reference length", self.ref_length),
                         ("reference area", self.ref_area)):
            if v <= 0:
                raise ValueError(f"{label} must be positive")


def solver_command(case: CaseLayout, time: TimeSelector,
                   func: str | None = None) -> str:
    solver = case.solver()
    if solver is None:
        raise PlanError("system/controlDict does not name a solver application")
    parts = [solver, "-postProcess"]
    if func is not None:
        parts += ["-func", func]
    else:
        parts += ["-dict", POSTPROCESS_DICT]
    parts.extend(time.flags())
    return " ".join(parts)


def allocate_func_id(base: str, case: CaseLayout) -> str:
    """First free name: base, then base_2, base_3, ..."""
    taken: set[str] = set()
    if case.has_file(POSTPROCESS_DICT):
        functions = case.read(POSTPROCESS_DICT).root.get("functions")
        if isinstance(functions, DictNode):
            taken = set(functions.keys())
    name, n = base, 1
    while name in taken:
        n += 1
        name = f"{base}_{n}"
    return name


def require_patches(case: CaseLayout, patches) -> tuple[str, ...]:
    if not patches:
        raise UnknownPatch("")
    known = set(list_patches(case))
    for patch in patches:
        if patch not in known:
            raise UnknownPatch(str(patch))
    return tuple(str(p) for p in patches)


def field_available(case: CaseLayout, field: str) -> bool:
    if case.has_file(f"0/{field}"):
        return True
    for child in case.root.iterdir():
        name = child.name
        if child.is_dir() and name != "0":
            try:
                float(name)
            except ValueError:
                continue
            if (child / field).is_file():
                return True
    return False


def require_field(case: CaseLayout, field: str) -> str:
    if not field_available(case, field):
        raise UnknownField(field)
    return field


def plan_force_coeffs(args: ForceCoeffsArgs, case: CaseLayout) -> ToolInvocationPlan:
    patches = require_patches(case, args.patches)
    func_id = allocate_func_id("forceCoeffs", case)
    body = DictNode.of(
        type="forceCoeffs",
        libs=ListNode.of("forces"),
        writeControl="writeTime",
        patches=ListNode.of(*patches),
        rho="rhoInf",
        rhoInf=args.rho_inf,
        liftDir=ListNode.vector(*args.lift_dir),
        dragDir=ListNode.vector(*args.drag_dir),
        pitchAxis=ListNode.vector(*args.pitch_axis),
        CofR=ListNode.vector(*args.centre_of_rotation),
        magUInf=args.speed,
        lRef=args.ref_length,
        Aref=args.ref_area,
    )
    return ToolInvocationPlan(
        func_id=func_id,
        command=solver_command(case, args.time),
        body=body,
        outputs=(f"postProcessing/{func_id}/<time>/coefficient.dat",),
    )


def plan_sampled_patch(field: str, patches, time: TimeSelector,
                       case: CaseLayout) -> ToolInvocationPlan:
    patches = require_patches(case, patches)
    require_field(case, field)
    func_id = allocate_func_id("sampledPatch", case)
    surfaces = ListNode()
    for patch in patches:
        inner = DictNode.of(
            type="sampledPatch",
            patches=ListNode.of(patch),
            interpolate=Scalar("false"),
        )
        surfaces.items.append(DictNode([(patch, inner)]))
    body = DictNode.of(
        type="surfaces",
        libs=ListNode.of("sampling"),
        writeControl="writeTime",
        surfaceFormat="raw",
        fields=ListNode.of(field),
        interpolationScheme="cell",
        surfaces=surfaces,
    )
    outputs = tuple(
        f"postProcessing/{func_id}/<time>/{field}_{patch}.raw"
        for patch in patches)
    return ToolInvocationPlan(
        func_id=func_id,
        command=solver_command(case, time),
        body=body,
        outputs=outputs,
    )


def plan_stream_line(fields, start, end, n_points: int, time: TimeSelector,
                     case: CaseLayout) -> ToolInvocationPlan:
    if not fields:
        raise PlanError("streamline sampling needs at least one field")
    if n_points < 2:
        raise PlanError("seed line needs at least 2 points")
    start = as_vector(start, "seed line start")
    end = as_vector(end, "seed line end")
    if start == end:
        raise DegenerateSeedLine("seed line start and end coincide")
    require_field(case, "U")
    func_id = allocate_func_id("streamLines", case)
    seed = DictNode.of(
        type="uniform",
        axis="x",
        start=ListNode.vector(*start),
        end=ListNode.vector(*end),
        nPoints=int(n_points),
    )
    body = DictNode.of(
        type="streamLine",
        libs=ListNode.of("fieldFunctionObjects"),
        writeControl="writeTime",
        setFormat="vtk",
        U="U",
        trackForward=Scalar("true"),
        fields=ListNode.of(*[str(f) for f in fields]),
        lifeTime=10000,
        nSubCycle=5,
        cloud="particleTracks",
        seedSampleSet=seed,
    )
    return ToolInvocationPlan(
        func_id=func_id,
        command=solver_command(case, time),
        body=body,
        outputs=(f"postProcessing/{func_id}/<time>/track0.vtk",),
    )


def plan_vorticity(time: TimeSelector, case: CaseLayout) -> ToolInvocationPlan:
    require_field(case, "U")
    return ToolInvocationPlan(
        func_id="vorticity",
        command=solver_command(case, time, func="vorticity"),
        body=None,
        outputs=("<time>/vorticity",),
    )


def plan_func_shortcut(func: str, produced_field: str, time: TimeSelector,
                       case: CaseLayout,
                       needs_field: str = "U") -> ToolInvocationPlan:
    """Generic `-func <name>` tool: no dictionary body, one output field."""
    require_field(case, needs_field)
    return ToolInvocationPlan(
        func_id=func,
        command=solver_command(case, time, func=func),
        body=None,
        outputs=(f"<time>/{produced_field}",),
    )
