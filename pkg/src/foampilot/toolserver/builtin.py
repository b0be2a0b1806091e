"""The shipped tool set.

Every tool follows the same pattern: a descriptor whose annotation doubles
as selection metadata, and a planner that maps the argument dict plus the
case snapshot to a ToolInvocationPlan. Dictionary-based tools share
system/postProcessingDict; direct tools use the solver's `-func` form.
"""

from __future__ import annotations

from ..casemodel import CaseLayout
from ..foamdict import DictNode, ListNode, Scalar
from ..mcp import ToolDescriptor, ToolParam
from .plans import (
    ForceCoeffsArgs,
    PlanError,
    TimeSelector,
    ToolInvocationPlan,
    allocate_func_id,
    as_vector,
    plan_force_coeffs,
    plan_sampled_patch,
    plan_stream_line,
    plan_vorticity,
    plan_func_shortcut,
    require_field,
    require_patches,
    solver_command,
)

_TIME_HELP = "Specifies the range of time steps to process."
_PATCHES_HELP = "A list of patch names to sample."


def _time_param() -> ToolParam:
    return ToolParam("time", "string", _TIME_HELP)


def _time_of(args) -> TimeSelector:
    return TimeSelector.parse(str(args.get("time", "latest")))


def _fields_of(args, case: CaseLayout) -> list[str]:
    fields = [str(f) for f in args["fields"]]
    if not fields:
        raise PlanError("at least one field name is required")
    for field in fields:
        require_field(case, field)
    return fields


def _sampled_patch(args, case):
    return plan_sampled_patch(str(args["field"]), list(args["patches"]),
                              _time_of(args), case)


def _force_coeffs(args, case):
    fc = ForceCoeffsArgs(
        patches=tuple(str(p) for p in args["patches"]),
        lift_dir=as_vector(args["liftDir"], "liftDir"),
        drag_dir=as_vector(args["dragDir"], "dragDir"),
        pitch_axis=as_vector(args["pitchAxis"], "pitchAxis"),
        speed=float(args["magUInf"]),
        ref_length=float(args["lRef"]),
        ref_area=float(args["Aref"]),
        rho_inf=float(args.get("rhoInf", 1.0)),
        centre_of_rotation=as_vector(args.get("CofR", [0.0, 0.0, 0.0]), "CofR"),
        time=_time_of(args),
    )
    return plan_force_coeffs(fc, case)


def _stream_line(args, case):
    return plan_stream_line(
        fields=[str(f) for f in args["fields"]],
        start=args["start"],
        end=args["end"],
        n_points=int(args["nPoints"]),
        time=_time_of(args),
        case=case,
    )


def _vorticity(args, case):
    return plan_vorticity(_time_of(args), case)


def _field_min_max(args, case):
    fields = _fields_of(args, case)
    func_id = allocate_func_id("fieldMinMax", case)
    body = DictNode.of(
        type="fieldMinMax",
        libs=ListNode.of("fieldFunctionObjects"),
        writeControl="writeTime",
        mode="magnitude",
        fields=ListNode.of(*fields),
    )
    return ToolInvocationPlan(
        func_id, solver_command(case, _time_of(args)), body,
        outputs=(f"postProcessing/{func_id}/<time>/fieldMinMax.dat",))


def _probes(args, case):
    fields = _fields_of(args, case)
    raw_points = args["points"]
    if not raw_points:
        raise PlanError("at least one probe location is required")
    locations = ListNode(
        [ListNode.vector(*as_vector(p, "probe location")) for p in raw_points])
    func_id = allocate_func_id("probes", case)
    body = DictNode.of(
        type="probes",
        libs=ListNode.of("sampling"),
        writeControl="timeStep",
        writeInterval=1,
        fields=ListNode.of(*fields),
        probeLocations=locations,
    )
    return ToolInvocationPlan(
        func_id, solver_command(case, _time_of(args)), body,
        outputs=tuple(f"postProcessing/{func_id}/<time>/{f}" for f in fields))


def _wall_shear_stress(args, case):
    patches = require_patches(case, args["patches"])
    require_field(case, "U")
    func_id = allocate_func_id("wallShearStress", case)
    body = DictNode.of(
        type="wallShearStress",
        libs=ListNode.of("fieldFunctionObjects"),
        writeControl="writeTime",
        patches=ListNode.of(*patches),
    )
    return ToolInvocationPlan(
        func_id, solver_command(case, _time_of(args)), body,
        outputs=("<time>/wallShearStress",
                 f"postProcessing/{func_id}/<time>/wallShearStress.dat"))


def _total_pressure(args, case):
    require_field(case, "p")
    func_id = allocate_func_id("totalPressure", case)
    body = DictNode.of(
        type="pressure",
        libs=ListNode.of("fieldFunctionObjects"),
        writeControl="writeTime",
        mode="total",
        field="p",
        rho="rhoInf",
        rhoInf=float(args["rhoInf"]),
    )
    return ToolInvocationPlan(
        func_id, solver_command(case, _time_of(args)), body,
        outputs=("<time>/total(p)",))


def _flow_rate_patch(args, case):
    patch = require_patches(case, [str(args["patch"])])[0]
    func_id = allocate_func_id("flowRate", case)
    body = DictNode.of(
        type="surfaceFieldValue",
        libs=ListNode.of("fieldFunctionObjects"),
        writeControl="writeTime",
        regionType="patch",
        name=patch,
        operation="sum",
        writeFields=Scalar("false"),
        fields=ListNode.of("phi"),
    )
    return ToolInvocationPlan(
        func_id, solver_command(case, _time_of(args)), body,
        outputs=(f"postProcessing/{func_id}/<time>/surfaceFieldValue.dat",))


def _field_average(args, case):
    fields = _fields_of(args, case)
    entries = ListNode()
    for field in fields:
        entries.items.append(DictNode([(field, DictNode.of(
            mean=Scalar("on"), prime2Mean=Scalar("off"), base="time"))]))
    func_id = allocate_func_id("fieldAverage", case)
    body = DictNode.of(
        type="fieldAverage",
        libs=ListNode.of("fieldFunctionObjects"),
        writeControl="writeTime",
        fields=entries,
    )
    return ToolInvocationPlan(
        func_id, solver_command(case, _time_of(args)), body,
        outputs=tuple(f"<time>/{f}Mean" for f in fields))


def _cutting_plane(args, case):
    fields = _fields_of(args, case)
    point = as_vector(args["point"], "plane point")
    normal = as_vector(args["normal"], "plane normal")
    if normal == (0.0, 0.0, 0.0):
        raise PlanError("plane normal must be nonzero")
    plane = DictNode.of(
        type="cuttingPlane",
        planeType="pointAndNormal",
        pointAndNormalDict=DictNode.of(
            point=ListNode.vector(*point), normal=ListNode.vector(*normal)),
        interpolate=Scalar("true"),
    )
    func_id = allocate_func_id("cuttingPlane", case)
    body = DictNode.of(
        type="surfaces",
        libs=ListNode.of("sampling"),
        writeControl="writeTime",
        surfaceFormat="raw",
        fields=ListNode.of(*fields),
        interpolationScheme="cellPoint",
        surfaces=ListNode([DictNode([("plane", plane)])]),
    )
    return ToolInvocationPlan(
        func_id, solver_command(case, _time_of(args)), body,
        outputs=tuple(
            f"postProcessing/{func_id}/<time>/{f}_plane.raw" for f in fields))


def _iso_surface(args, case):
    fields = _fields_of(args, case)
    iso_field = require_field(case, str(args["isoField"]))
    iso = DictNode.of(
        type="isoSurface",
        isoField=iso_field,
        isoValue=float(args["isoValue"]),
        interpolate=Scalar("true"),
    )
    func_id = allocate_func_id("isoSurface", case)
    body = DictNode.of(
        type="surfaces",
        libs=ListNode.of("sampling"),
        writeControl="writeTime",
        surfaceFormat="raw",
        fields=ListNode.of(*fields),
        interpolationScheme="cellPoint",
        surfaces=ListNode([DictNode([("iso", iso)])]),
    )
    return ToolInvocationPlan(
        func_id, solver_command(case, _time_of(args)), body,
        outputs=tuple(
            f"postProcessing/{func_id}/<time>/{f}_iso.raw" for f in fields))


def _solver_info(args, case):
    fields = _fields_of(args, case)
    func_id = allocate_func_id("solverInfo", case)
    body = DictNode.of(
        type="solverInfo",
        libs=ListNode.of("utilityFunctionObjects"),
        writeControl="timeStep",
        writeResidualFields=Scalar("false"),
        fields=ListNode.of(*fields),
    )
    return ToolInvocationPlan(
        func_id, solver_command(case, _time_of(args)), body,
        outputs=(f"postProcessing/{func_id}/<time>/solverInfo.dat",))


def _turbulence_intensity(args, case):
    require_field(case, "U")
    func_id = allocate_func_id("turbulenceIntensity", case)
    body = DictNode.of(
        type="turbulenceIntensity",
        libs=ListNode.of("fieldFunctionObjects"),
        writeControl="writeTime",
    )
    return ToolInvocationPlan(
        func_id, solver_command(case, _time_of(args)), body,
        outputs=("<time>/turbulenceIntensity",))


def _func_tool(func: str, produces: str):
    def planner(args, case):
        return plan_func_shortcut(func, produces, _time_of(args), case)
    return planner


BUILTIN_TOOLS: tuple[tuple[ToolDescriptor, object], ...] = (
    (ToolDescriptor(
        "postProcess_surfaces_sampledPatch",
        "Samples a volume field on boundary patches and writes the values "
        "as raw surface point files, one per patch per written time.",
        (ToolParam("field", "string", "Name of the volume field to sample.",
                   required=True),
         ToolParam("patches", "array", _PATCHES_HELP, required=True),
         _time_param())), _sampled_patch),
    (ToolDescriptor(
        "postProcess_forceCoeffs",
        "Computes force and moment coefficients over a given list of "
        "patches, resolving pressure and viscous forces along the lift, "
        "drag, and pitch directions.",
        (ToolParam("patches", "array", _PATCHES_HELP, required=True),
         ToolParam("liftDir", "array", "Unit vector along the lift direction.",
                   required=True),
         ToolParam("dragDir", "array", "Unit vector along the drag direction.",
                   required=True),
         ToolParam("pitchAxis", "array", "Axis for the pitching moment.",
                   required=True),
         ToolParam("magUInf", "number",
                   "Magnitude of the free-stream velocity.", required=True),
         ToolParam("lRef", "number", "Reference length.", required=True),
         ToolParam("Aref", "number", "Reference area.", required=True),
         ToolParam("rhoInf", "number",
                   "Free-stream density; 1 for incompressible solvers."),
         ToolParam("CofR", "array", "Centre of rotation for moments."),
         _time_param())), _force_coeffs),
    (ToolDescriptor(
        "postProcess_streamLine",
        "Seeds streamlines uniformly along a straight line and integrates "
        "them through the velocity field, sampling the listed fields along "
        "each track.",
        (ToolParam("fields", "array", "Fields sampled along each track.",
                   required=True),
         ToolParam("start", "array", "Seed line start point.", required=True),
         ToolParam("end", "array", "Seed line end point.", required=True),
         ToolParam("nPoints", "number",
                   "Number of seed points along the line.", required=True),
         _time_param())), _stream_line),
    (ToolDescriptor(
        "postProcess_vorticity",
        "Computes the vorticity field, the curl of the velocity, over the "
        "whole mesh.",
        (_time_param(),)), _vorticity),
    (ToolDescriptor(
        "postProcess_fieldMinMax",
        "Reports the minimum and maximum of each listed field at every "
        "written time.",
        (ToolParam("fields", "array", "Fields to scan.", required=True),
         _time_param())), _field_min_max),
    (ToolDescriptor(
        "postProcess_probes",
        "Samples the listed fields at fixed probe locations.",
        (ToolParam("fields", "array", "Fields to probe.", required=True),
         ToolParam("points", "array",
                   "Probe locations, one [x y z] triple per probe.",
                   required=True),
         _time_param())), _probes),
    (ToolDescriptor(
        "postProcess_wallShearStress",
        "Computes the wall shear stress vector on the listed wall patches.",
        (ToolParam("patches", "array", _PATCHES_HELP, required=True),
         _time_param())), _wall_shear_stress),
    (ToolDescriptor(
        "postProcess_yPlus",
        "Computes the near-wall y+ field for checking the turbulence wall "
        "treatment.",
        (_time_param(),)), _func_tool("yPlus", "yPlus")),
    (ToolDescriptor(
        "postProcess_MachNo",
        "Computes the local Mach number field.",
        (_time_param(),)), _func_tool("MachNo", "Ma")),
    (ToolDescriptor(
        "postProcess_CourantNo",
        "Computes the cell Courant number field from the face fluxes.",
        (_time_param(),)), _func_tool("CourantNo", "Co")),
    (ToolDescriptor(
        "postProcess_totalPressure",
        "Computes the total pressure field, adding the dynamic head scaled "
        "by the free-stream density.",
        (ToolParam("rhoInf", "number", "Free-stream density.", required=True),
         _time_param())), _total_pressure),
    (ToolDescriptor(
        "postProcess_Q",
        "Computes the Q-criterion field, the second invariant of the "
        "velocity gradient tensor, for vortex identification.",
        (_time_param(),)), _func_tool("Q", "Q")),
    (ToolDescriptor(
        "postProcess_Lambda2",
        "Computes the lambda2 field from the velocity gradient tensor for "
        "vortex-core extraction.",
        (_time_param(),)), _func_tool("Lambda2", "Lambda2")),
    (ToolDescriptor(
        "postProcess_flowRatePatch",
        "Integrates the volumetric flow rate of the flux through one "
        "boundary patch.",
        (ToolParam("patch", "string", "Patch to integrate over.",
                   required=True),
         _time_param())), _flow_rate_patch),
    (ToolDescriptor(
        "postProcess_fieldAverage",
        "Accumulates time-averaged mean fields for the listed quantities.",
        (ToolParam("fields", "array", "Fields to average.", required=True),
         _time_param())), _field_average),
    (ToolDescriptor(
        "postProcess_surfaces_cuttingPlane",
        "Slices the domain with a plane defined by a point and a normal and "
        "samples the listed fields on it as raw surface data.",
        (ToolParam("fields", "array", "Fields to sample on the plane.",
                   required=True),
         ToolParam("point", "array", "A point on the plane.", required=True),
         ToolParam("normal", "array", "Plane normal vector.", required=True),
         _time_param())), _cutting_plane),
    (ToolDescriptor(
        "postProcess_surfaces_isoSurface",
        "Extracts the iso-surface of a field at a given value and samples "
        "the listed fields on it.",
        (ToolParam("isoField", "string", "Field defining the surface.",
                   required=True),
         ToolParam("isoValue", "number", "Iso level to extract.",
                   required=True),
         ToolParam("fields", "array", "Fields to sample on the surface.",
                   required=True),
         _time_param())), _iso_surface),
    (ToolDescriptor(
        "postProcess_solverInfo",
        "Extracts per-step initial residuals and iteration counts of the "
        "linear solvers for the listed fields.",
        (ToolParam("fields", "array", "Solved-for fields to report.",
                   required=True),
         _time_param())), _solver_info),
    (ToolDescriptor(
        "postProcess_turbulenceIntensity",
        "Computes the turbulence intensity field from the modelled "
        "turbulent kinetic energy and the local velocity magnitude.",
        (_time_param(),)), _turbulence_intensity),
    (ToolDescriptor(
        "postProcess_enstrophy",
        "Computes the enstrophy field, half the squared vorticity magnitude.",
        (_time_param(),)), _func_tool("enstrophy", "enstrophy")),
)
