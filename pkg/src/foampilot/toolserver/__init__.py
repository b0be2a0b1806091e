from .plans import (
    POSTPROCESS_DICT,
    BadTimeSelection,
    DegenerateSeedLine,
    ForceCoeffsArgs,
    NonOrthogonalDirections,
    PlanError,
    TimeSelector,
    ToolInvocationPlan,
    UnknownField,
    UnknownPatch,
    allocate_func_id,
    plan_force_coeffs,
    plan_sampled_patch,
    plan_stream_line,
    plan_vorticity,
    solver_command,
)
from .builtin import BUILTIN_TOOLS
from .registry import (
    DuplicateToolName,
    PluginError,
    RegisteredTool,
    Registry,
    SelfTestFailure,
    build_registry,
    load_plugins,
    self_test,
    synthetic_arguments,
)
from .backends import (
    CaseToolProvider,
    SimulatedToolBackend,
    SubprocessToolBackend,
    execute_plan,
    merge_function_object,
    resolve_outputs,
    synthetic_output,
)

__all__ = [
    "POSTPROCESS_DICT",
    "BadTimeSelection",
    "DegenerateSeedLine",
    "ForceCoeffsArgs",
    "NonOrthogonalDirections",
    "PlanError",
    "TimeSelector",
    "ToolInvocationPlan",
    "UnknownField",
    "UnknownPatch",
    "allocate_func_id",
    "plan_force_coeffs",
    "plan_sampled_patch",
    "plan_stream_line",
    "plan_vorticity",
    "solver_command",
    "BUILTIN_TOOLS",
    "DuplicateToolName",
    "PluginError",
    "RegisteredTool",
    "Registry",
    "SelfTestFailure",
    "build_registry",
    "load_plugins",
    "self_test",
    "synthetic_arguments",
    "CaseToolProvider",
    "SimulatedToolBackend",
    "SubprocessToolBackend",
    "execute_plan",
    "merge_function_object",
    "resolve_outputs",
    "synthetic_output",
]
