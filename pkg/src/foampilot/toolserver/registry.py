"""Tool registry: registration, plugin loading, and the self-test.

The registry is populated once at startup (built-ins, then plugins) and
frozen; lookups after that are read-only and safe to share across threads.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping

from ..casemodel import CaseLayout, list_patches
from ..foamdict import (
    DictNode,
    FoamFile,
    ListNode,
    Scalar,
    emit_dict,
    make_header,
    parse_dict,
)
from ..mcp import ToolDescriptor, ToolParam
from .builtin import BUILTIN_TOOLS
from .plans import TimeSelector, ToolInvocationPlan, allocate_func_id, solver_command

Planner = Callable[[Mapping, CaseLayout], ToolInvocationPlan]


class DuplicateToolName(Exception):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"a tool named {name!r} is already registered")


class PluginError(Exception):
    """A plugin descriptor file could not be turned into a tool."""


class SelfTestFailure(Exception):
    """A registered tool failed the startup consistency check."""


@dataclass(frozen=True)
class RegisteredTool:
    descriptor: ToolDescriptor
    planner: Planner


class Registry:
    def __init__(self):
        self._tools: dict[str, RegisteredTool] = {}
        self._frozen = False

    def register(self, descriptor: ToolDescriptor, planner: Planner) -> None:
        if self._frozen:
            raise RuntimeError("registry is frozen after startup")
        if descriptor.name in self._tools:
            raise DuplicateToolName(descriptor.name)
        self._tools[descriptor.name] = RegisteredTool(descriptor, planner)

    def freeze(self) -> None:
        self._frozen = True

    def names(self) -> list[str]:
        return list(self._tools)

    def descriptors(self) -> list[ToolDescriptor]:
        return [tool.descriptor for tool in self._tools.values()]

    def get(self, name: str) -> RegisteredTool | None:
        return self._tools.get(name)

    def __len__(self) -> int:
        return len(self._tools)

    def __contains__(self, name: str) -> bool:
        return name in self._tools


def build_registry(plugin_dir: Path | str | None = None) -> Registry:
    registry = Registry()
    for descriptor, planner in BUILTIN_TOOLS:
        registry.register(descriptor, planner)
    if plugin_dir is not None:
        load_plugins(registry, plugin_dir)
    registry.freeze()
    return registry


# -- plugins ------------------------------------------------------------------


def load_plugins(registry: Registry, directory: Path | str) -> int:
    """Register every *.json descriptor in the directory; returns the count."""
    directory = Path(directory)
    count = 0
    for path in sorted(directory.glob("*.json")):
        try:
            data = json.loads(path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise PluginError(f"{path.name}: unreadable descriptor: {exc}")
        try:
            descriptor = _plugin_descriptor(data)
            planner = _plugin_planner(descriptor, data["planner"])
        except (KeyError, TypeError, ValueError) as exc:
            raise PluginError(f"{path.name}: {exc}")
        registry.register(descriptor, planner)
        count += 1
    return count


def _plugin_descriptor(data: dict) -> ToolDescriptor:
    params = tuple(
        ToolParam(p["name"], p["type"], p.get("description", ""),
                  required=bool(p.get("required", False)))
        for p in data.get("schema", {}).get("params", []))
    return ToolDescriptor(data["name"], data["description"], params)


def _json_to_node(value):
    if isinstance(value, bool):
        return Scalar("true" if value else "false")
    if isinstance(value, (int, float, str)):
        return Scalar.from_value(value)
    if isinstance(value, list):
        return ListNode([_json_to_node(v) for v in value])
    if isinstance(value, dict):
        return DictNode([(k, _json_to_node(v)) for k, v in value.items()])
    raise ValueError(f"cannot express {type(value).__name__} in a dictionary")


def _plugin_planner(descriptor: ToolDescriptor, spec: dict) -> Planner:
    kind = spec["kind"]
    if kind == "func":
        func = spec["func"]
        produces = spec.get("produces", func)

        def func_planner(args, case):
            time = TimeSelector.parse(str(args.get("time", "latest")))
            return ToolInvocationPlan(
                func_id=produces,
                command=solver_command(case, time, func=func),
                body=None,
                outputs=(f"<time>/{produces}",))
        return func_planner

    if kind == "dict":
        base = spec["base"]
        template = spec.get("body", {})
        output_templates = tuple(
            spec.get("outputs", [f"postProcessing/{{func_id}}/<time>/{base}.dat"]))

        def dict_planner(args, case):
            time = TimeSelector.parse(str(args.get("time", "latest")))
            func_id = allocate_func_id(base, case)
            body = _json_to_node(template)
            # schema params beyond time become entries of the body
            for param in descriptor.params:
                if param.name == "time":
                    continue
                if param.name in args:
                    body.set(param.name, _json_to_node(args[param.name]))
            outputs = tuple(t.replace("{func_id}", func_id)
                            for t in output_templates)
            return ToolInvocationPlan(
                func_id=func_id,
                command=solver_command(case, time),
                body=body,
                outputs=outputs)
        return dict_planner

    raise ValueError(f"unknown planner kind {kind!r}")


# -- self-test ----------------------------------------------------------------


class RecordingArgs(dict):
    """Argument dict that remembers which keys the planner looked at."""

    def __init__(self, data):
        super().__init__(data)
        self.accessed: set[str] = set()

    def __getitem__(self, key):
        self.accessed.add(key)
        return super().__getitem__(key)

    def get(self, key, default=None):
        self.accessed.add(key)
        return super().get(key, default)

    def __contains__(self, key):
        self.accessed.add(key)
        return super().__contains__(key)


_BY_NAME = {
    "time": "latest",
    "field": "p",
    "isoField": "p",
    "liftDir": [-0.1736, 0.9848, 0.0],
    "dragDir": [0.9848, 0.1736, 0.0],
    "pitchAxis": [0.0, 0.0, 1.0],
    "CofR": [0.25, 0.0, 0.0],
    "start": [-5.0, -20.0, 0.0],
    "end": [-5.0, 20.0, 0.0],
    "point": [0.5, 0.0, 0.0],
    "normal": [0.0, 0.0, 1.0],
    "points": [[0.5, 0.1, 0.0]],
    "fields": ["p"],
    "nPoints": 10,
    "isoValue": 0.001,
    "magUInf": 51.4815,
    "lRef": 1.0,
    "Aref": 1.0,
    "rhoInf": 1.0,
}

_BY_TYPE = {"string": "p", "number": 1.0, "boolean": True, "array": ["p"]}


def synthetic_arguments(descriptor: ToolDescriptor, case: CaseLayout) -> dict:
    """Plausible arguments derived from the schema alone, for the self-test."""
    patches = list_patches(case)
    first = patches[0] if patches else "walls"
    out = {}
    for param in descriptor.params:
        if param.name == "patch":
            out[param.name] = first
        elif param.name == "patches":
            out[param.name] = [first]
        elif param.name in _BY_NAME:
            out[param.name] = _BY_NAME[param.name]
        else:
            out[param.name] = _BY_TYPE[param.type]
    return out


def _check_body_round_trip(name: str, plan: ToolInvocationPlan) -> None:
    file = FoamFile(
        root=DictNode([("functions", DictNode([(plan.func_id, plan.body)]))]),
        header=make_header("dictionary", "postProcessingDict", "system"))
    text = emit_dict(file)
    try:
        reparsed = parse_dict(text)
    except Exception as exc:
        raise SelfTestFailure(f"{name}: plan body does not parse: {exc}")
    if reparsed.root != file.root:
        raise SelfTestFailure(f"{name}: plan body does not round-trip")


def self_test(registry: Registry, case: CaseLayout) -> list[tuple[str, ToolInvocationPlan]]:
    """Plan every tool against the case with schema-derived arguments.

    Catches descriptor/planner drift: parameters nobody reads, bodies that
    do not survive a parse, commands missing the post-processing mode.
    """
    results = []
    for name in registry.names():
        tool = registry.get(name)
        recorder = RecordingArgs(synthetic_arguments(tool.descriptor, case))
        try:
            plan = tool.planner(recorder, case)
        except Exception as exc:
            raise SelfTestFailure(
                f"{name}: planner rejected synthetic arguments: {exc}") from exc
        unread = {p.name for p in tool.descriptor.params} - recorder.accessed
        if unread:
            raise SelfTestFailure(
                f"{name}: schema parameters never consumed: {sorted(unread)}")
        if "-postProcess" not in plan.command:
            raise SelfTestFailure(f"{name}: command lacks -postProcess")
        if plan.body is not None:
            _check_body_round_trip(name, plan)
        results.append((name, plan))
    return results
