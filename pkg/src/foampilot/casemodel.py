"""On-disk case directory model and input validation.

A case is the standard layout: field files under ``0/``, mesh and physical
properties under ``constant/``, solver configuration under ``system/``.
Validation here is structural (files exist, boundary parses, prompt names
known patches); geometric mesh quality is the solver's problem.
"""

from __future__ import annotations

import os
import re
import shutil
import tempfile
from dataclasses import dataclass, field
from pathlib import Path, PurePosixPath

from .foamdict import DictNode, FoamFile, emit_dict, node_tokens, parse_dict

ARCHIVE_DIR = ".copilot"

_MESH_COMPONENTS = ("points", "faces", "owner", "neighbour", "boundary")
_TEMPLATE_FILES = ("system/controlDict", "system/fvSchemes", "system/fvSolution")


class IoFailure(Exception):
    pass


class PathEscape(Exception):
    """A bundle path normalizes to somewhere outside the case root."""


@dataclass
class CaseLayout:
    root: Path
    zero_files: list[str] = field(default_factory=list)
    constant_files: list[str] = field(default_factory=list)
    system_files: list[str] = field(default_factory=list)

    @classmethod
    def scan(cls, root: Path | str) -> "CaseLayout":
        root = Path(root)
        if not root.is_dir():
            raise IoFailure(f"case root {root} is not a directory")

        def collect(sub: str) -> list[str]:
            base = root / sub
            if not base.is_dir():
                return []
            return sorted(
                str(p.relative_to(root)) for p in base.rglob("*")
                if p.is_file() and ARCHIVE_DIR not in p.parts)

        return cls(
            root=root,
            zero_files=collect("0"),
            constant_files=collect("constant"),
            system_files=collect("system"),
        )

    @property
    def boundary_path(self) -> Path:
        return self.root / "constant" / "polyMesh" / "boundary"

    def has_file(self, relative: str) -> bool:
        return (self.root / relative).is_file()

    def read(self, relative: str) -> FoamFile:
        path = self.root / relative
        try:
            text = path.read_text()
        except OSError as exc:
            raise IoFailure(f"cannot read {path}: {exc}") from exc
        return parse_dict(text, str(path))

    def solver(self) -> str | None:
        if not self.has_file("system/controlDict"):
            return None
        node = self.read("system/controlDict").root.get("application")
        tokens = _node_text(node)
        return tokens[0] if tokens else None


def _node_text(node) -> list[str]:
    if node is None:
        return []
    try:
        return node_tokens(node)
    except TypeError:
        return []


@dataclass(frozen=True)
class Finding:
    code: str
    path: str
    message: str

    def __str__(self) -> str:
        return f"[{self.code}] {self.path}: {self.message}"


@dataclass
class PrecheckReport:
    status: str  # "pass" | "fail"
    findings: list[Finding]

    @property
    def passed(self) -> bool:
        return self.status == "pass"


@dataclass
class FlowConditions:
    """Freestream state and force-coefficient reference quantities."""

    speed: float            # m/s
    viscosity: float        # m^2/s
    angle_of_attack: float  # degrees
    ref_length: float = 1.0  # m
    ref_area: float = 1.0    # m^2

    def __post_init__(self):
        if self.speed <= 0:
            raise ValueError("freestream speed must be positive")
        if self.viscosity <= 0:
            raise ValueError("kinematic viscosity must be positive")
        if self.ref_length <= 0 or self.ref_area <= 0:
            raise ValueError("reference length and area must be positive")


@dataclass
class CaseBundle:
    """Generator output for one iteration: case-relative path -> parsed file."""

    files: dict[str, FoamFile]
    iteration: int

    def normalized_paths(self) -> dict[str, FoamFile]:
        out: dict[str, FoamFile] = {}
        for raw, foam in self.files.items():
            clean = normalize_case_path(raw)
            out[clean] = foam
        return out


def normalize_case_path(raw: str) -> str:
    pure = PurePosixPath(raw.replace("\\", "/"))
    if pure.is_absolute():
        raise PathEscape(f"absolute path {raw!r} not allowed in a bundle")
    parts: list[str] = []
    for part in pure.parts:
        if part == "..":
            if not parts:
                raise PathEscape(f"path {raw!r} escapes the case root")
            parts.pop()
        elif part != ".":
            parts.append(part)
    if not parts:
        raise PathEscape(f"path {raw!r} does not name a file")
    return "/".join(parts)


# Prompt text refers to patches either in quotes (the `walls' patch) or as the
# word adjacent to "patch"/"patches". Both forms are checked against the
# boundary file; anything else is the LLM's job to interpret.
_QUOTED = re.compile(r"[`'\"‘“]([A-Za-z_][\w.-]*)['\"’”]?")
_NEAR_PATCH = re.compile(
    r"(?:\bpatch(?:es)?\s+(?:named\s+|called\s+)?([A-Za-z_][\w.-]*))"
    r"|(?:\b([A-Za-z_][\w.-]*)\s+patch(?:es)?\b)", re.IGNORECASE)

_STOPWORDS = {
    "the", "a", "an", "this", "that", "each", "every", "all", "any", "on",
    "of", "for", "from", "at", "to", "wall", "boundary", "surface", "same",
    "new", "given", "named", "specified", "selected", "one", "which",
}


def _keep(name: str) -> bool:
    return len(name) >= 2 and name.lower() not in _STOPWORDS


def patch_mentions(prompt: str) -> list[str]:
    """Candidate patch names the prompt appears to reference, in order."""
    seen: list[str] = []
    for match in _QUOTED.finditer(prompt):
        name = match.group(1)
        if _keep(name) and name not in seen:
            seen.append(name)
    for match in _NEAR_PATCH.finditer(prompt):
        name = match.group(1) or match.group(2)
        if name and _keep(name) and name not in seen:
            seen.append(name)
    return seen


def list_patches(case: CaseLayout) -> list[str]:
    """Patch names from the boundary file, in file order."""
    foam = case.read("constant/polyMesh/boundary")
    names: list[str] = []
    if foam.standalone is None:
        return names
    for item in getattr(foam.standalone, "items", []):
        if isinstance(item, DictNode):
            for key, value in item.entries():
                if key is not None and isinstance(value, DictNode):
                    names.append(key)
    return names


def precheck(case: CaseLayout, prompt: str) -> PrecheckReport:
    """Validate inputs and mesh before any LLM call."""
    findings: list[Finding] = []

    mesh_dir = case.root / "constant" / "polyMesh"
    if not case.boundary_path.is_file():
        findings.append(Finding(
            "mesh-missing", "constant/polyMesh/boundary",
            "mesh boundary file absent"))
    for component in _MESH_COMPONENTS:
        if component == "boundary":
            continue
        if not (mesh_dir / component).is_file():
            findings.append(Finding(
                "mesh-missing", f"constant/polyMesh/{component}",
                f"mesh {component} file absent"))

    for template in _TEMPLATE_FILES:
        if not case.has_file(template):
            findings.append(Finding(
                "template-missing", template, "required case file absent"))

    if case.boundary_path.is_file():
        patches = list_patches(case)
        known = set(patches)
        for name in patch_mentions(prompt):
            if name not in known:
                findings.append(Finding(
                    "unknown-patch", "constant/polyMesh/boundary",
                    f"prompt names patch '{name}' but boundary defines "
                    f"{patches}"))

    status = "pass" if not findings else "fail"
    return PrecheckReport(status=status, findings=findings)


def apply_bundle(case: CaseLayout, bundle: CaseBundle) -> CaseLayout:
    """Write a generated bundle into the case, archiving what it replaces.

    Writes are atomic per file (temp then rename). Files about to be
    overwritten are first copied to ``.copilot/iter-<n-1>/`` so the corrector
    can diff against the previous iteration.
    """
    files = bundle.normalized_paths()
    if not files:
        return CaseLayout.scan(case.root)

    archive_root = case.root / ARCHIVE_DIR / f"iter-{bundle.iteration - 1}"
    for relative in files:
        target = case.root / relative
        if target.is_file():
            backup = archive_root / relative
            backup.parent.mkdir(parents=True, exist_ok=True)
            shutil.copy2(target, backup)

    for relative, foam in files.items():
        target = case.root / relative
        target.parent.mkdir(parents=True, exist_ok=True)
        text = emit_dict(foam)
        descriptor, temp_name = tempfile.mkstemp(
            dir=target.parent, prefix=target.name + ".", suffix=".tmp")
        try:
            with os.fdopen(descriptor, "w") as handle:
                handle.write(text)
            os.replace(temp_name, target)
        except OSError as exc:
            try:
                os.unlink(temp_name)
            except OSError:
                pass
            raise IoFailure(f"cannot write {target}: {exc}") from exc

    return CaseLayout.scan(case.root)
