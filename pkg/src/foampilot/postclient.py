"""Natural-language post-processing client.

Maps a user request onto one registered tool via the language model, invokes
it through the protocol client, and keeps an append-only session history.
On request it also produces small Python analysis scripts over the data
files earlier turns generated.

The model's tool selection must follow a strict line grammar:

    TOOL: <name>
    ARG <param> = <JSON value>
    END

with ``TOOL: none`` as the explicit decline. One automatic reprompt is
allowed when the reply violates the grammar or the tool schema; a second
violation fails the turn. Free text after END is kept as the model's note.
"""

from __future__ import annotations

import json
import re
import subprocess
from dataclasses import dataclass, field
from pathlib import Path

from .casemodel import CaseLayout
from .events import EventBus
from .llm import ChatRequest, Gateway, Message
from .mcp import McpClient, McpError, SchemaViolation, ToolDescriptor, validate_arguments

DECLINE_NAME = "none"
SCRIPT_TOOL = "script"
HEADER_BYTE_BUDGET = 2048
SCRIPT_DIR = ".copilot/scripts"

_ARG_LINE = re.compile(r"^ARG\s+([A-Za-z0-9_]+)\s*=\s*(.+)$")
_TOOL_LINE = re.compile(r"^TOOL:\s*(\S+)\s*$")
_CODE_FENCE = re.compile(r"```(?:python)?\s*\n(.*?)```", re.DOTALL)
_SCRIPT_ROUTE = re.compile(r"\b(?:script|python)\b", re.IGNORECASE)
_DATA_REF = re.compile(r"[\w./()\-]+\.(?:raw|dat|csv|vtk)")

SELECTOR_SYSTEM = """\
You operate a catalogue of CFD post-processing tools. Map the user's request
onto exactly one tool and its arguments.

Reply with nothing but this grammar:
TOOL: <tool name>
ARG <param> = <JSON value>
END
One ARG line per argument; values are JSON (strings quoted, lists in
brackets). If no tool fits the request, reply:
TOOL: none
END
Anything you write after END is kept as a note."""

SCRIPT_SYSTEM = """\
You write small, self-contained Python analysis scripts over solver output
files. Reply with exactly one fenced code block (```python ... ```) and
nothing else of substance. Read only the data files listed in the prompt;
save plots next to the data instead of showing them."""


class NoToolSelected(Exception):
    """The model declined or named a tool that does not exist."""


class SelectionViolation(Exception):
    """Reply broke the selection grammar or schema twice in a row."""


class GrammarViolation(Exception):
    """Single reply failed to parse; may still be reprompted."""


class NoCodeBlock(Exception):
    pass


class NoDataAvailable(Exception):
    def __init__(self):
        super().__init__(
            "no data files were produced yet; run a sampling or "
            "coefficient tool first, then ask for the script")


@dataclass(frozen=True)
class ToolChoice:
    tool: str
    arguments: dict
    note: str
    raw: str


@dataclass(frozen=True)
class SessionTurn:
    request: str
    tool: str
    arguments: dict
    summary: str
    produced: tuple[str, ...]
    is_error: bool = False

    def to_json(self) -> dict:
        return {
            "request": self.request,
            "tool": self.tool,
            "arguments": self.arguments,
            "summary": self.summary,
            "produced": list(self.produced),
            "is_error": self.is_error,
        }

    @staticmethod
    def from_json(data: dict) -> "SessionTurn":
        return SessionTurn(
            request=data["request"],
            tool=data["tool"],
            arguments=data["arguments"],
            summary=data["summary"],
            produced=tuple(data["produced"]),
            is_error=bool(data.get("is_error", False)),
        )


@dataclass(frozen=True)
class ScriptResult:
    path: str
    text: str
    inputs: tuple[str, ...]
    warnings: tuple[str, ...] = ()
    executed: bool = False
    exit_code: int | None = None


@dataclass
class SessionContext:
    """Append-only turn history plus the case the session works on."""

    case: CaseLayout
    turns: list[SessionTurn] = field(default_factory=list)

    def append(self, turn: SessionTurn) -> None:
        for rel in turn.produced:
            if not (self.case.root / rel).exists():
                raise ValueError(f"recorded output {rel} does not exist")
        self.turns.append(turn)

    def data_paths(self) -> list[str]:
        """Tool-produced data files, in first-seen order. Scripts excluded."""
        seen: list[str] = []
        for turn in self.turns:
            for rel in turn.produced:
                if rel.startswith(SCRIPT_DIR):
                    continue
                if rel not in seen:
                    seen.append(rel)
        return seen

    def recent_lines(self, limit: int = 5) -> list[str]:
        lines = []
        for turn in self.turns[-limit:]:
            status = "failed" if turn.is_error else "ok"
            lines.append(f"- {turn.tool} ({status}): {turn.request}")
        return lines


def parse_selection(text: str) -> tuple[str, dict, str]:
    """Returns (tool name, arguments, trailing note) or raises GrammarViolation."""
    lines = text.splitlines()
    index = 0
    while index < len(lines) and not lines[index].strip():
        index += 1
    if index == len(lines):
        raise GrammarViolation("empty reply; expected a TOOL: line")
    head = _TOOL_LINE.match(lines[index].strip())
    if head is None:
        raise GrammarViolation(
            f"first line must be 'TOOL: <name>', got {lines[index].strip()!r}")
    name = head.group(1)
    arguments: dict = {}
    index += 1
    while index < len(lines):
        line = lines[index].strip()
        index += 1
        if not line:
            continue
        if line == "END":
            note = "\n".join(lines[index:]).strip()
            return name, arguments, note
        arg = _ARG_LINE.match(line)
        if arg is None:
            raise GrammarViolation(
                f"expected 'ARG <param> = <JSON value>' or 'END', got {line!r}")
        param = arg.group(1)
        if param in arguments:
            raise GrammarViolation(f"argument {param!r} given twice")
        try:
            arguments[param] = json.loads(arg.group(2))
        except json.JSONDecodeError as exc:
            raise GrammarViolation(
                f"value for {param!r} is not valid JSON: {exc}")
    raise GrammarViolation("reply ended without the END line")


def describe_tools(descriptors: list[ToolDescriptor]) -> str:
    """Compact metadata listing shown to the selector model."""
    blocks = []
    for desc in descriptors:
        lines = [f"- {desc.name}: {desc.description}"]
        for p in desc.params:
            flag = "required" if p.required else "optional"
            lines.append(f"    {p.name} ({p.type}, {flag}): {p.description}")
        blocks.append("\n".join(lines))
    return "\n".join(blocks)


def header_sample(path: Path, budget: int = HEADER_BYTE_BUDGET) -> str:
    """First lines of a data file, cut to the byte budget."""
    try:
        text = path.read_text(errors="replace")
    except OSError:
        return "(unreadable)"
    out: list[str] = []
    used = 0
    for line in text.splitlines():
        cost = len(line.encode()) + 1
        if used + cost > budget:
            out.append("...")
            break
        out.append(line)
        used += cost
    return "\n".join(out)


class PostClient:
    def __init__(self, gateway: Gateway, mcp: McpClient, case: CaseLayout, *,
                 header_budget: int = HEADER_BYTE_BUDGET,
                 interpreter: list[str] | None = None,
                 exec_scripts: bool = False,
                 transcript_path: Path | str | None = None,
                 bus: EventBus | None = None):
        self.gateway = gateway
        self.mcp = mcp
        self.context = SessionContext(case)
        self.header_budget = header_budget
        self.interpreter = interpreter or ["python3"]
        self.exec_scripts = exec_scripts
        self.transcript_path = Path(transcript_path) if transcript_path else None
        self.bus = bus
        self._descriptors: list[ToolDescriptor] | None = None

    # -- server access -------------------------------------------------------

    def tools(self) -> list[ToolDescriptor]:
        if self._descriptors is None:
            if self.mcp.negotiated_version is None:
                self.mcp.initialize()
            self._descriptors = self.mcp.list_tools()
        return self._descriptors

    # -- tool selection ------------------------------------------------------

    def _selection_messages(self, request: str) -> list[Message]:
        body = "\n".join([
            "Available tools:",
            describe_tools(self.tools()),
            "",
            "Recent activity:",
            *(self.context.recent_lines() or ["- none"]),
            "",
            f"Request: {request}",
        ])
        return [Message("system", SELECTOR_SYSTEM), Message("user", body)]

    def select_tool(self, request: str) -> ToolChoice:
        messages = self._selection_messages(request)
        reply = self.gateway.complete(ChatRequest(tuple(messages))).content
        try:
            return self._validated_choice(reply)
        except (GrammarViolation, SchemaViolation) as first:
            retry = messages + [
                Message("assistant", reply),
                Message("user",
                        f"Your reply was rejected: {first}. Answer again "
                        "using exactly the required grammar."),
            ]
            reply = self.gateway.complete(ChatRequest(tuple(retry))).content
            try:
                return self._validated_choice(reply)
            except (GrammarViolation, SchemaViolation) as second:
                raise SelectionViolation(str(second)) from second

    def _validated_choice(self, reply: str) -> ToolChoice:
        name, arguments, note = parse_selection(reply)
        if name == DECLINE_NAME:
            raise NoToolSelected(note or "the model declined the request")
        descriptor = next((d for d in self.tools() if d.name == name), None)
        if descriptor is None:
            raise NoToolSelected(f"the model named an unknown tool {name!r}")
        validate_arguments(descriptor, arguments)
        return ToolChoice(name, arguments, note, reply)

    # -- invocation ----------------------------------------------------------

    def invoke(self, choice: ToolChoice, request: str = "") -> SessionTurn:
        try:
            result = self.mcp.call_tool(choice.tool, choice.arguments)
        except McpError as exc:
            turn = SessionTurn(request, choice.tool, choice.arguments,
                               f"protocol failure: {exc}", (), is_error=True)
            self._record(turn)
            self._emit_turn(turn)
            raise
        produced = tuple(
            p for p in result.files if (self.context.case.root / p).exists())
        turn = SessionTurn(request, choice.tool, choice.arguments,
                           result.text, produced, is_error=result.is_error)
        self._record(turn)
        self._emit_turn(turn)
        return turn

    def _record(self, turn: SessionTurn) -> None:
        self.context.append(turn)
        if self.transcript_path is not None:
            with self.transcript_path.open("a") as handle:
                handle.write(json.dumps(turn.to_json(), sort_keys=True) + "\n")

    def _emit_turn(self, turn: SessionTurn) -> None:
        if self.bus is None:
            return
        first_line = turn.summary.splitlines()[0] if turn.summary else ""
        self.bus.emit("tool-invocation", tool=turn.tool,
                      arguments=turn.arguments, is_error=turn.is_error,
                      summary=first_line)
        for rel in turn.produced:
            self.bus.emit("file-produced", path=rel)

    # -- analysis scripts ----------------------------------------------------

    def generate_analysis_script(self, request: str) -> ScriptResult:
        produced = self.context.data_paths()
        if not produced:
            raise NoDataAvailable()
        sections = [f"Request: {request}", "", "Data files:"]
        for rel in produced:
            sample = header_sample(self.context.case.root / rel,
                                   self.header_budget)
            sections.append(f"- {rel}")
            sections.append(f"  first lines:\n{_indent(sample, 4)}")
        messages = (Message("system", SCRIPT_SYSTEM),
                    Message("user", "\n".join(sections)))
        reply = self.gateway.complete(ChatRequest(messages)).content
        block = _CODE_FENCE.search(reply)
        if block is None:
            raise NoCodeBlock("the reply contains no fenced code block")
        script = block.group(1)
        inputs = tuple(p for p in produced
                       if p in script or Path(p).name in script)
        warnings = tuple(
            f"undeclared input: script reads {ref!r} which no tool produced"
            for ref in sorted(set(_DATA_REF.findall(script)))
            if not _known_reference(ref, produced))
        rel_path = self._write_script(script)
        executed, exit_code = False, None
        if self.exec_scripts:
            proc = subprocess.run(
                [*self.interpreter, rel_path], cwd=self.context.case.root,
                capture_output=True, text=True)
            executed, exit_code = True, proc.returncode
        result = ScriptResult(rel_path, script, inputs, warnings,
                              executed, exit_code)
        turn = SessionTurn(request, SCRIPT_TOOL, {},
                           f"script written to {rel_path}", (rel_path,))
        self._record(turn)
        if self.bus is not None:
            self.bus.emit("file-produced", path=rel_path, source="script")
        return result

    def _write_script(self, script: str) -> str:
        directory = self.context.case.root / SCRIPT_DIR
        directory.mkdir(parents=True, exist_ok=True)
        number = len(list(directory.glob("script_*.py"))) + 1
        rel = f"{SCRIPT_DIR}/script_{number}.py"
        (self.context.case.root / rel).write_text(script)
        return rel

    # -- turns and the repl --------------------------------------------------

    def run_turn(self, request: str) -> SessionTurn | ScriptResult:
        if _SCRIPT_ROUTE.search(request):
            return self.generate_analysis_script(request)
        choice = self.select_tool(request)
        return self.invoke(choice, request)

    def run_repl(self, stdin, stdout, *, confirm: bool = False) -> int:
        lines = iter(stdin)
        for line in lines:
            text = line.strip()
            if not text:
                continue
            if text == ":quit":
                break
            if text == ":tools":
                for desc in self.tools():
                    stdout.write(f"{desc.name}: {desc.description}\n")
                continue
            if text == ":history":
                for turn in self.context.turns:
                    status = "failed" if turn.is_error else "ok"
                    stdout.write(f"{turn.tool} [{status}]: {turn.request}\n")
                continue
            if _SCRIPT_ROUTE.search(text):
                try:
                    script = self.generate_analysis_script(text)
                except (NoDataAvailable, NoCodeBlock) as exc:
                    stdout.write(f"error: {exc}\n")
                    continue
                stdout.write(f"script written to {script.path}\n")
                for warning in script.warnings:
                    stdout.write(f"warning: {warning}\n")
                continue
            try:
                choice = self.select_tool(text)
            except (NoToolSelected, SelectionViolation) as exc:
                stdout.write(f"error: {exc}\n")
                continue
            stdout.write(
                f"tool: {choice.tool} "
                f"{json.dumps(choice.arguments, sort_keys=True)}\n")
            if confirm:
                answer = next(lines, "")
                if answer.strip().lower() not in ("y", "yes"):
                    stdout.write("skipped\n")
                    continue
            try:
                turn = self.invoke(choice, text)
            except McpError as exc:
                stdout.write(f"error: {exc}\n")
                continue
            stdout.write(turn.summary + "\n")
        return 0


def _indent(text: str, spaces: int) -> str:
    pad = " " * spaces
    return "\n".join(pad + line for line in text.splitlines())


def _known_reference(ref: str, produced: list[str]) -> bool:
    return any(ref == p or ref == Path(p).name or p.endswith(ref)
               for p in produced)


def replay_transcript(path: Path | str, client: PostClient) -> list[SessionTurn | ScriptResult]:
    """Re-run the requests recorded in a session transcript, in order."""
    outcomes = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        entry = json.loads(line)
        outcomes.append(client.run_turn(entry["request"]))
    return outcomes
