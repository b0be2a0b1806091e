"""Model Context Protocol message layer.

JSON-RPC 2.0 envelopes with the MCP lifecycle (initialize, tools/list,
tools/call) over two transports sharing one codec: newline-delimited JSON on
stdio and one-envelope-per-POST HTTP. Unknown envelope fields are preserved
so newer peers can round-trip through this implementation.

Execution failures travel as results flagged ``is_error``; protocol failures
travel as JSON-RPC error envelopes. The two never mix.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Callable, Protocol as TypingProtocol

JSONRPC_VERSION = "2.0"

# Protocol revisions this server accepts; the first is what the bundled
# client requests. The negotiated tag is recorded per session, not asserted.
SUPPORTED_PROTOCOL_VERSIONS = ("2025-03-26", "2024-11-05")

PARSE_ERROR = -32700
INVALID_REQUEST = -32600
METHOD_NOT_FOUND = -32601
INVALID_PARAMS = -32602
INTERNAL_ERROR = -32603
NOT_INITIALIZED = -32002

_RESERVED_KEYS = {"jsonrpc", "id", "method", "params", "result", "error"}
_NAME_PATTERN = re.compile(r"^[A-Za-z0-9_]+$")
PARAM_TYPES = ("string", "number", "boolean", "array")


class EnvelopeError(Exception):
    """Input is not a well-formed JSON-RPC envelope."""

    def __init__(self, message: str, code: int = INVALID_REQUEST):
        self.code = code
        super().__init__(message)


class McpError(Exception):
    """Error envelope surfaced client-side."""

    def __init__(self, code: int, message: str, data=None):
        self.code = code
        self.data = data
        super().__init__(message)


class TransportClosed(McpError):
    """The peer went away; no response will come."""

    def __init__(self, detail: str):
        super().__init__(INTERNAL_ERROR, f"transport closed: {detail}")


class VersionMismatch(McpError):
    def __init__(self, requested: str, supported: tuple[str, ...]):
        super().__init__(
            INVALID_PARAMS,
            f"protocol version {requested!r} not supported",
            data={"supported": list(supported)})
        self.requested = requested


class UnknownTool(McpError):
    def __init__(self, name: str):
        super().__init__(INVALID_PARAMS, f"unknown tool {name!r}")
        self.name = name


class SchemaViolation(McpError):
    def __init__(self, parameter: str, reason: str):
        super().__init__(INVALID_PARAMS,
                         f"invalid arguments: {parameter}: {reason}")
        self.parameter = parameter


class ToolExecutionError(Exception):
    """Tool ran and failed; becomes an is_error result, never an envelope."""


@dataclass
class Envelope:
    id: int | str | None = None
    method: str | None = None
    params: dict | None = None
    result: dict | None = None
    error: dict | None = None
    extra: dict = field(default_factory=dict)

    @property
    def kind(self) -> str:
        if self.method is not None:
            return "notification" if self.id is None else "request"
        return "response"

    @staticmethod
    def request(id: int | str, method: str, params: dict | None = None) -> "Envelope":
        return Envelope(id=id, method=method, params=params)

    @staticmethod
    def notification(method: str, params: dict | None = None) -> "Envelope":
        return Envelope(method=method, params=params)

    @staticmethod
    def success(id: int | str | None, result: dict) -> "Envelope":
        return Envelope(id=id, result=result)

    @staticmethod
    def failure(id: int | str | None, code: int, message: str,
                data=None) -> "Envelope":
        error: dict = {"code": code, "message": message}
        if data is not None:
            error["data"] = data
        return Envelope(id=id, error=error)


def encode_envelope(envelope: Envelope) -> dict:
    data: dict = {"jsonrpc": JSONRPC_VERSION}
    if envelope.method is not None:
        data["method"] = envelope.method
        if envelope.id is not None:
            data["id"] = envelope.id
        if envelope.params is not None:
            data["params"] = envelope.params
    else:
        data["id"] = envelope.id
        if envelope.error is not None:
            data["error"] = envelope.error
        else:
            data["result"] = envelope.result if envelope.result is not None else {}
    data.update(envelope.extra)
    return data


def decode_envelope(data: dict) -> Envelope:
    if not isinstance(data, dict):
        raise EnvelopeError("envelope must be a JSON object")
    if data.get("jsonrpc") != JSONRPC_VERSION:
        raise EnvelopeError("missing or unsupported jsonrpc version tag")
    extra = {k: v for k, v in data.items() if k not in _RESERVED_KEYS}
    has_method = "method" in data
    has_result = "result" in data
    has_error = "error" in data
    if has_method:
        if has_result or has_error:
            raise EnvelopeError("request carries result or error")
        if not isinstance(data["method"], str):
            raise EnvelopeError("method must be a string")
        params = data.get("params")
        if params is not None and not isinstance(params, dict):
            raise EnvelopeError("params must be an object")
        return Envelope(id=data.get("id"), method=data["method"],
                        params=params, extra=extra)
    if has_result == has_error:
        raise EnvelopeError("response needs exactly one of result or error")
    if "id" not in data:
        raise EnvelopeError("response without id")
    return Envelope(id=data["id"], result=data.get("result"),
                    error=data.get("error"), extra=extra)


def dumps(envelope: Envelope) -> str:
    """Canonical single-line encoding used by both transports."""
    return json.dumps(encode_envelope(envelope), sort_keys=True,
                      separators=(",", ":"))


def loads(line: str) -> Envelope:
    try:
        data = json.loads(line)
    except json.JSONDecodeError as exc:
        raise EnvelopeError(f"invalid JSON: {exc}", code=PARSE_ERROR) from exc
    return decode_envelope(data)


@dataclass(frozen=True)
class ToolParam:
    name: str
    type: str
    description: str = ""
    required: bool = False

    def __post_init__(self):
        if self.type not in PARAM_TYPES:
            raise ValueError(f"parameter type must be one of {PARAM_TYPES}")


@dataclass(frozen=True)
class ToolDescriptor:
    name: str
    description: str
    params: tuple[ToolParam, ...] = ()

    def __post_init__(self):
        if not _NAME_PATTERN.match(self.name):
            raise ValueError(f"tool name {self.name!r} must match [A-Za-z0-9_]+")
        object.__setattr__(self, "params", tuple(self.params))

    def to_json(self) -> dict:
        properties = {
            p.name: {"type": p.type, "description": p.description}
            for p in self.params
        }
        return {
            "name": self.name,
            "description": self.description,
            "inputSchema": {
                "type": "object",
                "properties": properties,
                "required": [p.name for p in self.params if p.required],
            },
        }

    @staticmethod
    def from_json(data: dict) -> "ToolDescriptor":
        schema = data.get("inputSchema", {})
        required = set(schema.get("required", ()))
        params = tuple(
            ToolParam(name=name, type=meta.get("type", "string"),
                      description=meta.get("description", ""),
                      required=name in required)
            for name, meta in schema.get("properties", {}).items())
        return ToolDescriptor(data["name"], data.get("description", ""), params)


_TYPE_CHECKS = {
    "string": lambda v: isinstance(v, str),
    "number": lambda v: isinstance(v, (int, float)) and not isinstance(v, bool),
    "boolean": lambda v: isinstance(v, bool),
    "array": lambda v: isinstance(v, list),
}


def validate_arguments(descriptor: ToolDescriptor, arguments: dict) -> None:
    known = {p.name: p for p in descriptor.params}
    for param in descriptor.params:
        if param.required and param.name not in arguments:
            raise SchemaViolation(param.name, "required parameter missing")
    for name, value in arguments.items():
        param = known.get(name)
        if param is None:
            raise SchemaViolation(name, "not a parameter of this tool")
        if not _TYPE_CHECKS[param.type](value):
            raise SchemaViolation(name, f"expected {param.type}")


@dataclass(frozen=True)
class ContentItem:
    type: str  # "text" | "file"
    text: str = ""
    path: str = ""

    def to_json(self) -> dict:
        if self.type == "text":
            return {"type": "text", "text": self.text}
        return {"type": "file", "path": self.path}

    @staticmethod
    def from_json(data: dict) -> "ContentItem":
        if data.get("type") == "file":
            return ContentItem("file", path=data.get("path", ""))
        return ContentItem("text", text=data.get("text", ""))


@dataclass
class ToolCallResult:
    content: list[ContentItem]
    is_error: bool = False

    def __post_init__(self):
        if not self.content:
            raise ValueError("a tool result carries at least one content item")

    @property
    def text(self) -> str:
        return "\n".join(i.text for i in self.content if i.type == "text")

    @property
    def files(self) -> list[str]:
        return [i.path for i in self.content if i.type == "file"]

    def to_json(self) -> dict:
        return {"content": [i.to_json() for i in self.content],
                "isError": self.is_error}

    @staticmethod
    def from_json(data: dict) -> "ToolCallResult":
        items = [ContentItem.from_json(i) for i in data.get("content", [])]
        return ToolCallResult(items, bool(data.get("isError", False)))


class ToolProvider(TypingProtocol):
    def descriptors(self) -> list[ToolDescriptor]: ...
    def execute(self, name: str, arguments: dict) -> ToolCallResult: ...


class McpServer:
    """Transport-independent request handler; one instance per connection."""

    def __init__(self, provider: ToolProvider, server_name: str = "foampilot-tools",
                 server_version: str = "0.1.0"):
        self.provider = provider
        self.server_name = server_name
        self.server_version = server_version
        self.initialized = False
        self.negotiated_version: str | None = None

    def handle(self, envelope: Envelope) -> Envelope | None:
        if envelope.kind == "notification":
            return None
        if envelope.kind == "response":
            return Envelope.failure(envelope.id, INVALID_REQUEST,
                                    "server accepts only requests")
        handler = {
            "initialize": self._initialize,
            "tools/list": self._list_tools,
            "tools/call": self._call_tool,
        }.get(envelope.method)
        if handler is None:
            return Envelope.failure(envelope.id, METHOD_NOT_FOUND,
                                    f"unknown method {envelope.method!r}")
        try:
            return handler(envelope)
        except McpError as exc:
            return Envelope.failure(envelope.id, exc.code, str(exc), exc.data)
        except Exception as exc:  # pragma: no cover - defensive
            return Envelope.failure(envelope.id, INTERNAL_ERROR, str(exc))

    def _initialize(self, envelope: Envelope) -> Envelope:
        params = envelope.params or {}
        requested = params.get("protocolVersion", SUPPORTED_PROTOCOL_VERSIONS[0])
        if requested not in SUPPORTED_PROTOCOL_VERSIONS:
            raise VersionMismatch(requested, SUPPORTED_PROTOCOL_VERSIONS)
        self.initialized = True
        self.negotiated_version = requested
        return Envelope.success(envelope.id, {
            "protocolVersion": requested,
            "capabilities": {"tools": {"listChanged": False}},
            "serverInfo": {"name": self.server_name,
                           "version": self.server_version},
        })

    def _require_initialized(self, envelope: Envelope) -> None:
        if not self.initialized:
            raise McpError(NOT_INITIALIZED,
                           "initialize must complete before this call")

    def _list_tools(self, envelope: Envelope) -> Envelope:
        self._require_initialized(envelope)
        tools = [d.to_json() for d in self.provider.descriptors()]
        return Envelope.success(envelope.id, {"tools": tools})

    def _call_tool(self, envelope: Envelope) -> Envelope:
        self._require_initialized(envelope)
        params = envelope.params or {}
        name = params.get("name")
        if not isinstance(name, str):
            raise SchemaViolation("name", "tool name must be a string")
        arguments = params.get("arguments") or {}
        if not isinstance(arguments, dict):
            raise SchemaViolation("arguments", "must be an object")
        descriptor = next(
            (d for d in self.provider.descriptors() if d.name == name), None)
        if descriptor is None:
            raise UnknownTool(name)
        validate_arguments(descriptor, arguments)
        try:
            result = self.provider.execute(name, arguments)
        except ToolExecutionError as exc:
            result = ToolCallResult(
                [ContentItem("text", text=f"tool failed: {exc}")], is_error=True)
        return Envelope.success(envelope.id, result.to_json())

    # -- stdio framing -------------------------------------------------------

    def handle_line(self, line: str) -> str | None:
        """One NDJSON envelope in, one out (None for notifications)."""
        line = line.strip()
        if not line:
            return None
        try:
            envelope = loads(line)
        except EnvelopeError as exc:
            return dumps(Envelope.failure(None, exc.code, str(exc)))
        reply = self.handle(envelope)
        return dumps(reply) if reply is not None else None


def serve_stdio(server: McpServer, stdin, stdout) -> None:
    """Blocking loop: one envelope per line until EOF."""
    for line in stdin:
        reply = server.handle_line(line)
        if reply is not None:
            stdout.write(reply + "\n")
            stdout.flush()


class McpClient:
    """Sequential client over a request->response transport callable."""

    def __init__(self, transport: Callable[[Envelope], Envelope],
                 client_name: str = "foampilot"):
        self.transport = transport
        self.client_name = client_name
        self.next_id = 1
        self.negotiated_version: str | None = None
        self.server_info: dict = {}

    def _call(self, method: str, params: dict | None = None) -> dict:
        request = Envelope.request(self.next_id, method, params)
        self.next_id += 1
        reply = self.transport(request)
        if reply.id != request.id:
            raise McpError(INVALID_REQUEST,
                           f"response id {reply.id!r} does not match "
                           f"request id {request.id!r}")
        if reply.error is not None:
            raise McpError(reply.error.get("code", INTERNAL_ERROR),
                           reply.error.get("message", "unknown error"),
                           reply.error.get("data"))
        return reply.result or {}

    def initialize(self) -> dict:
        result = self._call("initialize", {
            "protocolVersion": SUPPORTED_PROTOCOL_VERSIONS[0],
            "clientInfo": {"name": self.client_name, "version": "0.1.0"},
            "capabilities": {},
        })
        self.negotiated_version = result.get("protocolVersion")
        self.server_info = result.get("serverInfo", {})
        return result

    def list_tools(self) -> list[ToolDescriptor]:
        result = self._call("tools/list")
        return [ToolDescriptor.from_json(t) for t in result.get("tools", [])]

    def call_tool(self, name: str, arguments: dict | None = None) -> ToolCallResult:
        result = self._call("tools/call",
                            {"name": name, "arguments": arguments or {}})
        return ToolCallResult.from_json(result)


def in_process_transport(server: McpServer) -> Callable[[Envelope], Envelope]:
    def transport(request: Envelope) -> Envelope:
        reply = server.handle(request)
        if reply is None:
            raise McpError(INTERNAL_ERROR, "no reply to a request")
        return reply
    return transport


def http_transport(url: str, session=None) -> Callable[[Envelope], Envelope]:
    """One envelope per POST; shares the stdio codec."""
    import requests

    http = session or requests.Session()

    def transport(request: Envelope) -> Envelope:
        try:
            reply = http.post(url, data=dumps(request),
                              headers={"Content-Type": "application/json"},
                              timeout=60)
        except requests.RequestException as exc:
            raise TransportClosed(str(exc)) from exc
        if reply.status_code != 200:
            raise McpError(INTERNAL_ERROR,
                           f"transport error {reply.status_code}")
        return loads(reply.text)
    return transport
