"""Protocol layer tests: codec shape rules, lifecycle, golden transcripts."""

import io
import json
from pathlib import Path

import pytest
from hypothesis import given, strategies as st

from foampilot.mcp import (
    INVALID_PARAMS,
    INVALID_REQUEST,
    METHOD_NOT_FOUND,
    NOT_INITIALIZED,
    PARSE_ERROR,
    ContentItem,
    Envelope,
    EnvelopeError,
    McpClient,
    McpError,
    McpServer,
    ToolCallResult,
    ToolDescriptor,
    ToolExecutionError,
    ToolParam,
    decode_envelope,
    dumps,
    encode_envelope,
    http_transport,
    in_process_transport,
    loads,
    serve_stdio,
    validate_arguments,
)

FIXTURES = Path(__file__).parent / "fixtures" / "mcp"


class MiniProvider:
    """Two tools: one echoes, one always raises."""

    def descriptors(self):
        return [
            ToolDescriptor("echo", "Repeats its input back.",
                           (ToolParam("text", "string", "text to repeat",
                                      required=True),)),
            ToolDescriptor("fail", "Always fails.", ()),
        ]

    def execute(self, name, arguments):
        if name == "fail":
            raise ToolExecutionError("synthetic failure")
        return ToolCallResult([ContentItem("text", text=arguments["text"])])


def make_server():
    return McpServer(MiniProvider(), server_version="0.1.0")


def initialized_server():
    server = make_server()
    server.handle(Envelope.request(0, "initialize",
                                   {"protocolVersion": "2025-03-26"}))
    return server


class TestCodec:
    def test_request_round_trip(self):
        env = Envelope.request(7, "tools/call", {"name": "echo"})
        assert decode_envelope(encode_envelope(env)) == env

    def test_notification_has_no_id(self):
        data = encode_envelope(Envelope.notification("notifications/initialized"))
        assert "id" not in data
        assert decode_envelope(data).kind == "notification"

    def test_response_id_zero_is_a_request_id(self):
        env = Envelope.success(0, {"ok": True})
        assert decode_envelope(encode_envelope(env)) == env

    def test_unknown_fields_survive(self):
        data = {"jsonrpc": "2.0", "id": 1, "method": "tools/list",
                "trace": "abc123", "_meta": {"k": 1}}
        env = decode_envelope(data)
        assert env.extra == {"trace": "abc123", "_meta": {"k": 1}}
        assert encode_envelope(env) == data

    def test_missing_version_tag_rejected(self):
        with pytest.raises(EnvelopeError):
            decode_envelope({"id": 1, "method": "x"})

    def test_request_with_result_rejected(self):
        with pytest.raises(EnvelopeError):
            decode_envelope({"jsonrpc": "2.0", "id": 1, "method": "x",
                             "result": {}})

    def test_response_needs_exactly_one_payload(self):
        with pytest.raises(EnvelopeError):
            decode_envelope({"jsonrpc": "2.0", "id": 1})
        with pytest.raises(EnvelopeError):
            decode_envelope({"jsonrpc": "2.0", "id": 1, "result": {},
                             "error": {"code": 1, "message": "m"}})

    def test_response_without_id_rejected(self):
        with pytest.raises(EnvelopeError):
            decode_envelope({"jsonrpc": "2.0", "result": {}})

    def test_bad_json_reports_parse_error_code(self):
        with pytest.raises(EnvelopeError) as err:
            loads("{not json")
        assert err.value.code == PARSE_ERROR

    def test_dumps_is_single_line_and_stable(self):
        env = Envelope.success(3, {"b": 1, "a": 2})
        text = dumps(env)
        assert "\n" not in text
        assert text == dumps(env)
        assert text.index('"a"') < text.index('"b"')


_json_values = st.recursive(
    st.none() | st.booleans() | st.integers(-10**6, 10**6)
    | st.floats(allow_nan=False, allow_infinity=False) | st.text(max_size=8),
    lambda children: st.lists(children, max_size=3)
    | st.dictionaries(st.text(max_size=6), children, max_size=3),
    max_leaves=8)

_ids = st.integers(0, 10**6) | st.text(min_size=1, max_size=12)
_params = st.none() | st.dictionaries(st.text(min_size=1, max_size=8),
                                      _json_values, max_size=4)
_extra = st.dictionaries(
    st.text(min_size=1, max_size=8).filter(
        lambda k: k not in {"jsonrpc", "id", "method", "params",
                            "result", "error"}),
    _json_values, max_size=3)

_requests = st.builds(
    lambda id, method, params, extra: Envelope(
        id=id, method=method, params=params, extra=extra),
    _ids, st.text(min_size=1, max_size=16), _params, _extra)
_notifications = st.builds(
    lambda method, params, extra: Envelope(
        method=method, params=params, extra=extra),
    st.text(min_size=1, max_size=16), _params, _extra)
_successes = st.builds(
    lambda id, result, extra: Envelope(id=id, result=result, extra=extra),
    st.none() | _ids,
    st.dictionaries(st.text(max_size=6), _json_values, max_size=4), _extra)
_failures = st.builds(
    lambda id, code, message, extra: Envelope(
        id=id, error={"code": code, "message": message}, extra=extra),
    st.none() | _ids, st.integers(-33000, 0), st.text(max_size=16), _extra)

envelopes = st.one_of(_requests, _notifications, _successes, _failures)


@given(envelopes)
def test_codec_round_trip_property(env):
    assert loads(dumps(env)) == env


class TestDescriptors:
    def test_name_pattern_enforced(self):
        with pytest.raises(ValueError):
            ToolDescriptor("bad name", "x")
        with pytest.raises(ValueError):
            ToolDescriptor("dash-ed", "x")

    def test_param_type_enforced(self):
        with pytest.raises(ValueError):
            ToolParam("p", "object")

    def test_schema_round_trip(self):
        desc = ToolDescriptor("probe", "Samples fields at points.", (
            ToolParam("fields", "array", "field names", required=True),
            ToolParam("count", "number", "how many"),
            ToolParam("latest", "boolean", "", required=False),
        ))
        assert ToolDescriptor.from_json(desc.to_json()) == desc

    def test_required_params_listed_in_schema(self):
        desc = MiniProvider().descriptors()[0]
        assert desc.to_json()["inputSchema"]["required"] == ["text"]


class TestArgumentValidation:
    desc = ToolDescriptor("t", "d", (
        ToolParam("patches", "array", required=True),
        ToolParam("speed", "number"),
        ToolParam("field", "string"),
        ToolParam("latest", "boolean"),
    ))

    def test_missing_required_names_parameter(self):
        with pytest.raises(Exception) as err:
            validate_arguments(self.desc, {})
        assert err.value.parameter == "patches"
        assert "patches" in str(err.value)

    def test_unknown_argument_rejected(self):
        with pytest.raises(Exception) as err:
            validate_arguments(self.desc, {"patches": [], "bogus": 1})
        assert err.value.parameter == "bogus"

    def test_type_checks(self):
        ok = {"patches": ["walls"], "speed": 51.4815,
              "field": "p", "latest": True}
        validate_arguments(self.desc, ok)
        for key, bad in [("patches", "walls"), ("speed", "fast"),
                         ("field", 3), ("latest", 1)]:
            args = dict(ok)
            args[key] = bad
            with pytest.raises(Exception) as err:
                validate_arguments(self.desc, args)
            assert err.value.parameter == key

    def test_bool_is_not_a_number(self):
        with pytest.raises(Exception):
            validate_arguments(self.desc, {"patches": [], "speed": True})


class TestToolCallResult:
    def test_needs_content(self):
        with pytest.raises(ValueError):
            ToolCallResult([])

    def test_text_and_files_views(self):
        result = ToolCallResult([
            ContentItem("text", text="ran fine"),
            ContentItem("file", path="postProcessing/sample/100/p_walls.raw"),
        ])
        assert result.text == "ran fine"
        assert result.files == ["postProcessing/sample/100/p_walls.raw"]

    def test_json_round_trip(self):
        result = ToolCallResult([ContentItem("text", text="x")], is_error=True)
        assert ToolCallResult.from_json(result.to_json()) == result


class TestServerLifecycle:
    def test_initialize_advertises_tools(self):
        reply = make_server().handle(
            Envelope.request(1, "initialize", {"protocolVersion": "2025-03-26"}))
        assert reply.error is None
        assert "tools" in reply.result["capabilities"]
        assert reply.result["protocolVersion"] == "2025-03-26"

    def test_list_before_initialize_is_state_error(self):
        reply = make_server().handle(Envelope.request(1, "tools/list"))
        assert reply.error["code"] == NOT_INITIALIZED

    def test_version_mismatch_keeps_connection_open(self):
        server = make_server()
        reply = server.handle(Envelope.request(1, "initialize",
                                               {"protocolVersion": "1899-01-01"}))
        assert reply.error["code"] == INVALID_PARAMS
        assert "1899-01-01" in reply.error["message"]
        assert "2025-03-26" in reply.error["data"]["supported"]
        retry = server.handle(Envelope.request(2, "initialize",
                                               {"protocolVersion": "2024-11-05"}))
        assert retry.error is None
        assert server.negotiated_version == "2024-11-05"

    def test_unknown_method(self):
        reply = initialized_server().handle(Envelope.request(9, "tools/delete"))
        assert reply.error["code"] == METHOD_NOT_FOUND

    def test_notification_gets_no_reply(self):
        server = initialized_server()
        assert server.handle(
            Envelope.notification("notifications/initialized")) is None

    def test_response_envelope_rejected(self):
        reply = initialized_server().handle(Envelope.success(1, {}))
        assert reply.error["code"] == INVALID_REQUEST


class TestServerCalls:
    def test_list_is_stable_across_calls(self):
        server = initialized_server()
        first = dumps(server.handle(Envelope.request(1, "tools/list")))
        second = dumps(server.handle(Envelope.request(1, "tools/list")))
        assert first == second

    def test_valid_call(self):
        reply = initialized_server().handle(Envelope.request(
            3, "tools/call", {"name": "echo", "arguments": {"text": "hi"}}))
        assert reply.result == {"content": [{"text": "hi", "type": "text"}],
                                "isError": False}

    def test_unknown_tool_is_protocol_error(self):
        reply = initialized_server().handle(Envelope.request(
            4, "tools/call", {"name": "nope", "arguments": {}}))
        assert reply.error["code"] == INVALID_PARAMS
        assert "nope" in reply.error["message"]

    def test_schema_violation_names_parameter(self):
        reply = initialized_server().handle(Envelope.request(
            5, "tools/call", {"name": "echo", "arguments": {}}))
        assert "text" in reply.error["message"]

    def test_execution_failure_is_a_result_not_an_error(self):
        reply = initialized_server().handle(Envelope.request(
            6, "tools/call", {"name": "fail", "arguments": {}}))
        assert reply.error is None
        assert reply.result["isError"] is True
        assert "synthetic failure" in reply.result["content"][0]["text"]


class TestStdioFraming:
    def test_golden_transcript(self):
        stdin = (FIXTURES / "session_input.jsonl").read_text()
        expected = (FIXTURES / "session_expected.jsonl").read_text()
        out = io.StringIO()
        serve_stdio(make_server(), io.StringIO(stdin), out)
        assert out.getvalue() == expected

    def test_blank_lines_skipped(self):
        assert make_server().handle_line("   \n") is None

    def test_parse_error_reply_has_null_id(self):
        reply = make_server().handle_line("{broken")
        data = json.loads(reply)
        assert data["id"] is None
        assert data["error"]["code"] == PARSE_ERROR


class TestClient:
    def make(self):
        server = make_server()
        return McpClient(in_process_transport(server)), server

    def test_initialize_records_negotiated_version(self):
        client, server = self.make()
        client.initialize()
        assert client.negotiated_version == "2025-03-26"
        assert client.server_info["name"] == "foampilot-tools"
        assert server.initialized

    def test_list_tools_parses_descriptors(self):
        client, _ = self.make()
        client.initialize()
        tools = client.list_tools()
        assert [t.name for t in tools] == ["echo", "fail"]
        assert tools[0].params[0].required

    def test_call_tool_returns_result(self):
        client, _ = self.make()
        client.initialize()
        result = client.call_tool("echo", {"text": "ping"})
        assert result.text == "ping"
        assert not result.is_error

    def test_is_error_result_is_returned_not_raised(self):
        client, _ = self.make()
        client.initialize()
        result = client.call_tool("fail")
        assert result.is_error

    def test_error_envelope_raises(self):
        client, _ = self.make()
        client.initialize()
        with pytest.raises(McpError) as err:
            client.call_tool("nope")
        assert err.value.code == INVALID_PARAMS

    def test_mismatched_response_id_rejected(self):
        client = McpClient(lambda req: Envelope.success(999, {}))
        with pytest.raises(McpError):
            client.initialize()

    def test_ids_increase_per_request(self):
        seen = []

        def transport(req):
            seen.append(req.id)
            return Envelope.success(req.id, {"protocolVersion": "2025-03-26",
                                             "tools": []})

        client = McpClient(transport)
        client.initialize()
        client.list_tools()
        assert seen == [1, 2]


class FakePost:
    def __init__(self, server):
        self.server = server

    def post(self, url, data, headers, timeout):
        reply = self.server.handle_line(data)

        class R:
            status_code = 200
            text = reply
        return R()


class TestHttpTransport:
    def test_shares_codec_with_stdio(self):
        server = make_server()
        client = McpClient(http_transport("http://x/rpc", FakePost(server)))
        client.initialize()
        result = client.call_tool("echo", {"text": "over http"})
        assert result.text == "over http"
