"""Offline conformance suite: seven checks, one printed verdict line each.

Each check exercises a full slice of the system under explicit tolerances
and time budgets: protocol framing, dictionary round-trips, dispatch
fidelity, correction-loop semantics, metric arithmetic, registry
consistency, and the aggregated report output. Everything runs against
scripted language-model replies and simulated solvers, so the suite needs
no network and no OpenFOAM install.
"""

import io
import json
import random
import shutil
import time
from contextlib import contextmanager
from pathlib import Path

import jsonschema
import pytest

from dictgen import generate_case
from foampilot.casemodel import CaseLayout
from foampilot.cli import main as cli_main
from foampilot.foamdict import emit_dict, parse_dict
from foampilot.llm import Gateway, MockBackend, MockEntry, MockScript, TokenUsage
from foampilot.mcp import Envelope, McpClient, McpServer, dumps, in_process_transport, loads, serve_stdio
from foampilot.metrics import FieldArray, aggregate_trials, field_accuracy, report_schema
from foampilot.postclient import PostClient
from foampilot.runner import SimulatedRunner
from foampilot.toolserver import (
    CaseToolProvider,
    Registry,
    SimulatedToolBackend,
    build_registry,
    load_plugins,
    self_test,
)
from foampilot.workflow import WorkflowReport, WorkflowLimits, run_workflow
from sampledata import KEYWORD_FATAL, SOLVE_LOG
from test_mcp import MiniProvider

FIXTURES = Path(__file__).parent / "fixtures"


def _say(capsys, line: str) -> None:
    with capsys.disabled():
        print(line)


@contextmanager
def verdict(capsys, tag: str, budget: float | None = None):
    started = time.monotonic()
    try:
        yield
    except BaseException:
        _say(capsys, f"FAIL {tag}")
        raise
    elapsed = time.monotonic() - started
    if budget is not None and elapsed >= budget:
        _say(capsys, f"FAIL {tag} (took {elapsed:.2f}s, budget {budget:g}s)")
        raise AssertionError(f"{tag}: {elapsed:.2f}s exceeded {budget:g}s")
    _say(capsys, f"PASS {tag} ({elapsed:.2f}s)")


def fresh_case(tmp_path: Path, name: str, tag: str) -> CaseLayout:
    target = tmp_path / tag
    shutil.copytree(FIXTURES / "cases" / name, target)
    return CaseLayout.scan(target)


# ---------------------------------------------------------------------------
# 1. protocol conformance


def _json_value(rng: random.Random, depth: int = 0):
    roll = rng.random()
    if depth >= 3 or roll < 0.4:
        pick = rng.randrange(6)
        if pick == 0:
            return None
        if pick == 1:
            return rng.random() < 0.5
        if pick == 2:
            return rng.randrange(-10**9, 10**9)
        if pick == 3:
            return rng.uniform(-1e9, 1e9)
        if pick == 4:
            return ""
        return f"tok-{rng.randrange(10**6)}"
    if roll < 0.7:
        return [_json_value(rng, depth + 1) for _ in range(rng.randrange(4))]
    return {f"k{i}": _json_value(rng, depth + 1)
            for i in range(rng.randrange(4))}


def _random_envelope(rng: random.Random) -> Envelope:
    def an_id():
        return rng.randrange(10**6) if rng.random() < 0.7 \
            else f"id-{rng.randrange(10**6)}"

    def params():
        if rng.random() < 0.3:
            return None
        return {f"p{i}": _json_value(rng) for i in range(rng.randrange(4))}

    shape = rng.randrange(4)
    if shape == 0:
        return Envelope(id=an_id(), method=f"m/{rng.randrange(100)}",
                        params=params())
    if shape == 1:
        return Envelope(method=f"notify/{rng.randrange(100)}",
                        params=params())
    if shape == 2:
        return Envelope(id=an_id() if rng.random() < 0.9 else None,
                        result={f"r{i}": _json_value(rng)
                                for i in range(rng.randrange(4))})
    error = {"code": rng.randrange(-33000, 0),
             "message": f"why-{rng.randrange(1000)}"}
    if rng.random() < 0.4:
        error["data"] = _json_value(rng)
    return Envelope(id=an_id() if rng.random() < 0.9 else None, error=error)


def test_1_protocol_conformance(capsys):
    with verdict(capsys, "[1/7] protocol conformance: golden stdio "
                         "transcripts and 1000-envelope codec round-trip",
                 budget=5.0):
        stdin = (FIXTURES / "mcp" / "session_input.jsonl").read_text()
        expected = (FIXTURES / "mcp" / "session_expected.jsonl").read_text()
        out = io.StringIO()
        serve_stdio(McpServer(MiniProvider(), server_version="0.1.0"),
                    io.StringIO(stdin), out)
        assert out.getvalue() == expected

        rng = random.Random(0x5EED)
        for _ in range(1000):
            envelope = _random_envelope(rng)
            line = dumps(envelope)
            assert loads(line) == envelope
            assert dumps(loads(line)) == line


# ---------------------------------------------------------------------------
# 2. dictionary round-trip


def test_2_dictionary_round_trip(capsys):
    with verdict(capsys, "[2/7] dictionary round-trip: fixture corpus plus "
                         "1000 generated cases stay fixed points",
                 budget=10.0):
        corpus = [p for p in (FIXTURES / "cases").rglob("*") if p.is_file()]
        corpus += sorted((FIXTURES / "dicts").iterdir())
        assert len(corpus) >= 20
        assert any(p.name == "functionsDict" for p in corpus)
        for path in corpus:
            text = path.read_text()
            first = parse_dict(text, str(path))
            emitted = emit_dict(first)
            assert parse_dict(emitted, str(path)) == first
            assert emit_dict(parse_dict(emitted, str(path))) == emitted

        for seed in range(1000):
            model = generate_case(seed)
            emitted = emit_dict(model)
            assert parse_dict(emitted) == model, f"seed {seed}"


# ---------------------------------------------------------------------------
# 3. dispatch fidelity


P_SAMPLE = "Please sample field p on the `walls' patch."
P_FORCE = ("Please compute force coefficients over `walls' patch at the "
           "latest time. Lift direction is (-0.1736 0.9848 0). Drag "
           "direction is (0.9848 0.1736 0). Pitch axis is (0 0 1). The "
           "magnitude of the free-stream velocity is 51.4815. Length of "
           "the wing is 1. Area of the wing is 1.")
P_STREAM = ("Please generate streamline by sampling p and U fields along x "
            "axis. Take 1000 sampling points along the line from "
            "(-5, -20, 0) to (-5, 20, 0).")
P_STREAM_2000 = ("Please generate streamline by sampling p and U fields "
                 "along x axis. Take 2000 sampling points along the line "
                 "from (-5, -20, 0) to (-5, 20, 0).")
P_MULTI = "Please sample field p on the `wall_slat'(or `wall_airfoil', `wall_flap') patches."
P_VORT = "Please calculate the vorticity of the airfoil."

DISPATCH_TABLE = [
    ("naca0012", P_SAMPLE,
     'TOOL: postProcess_surfaces_sampledPatch\nARG field = "p"\n'
     'ARG patches = ["walls"]\nEND',
     "postProcess_surfaces_sampledPatch",
     {"field": "p", "patches": ["walls"]}),
    ("naca0012", P_FORCE,
     'TOOL: postProcess_forceCoeffs\nARG patches = ["walls"]\n'
     'ARG liftDir = [-0.1736, 0.9848, 0]\nARG dragDir = [0.9848, 0.1736, 0]\n'
     'ARG pitchAxis = [0, 0, 1]\nARG magUInf = 51.4815\nARG lRef = 1\n'
     'ARG Aref = 1\nARG time = "latest"\nEND',
     "postProcess_forceCoeffs",
     {"patches": ["walls"], "liftDir": [-0.1736, 0.9848, 0],
      "dragDir": [0.9848, 0.1736, 0], "pitchAxis": [0, 0, 1],
      "magUInf": 51.4815, "lRef": 1, "Aref": 1, "time": "latest"}),
    ("naca0012", P_STREAM,
     'TOOL: postProcess_streamLine\nARG fields = ["p", "U"]\n'
     'ARG start = [-5, -20, 0]\nARG end = [-5, 20, 0]\nARG nPoints = 1000\nEND',
     "postProcess_streamLine",
     {"fields": ["p", "U"], "start": [-5, -20, 0], "end": [-5, 20, 0],
      "nPoints": 1000}),
    ("naca0012", P_STREAM_2000,
     'TOOL: postProcess_streamLine\nARG fields = ["p", "U"]\n'
     'ARG start = [-5, -20, 0]\nARG end = [-5, 20, 0]\nARG nPoints = 2000\nEND',
     "postProcess_streamLine",
     {"fields": ["p", "U"], "start": [-5, -20, 0], "end": [-5, 20, 0],
      "nPoints": 2000}),
    ("hl30p30n", P_MULTI,
     'TOOL: postProcess_surfaces_sampledPatch\nARG field = "p"\n'
     'ARG patches = ["wall_slat", "wall_airfoil", "wall_flap"]\nEND',
     "postProcess_surfaces_sampledPatch",
     {"field": "p", "patches": ["wall_slat", "wall_airfoil", "wall_flap"]}),
    ("naca0012", P_VORT, 'TOOL: postProcess_vorticity\nEND',
     "postProcess_vorticity", {}),
]


class RecordingBackend:
    """Simulated execution that also keeps every generated command."""

    def __init__(self):
        self.inner = SimulatedToolBackend()
        self.commands: list[str] = []

    def run(self, plan, case_root):
        self.commands.append(plan.command)
        return self.inner.run(plan, case_root)


def test_3_dispatch_fidelity(capsys, tmp_path):
    with verdict(capsys, "[3/7] dispatch fidelity: the scripted prompts "
                         "resolve to exact tools, arguments, and commands"):
        for index, (case_name, prompt, reply, tool, expected) in enumerate(
                DISPATCH_TABLE):
            case = fresh_case(tmp_path, case_name, f"dispatch-{index}")
            backend = RecordingBackend()
            provider = CaseToolProvider(build_registry(), case, backend)
            client = PostClient(
                Gateway(MockBackend(MockScript(
                    [MockEntry(match=prompt[:40], response=reply)]))),
                McpClient(in_process_transport(McpServer(provider))), case)
            choice = client.select_tool(prompt)
            assert choice.tool == tool, prompt
            assert choice.arguments == expected, prompt
            turn = client.invoke(choice, prompt)
            assert not turn.is_error, turn.summary
            assert len(backend.commands) == 1
            assert "-postProcess" in backend.commands[0]
            # every scripted request addresses the newest results
            assert "-latestTime" in backend.commands[0]


# ---------------------------------------------------------------------------
# 4. correction-loop semantics


RUN_PROMPT = ("Simulate incompressible flow over the airfoil at freestream "
              "51.48 m/s and report data on the `walls' patch.")
CORRECTOR_MARK = "The last run did not converge"


def _workflow_entries() -> list[MockEntry]:
    return [
        MockEntry(match="Simulate incompressible flow",
                  response=(FIXTURES / "llm" / "gen_naca.txt").read_text()),
        MockEntry(match=CORRECTOR_MARK,
                  response=(FIXTURES / "llm" / "fix_fvschemes.txt").read_text(),
                  repeat=True),
    ]


def _stages(report: WorkflowReport) -> list[str]:
    return [entry.split("(")[0] for entry in report.timeline]


def test_4_correction_loop_semantics(capsys, tmp_path):
    with verdict(capsys, "[4/7] correction loop: first-try success, "
                         "fail-then-fix, and a hard stop at the budget",
                 budget=5.0):
        case = fresh_case(tmp_path, "naca0012", "loop-clean")
        gateway = Gateway(MockBackend(MockScript(_workflow_entries())))
        report = run_workflow(RUN_PROMPT, case, WorkflowLimits(), gateway,
                              SimulatedRunner([{"exit_code": 0, "log": SOLVE_LOG}]))
        assert report.converged and report.iterations == 0
        assert _stages(report) == ["Generate", "Run"]

        case = fresh_case(tmp_path, "naca0012", "loop-fix")
        gateway = Gateway(MockBackend(MockScript(_workflow_entries())))
        report = run_workflow(
            RUN_PROMPT, case, WorkflowLimits(), gateway,
            SimulatedRunner([{"exit_code": 1, "log": KEYWORD_FATAL},
                             {"exit_code": 0, "log": SOLVE_LOG}]))
        assert report.converged and report.iterations == 1
        assert _stages(report) == ["Generate", "Run", "Correct", "Run"]

        case = fresh_case(tmp_path, "naca0012", "loop-stuck")
        gateway = Gateway(MockBackend(MockScript(_workflow_entries())))
        report = run_workflow(
            RUN_PROMPT, case, WorkflowLimits(max_iterations=10), gateway,
            SimulatedRunner([{"exit_code": 1, "log": KEYWORD_FATAL}],
                            repeat_last=True))
        assert not report.converged
        assert report.final_state == "Failed"
        assert report.iterations == 10
        corrections = [
            exchange for exchange in gateway.transcript
            if CORRECTOR_MARK in exchange.request.messages[-1].content]
        assert len(corrections) == 10
        assert len(gateway.transcript) == 11  # generate + 10, never a 12th


# ---------------------------------------------------------------------------
# 5. metric exactness


def _table_shape_reports() -> list[WorkflowReport]:
    iteration_counts = [3, 5, 6, 5, 4, 6, 5, 4, 5, 5]
    reports = []
    for index, spent in enumerate(iteration_counts):
        converged = index == 0
        completed = index < 8
        reports.append(WorkflowReport(
            final_state="Converged" if converged else "Failed",
            converged=converged, completed=completed, iterations=spent,
            tokens=TokenUsage(1000, 200), timeline=[]))
    return reports


def test_5_metric_exactness(capsys):
    with verdict(capsys, "[5/7] metrics: frozen accuracy oracle at 1e-9, "
                         "published-rate arithmetic, completion >= success "
                         "on 10000 random sets"):
        accuracy = field_accuracy(FieldArray((1.1, 1.9, 2.2)),
                                  FieldArray((1.0, 2.0, 2.0)))
        assert abs(accuracy - 0.9183503419072274) < 1e-9

        aggregate = aggregate_trials(_table_shape_reports())
        assert aggregate.completion_rate == 80.0
        assert aggregate.success_rate == 10.0
        assert aggregate.mean_iterations == 4.8

        rng = random.Random(20260814)
        for _ in range(10_000):
            batch = [
                WorkflowReport(final_state="x",
                               converged=rng.random() < 0.4,
                               completed=rng.random() < 0.6,
                               iterations=rng.randrange(11),
                               tokens=TokenUsage(rng.randrange(5000), 0),
                               timeline=[])
                for _ in range(rng.randrange(1, 13))]
            sample = aggregate_trials(batch)
            assert sample.completion_rate >= sample.success_rate


# ---------------------------------------------------------------------------
# 6. registry integrity


def test_6_registry_integrity(capsys, tmp_path):
    with verdict(capsys, "[6/7] registry: every shipped planner passes the "
                         "self-test and plugin descriptors register 1:1"):
        case = fresh_case(tmp_path, "naca0012", "registry")
        registry = build_registry()
        names = registry.names()
        assert len(names) >= 20
        results = self_test(registry, case)
        assert [name for name, _ in results] == list(names)

        plugin_dir = FIXTURES / "plugins"
        descriptor_count = len(list(plugin_dir.glob("*.json")))
        bare = Registry()
        assert load_plugins(bare, plugin_dir) == descriptor_count
        assert len(bare.names()) == descriptor_count
        extended = build_registry(plugin_dir)
        assert len(extended.names()) == len(names) + descriptor_count


# ---------------------------------------------------------------------------
# 7. end-to-end offline replay


def test_7_offline_replay_report(capsys, tmp_path):
    with verdict(capsys, "[7/7] offline replay: ten scripted trials emit a "
                         "rate report that validates against the schema"):
        case_dir = tmp_path / "naca0012"
        shutil.copytree(FIXTURES / "cases" / "naca0012", case_dir)
        target = tmp_path / "rates.json"
        out = io.StringIO()
        code = cli_main(
            ["eval", "--config", str(FIXTURES / "cli" / "config_run.json"),
             "--case", str(case_dir), "--prompt", RUN_PROMPT,
             "--trials", "10", "--workdir", str(tmp_path / "trials"),
             "--report", str(target)],
            stdin=io.StringIO(), stdout=out, stderr=io.StringIO())
        assert code == 0
        assert "10 trial(s)" in out.getvalue()
        document = json.loads(target.read_text())
        jsonschema.validate(document, report_schema())
        row = dict(zip(document["columns"], document["rows"][0]["values"]))
        assert row["C.R. (%)"] == 100.0
        assert row["S.R. (%)"] == 100.0
        assert sorted(p.name for p in (tmp_path / "trials").iterdir()) == \
            sorted(f"trial-{n}" for n in range(1, 11))
