"""Command-line entry points.

Four subcommands share the registry and configuration machinery:

  run    one prompt through the self-correcting simulation workflow
  post   natural-language post-processing, interactive or one-shot
  serve  the tool server over stdio or HTTP (with the event stream)
  eval   repeated trials of one prompt, aggregated into a report

Exit codes: 0 success, 1 domain failure (run did not converge, request
declined), 2 usage or configuration failure.
"""

from __future__ import annotations

import argparse
import json
import signal
import sys
import tempfile
import threading
from pathlib import Path

from .casemodel import CaseLayout, list_patches
from .config import Config, ConfigError, load_config
from .events import EventBus
from .httpserve import ConsoleServer
from .mcp import McpClient, McpError, McpServer, in_process_transport, serve_stdio
from .metrics import (
    Report,
    ReportRow,
    aggregate_trials,
    field_accuracy,
    read_field_file,
    render_report,
    report_to_json,
)
from .postclient import (
    NoCodeBlock,
    NoDataAvailable,
    NoToolSelected,
    PostClient,
    ScriptResult,
    SelectionViolation,
)
from .toolserver import (
    CaseToolProvider,
    SimulatedToolBackend,
    SubprocessToolBackend,
    TimeSelector,
    build_registry,
    execute_plan,
    plan_sampled_patch,
)
from .workflow import WorkflowLimits, run_trials, run_workflow

REPORT_COLUMNS = ("C.R. (%)", "S.R. (%)", "Iters.", "Tokens")


def _ref_field(text: str) -> tuple[str, Path]:
    field, sep, path = text.partition("=")
    if not sep or not field or not path:
        raise argparse.ArgumentTypeError(
            f"expected <field>=<reference file>, got {text!r}")
    return field, Path(path)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="foampilot",
        description="Natural-language OpenFOAM automation.")
    commands = parser.add_subparsers(dest="command", required=True)

    def common(sub):
        sub.add_argument("--config", type=Path,
                         help="JSON configuration file")
        sub.add_argument("--case", type=Path, required=True,
                         help="case directory")

    run = commands.add_parser(
        "run", help="configure and run one case until converged or failed")
    common(run)
    run.add_argument("--prompt", required=True,
                     help="natural-language simulation request")
    run.add_argument("--report", type=Path,
                     help="where to write the report JSON "
                          "(default <case>/.copilot/report.json)")
    run.add_argument("--max-iterations", type=int,
                     help="correction budget override")

    post = commands.add_parser(
        "post", help="natural-language post-processing session")
    common(post)
    post.add_argument("--query", help="run one request and exit")
    post.add_argument("--confirm", action="store_true",
                      help="ask before invoking the chosen tool")
    post.add_argument("--exec-scripts", action="store_true",
                      help="execute generated analysis scripts")
    post.add_argument("--transcript", type=Path,
                      help="session transcript file "
                           "(default <case>/.copilot/session.jsonl)")

    serve = commands.add_parser(
        "serve", help="serve the tool registry over stdio or HTTP")
    common(serve)
    mode = serve.add_mutually_exclusive_group()
    mode.add_argument("--stdio", action="store_true",
                      help="one protocol envelope per stdin line (default)")
    mode.add_argument("--http", action="store_true",
                      help="HTTP endpoints plus the status event stream")
    serve.add_argument("--host", help="bind host override")
    serve.add_argument("--port", type=int, help="bind port override")

    ev = commands.add_parser(
        "eval", help="run repeated trials and aggregate the outcomes")
    common(ev)
    ev.add_argument("--prompt", required=True)
    ev.add_argument("--trials", type=int, help="trial count override")
    ev.add_argument("--workdir", type=Path,
                    help="directory for per-trial case copies "
                         "(default: a fresh temporary directory)")
    ev.add_argument("--report", type=Path,
                    help="where to write the report JSON")
    ev.add_argument("--ref-field", type=_ref_field, action="append",
                    default=[], metavar="FIELD=FILE",
                    help="reference field file; the field is sampled on the "
                         "first wall patch of each trial case and compared")
    return parser


def _load(args) -> Config:
    if args.config is not None:
        return load_config(args.config)
    return Config()


def _case_layout(path: Path, err) -> CaseLayout | None:
    if not path.is_dir():
        print(f"error: case directory {path} does not exist", file=err)
        return None
    return CaseLayout.scan(path)


def _tool_backend(config: Config):
    if config.runner.backend == "subprocess":
        timeout = config.runner.timeout
        return SubprocessToolBackend(timeout=timeout if timeout else 600)
    return SimulatedToolBackend()


def _post_client(config: Config, case: CaseLayout, args,
                 bus: EventBus | None = None) -> PostClient:
    registry = build_registry(config.plugins)
    provider = CaseToolProvider(registry, case, _tool_backend(config))
    client = McpClient(in_process_transport(McpServer(provider)))
    transcript = getattr(args, "transcript", None)
    if transcript is None:
        transcript = case.root / ".copilot" / "session.jsonl"
        transcript.parent.mkdir(parents=True, exist_ok=True)
    return PostClient(
        config.make_gateway("post"), client, case,
        header_budget=config.header_budget,
        interpreter=config.interpreter,
        exec_scripts=config.exec_scripts or getattr(args, "exec_scripts", False),
        transcript_path=transcript,
        bus=bus)


def cmd_run(args, out, err) -> int:
    config = _load(args)
    case = _case_layout(args.case, err)
    if case is None:
        return 2
    limits = config.limits
    if args.max_iterations is not None:
        limits = WorkflowLimits(
            max_iterations=args.max_iterations,
            run_timeout=limits.run_timeout,
            trials=limits.trials,
            residual_threshold=limits.residual_threshold)
    gateway = config.make_gateway("workflow")
    runner = config.make_runner()
    report = run_workflow(args.prompt, case, limits, gateway, runner)
    target = args.report
    if target is None:
        target = case.root / ".copilot" / "report.json"
        target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(json.dumps(report.to_json(), indent=2, sort_keys=True))
    if report.converged:
        print(f"Converged after {report.iterations} correction(s); "
              f"report: {target}", file=out)
        return 0
    print(f"{report.final_state}: {report.error or 'did not converge'}; "
          f"report: {target}", file=out)
    return 1


def cmd_post(args, stdin, out, err) -> int:
    config = _load(args)
    case = _case_layout(args.case, err)
    if case is None:
        return 2
    client = _post_client(config, case, args)
    if args.query is None:
        return client.run_repl(stdin, out, confirm=args.confirm)
    try:
        outcome = client.run_turn(args.query)
    except (NoToolSelected, SelectionViolation, NoCodeBlock,
            NoDataAvailable, McpError) as exc:
        print(f"error: {exc}", file=err)
        return 1
    if isinstance(outcome, ScriptResult):
        print(f"script written to {outcome.path}", file=out)
        for warning in outcome.warnings:
            print(f"warning: {warning}", file=out)
        return 0
    print(outcome.summary, file=out)
    return 1 if outcome.is_error else 0


def cmd_serve(args, stdin, out, err) -> int:
    config = _load(args)
    case = _case_layout(args.case, err)
    if case is None:
        return 2
    registry = build_registry(config.plugins)
    provider = CaseToolProvider(registry, case, _tool_backend(config))
    server = McpServer(provider)
    if not args.http:
        serve_stdio(server, stdin, out)
        return 0

    bus = EventBus()
    try:
        post_client = _post_client(config, case, args, bus=bus)
    except ConfigError:
        post_client = None  # tools still served; /prompt reports 503
    host = args.host if args.host is not None else config.server.host
    port = args.port if args.port is not None else config.server.port
    try:
        console = ConsoleServer(server, bus, case, post_client,
                                host=host, port=port)
    except OSError as exc:
        print(f"error: cannot bind {host}:{port}: {exc}", file=err)
        return 2
    stop = threading.Event()
    for signum in (signal.SIGTERM, signal.SIGINT):
        signal.signal(signum, lambda *_: stop.set())
    print(f"listening on {console.url()}", file=out, flush=True)
    console.serve_until(stop)
    return 0


def _accuracy_patch(case: CaseLayout) -> str:
    patches = list_patches(case)
    if not patches:
        raise ConfigError("the case declares no boundary patches")
    for name in patches:
        if "wall" in name.lower():
            return name
    return patches[0]


def _trial_accuracy(field: str, reference: Path, trial_case: CaseLayout,
                    backend) -> float:
    plan = plan_sampled_patch(field, [_accuracy_patch(trial_case)],
                              TimeSelector.parse("latest"), trial_case)
    result = execute_plan(plan, trial_case, backend)
    if result.is_error or not result.files:
        raise ConfigError(f"sampling {field} failed: {result.text}")
    candidate = read_field_file(trial_case.root / result.files[0], name=field)
    return field_accuracy(candidate, read_field_file(reference, name=field))


def cmd_eval(args, out, err) -> int:
    config = _load(args)
    case = _case_layout(args.case, err)
    if case is None:
        return 2
    trials = args.trials if args.trials is not None else config.limits.trials
    limits = WorkflowLimits(
        max_iterations=config.limits.max_iterations,
        run_timeout=config.limits.run_timeout,
        trials=trials,
        residual_threshold=config.limits.residual_threshold)
    workdir = args.workdir
    if workdir is None:
        workdir = Path(tempfile.mkdtemp(prefix="foampilot-eval-"))
    workdir.mkdir(parents=True, exist_ok=True)

    reports = run_trials(
        args.prompt, case.root, limits,
        make_gateway=lambda index: config.make_gateway("workflow"),
        make_runner=lambda index: config.make_runner(),
        workdir=workdir)
    aggregate = aggregate_trials(reports)

    columns = list(REPORT_COLUMNS)
    values = [aggregate.completion_rate, aggregate.success_rate,
              aggregate.mean_iterations, aggregate.mean_tokens]
    backend = _tool_backend(config)
    for field, reference in args.ref_field:
        accuracies = []
        for index in range(len(reports)):
            trial_case = CaseLayout.scan(workdir / f"trial-{index + 1}")
            accuracies.append(
                _trial_accuracy(field, reference, trial_case, backend))
        columns.append(f"{field} accuracy")
        values.append(sum(accuracies) / len(accuracies))

    report = Report(
        title=f"{case.root.name}: {aggregate.trials} trial(s) of "
              f"{args.prompt!r}",
        columns=tuple(columns),
        rows=(ReportRow(case.root.name, tuple(values)),))
    print(render_report(report), file=out, end="")
    if args.report is not None:
        args.report.write_text(
            json.dumps(report_to_json(report), indent=2, sort_keys=True))
        print(f"report: {args.report}", file=out)
    return 0


def main(argv=None, stdin=None, stdout=None, stderr=None) -> int:
    stdin = stdin if stdin is not None else sys.stdin
    out = stdout if stdout is not None else sys.stdout
    err = stderr if stderr is not None else sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else 2
    try:
        if args.command == "run":
            return cmd_run(args, out, err)
        if args.command == "post":
            return cmd_post(args, stdin, out, err)
        if args.command == "serve":
            return cmd_serve(args, stdin, out, err)
        return cmd_eval(args, out, err)
    except ConfigError as exc:
        print(f"config error: {exc}", file=err)
        return 2
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
