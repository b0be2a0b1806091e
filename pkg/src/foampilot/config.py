"""Run configuration loaded from one JSON document.

Paths inside the file resolve against the file's own directory, and every
referenced file must exist at load time so a typo fails immediately rather
than mid-run. Environment variables override credentials and nothing else:
FOAMPILOT_API_KEY replaces the configured key at gateway construction.

Language-model settings are per agent role. The ``llm`` table maps a role
name to backend settings; the ``default`` entry fills whatever a role does
not override.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path

from .llm import Gateway, HttpBackend, MockBackend, MockScript
from .runner import SimulatedRunner, SubprocessRunner
from .workflow import WorkflowLimits

API_KEY_VAR = "FOAMPILOT_API_KEY"

_LLM_KEYS = {"backend", "endpoint", "model", "api_key", "temperature", "script"}
_RUNNER_KEYS = {"backend", "script", "timeout"}
_LIMIT_KEYS = {"max_iterations", "trials", "residual_threshold", "run_timeout"}
_SERVER_KEYS = {"host", "port"}
_TOP_KEYS = {"llm", "runner", "limits", "server", "interpreter",
             "exec_scripts", "header_budget", "plugins"}


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class LlmSettings:
    backend: str = "mock"
    endpoint: str = ""
    model: str = "default"
    api_key: str = ""
    temperature: float = 0.6
    script: Path | None = None

    def __post_init__(self):
        if self.backend not in ("mock", "http"):
            raise ConfigError(f"unknown llm backend {self.backend!r}")
        if not 0.0 <= self.temperature <= 2.0:
            raise ConfigError(
                f"temperature {self.temperature} outside [0, 2]")


@dataclass(frozen=True)
class RunnerSettings:
    backend: str = "simulated"
    script: Path | None = None
    timeout: float | None = None

    def __post_init__(self):
        if self.backend not in ("simulated", "subprocess"):
            raise ConfigError(f"unknown runner backend {self.backend!r}")


@dataclass(frozen=True)
class ServerSettings:
    host: str = "127.0.0.1"
    port: int = 8399


@dataclass
class Config:
    llm: dict[str, LlmSettings] = field(
        default_factory=lambda: {"default": LlmSettings()})
    runner: RunnerSettings = field(default_factory=RunnerSettings)
    limits: WorkflowLimits = field(default_factory=WorkflowLimits)
    server: ServerSettings = field(default_factory=ServerSettings)
    interpreter: list[str] = field(default_factory=lambda: ["python3"])
    exec_scripts: bool = False
    header_budget: int = 2048
    plugins: Path | None = None

    def role(self, name: str) -> LlmSettings:
        """Settings for one agent role, with the default filling gaps."""
        return self.llm.get(name, self.llm["default"])

    def make_gateway(self, role: str = "default") -> Gateway:
        settings = self.role(role)
        if settings.backend == "mock":
            if settings.script is None:
                raise ConfigError(
                    f"role {role!r} uses the mock backend but names no "
                    "script file")
            return Gateway(MockBackend(MockScript.load(settings.script)))
        if not settings.endpoint:
            raise ConfigError(
                f"role {role!r} uses the http backend but names no endpoint")
        api_key = os.environ.get(API_KEY_VAR, settings.api_key)
        return Gateway(HttpBackend(settings.endpoint, api_key))

    def make_runner(self):
        if self.runner.backend == "subprocess":
            return SubprocessRunner(timeout=self.runner.timeout,
                                    threshold=self.limits.residual_threshold)
        if self.runner.script is None:
            raise ConfigError(
                "the simulated runner needs a script file; set runner.script")
        return SimulatedRunner.load(self.runner.script,
                                    threshold=self.limits.residual_threshold)


def _reject_unknown(table: dict, allowed: set[str], where: str) -> None:
    unknown = sorted(set(table) - allowed)
    if unknown:
        raise ConfigError(f"unknown {where} keys: {', '.join(unknown)}")


def _resolve_existing(base: Path, value, where: str) -> Path:
    path = (base / str(value)).resolve() if not Path(str(value)).is_absolute() \
        else Path(str(value))
    if not path.exists():
        raise ConfigError(f"{where} names a missing path: {path}")
    return path


def _llm_settings(raw: dict, defaults: LlmSettings, base: Path,
                  where: str) -> LlmSettings:
    if not isinstance(raw, dict):
        raise ConfigError(f"{where} must be an object")
    _reject_unknown(raw, _LLM_KEYS, where)
    merged = replace(
        defaults,
        backend=str(raw.get("backend", defaults.backend)),
        endpoint=str(raw.get("endpoint", defaults.endpoint)),
        model=str(raw.get("model", defaults.model)),
        api_key=str(raw.get("api_key", defaults.api_key)),
        temperature=float(raw.get("temperature", defaults.temperature)),
    )
    if "script" in raw:
        merged = replace(merged, script=_resolve_existing(
            base, raw["script"], f"{where}.script"))
    return merged


def load_config(path: Path | str) -> Config:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config root must be a JSON object")
    _reject_unknown(data, _TOP_KEYS, "config")
    base = path.parent

    config = Config()

    llm_raw = data.get("llm", {})
    if not isinstance(llm_raw, dict):
        raise ConfigError("llm must be an object of role settings")
    defaults = _llm_settings(llm_raw.get("default", {}), LlmSettings(),
                             base, "llm.default")
    roles = {"default": defaults}
    for role, entry in llm_raw.items():
        if role == "default":
            continue
        roles[role] = _llm_settings(entry, defaults, base, f"llm.{role}")
    config.llm = roles

    runner_raw = data.get("runner", {})
    _reject_unknown(runner_raw, _RUNNER_KEYS, "runner")
    script = None
    if "script" in runner_raw:
        script = _resolve_existing(base, runner_raw["script"], "runner.script")
    timeout = runner_raw.get("timeout")
    config.runner = RunnerSettings(
        backend=str(runner_raw.get("backend", "simulated")),
        script=script,
        timeout=float(timeout) if timeout is not None else None,
    )

    limits_raw = data.get("limits", {})
    _reject_unknown(limits_raw, _LIMIT_KEYS, "limits")
    try:
        run_timeout = limits_raw.get("run_timeout")
        config.limits = WorkflowLimits(
            max_iterations=int(limits_raw.get("max_iterations", 10)),
            run_timeout=float(run_timeout) if run_timeout is not None else None,
            trials=int(limits_raw.get("trials", 10)),
            residual_threshold=float(
                limits_raw.get("residual_threshold", 1e-4)),
        )
    except ValueError as exc:
        raise ConfigError(f"bad limits: {exc}") from exc

    server_raw = data.get("server", {})
    _reject_unknown(server_raw, _SERVER_KEYS, "server")
    config.server = ServerSettings(
        host=str(server_raw.get("host", "127.0.0.1")),
        port=int(server_raw.get("port", 8399)),
    )

    interpreter = data.get("interpreter", ["python3"])
    if (not isinstance(interpreter, list) or not interpreter
            or not all(isinstance(part, str) for part in interpreter)):
        raise ConfigError("interpreter must be a non-empty list of strings")
    config.interpreter = interpreter

    config.exec_scripts = bool(data.get("exec_scripts", False))
    config.header_budget = int(data.get("header_budget", 2048))
    if config.header_budget < 1:
        raise ConfigError("header_budget must be positive")
    if "plugins" in data:
        plugins = _resolve_existing(base, data["plugins"], "plugins")
        if not plugins.is_dir():
            raise ConfigError(f"plugins must name a directory: {plugins}")
        config.plugins = plugins
    return config


def config_schema() -> dict:
    """The documented shape of the configuration document."""
    schema_path = Path(__file__).parent / "data" / "config.schema.json"
    return json.loads(schema_path.read_text())
