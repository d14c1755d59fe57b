"""Component executors: registered Python callables or shell command templates."""

from __future__ import annotations

import importlib
import json
import shlex
import subprocess
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Optional

from .errors import ConfigurationError

_BUILTINS: dict = {}
_GUARDS: dict = {}
_VERDICTS: dict = {}
_GENERATORS: dict = {}
_METRICS: dict = {}

# modules that register built-ins on import
_PROVIDERS = ("compmr.builtins_basic", "compmr.detector", "compmr.genomics.components")


class ExecutorFailure(Exception):
    """A component exited non-zero or raised."""


@dataclass(frozen=True)
class RunContext:
    group_id: str
    test_index: int  # 0-based
    series_length: int
    class_tag: str = ""
    metadata: Mapping = field(default_factory=dict)

    @property
    def is_last(self) -> bool:
        return self.test_index == self.series_length - 1


def _registry(kind: str) -> dict:
    return {"executor": _BUILTINS, "guard": _GUARDS, "verdict": _VERDICTS, "generator": _GENERATORS,
            "metric": _METRICS}[kind]


def register(kind: str, name: str):
    def deco(fn):
        _registry(kind)[name] = fn
        return fn

    return deco


def lookup(kind: str, name: str) -> Callable:
    table = _registry(kind)
    if name not in table:
        for mod in _PROVIDERS:
            importlib.import_module(mod)
    try:
        return table[name]
    except KeyError:
        raise ConfigurationError(f"unknown built-in {kind} {name!r}") from None


def available(kind: str) -> list:
    for mod in _PROVIDERS:
        importlib.import_module(mod)
    return sorted(_registry(kind))


class Executor:
    def run(self, inputs: Mapping[str, Path], outputs: Mapping[str, Path], ctx: RunContext) -> str:
        raise NotImplementedError

    def signature(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class BuiltinExecutor(Executor):
    name: str
    params: Mapping = field(default_factory=dict)

    def __post_init__(self):
        lookup("executor", self.name)

    def run(self, inputs, outputs, ctx):
        fn = lookup("executor", self.name)
        try:
            info = fn(dict(inputs), dict(outputs), dict(self.params), ctx)
        except ExecutorFailure:
            raise
        except Exception as exc:  # component crash, not a harness error
            raise ExecutorFailure(f"{self.name}: {type(exc).__name__}: {exc}") from exc
        return info or "ok"

    def signature(self):
        return {"builtin": self.name, "params": json.loads(json.dumps(dict(self.params), sort_keys=True, default=str))}


def _fill(template: str, inputs, outputs, ctx: RunContext) -> str:
    values = {f"in.{k}": shlex.quote(str(v)) for k, v in inputs.items()}
    values.update({f"out.{k}": shlex.quote(str(v)) for k, v in outputs.items()})
    values.update({"k": str(ctx.test_index), "n": str(ctx.series_length), "group": shlex.quote(ctx.group_id)})

    class _Lookup(dict):
        def __missing__(self, key):
            raise ConfigurationError(f"command template uses unknown placeholder {{{key}}}")

    return template.format_map(_Lookup(values))


@dataclass(frozen=True)
class CommandExecutor(Executor):
    """External component; placeholders ``{in.PORT}``, ``{out.PORT}``, ``{k}``, ``{n}``, ``{group}``."""

    template: str
    timeout: Optional[float] = None

    def run(self, inputs, outputs, ctx):
        cmd = _fill(self.template, inputs, outputs, ctx)
        try:
            proc = subprocess.run(cmd, shell=True, capture_output=True, text=True, timeout=self.timeout)
        except subprocess.TimeoutExpired as exc:
            raise ExecutorFailure(f"timeout after {exc.timeout}s: {cmd}") from exc
        if proc.returncode != 0:
            raise ExecutorFailure(f"exit {proc.returncode}: {proc.stderr.strip()[-500:]}")
        return "exit 0"

    def signature(self):
        return {"command": self.template}


class Guard:
    def choose(self, inputs: Mapping[str, Path], ctx: RunContext) -> str:
        raise NotImplementedError


@dataclass(frozen=True)
class BuiltinGuard(Guard):
    name: str
    params: Mapping = field(default_factory=dict)

    def choose(self, inputs, ctx):
        return str(lookup("guard", self.name)(dict(inputs), dict(self.params), ctx))


@dataclass(frozen=True)
class CommandGuard(Guard):
    """Prints the id of the member to execute on stdout."""

    template: str

    def choose(self, inputs, ctx):
        cmd = _fill(self.template, inputs, {}, ctx)
        proc = subprocess.run(cmd, shell=True, capture_output=True, text=True)
        if proc.returncode != 0:
            raise ExecutorFailure(f"guard exit {proc.returncode}: {proc.stderr.strip()[-500:]}")
        return proc.stdout.strip()


def executor_from_config(cfg) -> Executor:
    if isinstance(cfg, Executor):
        return cfg
    if isinstance(cfg, str):
        return BuiltinExecutor(cfg)
    if "builtin" in cfg:
        return BuiltinExecutor(cfg["builtin"], dict(cfg.get("params") or {}))
    if "command" in cfg:
        return CommandExecutor(cfg["command"], cfg.get("timeout"))
    raise ConfigurationError("executor needs 'builtin' or 'command'")


def guard_from_config(cfg) -> Optional[Guard]:
    if cfg is None or isinstance(cfg, Guard):
        return cfg
    if isinstance(cfg, str):
        return BuiltinGuard(cfg)
    if "builtin" in cfg:
        return BuiltinGuard(cfg["builtin"], dict(cfg.get("params") or {}))
    if "command" in cfg:
        return CommandGuard(cfg["command"])
    raise ConfigurationError("guard needs 'builtin' or 'command'")
