"""YAML run configuration.

Relative paths are resolved against the directory of the config file.
Unknown keys are rejected at every level. Secrets never live in the file:
the HTTP backend reads its key from the environment variable named by
``backend.api_key_env``.
"""

from __future__ import annotations

from pathlib import Path
from typing import List, Literal, Optional, Tuple, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from ltlprompt.backends import (
    API_KEY_ENV, Backend, FixtureStore, HttpBackend, RecordingBackend, ReplayBackend, ScriptedBackend,
)
from ltlprompt.planner import DEFAULT_SENTINEL, Strategy
from ltlprompt.ts import DEFAULT_INT_RANGE, DEFAULT_STATE_CAP, CompileConfig


class ConfigError(ValueError):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class BackendSettings(_Strict):
    kind: Literal["scripted", "replay", "http"] = "scripted"
    rules: Optional[Path] = None
    fixtures: Optional[Path] = None
    record: Optional[Path] = None  # wrap the backend and persist every call
    endpoint: Optional[str] = None
    model: Optional[str] = None
    api_key_env: str = API_KEY_ENV
    timeout_s: float = Field(60.0, gt=0)
    max_in_flight: int = Field(4, ge=1)
    attempts: int = Field(3, ge=1)


class CompileSettings(_Strict):
    state_cap: int = Field(DEFAULT_STATE_CAP, ge=1)
    int_range: Tuple[int, int] = DEFAULT_INT_RANGE

    @field_validator("int_range")
    @classmethod
    def _ordered(cls, v):
        if v[0] > v[1]:
            raise ValueError("int_range lower bound exceeds upper bound")
        return v


class PlannerSettings(_Strict):
    strategy: Literal["single", "two", "multi"] = "multi"
    max_steps: int = Field(10, ge=1)
    done_sentinel: str = DEFAULT_SENTINEL
    max_repairs: int = Field(1, ge=0)
    max_tokens: int = Field(2048, ge=1)


class TrainerSettings(_Strict):
    steps: int = Field(10, ge=0)
    batch_size: int = Field(20, ge=1)
    accept_rule: Literal["always", "validation-no-worse"] = "validation-no-worse"
    seed: int = 0


class OptimizerSettings(_Strict):
    candidates: int = Field(1, ge=1)  # best-of-k proposals per step, chosen by validation score


class FeedbackSettings(_Strict):
    include_traces: bool = True


class PathSettings(_Strict):
    prompts: Path
    prompt_version: Optional[int] = None
    tasks: List[Path]
    validation_tasks: List[Path] = []
    test_tasks: List[Path] = []
    run_dir: Path = Path("runs")
    demos: Optional[Path] = None


class OracleSettings(_Strict):
    n: int = Field(1000, ge=0)
    seed: int = 7
    lasso_bound: int = Field(3, ge=1)


class Config(_Strict):
    backend: BackendSettings = BackendSettings()
    compile: CompileSettings = CompileSettings()
    planner: PlannerSettings = PlannerSettings()
    trainer: TrainerSettings = TrainerSettings()
    optimizer: OptimizerSettings = OptimizerSettings()
    feedback: FeedbackSettings = FeedbackSettings()
    paths: Optional[PathSettings] = None
    oracle: OracleSettings = OracleSettings()

    def strategy(self) -> Strategy:
        return Strategy(self.planner.strategy, self.planner.max_steps, self.planner.done_sentinel)

    def compile_config(self) -> CompileConfig:
        return CompileConfig(self.compile.state_cap, tuple(self.compile.int_range))


def _resolve(p: Optional[Path], base: Path) -> Optional[Path]:
    if p is None:
        return None
    return p if p.is_absolute() else (base / p).resolve()


def _check_exists(p: Optional[Path], what: str) -> None:
    if p is not None and not p.exists():
        raise ConfigError(f"{what} not found: {p}")


def load_config(path: Union[str, Path], require_paths: bool = True) -> Config:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    try:
        cfg = Config.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    base = path.parent.resolve()
    b = cfg.backend
    backend = b.model_copy(update={"rules": _resolve(b.rules, base), "fixtures": _resolve(b.fixtures, base),
                                   "record": _resolve(b.record, base)})
    paths = cfg.paths
    if paths is not None:
        paths = paths.model_copy(update={
            "prompts": _resolve(paths.prompts, base),
            "tasks": [_resolve(p, base) for p in paths.tasks],
            "validation_tasks": [_resolve(p, base) for p in paths.validation_tasks],
            "test_tasks": [_resolve(p, base) for p in paths.test_tasks],
            "run_dir": _resolve(paths.run_dir, base),
            "demos": _resolve(paths.demos, base)})
    cfg = cfg.model_copy(update={"backend": backend, "paths": paths})
    if require_paths:
        if cfg.paths is None:
            raise ConfigError(f"{path}: missing 'paths' section")
        _check_exists(cfg.paths.prompts, "prompt store")
        for p in cfg.paths.tasks + cfg.paths.validation_tasks + cfg.paths.test_tasks:
            _check_exists(p, "task file")
        _check_exists(cfg.paths.demos, "demonstration file")
        if not cfg.paths.tasks:
            raise ConfigError(f"{path}: 'paths.tasks' is empty")
    _check_exists(backend.rules, "scripted rule table")
    _check_exists(backend.fixtures, "fixture file")
    return cfg


def make_backend(settings: BackendSettings) -> Backend:
    if settings.kind == "scripted":
        if settings.rules is None:
            raise ConfigError("scripted backend needs 'rules'")
        backend: Backend = ScriptedBackend.from_file(settings.rules)
    elif settings.kind == "replay":
        if settings.fixtures is None:
            raise ConfigError("replay backend needs 'fixtures'")
        backend = ReplayBackend(FixtureStore(settings.fixtures))
    else:
        if not settings.endpoint or not settings.model:
            raise ConfigError("http backend needs 'endpoint' and 'model'")
        backend = HttpBackend(settings.endpoint, settings.model, settings.api_key_env, settings.timeout_s,
                              settings.max_in_flight, settings.attempts)
    if settings.record is not None:
        backend = RecordingBackend(backend, settings.record)
    return backend
