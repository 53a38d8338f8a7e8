"""Run configuration: one JSON document, parsed strictly into dataclasses."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import typing
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .data import DatasetSpec, n_labels
from .distill import ConfigError, DistillConfig
from .network import NetConfig
from .schedule import NoiseSchedule, make_schedule
from .teacher import TeacherConfig


@dataclass
class ScheduleConfig:
    T: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 0.012


@dataclass
class ModelConfig:
    width: int = 128
    n_hidden: int = 3
    label_dim: int = 16
    t_freqs: int = 16
    gamma_freqs: int = 8
    t_freq_max: float = 1000.0
    gamma_freq_max: float = 3.0
    sigma_data: float = 0.5
    time_scale: float = 10_000.0


@dataclass
class DataConfig:
    kind: str = "gaussian_mixture"
    n_modes: int = 8
    radius: float = 4.0
    scale: float = 0.3
    dim: int = 2
    normalize: bool = True
    shift: list[float] | None = None


@dataclass
class EvalConfig:
    n_samples: int = 2000
    steps: list[int] = field(default_factory=lambda: [1, 2, 4])
    grid: str = "even"
    coverage_threshold: float = 0.02
    delta_k: int = 20
    delta_t_min: int = 100
    delta_samples: int = 1000
    delta_noise: str = "shared"
    teacher_steps: int = 50


@dataclass
class SampleConfig:
    steps: int = 4
    count: int = 1000
    label: int | None = None
    grid: str = "even"
    use_ema: bool = True


@dataclass
class AblateConfig:
    step_sizes: list[int] = field(default_factory=lambda: [20, 50, 100, 200])
    guidance_scales: list[float] = field(default_factory=lambda: [3.0, 5.0, 8.0, 12.0])
    modes: list[str] = field(default_factory=lambda: ["SL", "DL", "ConsistencyBaseline"])
    eval_steps: int = 4
    surface_t: list[int] = field(default_factory=lambda: [200, 400, 600, 800, 1000])
    surface_k: list[int] = field(default_factory=lambda: [20, 50, 100, 200])
    surface_gamma_points: int = 101


@dataclass
class RunConfig:
    seed: int = 0
    schedule: ScheduleConfig = field(default_factory=ScheduleConfig)
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    teacher: TeacherConfig = field(default_factory=TeacherConfig)
    distill: DistillConfig = field(default_factory=DistillConfig)
    teacher_source: str = "checkpoint"
    eval: EvalConfig = field(default_factory=EvalConfig)
    sample: SampleConfig = field(default_factory=SampleConfig)
    ablate: AblateConfig = field(default_factory=AblateConfig)

    def to_dict(self) -> dict:
        return asdict(self)

    def hash(self) -> str:
        return config_hash(self.to_dict())

    def make_schedule(self) -> NoiseSchedule:
        s = self.schedule
        return make_schedule(s.T, s.beta_start, s.beta_end)

    def dataset_spec(self) -> DatasetSpec:
        return DatasetSpec(**asdict(self.data))

    def net_config(self) -> NetConfig:
        return NetConfig(dim=self.data.dim, n_labels=n_labels(self.dataset_spec()), T=self.schedule.T,
                         **asdict(self.model))

    def validate(self) -> "RunConfig":
        try:
            self.make_schedule()
        except ValueError as exc:
            raise ConfigError(f"schedule: {exc}") from exc
        try:
            self.distill.validate(self.schedule.T)
        except ConfigError as exc:
            raise ConfigError(f"distill: {exc}") from exc
        if self.teacher_source not in ("checkpoint", "analytic"):
            raise ConfigError("teacher_source: must be 'checkpoint' or 'analytic'")
        if self.teacher_source == "analytic" and not (self.data.kind == "gaussian_mixture"
                                                       and self.data.n_modes == 1):
            raise ConfigError("teacher_source: 'analytic' needs a single-mode gaussian_mixture")
        if self.data.kind not in ("gaussian_mixture", "swiss_roll", "checkerboard"):
            raise ConfigError(f"data.kind: unknown dataset {self.data.kind!r}")
        if self.eval.delta_noise not in ("shared", "chained"):
            raise ConfigError("eval.delta_noise: must be 'shared' or 'chained'")
        for name in ("grid",):
            for sect in ("eval", "sample"):
                if getattr(getattr(self, sect), name) not in ("even", "aligned"):
                    raise ConfigError(f"{sect}.{name}: must be 'even' or 'aligned'")
        if any(s < 1 for s in self.eval.steps) or self.sample.steps < 1:
            raise ConfigError("steps must be >= 1")
        return self


def config_hash(doc: dict) -> str:
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _coerce(tp, value, path: str):
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if origin in (typing.Union, getattr(__import__("types"), "UnionType", None)):
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _coerce(inner[0], value, path)
    if dataclasses.is_dataclass(tp):
        if not isinstance(value, dict):
            raise ConfigError(f"{path}: expected an object")
        return _build(tp, value, path)
    if origin is list:
        if not isinstance(value, list):
            raise ConfigError(f"{path}: expected a list")
        return [_coerce(args[0], v, f"{path}[{i}]") for i, v in enumerate(value)]
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{path}: expected true/false")
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number")
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string")
        return value
    raise ConfigError(f"{path}: unsupported field type {tp}")


def _build(cls, doc: dict, path: str):
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    for key in doc:
        if key not in names:
            raise ConfigError(f"{path + '.' if path else ''}{key}: unknown key")
    kwargs = {k: _coerce(hints[k], v, f"{path + '.' if path else ''}{k}") for k, v in doc.items()}
    return cls(**kwargs)


def parse_config(doc: dict) -> RunConfig:
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    return _build(RunConfig, doc, "").validate()


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise FileNotFoundError(f"cannot read config {path}: {exc}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return parse_config(doc)
