"""JSON experiment configuration: schema, defaults, validation and hashing."""
from __future__ import annotations

import copy
import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .diffusion import DiffusionConfig
from .model import ModelConfig
from .training import TrainConfig

TASKS = ("axelrod-sim", "node-classify", "influence")
OUTPUT_ROOT_ENV = "AXELGNN_OUTPUT_ROOT"

# default hyperparameter grid
DEFAULT_GRID = {
    "num_layers": [1, 2, 3, 4],
    "learning_rate": [1e-3, 5e-3, 1e-2],
    "weight_decay": [5e-4, 1e-1],
    "dropout": [0.1, 0.4, 0.5],
    "hidden_dim": [32, 64, 256],
    "segment_size": [4, 8, 16],
}


class ConfigError(ValueError):
    """Invalid experiment configuration; the message names the offending key."""


@dataclass
class SynthSpec:
    n: int = 400
    k_classes: int = 2
    p_intra: float = 0.05
    p_inter: float = 0.005
    feature_model: str = "gaussian"
    delta: float = 1.0
    n_features: int = 8


@dataclass
class FileSpec:
    edges: str = ""
    features: str | None = None
    labels: str | None = None
    row_normalize: bool = False
    remap_ids: bool = False


@dataclass
class AxelrodSpec:
    L: int = 10
    f: int = 5
    q: int = 15
    max_steps: int = 10_000_000
    check_interval: int | None = None
    periodic: bool = False
    neighborhood: str = "von_neumann"


@dataclass
class InfluenceSpec:
    seed_fraction: float = 0.10
    folds: int = 10


@dataclass
class BenchSpec:
    dims: list = field(default_factory=lambda: [16, 32, 64])
    sizes: list = field(default_factory=lambda: [250, 500, 1000])
    variants: list = field(default_factory=lambda: ["full", "sim"])
    segment_size: int = 8
    avg_degree: float = 10.0
    repeats: int = 5
    ladder_n: int = 2000
    ladder_d: int = 64
    ladder_edges: list = field(default_factory=lambda: [10000, 20000, 40000, 80000])


@dataclass
class ExperimentConfig:
    task: str
    seed: int = 0
    output_dir: str = "runs"
    architecture: str = "axelgnn"
    repeats: int = 10
    dataset: dict = field(default_factory=lambda: {"synth": asdict(SynthSpec())})
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    diffusion: DiffusionConfig = field(default_factory=DiffusionConfig)
    influence: InfluenceSpec = field(default_factory=InfluenceSpec)
    axelrod: AxelrodSpec = field(default_factory=AxelrodSpec)
    bench: BenchSpec = field(default_factory=BenchSpec)
    grid: dict = field(default_factory=lambda: {"space": copy.deepcopy(DEFAULT_GRID), "repeats": 1})

    def to_dict(self) -> dict:
        return asdict(self)

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=str)
        return hashlib.sha256(blob.encode()).hexdigest()[:12]

    def output_path(self) -> Path:
        p = Path(self.output_dir)
        root = os.environ.get(OUTPUT_ROOT_ENV)
        if root and not p.is_absolute():
            p = Path(root) / p
        return p

    @property
    def synth(self) -> SynthSpec | None:
        return SynthSpec(**self.dataset["synth"]) if "synth" in self.dataset else None

    @property
    def files(self) -> FileSpec | None:
        return FileSpec(**self.dataset["files"]) if "files" in self.dataset else None


def _check_value(ftype, v, name: str) -> None:
    t = ftype if isinstance(ftype, str) else getattr(ftype, "__name__", "")
    if v is None or isinstance(v, bool) and "bool" in t:
        return
    if t == "int" and (isinstance(v, bool) or not isinstance(v, int)):
        raise ConfigError(f"'{name}' must be an integer, got {v!r}")
    if t == "float" and (isinstance(v, bool) or not isinstance(v, (int, float))):
        raise ConfigError(f"'{name}' must be a number, got {v!r}")
    if t == "str" and not isinstance(v, str):
        raise ConfigError(f"'{name}' must be a string, got {v!r}")
    if t == "bool" and not isinstance(v, bool):
        raise ConfigError(f"'{name}' must be true or false, got {v!r}")


def _build(cls, raw, prefix: str):
    if not isinstance(raw, dict):
        raise ConfigError(f"'{prefix}' must be an object")
    types = {f.name: f.type for f in fields(cls)}
    for key, val in raw.items():
        if key not in types:
            raise ConfigError(f"unknown key '{prefix}.{key}'")
        _check_value(types[key], val, f"{prefix}.{key}")
    try:
        return cls(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"'{prefix}': {exc}") from None


def parse_config(raw: dict) -> ExperimentConfig:
    """Validate a raw JSON object and materialize every default."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    if "task" not in raw:
        raise ConfigError("missing required key 'task'")
    if raw["task"] not in TASKS:
        raise ConfigError(f"'task' must be one of {list(TASKS)}, got {raw['task']!r}")
    top = {f.name for f in fields(ExperimentConfig)}
    for key in raw:
        if key not in top:
            raise ConfigError(f"unknown key '{key}'")
    sections = {"model": ModelConfig, "train": TrainConfig, "diffusion": DiffusionConfig,
                "influence": InfluenceSpec, "axelrod": AxelrodSpec, "bench": BenchSpec}
    kw = {k: raw[k] for k in ("task", "seed", "output_dir", "architecture", "repeats") if k in raw}
    for name, cls in sections.items():
        kw[name] = _build(cls, raw.get(name, {}), name)
    if kw.get("architecture", "axelgnn") not in ("axelgnn", "mean"):
        raise ConfigError(f"'architecture' must be 'axelgnn' or 'mean', got {kw['architecture']!r}")
    if not isinstance(kw.get("seed", 0), int):
        raise ConfigError("'seed' must be an integer")
    if not isinstance(kw.get("repeats", 1), int) or kw.get("repeats", 1) < 1:
        raise ConfigError("'repeats' must be a positive integer")

    ds = raw.get("dataset", {"synth": {}})
    if not isinstance(ds, dict):
        raise ConfigError("'dataset' must be an object")
    sources = [k for k in ("synth", "files") if k in ds]
    extra = [k for k in ds if k not in ("synth", "files")]
    if extra:
        raise ConfigError(f"unknown key 'dataset.{extra[0]}'")
    if len(sources) != 1:
        raise ConfigError("'dataset' needs exactly one of 'synth' or 'files'")
    if sources[0] == "synth":
        spec = _build(SynthSpec, ds["synth"], "dataset.synth")
        kw["dataset"] = {"synth": asdict(spec)}
    else:
        spec = _build(FileSpec, ds["files"], "dataset.files")
        if not spec.edges:
            raise ConfigError("missing required key 'dataset.files.edges'")
        for key in ("edges", "features", "labels"):
            path = getattr(spec, key)
            if path is not None and not Path(path).exists():
                raise ConfigError(f"'dataset.files.{key}' path does not exist: {path}")
        kw["dataset"] = {"files": asdict(spec)}

    grid = raw.get("grid", {})
    if not isinstance(grid, dict):
        raise ConfigError("'grid' must be an object")
    for key in grid:
        if key not in ("space", "repeats"):
            raise ConfigError(f"unknown key 'grid.{key}'")
    space = grid.get("space", copy.deepcopy(DEFAULT_GRID))
    allowed = {f.name for f in fields(ModelConfig)} | {f.name for f in fields(TrainConfig)}
    for key, vals in space.items():
        if key not in allowed:
            raise ConfigError(f"unknown key 'grid.space.{key}'")
        if not isinstance(vals, list) or not vals:
            raise ConfigError(f"'grid.space.{key}' must be a non-empty list")
    kw["grid"] = {"space": space, "repeats": int(grid.get("repeats", 1))}

    return ExperimentConfig(**kw)


def apply_overrides(raw: dict, overrides: list[str]) -> dict:
    """Apply ``dotted.key=value`` overrides; values parse as JSON when possible."""
    raw = copy.deepcopy(raw)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, val = item.split("=", 1)
        try:
            val = json.loads(val)
        except json.JSONDecodeError:
            pass
        node = raw
        parts = key.split(".")
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"cannot override '{key}': '{p}' is not an object")
        node[parts[-1]] = val
    return raw


def load_config(path, overrides: list[str] | None = None) -> ExperimentConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from None
    return parse_config(apply_overrides(raw, overrides or []))
