"""
Experiment configuration.

Packaged defaults live in dprompt/config.yaml. A user file is a partial
YAML document deep-merged over them; CLI overrides are merged last. The
merged document is validated into frozen dataclasses before anything runs:
unknown keys anywhere are reported together, types are checked, and each
section's own validation runs with its dotted key attached to the error.
"""

import copy
import dataclasses
import hashlib
import json
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Union

import yaml

from ..errors import ConfigError
from ..prompting import FlowPolicy, InitScheme
from ..toyvlm import ModelConfig, PretrainConfig, TaskConfig
from ..trainer import TrainConfig

SCHEMA_VERSION = 1
DEFAULTS_PATH = Path(__file__).resolve().parent.parent / "config.yaml"


@dataclass(frozen=True)
class BankConfig:
    enabled: bool = True
    depth: int = 2
    length: int = 2
    flow_policy: str = "discard"

    def __post_init__(self):
        if self.depth < 1 or self.length < 1:
            raise ConfigError(f"depth and length must be >= 1, got {self.depth}, {self.length}")
        object.__setattr__(self, "flow_policy", FlowPolicy.parse(self.flow_policy).value)


@dataclass(frozen=True)
class PromptsConfig:
    visual: BankConfig = field(default_factory=BankConfig)
    textual: BankConfig = field(default_factory=BankConfig)
    visual_init: str = "xavier_uniform"
    textual_std: float = 0.02
    first_layer_phrase: Optional[str] = "a photo of a"
    sigma: Optional[float] = None
    beta: Optional[float] = None

    def __post_init__(self):
        self.init_scheme()

    def init_scheme(self) -> InitScheme:
        return InitScheme(self.visual_init, self.textual_std, self.first_layer_phrase)


@dataclass(frozen=True)
class GridConfig:
    cells: List[Any] = field(default_factory=list)
    seeds: List[int] = field(default_factory=lambda: [1, 2, 3, 4, 5])


@dataclass(frozen=True)
class AccountingConfig:
    """Named presets: {name: {visual: [depth, length, dim], textual: [...]}}."""

    presets: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        for name, preset in self.presets.items():
            if not isinstance(preset, dict) or set(preset) - {"visual", "textual"}:
                raise ConfigError(f"preset {name!r} must map visual/textual to [depth, length, dim]")
            for modality, dims in preset.items():
                if dims is None:
                    continue
                if (not isinstance(dims, list) or len(dims) != 3
                        or not all(isinstance(v, int) and v >= 1 for v in dims)):
                    raise ConfigError(f"preset {name}.{modality} must be [depth, length, dim] positive ints")


@dataclass(frozen=True)
class DiagnoseConfig:
    bank_dir: Optional[str] = None
    images: int = 4

    def __post_init__(self):
        if self.images < 1:
            raise ConfigError("diagnose.images must be >= 1")


@dataclass(frozen=True)
class VerifyConfig:
    trials: int = 100
    tolerance: float = 1e-10
    grad_tolerance: float = 1e-5
    grad_eps: float = 1e-5
    seed: int = 0

    def __post_init__(self):
        if self.trials < 1:
            raise ConfigError("verify.trials must be >= 1")
        if not 1e-7 <= self.grad_eps <= 1e-3:
            raise ConfigError("verify.grad_eps must be in [1e-7, 1e-3]")


@dataclass(frozen=True)
class OutputConfig:
    dir: Optional[str] = None
    formats: List[str] = field(default_factory=lambda: ["md"])
    log_level: str = "WARNING"

    def __post_init__(self):
        unknown = set(self.formats) - {"md", "html"}
        if unknown:
            raise ConfigError(f"unknown output formats: {sorted(unknown)}")
        if self.log_level.upper() not in ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"):
            raise ConfigError(f"unknown log level {self.log_level!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    schema_version: int = SCHEMA_VERSION
    model: ModelConfig = field(default_factory=ModelConfig)
    prompts: PromptsConfig = field(default_factory=PromptsConfig)
    task: TaskConfig = field(default_factory=TaskConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    grid: GridConfig = field(default_factory=GridConfig)
    pretrain: PretrainConfig = field(default_factory=PretrainConfig)
    accounting: AccountingConfig = field(default_factory=AccountingConfig)
    diagnose: DiagnoseConfig = field(default_factory=DiagnoseConfig)
    verify: VerifyConfig = field(default_factory=VerifyConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def __post_init__(self):
        if self.schema_version != SCHEMA_VERSION:
            raise ConfigError(f"unsupported schema_version {self.schema_version} (expected {SCHEMA_VERSION})")


# loading

def deep_merge(base: Mapping, override: Mapping) -> Dict:
    """Recursively merge override into a copy of base (mappings merge, other values replace)."""
    merged = copy.deepcopy(dict(base))
    for key, value in override.items():
        if isinstance(value, Mapping) and isinstance(merged.get(key), Mapping):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def _join(path: str, key) -> str:
    return f"{path}.{key}" if path else str(key)


def _is_dataclass_type(tp) -> bool:
    return isinstance(tp, type) and dataclasses.is_dataclass(tp)


def _unknown_keys(cls, data, path: str = "") -> List[str]:
    if not isinstance(data, Mapping):
        return []
    hints = typing.get_type_hints(cls)
    found = []
    for key, value in data.items():
        if key not in hints:
            found.append(_join(path, key))
        elif _is_dataclass_type(hints[key]):
            found.extend(_unknown_keys(hints[key], value, _join(path, key)))
    return found


def _coerce(tp, value, key: str):
    origin = typing.get_origin(tp)
    if origin is Union:
        args = [a for a in typing.get_args(tp) if a is not type(None)]
        if value is None:
            return None
        return _coerce(args[0], value, key)
    if _is_dataclass_type(tp):
        return _build(tp, value, key)
    if tp is Any:
        return value
    if origin in (list, List):
        if not isinstance(value, list):
            raise ConfigError(f"{key} must be a list", keys=[key])
        (item,) = typing.get_args(tp) or (Any,)
        return [_coerce(item, v, f"{key}[{i}]") for i, v in enumerate(value)]
    if origin in (dict, Dict):
        if not isinstance(value, Mapping):
            raise ConfigError(f"{key} must be a mapping", keys=[key])
        return dict(value)
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{key} must be true or false, got {value!r}", keys=[key])
        return value
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key} must be an integer, got {value!r}", keys=[key])
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key} must be a number, got {value!r}", keys=[key])
        return float(value)
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{key} must be a string, got {value!r}", keys=[key])
        return value
    return value


def _build(cls, data, path: str = ""):
    if data is None:
        data = {}
    if not isinstance(data, Mapping):
        raise ConfigError(f"{path or 'config'} must be a mapping", keys=[path] if path else [])
    hints = typing.get_type_hints(cls)
    kwargs = {key: _coerce(hints[key], value, _join(path, key)) for key, value in data.items()}
    try:
        return cls(**kwargs)
    except ConfigError as e:
        if e.keys:
            raise
        raise ConfigError(f"{path or 'config'}: {e}", keys=[path] if path else []) from e


def validate_config(data: Mapping) -> ExperimentConfig:
    """
    Validate a merged config document.

    Raises:
        ConfigError: With every unknown dotted key in .keys, or the first
            invalid value
    """
    unknown = _unknown_keys(ExperimentConfig, data)
    if unknown:
        raise ConfigError(f"Unknown config keys: {', '.join(unknown)}", keys=unknown)
    return _build(ExperimentConfig, data)


def load_defaults() -> Dict:
    with open(DEFAULTS_PATH, "r") as f:
        return yaml.safe_load(f)


def read_yaml(path: Union[str, Path]) -> Dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}", keys=[])
    try:
        with open(path, "r") as f:
            data = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise ConfigError(f"cannot parse {path}: {e}") from e
    if data is None:
        return {}
    if not isinstance(data, Mapping):
        raise ConfigError(f"{path} must contain a YAML mapping")
    return data


def load_config(path: Optional[Union[str, Path]] = None,
                overrides: Optional[Mapping] = None) -> ExperimentConfig:
    """
    Defaults <- user file <- overrides, validated.

    Args:
        path: Optional user YAML file
        overrides: Optional nested mapping (CLI flags)

    Returns:
        ExperimentConfig
    """
    data = load_defaults()
    if path is not None:
        data = deep_merge(data, read_yaml(path))
    if overrides:
        data = deep_merge(data, overrides)
    return validate_config(data)


def config_to_dict(config: ExperimentConfig) -> Dict:
    return dataclasses.asdict(config)


def config_hash(config: ExperimentConfig) -> str:
    """SHA-256 of the canonical JSON form (sorted keys, no whitespace)."""
    canonical = json.dumps(config_to_dict(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
