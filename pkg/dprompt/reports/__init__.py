"""
Reports package.

Experiment configuration (defaults, validation, hashing) and the report
bundle written by every CLI command.
"""

from .config import (
    SCHEMA_VERSION, DEFAULTS_PATH, ExperimentConfig, BankConfig, PromptsConfig, GridConfig,
    AccountingConfig, DiagnoseConfig, VerifyConfig, OutputConfig,
    load_config, load_defaults, validate_config, deep_merge, config_hash, config_to_dict,
)
from .bundle import ReportBundle

__all__ = [
    "SCHEMA_VERSION", "DEFAULTS_PATH", "ExperimentConfig", "BankConfig", "PromptsConfig",
    "GridConfig", "AccountingConfig", "DiagnoseConfig", "VerifyConfig", "OutputConfig",
    "load_config", "load_defaults", "validate_config", "deep_merge", "config_hash",
    "config_to_dict", "ReportBundle",
]
