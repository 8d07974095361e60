#!/usr/bin/env python3

import copy
import json
import os
import sys
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

from dotenv import load_dotenv

sys.path.insert(0, os.path.join(os.path.dirname(os.path.abspath(__file__)), ".."))

from tools.score_distributions import FamilyTag
from tools.spe_errors import ConfigError, DomainError

CONFIG_ENV = "SPE_CONFIG"
LOG_LEVEL_ENV = "SPE_LOG_LEVEL"


class SPEConfigManager:
    """
    JSON configuration with defaults for every evaluation setting.

    A missing config_path means defaults only; nothing is written until
    save_config is called.
    """

    def __init__(self, config_path: Optional[str] = None):
        self.config_path = config_path
        self.default_config = {
            "model_settings": {
                "families": ["gamma", "truncated-normal"],
                "holdout_fraction": 0.2,
                "priors": {
                    "pi_alpha": 1.0,
                    "pi_beta": 1.0,
                    "location_mean": 0.5,
                    "location_scale": 1.0,
                    "positive_shape": 2.0,
                    "positive_scale": 1.0
                }
            },
            "inference_settings": {
                "samples": 500,
                "starts": 10,
                "proposal_inflation": 1.2,
                "curvature_step": 1e-4,
                "ess_warning_fraction": 0.1,
                "ess_retry_factor": 2.0,
                "max_iterations": 200,
                "gradient_tolerance": 1e-6
            },
            "report_settings": {
                "quantile_levels": [0.05, 0.5, 0.95],
                "grid_size": 200,
                "format": "json",
                "confidence": 0.9
            },
            "experiment_settings": {
                "budgets": [10, 20, 50],
                "trials": 10,
                "subsample": None
            }
        }
        self.config = self.load_config()

    def load_config(self) -> Dict[str, Any]:
        """Load configuration from file merged over the defaults"""
        if self.config_path is None:
            return copy.deepcopy(self.default_config)
        if not os.path.exists(self.config_path):
            raise ConfigError(f"config file {self.config_path} does not exist")
        try:
            with open(self.config_path, 'r') as f:
                loaded_config = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file {self.config_path} is not valid JSON: {e}")
        if not isinstance(loaded_config, dict):
            raise ConfigError(f"config file {self.config_path} must hold a JSON object")
        return self._merge_configs(self.default_config, loaded_config)

    def save_config(self, config: Optional[Dict[str, Any]] = None):
        if self.config_path is None:
            raise ConfigError("no config path to save to")
        config_to_save = config or self.config
        with open(self.config_path, 'w') as f:
            json.dump(config_to_save, f, indent=2)
        if config:
            self.config = config

    def get_setting(self, key_path: str, default: Any = None) -> Any:
        """Get a setting using dot notation (e.g., 'inference_settings.samples')"""
        keys = key_path.split('.')
        value = self.config

        for key in keys:
            if isinstance(value, dict) and key in value:
                value = value[key]
            else:
                return default

        return value

    def set_setting(self, key_path: str, value: Any, persist: bool = False):
        """Set a setting using dot notation"""
        keys = key_path.split('.')
        config_section = self.config

        for key in keys[:-1]:
            if key not in config_section:
                config_section[key] = {}
            config_section = config_section[key]

        config_section[keys[-1]] = value
        if persist:
            self.save_config()

    def _merge_configs(self, default: Dict[str, Any], loaded: Dict[str, Any]) -> Dict[str, Any]:
        """Recursively merge loaded config with defaults"""
        merged = copy.deepcopy(default)

        for key, value in loaded.items():
            if key in merged and isinstance(merged[key], dict) and isinstance(value, dict):
                merged[key] = self._merge_configs(merged[key], value)
            else:
                merged[key] = value

        return merged

    def reset_to_defaults(self):
        self.config = copy.deepcopy(self.default_config)

    def export_config(self, export_path: str) -> bool:
        try:
            with open(export_path, 'w') as f:
                json.dump(self.config, f, indent=2)
            return True
        except OSError as e:
            print(f"Error exporting config: {e}")
            return False

    def import_config(self, import_path: str) -> bool:
        try:
            with open(import_path, 'r') as f:
                imported_config = json.load(f)
            self.config = self._merge_configs(self.default_config, imported_config)
            return True
        except (OSError, json.JSONDecodeError) as e:
            print(f"Error importing config: {e}")
            return False

    def validate_config(self) -> Dict[str, Any]:
        """Validate configuration and return issues"""
        issues = []

        families = self.get_setting('model_settings.families')
        if not isinstance(families, list) or not families:
            issues.append("model_settings.families must be a non-empty list")
        else:
            for name in families:
                try:
                    FamilyTag.parse(name)
                except DomainError as e:
                    issues.append(f"model_settings.families: {e}")

        holdout = self.get_setting('model_settings.holdout_fraction')
        if not _is_number(holdout) or not 0.0 < holdout < 1.0:
            issues.append("model_settings.holdout_fraction must lie in (0, 1)")

        for name in ("pi_alpha", "pi_beta", "location_scale", "positive_shape", "positive_scale"):
            value = self.get_setting(f'model_settings.priors.{name}')
            if not _is_number(value) or value <= 0:
                issues.append(f"model_settings.priors.{name} must be a positive number")

        for name in ("samples", "starts", "max_iterations"):
            value = self.get_setting(f'inference_settings.{name}')
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                issues.append(f"inference_settings.{name} must be a positive integer")

        for name in ("proposal_inflation", "curvature_step", "ess_retry_factor", "gradient_tolerance"):
            value = self.get_setting(f'inference_settings.{name}')
            if not _is_number(value) or value <= 0:
                issues.append(f"inference_settings.{name} must be a positive number")

        levels = self.get_setting('report_settings.quantile_levels')
        if (not isinstance(levels, list) or not levels or not all(_is_number(l) and 0 < l < 1 for l in levels)
                or any(b <= a for a, b in zip(levels, levels[1:]))):
            issues.append("report_settings.quantile_levels must be strictly increasing in (0, 1)")

        grid_size = self.get_setting('report_settings.grid_size')
        if not isinstance(grid_size, int) or grid_size < 2:
            issues.append("report_settings.grid_size must be an integer >= 2")

        if self.get_setting('report_settings.format') not in ("json", "csv"):
            issues.append("report_settings.format must be 'json' or 'csv'")

        confidence = self.get_setting('report_settings.confidence')
        if not _is_number(confidence) or not 0 <= confidence <= 1:
            issues.append("report_settings.confidence must lie in [0, 1]")

        budgets = self.get_setting('experiment_settings.budgets')
        if not isinstance(budgets, list) or not all(isinstance(b, int) and b >= 0 for b in budgets):
            issues.append("experiment_settings.budgets must be a list of non-negative integers")

        trials = self.get_setting('experiment_settings.trials')
        if not isinstance(trials, int) or trials < 1:
            issues.append("experiment_settings.trials must be a positive integer")

        subsample = self.get_setting('experiment_settings.subsample')
        if subsample is not None and (not isinstance(subsample, int) or subsample < 1):
            issues.append("experiment_settings.subsample must be null or a positive integer")

        return {
            "valid": len(issues) == 0,
            "issues": issues
        }

    def require_valid(self):
        validation = self.validate_config()
        if not validation["valid"]:
            raise ConfigError("invalid configuration: " + "; ".join(validation["issues"]))

    def get_summary(self) -> Dict[str, Any]:
        return {
            "families": self.get_setting('model_settings.families'),
            "samples": self.get_setting('inference_settings.samples'),
            "starts": self.get_setting('inference_settings.starts'),
            "quantile_levels": self.get_setting('report_settings.quantile_levels'),
            "grid_size": self.get_setting('report_settings.grid_size'),
            "budgets": self.get_setting('experiment_settings.budgets'),
            "trials": self.get_setting('experiment_settings.trials')
        }


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


@dataclass
class RunConfig:
    """Resolved settings for one CLI run; the seed has no default"""
    scores_path: str
    seed: int
    families: List[FamilyTag]
    priors: Dict[str, Any]
    inference: Dict[str, Any]
    quantile_levels: Tuple[float, ...]
    grid_size: int
    output_format: str
    confidence: float
    output_path: Optional[str] = None
    holdout_fraction: float = 0.2
    budgets: List[int] = field(default_factory=list)
    trials: int = 10
    subsample: Optional[int] = None
    conditions: List[Tuple[float, float]] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "scores": self.scores_path,
            "seed": self.seed,
            "families": [f.value for f in self.families],
            "priors": self.priors,
            "inference": self.inference,
            "quantile_levels": list(self.quantile_levels),
            "grid_size": self.grid_size,
            "format": self.output_format,
            "confidence": self.confidence,
            "holdout_fraction": self.holdout_fraction,
            "budgets": self.budgets,
            "trials": self.trials,
            "subsample": self.subsample,
            "conditions": [list(c) for c in self.conditions],
        }


def load_manager(config_path: Optional[str] = None) -> SPEConfigManager:
    """Config manager for a run: explicit path, else $SPE_CONFIG (after .env), else defaults"""
    load_dotenv()
    manager = SPEConfigManager(config_path or os.environ.get(CONFIG_ENV) or None)
    manager.require_valid()
    return manager


def build_run_config(manager: SPEConfigManager, scores_path: str, seed: Optional[int],
                     overrides: Optional[Dict[str, Any]] = None,
                     output_path: Optional[str] = None,
                     conditions: Optional[List[Tuple[float, float]]] = None) -> RunConfig:
    """Apply command-line overrides (dot paths, None = not given) and resolve a RunConfig"""
    if seed is None:
        raise ConfigError("a seed is required (--seed)")
    for key_path, value in (overrides or {}).items():
        if value is not None:
            manager.set_setting(key_path, value)
    manager.require_valid()
    get = manager.get_setting
    return RunConfig(
        scores_path=scores_path,
        seed=int(seed),
        families=[FamilyTag.parse(f) for f in get('model_settings.families')],
        priors=dict(get('model_settings.priors')),
        inference=dict(get('inference_settings')),
        quantile_levels=tuple(float(l) for l in get('report_settings.quantile_levels')),
        grid_size=int(get('report_settings.grid_size')),
        output_format=get('report_settings.format'),
        confidence=float(get('report_settings.confidence')),
        output_path=output_path,
        holdout_fraction=float(get('model_settings.holdout_fraction')),
        budgets=list(get('experiment_settings.budgets')),
        trials=int(get('experiment_settings.trials')),
        subsample=get('experiment_settings.subsample'),
        conditions=list(conditions or []),
    )


if __name__ == "__main__":
    if len(sys.argv) < 2:
        print("Usage: python spe_config.py <action> [args...]")
        print("Actions: get, set, validate, summary, export, import, reset, defaults")
        sys.exit(1)

    action = sys.argv[1]
    config_manager = SPEConfigManager(os.environ.get(CONFIG_ENV) or None)

    if action == "get":
        if len(sys.argv) < 3:
            print("Usage: python spe_config.py get <key_path>")
            sys.exit(1)
        print(json.dumps(config_manager.get_setting(sys.argv[2]), indent=2))

    elif action == "set":
        if len(sys.argv) < 4:
            print("Usage: python spe_config.py set <key_path> <value>")
            sys.exit(1)
        key_path, value_str = sys.argv[2], sys.argv[3]
        try:
            value = json.loads(value_str)
        except json.JSONDecodeError:
            value = value_str
        config_manager.set_setting(key_path, value, persist=True)
        print(f"Set {key_path} = {value}")

    elif action == "validate":
        print(json.dumps(config_manager.validate_config(), indent=2))

    elif action == "summary":
        print(json.dumps(config_manager.get_summary(), indent=2))

    elif action == "export":
        if len(sys.argv) < 3:
            print("Usage: python spe_config.py export <file_path>")
            sys.exit(1)
        success = config_manager.export_config(sys.argv[2])
        print(f"Export {'successful' if success else 'failed'}")

    elif action == "import":
        if len(sys.argv) < 3:
            print("Usage: python spe_config.py import <file_path>")
            sys.exit(1)
        success = config_manager.import_config(sys.argv[2])
        if success and config_manager.config_path:
            config_manager.save_config()
        print(f"Import {'successful' if success else 'failed'}")
        if not success:
            sys.exit(1)

    elif action == "reset":
        config_manager.reset_to_defaults()
        if config_manager.config_path:
            config_manager.save_config()
        print("Configuration reset to defaults")

    elif action == "defaults":
        print(json.dumps(config_manager.default_config, indent=2))

    else:
        print(f"Unknown action: {action}")
        sys.exit(1)
