import os
import yaml
from pathlib import Path
from typing import Dict, Any, Optional, Union
from dotenv import load_dotenv
import logging

logger = logging.getLogger(__name__)


class ConfigLoader:

    def __init__(self, config_dir: str = "config"):
        self.config_dir = Path(config_dir)

        load_dotenv()

        logger.debug(f"ConfigLoader initialized for {self.config_dir}")

    def load_yaml(self, filename: Union[str, Path]) -> Dict[str, Any]:
        filepath = Path(filename)
        if not filepath.is_absolute() and not filepath.exists():
            filepath = self.config_dir / filename

        if not filepath.exists():
            raise FileNotFoundError(f"Configuration file not found: {filepath}")

        # JSON is a subset of YAML, so experiment configs may be either.
        with open(filepath, 'r') as f:
            config = yaml.safe_load(f) or {}

        if not isinstance(config, dict):
            raise ValueError(f"Configuration root must be a mapping: {filepath}")

        logger.info(f"Loaded configuration from {filepath}")
        return self._resolve_env_vars(config)

    def load_main_config(self) -> Dict[str, Any]:
        return self.load_yaml("config.yaml")

    def load_experiment(self, path: Union[str, Path]) -> Dict[str, Any]:
        """Merge ``config.yaml`` defaults under an experiment file."""
        defaults: Dict[str, Any] = {}
        main_path = self.config_dir / "config.yaml"
        if main_path.exists():
            defaults = self.load_main_config().get("experiment_defaults", {}) or {}

        experiment = self.load_yaml(path)
        return _deep_merge(defaults, experiment)

    def _resolve_env_vars(self, config: Any) -> Any:
        if isinstance(config, dict):
            return {k: self._resolve_env_vars(v) for k, v in config.items()}
        elif isinstance(config, list):
            return [self._resolve_env_vars(item) for item in config]
        elif isinstance(config, str) and config.startswith("${") and config.endswith("}"):
            var_spec = config[2:-1]

            if ":" in var_spec:
                var_name, default = var_spec.split(":", 1)
            else:
                var_name = var_spec
                default = None

            value = os.getenv(var_name, default)

            if value is None:
                raise ValueError(f"Environment variable {var_name} not set and no default provided")

            return value
        else:
            return config

    def get(self, key: str, config_file: str = "config.yaml", default: Any = None) -> Any:
        config = self.load_yaml(config_file)

        keys = key.split(".")
        value = config

        for k in keys:
            if isinstance(value, dict) and k in value:
                value = value[k]
            else:
                return default

        return value

    def get_logging_config(self) -> Dict[str, Any]:
        try:
            section: Optional[Dict[str, Any]] = self.get("logging", default={})
        except FileNotFoundError:
            section = {}
        section = section or {}
        return {
            "level": os.getenv("SPECTRAL_LOG_LEVEL", section.get("level", "INFO")),
            "log_file": section.get("log_file"),
            "json_logs": bool(section.get("json_logs", False)),
        }


def _deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged
