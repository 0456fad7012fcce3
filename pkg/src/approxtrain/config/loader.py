"""
Configuration loader for approxtrain.
"""

import hashlib
import json
from pathlib import Path
from typing import Any, Dict, Optional, Union

import toml
from pydantic import ValidationError

from ..errors import ApproxTrainError
from .defaults import DEFAULT_CONFIG_TOML, get_default_config
from .models import ApproxTrainConfig


class ConfigError(ApproxTrainError):
    """Raised when a configuration cannot be parsed or validated."""

    def __init__(self, key_path: str, message: str):
        self.key_path = key_path
        self.message = message
        super().__init__(f"{key_path}: {message}" if key_path else message)


class ConfigLoader:
    """Load, validate and persist run configurations."""

    @classmethod
    def load(cls, config_path: Optional[Union[str, Path]] = None) -> ApproxTrainConfig:
        """Load configuration from a TOML file merged over the defaults.

        Args:
            config_path: Optional path to config file; defaults when omitted

        Returns:
            Validated configuration object

        Raises:
            ConfigError: If the file is missing, malformed or invalid
        """
        if config_path is None:
            return get_default_config()

        path = Path(config_path)
        if not path.is_file():
            raise ConfigError("", f"Configuration file not found: {path}")

        try:
            data = toml.loads(path.read_text(encoding="utf-8"))
        except toml.TomlDecodeError as exc:
            raise ConfigError("", f"Invalid TOML in {path}: {exc}") from exc

        return cls.from_dict(data)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> ApproxTrainConfig:
        """Validate a (possibly partial) configuration mapping.

        Raises:
            ConfigError: With the dotted path of the first offending key
        """
        merged = cls._overlay(get_default_config().model_dump(), data)
        try:
            return ApproxTrainConfig(**merged)
        except ValidationError as e:
            first = e.errors()[0]
            key_path = ".".join(str(part) for part in first["loc"])
            raise ConfigError(key_path, first["msg"])

    @staticmethod
    def _overlay(base: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
        """Overlay ``overrides`` onto ``base`` table by table.

        Keys absent from ``base`` pass through so validation can name them.
        """
        merged = dict(base)
        for key, value in overrides.items():
            nested = merged.get(key)
            merged[key] = (
                ConfigLoader._overlay(nested, value)
                if isinstance(nested, dict) and isinstance(value, dict)
                else value
            )
        return merged

    @staticmethod
    def save(config: ApproxTrainConfig, path: Path) -> None:
        """Write the effective configuration as TOML, creating parent directories.

        ``None`` values are dropped since TOML has no null.
        """
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(
            toml.dumps(config.model_dump(mode="json", exclude_none=True)),
            encoding="utf-8",
        )

    @staticmethod
    def save_default_config(path: Path) -> Path:
        """Write the commented default configuration to ``path``."""
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(DEFAULT_CONFIG_TOML, encoding="utf-8")
        return path


def canonical_json(config: ApproxTrainConfig) -> str:
    """Canonical JSON dump used for hashing and checkpoint headers."""
    return json.dumps(
        config.model_dump(mode="json"), sort_keys=True, separators=(",", ":")
    )


def config_hash(config: ApproxTrainConfig) -> str:
    """Git-style blob hash of the canonical configuration."""
    payload = canonical_json(config).encode("utf-8")
    header = f"blob {len(payload)}\0".encode("ascii")
    return hashlib.sha1(header + payload).hexdigest()
