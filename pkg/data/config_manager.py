"""
Configuration Manager

Handles loading, overriding and hashing of the pipeline configuration.
Every field has a default; files and `--set` overrides may only touch keys
that already exist in the defaults.
"""

import copy
import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, Optional

import yaml

logger = logging.getLogger(__name__)


class ConfigError(ValueError):
    """Unknown key, malformed override or unreadable config file."""


class PipelineConfig:
    """Manage the nested pipeline configuration document."""

    def __init__(self, config_file: Optional[Path] = None,
                 overrides: Optional[Iterable[str]] = None):
        """
        Initialize config.

        Args:
            config_file: Optional YAML or JSON file merged over the defaults
            overrides: Optional 'dotted.key=value' strings applied last
        """
        self.config_file = Path(config_file) if config_file else None
        self.config = self._load_default_config()

        if self.config_file is not None:
            self.load(self.config_file)

        for override in overrides or []:
            self.apply_override(override)

    def _load_default_config(self) -> Dict:
        """Load default configuration."""
        return {
            'seed': 0,
            'phantom': {
                'canvas': [64, 64],  # width, height
                'layer_count': 1,
                'echogenicity': {
                    'background': 0.0,
                    'muscle': 0.35,
                    'tendon': 0.65,
                    'bone': 0.9,
                    'ditf': 0.15,
                    'calcification': 0.95,
                    'bone_irregularity': 0.8,
                    'anisotropy': 0.25,
                },
                'speckle_scale': 1,
                'speckle_scale_max': 3,
                'pathology_rate': 0.5,
                'bone_rate': 0.75,
                'calcification_rate': 0.1,
                'bone_irregularity_rate': 0.3,
                'anisotropy_rate': 0.3,
                'gain_jitter': 0.1,
            },
            'dataset': {
                'n': 388,
                'train_frac': 0.8,
                'test_frac': 0.2,
            },
            'style': {
                'stack_seed': 0,
                'channels': [8, 16, 32],
                'layer_ids': [0, 1, 2],
            },
            'diffusion': {
                'timesteps': 200,
                'base_channels': 32,
                'levels': 3,
                'time_channels': 4,
                'steps': 2000,
                'batch_size': 16,
                'lr': 3e-4,
                'p_drop_context': 0.05,
                'p_drop_both': 0.05,
                'log_every': 50,
            },
            'guidance': {
                's_S': 1.5,
                's_C': 2.5,
            },
            'maskgen': {
                'timesteps': 200,
                'base_channels': 16,
                'levels': 3,
                'steps': 2000,
                'batch_size': 16,
                'lr': 3e-4,
                'n': 300,
                'min_ditf_fraction': 0.005,
                'require_classes': [],
                'sample_batch': 16,
                'max_class_tv': 0.25,
            },
            'generate': {
                'source': 'genmask',  # genmask | paired
                'n': 300,
                'batch_size': 16,
            },
            'evaluate': {
                'n': 50,
                'kld_bins': 32,
                'grid': 512,
                'min_samples_ratio': 0.25,
                'batch_size': 16,
            },
            'segval': {
                'real_train_limit': 40,
                'seeds': [0, 1, 2],
                'epochs': 30,
                'batch_size': 8,
                'lr': 1e-3,
                'base_channels': 16,
                'levels': 4,
                'val_frac': 0.2,
                'classes': [1, 2, 3, 4, 5, 6, 7],
            },
            'edit': {
                'tol': 1e-8,
            },
        }

    def load(self, config_file: Path):
        """
        Load configuration from a YAML or JSON file and merge it over the defaults.

        Args:
            config_file: Path to the config file
        """
        config_file = Path(config_file)
        try:
            with open(config_file, 'r') as f:
                if config_file.suffix.lower() in ('.yaml', '.yml'):
                    loaded = yaml.safe_load(f) or {}
                else:
                    loaded = json.load(f)
        except (OSError, yaml.YAMLError, json.JSONDecodeError) as e:
            raise ConfigError(f"Cannot read config {config_file}: {e}") from e

        if not isinstance(loaded, dict):
            raise ConfigError(f"Config {config_file} must contain a mapping at top level")

        self._merge_config(self.config, loaded)
        logger.debug("Loaded config from %s", config_file)

    def _merge_config(self, default: Dict, loaded: Dict, prefix: str = ''):
        """Recursively merge loaded config into default config, rejecting unknown keys."""
        for key, value in loaded.items():
            path = f"{prefix}{key}"
            if key not in default:
                raise ConfigError(f"Unknown config key: {path}")
            if isinstance(default[key], dict):
                if not isinstance(value, dict):
                    raise ConfigError(f"Config key {path} expects a mapping")
                self._merge_config(default[key], value, prefix=f"{path}.")
            else:
                default[key] = value

    def apply_override(self, override: str):
        """
        Apply a single 'dotted.key=value' override.

        Args:
            override: Override string; the value is parsed as YAML
        """
        if '=' not in override:
            raise ConfigError(f"Override must look like key=value, got {override!r}")
        key_path, raw = override.split('=', 1)
        keys = [k for k in key_path.strip().split('.') if k]
        if not keys:
            raise ConfigError(f"Empty key in override {override!r}")
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError as e:
            raise ConfigError(f"Cannot parse value in override {override!r}: {e}") from e

        nested: Any = value
        for key in reversed(keys):
            nested = {key: nested}
        self._merge_config(self.config, nested)

    def get(self, *keys) -> Optional[Any]:
        """
        Get configuration value by key path.

        Args:
            *keys: Key path (e.g., 'diffusion', 'timesteps')

        Returns:
            Configuration value or None
        """
        value = self.config
        for key in keys:
            if isinstance(value, dict) and key in value:
                value = value[key]
            else:
                return None
        return value

    def set(self, *keys, value):
        """
        Set configuration value by key path. The key path must already exist.

        Args:
            *keys: Key path (e.g., 'dataset', 'n')
            value: Value to set
        """
        nested: Any = value
        for key in reversed(keys):
            nested = {key: nested}
        self._merge_config(self.config, nested)

    def section(self, name: str) -> Dict:
        """Deep copy of one top-level section."""
        if name not in self.config or not isinstance(self.config[name], dict):
            raise ConfigError(f"Unknown config section: {name}")
        return copy.deepcopy(self.config[name])

    def to_dict(self) -> Dict:
        """Deep copy of the resolved configuration."""
        return copy.deepcopy(self.config)

    def config_hash(self) -> str:
        """Stable 12-hex-digit hash of the resolved configuration."""
        payload = json.dumps(self.config, sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(payload.encode('utf-8')).hexdigest()[:12]

    def save(self, path: Path):
        """Save the resolved configuration (YAML or JSON by suffix)."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w') as f:
            if path.suffix.lower() in ('.yaml', '.yml'):
                yaml.safe_dump(self.config, f, sort_keys=True)
            else:
                json.dump(self.config, f, indent=2, sort_keys=True)
