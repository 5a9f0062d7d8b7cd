import copy
import json
import logging
import os
from typing import Any, Dict, Optional

logger = logging.getLogger(__name__)


class Config:
    """Configuration manager for the Stokes witness lab.

    Built-in defaults apply unless a JSON file is passed explicitly; no
    environment variables are consulted.
    """

    def __init__(self, config_file: Optional[str] = None):
        self.config_file = config_file
        self.default_config = {
            "numerics": {
                "identity_tolerance": 1e-12,
                "violation_tolerance": 1e-9,
                "sqrt_clamp_tolerance": 1e-10,
                "hermitian_tolerance": 1e-14,
                "tail_mass_warning": 1e-6,
                "psd_check_max_dimension": 1024
            },
            "sampling": {
                "bootstrap_resamples": 200,
                "min_shots": 30
            },
            "cli": {
                "max_identity_nmax": 10,
                "workers": 4
            },
            "data_settings": {
                "save_directory": "results",
                "float_format": "%.17g"
            }
        }
        self.config = self.load_config()

    def load_config(self) -> Dict[str, Any]:
        """Load configuration from file merged over the defaults."""
        if self.config_file is None:
            return copy.deepcopy(self.default_config)
        if not os.path.exists(self.config_file):
            raise FileNotFoundError(f"configuration file not found: {self.config_file}")
        with open(self.config_file, "r", encoding="utf-8") as f:
            try:
                loaded = json.load(f)
            except json.JSONDecodeError as e:
                raise ValueError(f"invalid JSON in {self.config_file}: {e}") from e
        if not isinstance(loaded, dict):
            raise ValueError(f"{self.config_file}: top level must be an object")
        logger.info("Loaded configuration from %s", self.config_file)
        return self._merge_config(self.default_config, loaded)

    def save_config(self, filepath: Optional[str] = None) -> str:
        """Save current configuration to filepath (default: the loaded file)."""
        filepath = filepath or self.config_file
        if filepath is None:
            raise ValueError("no configuration file to save to")
        with open(filepath, "w", encoding="utf-8") as f:
            json.dump(self.config, f, indent=4)
            f.write("\n")
        return filepath

    def _merge_config(self, default: Dict, loaded: Dict) -> Dict:
        """Recursively merge loaded config with defaults."""
        result = copy.deepcopy(default)
        for key, value in loaded.items():
            if key in result and isinstance(result[key], dict) and isinstance(value, dict):
                result[key] = self._merge_config(result[key], value)
            else:
                if key not in result:
                    logger.warning("Unknown configuration key %r ignored by the lab", key)
                result[key] = value
        return result

    def get(self, section: str, key: str = None) -> Any:
        """Get configuration value."""
        if key is None:
            return self.config.get(section, {})
        return self.config.get(section, {}).get(key)

    def set(self, section: str, key: str, value: Any) -> None:
        """Set configuration value (in memory)."""
        if section not in self.config:
            self.config[section] = {}
        self.config[section][key] = value

    def get_numerics(self) -> Dict[str, Any]:
        return self.config["numerics"]

    def get_sampling(self) -> Dict[str, Any]:
        return self.config["sampling"]
