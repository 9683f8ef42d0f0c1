"""
Configuration management for the federated shuffling simulator.
"""

import os
import copy
import yaml
from pathlib import Path
from dotenv import load_dotenv

# Load environment variables
load_dotenv()

PROJECT_ROOT = Path(__file__).resolve().parents[2]


class Config:
    """Application settings: YAML file merged over defaults, then environment overrides."""

    def __init__(self, config_path=None):
        self.config_path = Path(
            config_path or os.getenv('FEDSHUFFLE_SETTINGS', PROJECT_ROOT / 'config' / 'settings.yaml')
        )
        self.config = self._load_config()
        self._apply_environment()

    def _load_config(self):
        """Load configuration from YAML file."""
        config = self._default_config()
        try:
            with open(self.config_path, 'r') as file:
                loaded = yaml.safe_load(file) or {}
        except FileNotFoundError:
            # Return default configuration if file not found
            return config

        for section, values in loaded.items():
            if isinstance(values, dict):
                config.setdefault(section, {}).update(values)
            else:
                config[section] = values
        return config

    def _default_config(self):
        """Default configuration."""
        return copy.deepcopy({
            'simulation': {
                'parallel_clients': False,
                'max_workers': 4,
                'divergence_threshold': 1e100
            },
            'theory': {
                'enumeration_limit': 720,
                'lemma4_delta_squared': 0.125,
                'target_accuracy': 1e-6
            },
            'io': {
                'max_features': 100000,
                'max_dense_entries': 50000000,
                'float_format': '%.17g'
            },
            'output': {
                'directory': 'results'
            },
            'logging': {
                'level': 'INFO',
                'format': '%(asctime)s - %(name)s - %(levelname)s - %(message)s',
                'file': None
            }
        })

    def _apply_environment(self):
        """Override selected settings from environment variables."""
        if os.getenv('FEDSHUFFLE_LOG_LEVEL'):
            self.config['logging']['level'] = os.getenv('FEDSHUFFLE_LOG_LEVEL').upper()
        if os.getenv('FEDSHUFFLE_MAX_WORKERS'):
            self.config['simulation']['max_workers'] = int(os.getenv('FEDSHUFFLE_MAX_WORKERS'))
        if os.getenv('FEDSHUFFLE_PARALLEL') is not None:
            self.config['simulation']['parallel_clients'] = os.getenv('FEDSHUFFLE_PARALLEL') not in ('0', 'false', 'False', '')

    @property
    def simulation_config(self):
        """Get simulation configuration."""
        return self.config.get('simulation', {})

    @property
    def theory_config(self):
        """Get theory configuration."""
        return self.config.get('theory', {})

    @property
    def io_config(self):
        """Get parsing and output-format configuration."""
        return self.config.get('io', {})

    @property
    def output_config(self):
        """Get output configuration."""
        return self.config.get('output', {})

    @property
    def logging_config(self):
        """Get logging configuration."""
        return self.config.get('logging', {})
