"""Configuration management for chatterkit runs."""
import copy
import hashlib
import os
from pathlib import Path
from typing import Any

import yaml

from .errors import InvalidConfiguration

THREADS_ENV = "CHATTERKIT_THREADS"

DEFAULT_CONFIG = {
    "seed": 0,
    "workers": -1,
    "paths": {
        "corpus_spec": "corpus.yaml",
        "data_dir": "data/raw",
        "preprocessed_dir": "data/preprocessed",
        "features_dir": "features",
        "report_dir": "report",
    },
    "preprocess": {
        "order": 100,
        # fraction of the target sampling rate
        "cutoff_fraction": 0.45,
    },
    "fpa": {
        "n_peaks": 2,
        "alpha_fft": 0.1,
        "alpha_psd": 0.1,
        "alpha_acf": 0.5,
        "mpd_fft": 500.0,
        "mpd_psd": 500.0,
        "mpd_acf": 500.0,
        "acf_max_lag": None,
    },
    "wpt": {
        "level": 4,
        "wavelet": "db4",
        "packet": "table",
        "table": {
            "turning-5.08cm": 3,
            "turning-6.35cm": 4,
            "turning-8.89cm": 6,
            "turning-11.43cm": 10,
            "milling": 3,
        },
    },
    "eemd": {
        "ensemble_size": 100,
        "noise_std_fraction": 0.2,
        "sd_threshold": 0.25,
        "max_sift": 50,
        "max_imfs": 10,
        "sample_size": 5,
    },
    "dtw": {
        "window_fraction": 0.1,
        "slope_p": 1.0,
        "normalize": True,
        "stride": 1,
        "knn_ks": [1, 2, 3, 4, 5],
    },
    "tda": {
        "max_points": 400,
        "fnn_threshold": 0.02,
        "max_dimension": 10,
        "sigma": 0.1,
        "pixel_size": 0.1,
        "landscape_k": 1,
        "template_nodes": 5,
        "padding": 0.1,
        "cc_subset_search": False,
    },
    "learn": {
        # per-classifier hyperparameter overrides, e.g. svm: {C: 10}
        "lr": {},
        "svm": {},
        "rf": {},
        "gb": {},
        "mlp": {},
    },
    "synth": {
        "seed": 0,
    },
    "split": {
        "seeds": [0, 1, 2, 3, 4, 5, 6, 7, 8, 9],
        "train_fraction": 0.67,
        "test_fraction": 0.70,
        "stratify": False,
    },
    "transfer": {
        "featurizers": ["wpt", "eemd", "fpa", "tda_cc", "tda_pi", "tda_pl", "tda_tf", "dtw"],
        "include_traditional": False,
        "band": "std",
        "method_groups": {
            "time_frequency": ["wpt", "eemd", "fpa"],
            "tda": ["tda_cc", "tda_pi", "tda_pl", "tda_tf"],
            "dtw": ["dtw"],
        },
        "classifiers": {
            "wpt": ["lr", "svm", "rf", "gb"],
            "eemd": ["lr", "svm", "rf", "gb"],
            "fpa": ["lr", "svm", "rf", "gb"],
            "tda_cc": ["lr", "svm", "rf", "gb", "mlp"],
            "tda_pi": ["lr", "svm", "rf", "gb", "mlp"],
            "tda_pl": ["lr", "svm", "rf", "gb", "mlp"],
            "tda_tf": ["lr", "svm", "rf", "gb", "mlp"],
            "dtw": ["knn"],
        },
    },
}


def _deep_merge(base: dict[str, Any], override: dict[str, Any]) -> None:
    for key, value in override.items():
        if isinstance(base.get(key), dict) and isinstance(value, dict):
            _deep_merge(base[key], value)
        else:
            base[key] = value


class Config:
    """Configuration container."""

    def __init__(self, config_path: str | Path | None = None):
        self._config = copy.deepcopy(DEFAULT_CONFIG)
        self._config_path = config_path

        if config_path:
            self.load(config_path)
        else:
            self._try_load_default()

    def _try_load_default(self) -> None:
        """Try to load config from default locations."""
        locations = [
            Path.cwd() / "config.yaml",
            Path.home() / ".config" / "chatterkit" / "config.yaml",
            Path(__file__).parent.parent / "config.yaml",
        ]

        for path in locations:
            if path.exists():
                self.load(path)
                return

    def load(self, path: str | Path) -> None:
        """Load configuration from a YAML file."""
        path = Path(path)
        if not path.exists():
            raise InvalidConfiguration(f"config file not found: {path}")
        with open(path) as f:
            try:
                user_config = yaml.safe_load(f) or {}
            except yaml.YAMLError as exc:
                raise InvalidConfiguration(f"{path}: {exc}") from exc
        if not isinstance(user_config, dict):
            raise InvalidConfiguration(f"{path}: top level must be a mapping")
        self.update(user_config)
        self._config_path = path

    def update(self, overrides: dict[str, Any]) -> None:
        """Deep merge overrides into the current values."""
        _deep_merge(self._config, overrides)

    def save(self, path: str | Path | None = None) -> None:
        """Save configuration to a YAML file."""
        path = Path(path) if path else self._config_path
        if path:
            path = Path(path)
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, "w") as f:
                yaml.safe_dump(self._config, f, default_flow_style=False, sort_keys=True)

    def digest(self) -> str:
        """SHA-256 of the canonical YAML dump; identifies every artifact of a run."""
        canonical = yaml.safe_dump(self._config, default_flow_style=False, sort_keys=True)
        return hashlib.sha256(canonical.encode()).hexdigest()

    def as_dict(self) -> dict[str, Any]:
        return copy.deepcopy(self._config)

    @property
    def path(self) -> Path | None:
        return Path(self._config_path) if self._config_path else None

    @property
    def seed(self) -> int:
        return int(self._config["seed"])

    @property
    def paths(self) -> dict[str, str]:
        return self._config["paths"]

    @property
    def preprocess(self) -> dict[str, Any]:
        return self._config["preprocess"]

    @property
    def fpa(self) -> dict[str, Any]:
        return self._config["fpa"]

    @property
    def wpt(self) -> dict[str, Any]:
        return self._config["wpt"]

    @property
    def eemd(self) -> dict[str, Any]:
        return self._config["eemd"]

    @property
    def dtw(self) -> dict[str, Any]:
        return self._config["dtw"]

    @property
    def tda(self) -> dict[str, Any]:
        return self._config["tda"]

    @property
    def learn(self) -> dict[str, Any]:
        return self._config["learn"]

    @property
    def synth(self) -> dict[str, Any]:
        return self._config["synth"]

    @property
    def split(self) -> dict[str, Any]:
        return self._config["split"]

    @property
    def transfer(self) -> dict[str, Any]:
        return self._config["transfer"]

    def __getitem__(self, key: str) -> Any:
        return self._config[key]

    def get(self, key: str, default: Any = None) -> Any:
        return self._config.get(key, default)


def worker_count(config: "Config | None" = None) -> int:
    """Number of joblib workers; CHATTERKIT_THREADS caps the configured value."""
    configured = int((config or get_config()).get("workers", -1))
    env = os.environ.get(THREADS_ENV)
    if env is None or not env.strip():
        return configured
    try:
        cap = int(env)
    except ValueError as exc:
        raise InvalidConfiguration(f"{THREADS_ENV} must be a positive integer, got {env!r}") from exc
    if cap < 1:
        raise InvalidConfiguration(f"{THREADS_ENV} must be a positive integer, got {env!r}")
    if configured < 1:
        return cap
    return min(configured, cap)


# Global config instance
_config: Config | None = None


def get_config() -> Config:
    """Get the global config instance."""
    global _config
    if _config is None:
        _config = Config()
    return _config


def init_config(config_path: str | Path | None = None) -> Config:
    """Initialize the global config with a specific path."""
    global _config
    _config = Config(config_path)
    return _config
