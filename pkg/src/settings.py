"""Experiment settings persisted as JSON or flat key=value files."""

import copy
import json
import os
from pathlib import Path
from typing import Any

from src.attention import parse_extractors
from src.experiment import ExperimentConfig


def worker_count() -> int:
    """Worker threads: YODA_THREADS if set, else the CPU count.

    Raises:
        ValueError: If YODA_THREADS is not a positive integer
    """
    raw = os.environ.get("YODA_THREADS")
    if raw is None:
        return os.cpu_count() or 1
    try:
        value = int(raw)
    except ValueError:
        value = 0
    if value < 1:
        raise ValueError(f"YODA_THREADS must be a positive integer, got {raw!r}")
    return value


def _parse_value(text: str) -> Any:
    """JSON literal if it parses (numbers, lists, booleans), else the raw string."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


class Settings:
    """Manage experiment settings persisted as JSON or flat key=value lines."""

    DEFAULT_SETTINGS = {
        "data_dir": "data",
        "output_dir": "runs/experiment",
        "scale": 4,
        "modes": ["yoda", "full"],
        "attention": {
            "extractors": "edge",
            "aggregation": "max",
            "lower_bound": 0.2,
        },
        "diffusion": {
            "T_train": 100,
            "T_eval": 100,
            "beta_start": 1e-4,
            "beta_end": 0.02,
        },
        "training": {
            "iterations": 300,
            "batch_size": 2,
            "learning_rate": 1e-3,
            "weight_decay": 1e-4,
            "hidden": 32,
            "holdout_fraction": 0.25,
        },
        "seeds": {
            "train": 0,
            "sample": 1,
        },
    }

    def __init__(self, config_path: Path | str | None = None):
        """Initialize Settings.

        Args:
            config_path: Path to config file. Defaults to yoda.json in current dir.
        """
        if config_path is None:
            config_path = Path.cwd() / "yoda.json"
        self.config_path = Path(config_path)
        self._settings = self._load()

    def _load(self) -> dict:
        """Load settings from file or create defaults.

        A ``.json`` file holds the nested settings; any other file is read as
        flat ``key=value`` lines with dot-notation keys.

        Returns:
            Settings dictionary
        """
        if self.config_path.exists():
            if self._is_json:
                with open(self.config_path) as f:
                    return json.load(f)
            self._settings = copy.deepcopy(self.DEFAULT_SETTINGS)
            self._read_flat()
            return self._settings
        settings = copy.deepcopy(self.DEFAULT_SETTINGS)
        self._settings = settings
        self.save()
        return settings

    @property
    def _is_json(self) -> bool:
        return self.config_path.suffix.lower() == ".json"

    def _read_flat(self) -> None:
        """Apply ``key=value`` lines; blank lines and ``#`` comments are skipped.

        Raises:
            ValueError: If a line has no ``=``
            KeyError: If a key does not exist
        """
        for number, raw in enumerate(self.config_path.read_text().splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ValueError(f"{self.config_path}:{number}: expected key=value, got {line!r}")
            self.set(key.strip(), _parse_value(value.strip()))

    def _flat_items(self) -> list[tuple[str, Any]]:
        items = []
        for key, value in self._settings.items():
            if isinstance(value, dict):
                items.extend((f"{key}.{child}", v) for child, v in value.items())
            else:
                items.append((key, value))
        return items

    def save(self) -> None:
        """Persist settings as JSON or flat key=value lines, by file suffix."""
        self.config_path.parent.mkdir(parents=True, exist_ok=True)
        if self._is_json:
            with open(self.config_path, "w") as f:
                json.dump(self._settings, f, indent=2)
            return
        lines = [
            f"{key}={value if isinstance(value, str) else json.dumps(value)}"
            for key, value in self._flat_items()
        ]
        self.config_path.write_text("\n".join(lines) + "\n")

    def _parent(self, key: str) -> tuple[dict, str]:
        if "." not in key:
            if key not in self._settings:
                raise KeyError(f"Setting key not found: {key}")
            return self._settings, key
        parent_key, child_key = key.split(".", 1)
        if parent_key not in self._settings:
            raise KeyError(f"Setting key not found: {parent_key}")
        parent = self._settings[parent_key]
        if not isinstance(parent, dict):
            raise KeyError(f"Setting key is not nested: {parent_key}")
        if child_key not in parent:
            raise KeyError(f"Setting key not found: {key}")
        return parent, child_key

    def get(self, key: str) -> Any:
        """Get setting value.

        Args:
            key: Setting key, supports dot notation for nested values (e.g., "seeds.train")

        Returns:
            Setting value

        Raises:
            KeyError: If key does not exist
        """
        parent, child = self._parent(key)
        return parent[child]

    def set(self, key: str, value: Any) -> None:
        """Set setting value.

        Args:
            key: Setting key, supports dot notation for nested values (e.g., "seeds.train")
            value: New value

        Raises:
            KeyError: If key does not exist
        """
        parent, child = self._parent(key)
        parent[child] = value

    def apply_overrides(self, overrides: dict[str, Any]) -> None:
        """Set every key whose override is not None (command-line flags win)."""
        for key, value in overrides.items():
            if value is not None:
                self.set(key, value)

    def to_experiment_config(
        self, workers: int | None = None, progress: bool = False
    ) -> ExperimentConfig:
        """Validate the settings and build an ExperimentConfig.

        Raises:
            KeyError: If a required key is missing
            ValueError: If a value is out of range
            DataError: If the data directory does not exist
        """
        aggregation = self.get("attention.aggregation")
        modes = self.get("modes")
        if isinstance(modes, str):
            modes = [m.strip() for m in modes.split(",") if m.strip()]
        return ExperimentConfig(
            data_dir=Path(self.get("data_dir")).expanduser(),
            output_dir=Path(self.get("output_dir")).expanduser(),
            scale=int(self.get("scale")),
            extractors=parse_extractors(self.get("attention.extractors")),
            aggregation=aggregation,
            T_train=int(self.get("diffusion.T_train")),
            T_eval=int(self.get("diffusion.T_eval")),
            lower_bound=float(self.get("attention.lower_bound")),
            train_seed=int(self.get("seeds.train")),
            sample_seed=int(self.get("seeds.sample")),
            modes=tuple(modes),
            iterations=int(self.get("training.iterations")),
            batch_size=int(self.get("training.batch_size")),
            learning_rate=float(self.get("training.learning_rate")),
            weight_decay=float(self.get("training.weight_decay")),
            hidden=int(self.get("training.hidden")),
            beta_start=float(self.get("diffusion.beta_start")),
            beta_end=float(self.get("diffusion.beta_end")),
            holdout_fraction=float(self.get("training.holdout_fraction")),
            workers=worker_count() if workers is None else workers,
            progress=progress,
        )
