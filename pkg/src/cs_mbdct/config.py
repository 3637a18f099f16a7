"""Experiment configuration: a JSON file, dotted-key overrides and validation.

Every knob has a default; the keys below are the complete set.

data.images / data.labels       IDX image and label files (optionally .gz)
data.train_count / test_count   contiguous split: first train_count images
                                train, the following test_count test
data.train_subsample / test_subsample
                                optional seeded subsample of each split
rates                           measurement rates, each in (0, 1]
seed                            one seed for every random choice
sensing.matrix                  optional PSIMAT file replacing the random
                                matrix; ``{rate}`` in the path is expanded
descriptor.block_sizes / energy_level / coeff_counts / stride
dictionary.k / sample_size / max_iters
classifier.k_grid / folds
features                        optional FEAT file of external features,
                                one row per image of the data files;
                                ``{rate}`` is expanded
out                             output directory
backend                         numba | numpy | null (environment default)
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path

from .descriptor import DEFAULT_BLOCK_SIZES, ENERGY_FRACTIONS
from .errors import ConfigError

DEFAULTS = {
    "data": {
        "images": None,
        "labels": None,
        "train_count": 50000,
        "test_count": 10000,
        "train_subsample": None,
        "test_subsample": None,
    },
    "rates": [0.25, 0.10, 0.05, 0.01],
    "seed": 0,
    "sensing": {"matrix": None},
    "descriptor": {
        "block_sizes": list(DEFAULT_BLOCK_SIZES),
        "energy_level": "E100",
        "coeff_counts": None,
        "stride": 2,
    },
    "dictionary": {"k": 512, "sample_size": 100, "max_iters": 100},
    "classifier": {"k_grid": [1, 3, 5, 7, 9, 11], "folds": 5},
    "features": None,
    "out": "runs/default",
    "backend": None,
}


def _merge(base: dict, update: dict, prefix: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in update.items():
        name = f"{prefix}{key}"
        if key not in base:
            raise ConfigError(f"unknown config key {name!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{name!r} must be a mapping")
            out[key] = _merge(base[key], value, name + ".")
        else:
            out[key] = value
    return out


def parse_override(text: str) -> tuple[list[str], object]:
    """``a.b=value``; the value is read as JSON, falling back to a plain string."""
    key, sep, raw = text.partition("=")
    if not sep or not key.strip():
        raise ConfigError(f"override {text!r} is not key=value")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip().split("."), value


def apply_override(tree: dict, path: list[str], value) -> dict:
    tree = copy.deepcopy(tree)
    node = tree
    for i, part in enumerate(path):
        if not isinstance(node, dict) or part not in node:
            raise ConfigError(f"unknown config key {'.'.join(path[:i + 1])!r}")
        if i == len(path) - 1:
            if isinstance(node[part], dict):
                raise ConfigError(f"{'.'.join(path)!r} is a section, not a value")
            node[part] = value
        else:
            node = node[part]
    return tree


def parse_rates(text: str) -> list[float]:
    try:
        return [float(r) for r in text.split(",") if r.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad rate list {text!r}") from exc


@dataclass(frozen=True)
class ExperimentConfig:
    tree: dict
    base_dir: Path = Path(".")

    @classmethod
    def from_dict(cls, data: dict | None = None, base_dir=".") -> ExperimentConfig:
        return cls(_merge(DEFAULTS, data or {}), Path(base_dir))

    @classmethod
    def load(cls, path) -> ExperimentConfig:
        path = Path(path)
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be a mapping")
        # relative paths in the file are relative to the file
        return cls.from_dict(data, path.parent)

    def with_overrides(self, overrides=()) -> ExperimentConfig:
        tree = self.tree
        for item in overrides:
            path, value = parse_override(item) if isinstance(item, str) else item
            tree = apply_override(tree, path, value)
        return ExperimentConfig(tree, self.base_dir)

    def get(self, dotted: str):
        node = self.tree
        for part in dotted.split("."):
            node = node[part]
        return node

    def path(self, dotted: str, rate: float | None = None) -> Path | None:
        """Resolve a path-valued key, expanding ``{rate}``."""
        value = self.get(dotted)
        if value is None:
            return None
        text = str(value)
        if rate is not None:
            text = text.replace("{rate}", format_rate(rate))
        p = Path(text)
        return p if p.is_absolute() else self.base_dir / p

    @property
    def rates(self) -> list[float]:
        return [float(r) for r in self.tree["rates"]]

    @property
    def out_dir(self) -> Path:
        return self.path("out")

    def validate(self) -> ExperimentConfig:
        t = self.tree
        rates = t["rates"]
        if not isinstance(rates, list) or not rates:
            raise ConfigError("rates must be a non-empty list")
        for r in rates:
            if isinstance(r, bool) or not isinstance(r, (int, float)) or not 0.0 < r <= 1.0:
                raise ConfigError(f"measurement rate {r!r} outside (0, 1]")
        if len(set(self.rates)) != len(rates):
            raise ConfigError("duplicate measurement rates")
        for key in ("seed", "data.train_count", "data.test_count", "descriptor.stride",
                    "dictionary.k", "dictionary.sample_size", "dictionary.max_iters",
                    "classifier.folds"):
            v = self.get(key)
            if isinstance(v, bool) or not isinstance(v, int) or v < 0:
                raise ConfigError(f"{key} must be a non-negative integer, got {v!r}")
        for key in ("descriptor.stride", "dictionary.k", "dictionary.sample_size",
                    "dictionary.max_iters", "data.train_count", "data.test_count"):
            if self.get(key) < 1:
                raise ConfigError(f"{key} must be >= 1")
        if t["classifier"]["folds"] < 2:
            raise ConfigError("classifier.folds must be >= 2")
        ks = t["classifier"]["k_grid"]
        if not ks or any(isinstance(k, bool) or not isinstance(k, int) or k < 1 for k in ks):
            raise ConfigError("classifier.k_grid must be positive integers")
        for key in ("data.train_subsample", "data.test_subsample"):
            v = self.get(key)
            if v is not None and (isinstance(v, bool) or not isinstance(v, int) or v < 1):
                raise ConfigError(f"{key} must be a positive integer or null")
        if t["descriptor"]["energy_level"] not in ENERGY_FRACTIONS:
            raise ConfigError(f"unknown energy level {t['descriptor']['energy_level']!r}")
        if t["backend"] not in (None, "numba", "numpy"):
            raise ConfigError(f"unknown backend {t['backend']!r}")
        for key in ("data.images", "data.labels"):
            if self.get(key) is None:
                raise ConfigError(f"{key} is required")
        files = [self.path("data.images"), self.path("data.labels")]
        for key in ("sensing.matrix", "features"):
            if self.get(key) is not None:
                files += [self.path(key, r) for r in self.rates]
        for f in files:
            if not f.is_file():
                raise ConfigError(f"file not found: {f}")
        return self

    def to_json(self) -> str:
        return json.dumps(self.tree, indent=2, sort_keys=True)


def format_rate(rate: float) -> str:
    """Shortest text that reads back to the same float, e.g. 0.25, 0.1, 1.0."""
    return repr(float(rate))
