"""Flat ``key = value`` run configuration with dotted section prefixes.

The format needs no parser dependencies: one assignment per line, ``#`` for
comments, comma-separated lists, corruption entries written ``kind:severity``.
Unknown keys are rejected so typos fail loudly at parse time.
"""

from __future__ import annotations

from pathlib import Path

from .adaptation import AdaptConfig
from .datagen import CorruptionSpec, DatasetSpec
from .exceptions import ConfigError

KNOWN_KEYS = {
    "seed", "out",
    "dataset.input_dim", "dataset.n_classes", "dataset.n_queries",
    "dataset.train_samples", "dataset.test_samples", "dataset.separation",
    "dataset.seed",
    "model.hidden_dims", "model.epochs", "model.lr", "model.batch_size",
    "model.bn_momentum", "model.seed",
    "adapt.eta_stage1", "adapt.eta_stage2", "adapt.alpha", "adapt.phi_init",
    "adapt.n_stage1", "adapt.n_stage2", "adapt.stream_samples",
    "adapt.method", "adapt.corruption",
    "ema.momentum", "tent.lr",
    "compare.methods", "compare.corruptions",
    "scan.corruption",
}

METHOD_NAMES = ("frozen", "adabn", "ema", "tent", "learnable-bn")


def parse_config_text(text: str) -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in KNOWN_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = value
    return values


class RunConfig:
    """Typed view over a parsed config with package defaults filled in."""

    def __init__(self, values: dict[str, str], seed: int | None = None,
                 out: str | None = None):
        self._values = values
        self.seed = seed if seed is not None else self._int("seed", 42)
        self.out = out if out is not None else values.get("out")

    # -- low-level typed getters ------------------------------------------

    def _get(self, key, default=None):
        return self._values.get(key, default)

    def _int(self, key, default):
        raw = self._values.get(key)
        if raw is None:
            return default
        try:
            return int(raw)
        except ValueError as exc:
            raise ConfigError(f"{key} must be an integer, got {raw!r}") from exc

    def _float(self, key, default):
        raw = self._values.get(key)
        if raw is None:
            return default
        try:
            return float(raw)
        except ValueError as exc:
            raise ConfigError(f"{key} must be a number, got {raw!r}") from exc

    def _int_or_none(self, key):
        raw = self._values.get(key)
        return None if raw in (None, "") else self._int(key, None)

    def _list(self, key, default):
        raw = self._values.get(key)
        if raw is None:
            return list(default)
        return [item.strip() for item in raw.split(",") if item.strip()]

    # -- section views -----------------------------------------------------

    def dataset_spec(self) -> DatasetSpec:
        return DatasetSpec(
            input_dim=self._int("dataset.input_dim", 20),
            n_classes=self._int("dataset.n_classes", 5),
            n_queries=self._int("dataset.n_queries", 4),
            train_samples=self._int("dataset.train_samples", 2048),
            test_samples=self._int("dataset.test_samples", 512),
            separation=self._float("dataset.separation", 4.0),
            seed=self._int("dataset.seed", self.seed),
        )

    def model_params(self) -> dict:
        hidden = self._list("model.hidden_dims", ["32", "16"])
        try:
            hidden_dims = tuple(int(h) for h in hidden)
        except ValueError as exc:
            raise ConfigError("model.hidden_dims must be a list of integers") from exc
        return {
            "hidden_dims": hidden_dims,
            "epochs": self._int("model.epochs", 40),
            "lr": self._float("model.lr", 0.1),
            "batch_size": self._int("model.batch_size", 32),
            "bn_momentum": self._float("model.bn_momentum", 0.1),
            "seed": self._int("model.seed", self.seed),
        }

    def adapt_config(self) -> AdaptConfig:
        try:
            return AdaptConfig(
                eta_stage1=self._float("adapt.eta_stage1", 8.0),
                eta_stage2=self._float("adapt.eta_stage2", 80.0),
                alpha=self._float("adapt.alpha", 0.1),
                phi_init=self._float("adapt.phi_init", 1e-5),
                n_stage1=self._int_or_none("adapt.n_stage1"),
                n_stage2=self._int_or_none("adapt.n_stage2"),
                seed=self.seed,
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def stream_samples(self) -> int:
        return self._int("adapt.stream_samples", 200)

    @property
    def adapt_method(self) -> str:
        method = self._get("adapt.method", "learnable-bn")
        if method not in METHOD_NAMES:
            raise ConfigError(f"unknown method {method!r}")
        return method

    @property
    def ema_momentum(self) -> float:
        return self._float("ema.momentum", 0.1)

    @property
    def tent_lr(self) -> float:
        return self._float("tent.lr", 1e-3)

    def _corruption(self, token: str, index: int) -> CorruptionSpec:
        if ":" in token:
            kind, severity = token.split(":", 1)
        else:
            kind, severity = token, "hard"
        try:
            return CorruptionSpec(kind=kind.strip(), severity=severity.strip(),
                                  seed=self.seed + index)
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    @property
    def adapt_corruption(self) -> CorruptionSpec:
        return self._corruption(self._get("adapt.corruption", "mean-shift:hard"), 0)

    @property
    def scan_corruption(self) -> CorruptionSpec:
        return self._corruption(self._get("scan.corruption", "saturate-clip:mid"), 0)

    @property
    def compare_methods(self) -> list[str]:
        methods = self._list("compare.methods", METHOD_NAMES)
        for m in methods:
            if m not in METHOD_NAMES:
                raise ConfigError(f"unknown method {m!r}")
        return methods

    @property
    def compare_corruptions(self) -> list[CorruptionSpec]:
        tokens = self._list(
            "compare.corruptions",
            ["mean-shift:easy", "mean-shift:mid", "mean-shift:hard",
             "gaussian-noise:easy", "gaussian-noise:mid", "gaussian-noise:hard"])
        return [self._corruption(tok, i) for i, tok in enumerate(tokens)]


def load_run_config(path, seed: int | None = None, out: str | None = None) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return RunConfig(parse_config_text(text), seed=seed, out=out)
