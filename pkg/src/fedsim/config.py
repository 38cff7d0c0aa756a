"""Flat key = value experiment configuration.

Files hold one ``dotted.key = value`` pair per line; ``#`` starts a comment
line; sections are expressed by the dotted prefix. Values are typed by a
fixed schema, unknown keys are rejected, and the resolved configuration
serializes back to text that re-parses to the identical configuration
(the round-trip invariant behind config.echo files).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

from .errors import ConfigError, DataFormatError

REQUIRED = object()

STRATEGY_KINDS = ("fedsgd", "fedavg", "fedprox", "scaffold", "fedadmm")
# Step size eta_t = |S^t| / m, the setting under which the server tracks the
# mean augmented model exactly.
ETA_TRACKING = "tracking"

# Keys that do not change what is computed per round (seed is carried in the
# run directory name instead).
HASH_EXCLUDED = ("seed", "workers", "output.root")


@dataclass(frozen=True)
class Field:
    key: str
    kind: str  # int | float | bool | str | eta | optfloat | schedule
    default: object = REQUIRED
    choices: tuple = ()
    minv: float | None = None
    exclusive: bool = False  # minv is an exclusive bound
    help: str = ""


SCHEMA: list[Field] = [
    Field("strategy.kind", "str", choices=STRATEGY_KINDS, help="optimization strategy"),
    Field("strategy.rho", "float", 0.01, minv=0.0, help="consensus/proximal penalty"),
    Field("strategy.eta", "eta", 1.0, help="server gathering step (number or 'tracking')"),
    Field("strategy.server_lr", "optfloat", None, minv=0.0, exclusive=True,
          help="fedsgd server step / scaffold global step (defaults 0.1 / 1.0)"),
    Field("strategy.client_lr", "float", 0.1, minv=0.0, exclusive=True),
    Field("strategy.epochs", "int", 5, minv=1, help="max local epochs E"),
    Field("strategy.batch_size", "int", 0, minv=0, help="0 = full batch"),
    Field("strategy.solver", "str", "sgd", choices=("sgd", "exact")),
    Field("strategy.dual_frozen", "bool", False, help="pin duals at zero (fedprox reduction)"),
    Field("strategy.freeze_controls", "bool", False, help="scaffold: suppress control variates"),
    Field("clients.count", "int", minv=1),
    Field("clients.fraction", "float", 0.1, minv=0.0, exclusive=True),
    Field("clients.sampling", "str", "uniform", choices=("uniform", "bernoulli")),
    Field("rounds", "int", minv=1),
    Field("seed", "int", 1),
    Field("heterogeneity", "bool", True, help="draw local epochs ~ U[1, E] where supported"),
    Field("target_accuracy", "optfloat", None, minv=0.0, exclusive=True),
    Field("workers", "int", 1, minv=1),
    Field("init.scale", "float", 0.01, minv=0.0, exclusive=True),
    Field("data.source", "str", choices=("quadratic", "synthetic", "idx", "cifar")),
    Field("data.seed", "int", 0, help="world seed: dataset, partition, model init"),
    Field("data.dim", "int", 50, minv=1, help="feature dim (synthetic) / model dim (quadratic)"),
    Field("data.classes", "int", 10, minv=1),
    Field("data.per_class", "int", 1000, minv=1),
    Field("data.test_per_class", "int", 0, minv=0, help="0 = per_class // 4"),
    Field("data.separation", "float", 3.0, minv=0.0),
    Field("data.curvature_min", "float", 0.5, minv=0.0, exclusive=True),
    Field("data.curvature_max", "float", 2.0, minv=0.0, exclusive=True),
    Field("data.center_scale", "float", 1.0, minv=0.0),
    Field("data.train_images", "str", ""),
    Field("data.train_labels", "str", ""),
    Field("data.test_images", "str", ""),
    Field("data.test_labels", "str", ""),
    Field("data.train_bins", "str", "", help="comma-separated CIFAR batch files"),
    Field("data.test_bin", "str", ""),
    Field("model.kind", "str", "logistic", choices=("logistic", "smallnet")),
    Field("model.hidden", "int", 32, minv=1),
    Field("model.lambda", "float", 0.0, minv=0.0),
    Field("model.declared_lipschitz", "float", 10.0, minv=0.0, exclusive=True),
    Field("partition.scheme", "str", "iid", choices=("iid", "shards", "imbalanced")),
    Field("partition.shards_per_client", "int", 2, minv=1),
    Field("partition.total_shards", "int", 0, minv=0),
    Field("schedule.eta", "schedule", ()),
    Field("schedule.rho", "schedule", ()),
    Field("verify.enabled", "bool", False),
    Field("verify.virtual", "bool", True,
          help="measure hypothetical solves of inactive clients too"),
    Field("output.root", "str", ""),
]

FIELDS = {f.key: f for f in SCHEMA}


def _parse_schedule(text: str, key: str) -> tuple:
    if not text:
        return ()
    steps = []
    for item in text.split(","):
        try:
            r, v = item.split(":")
            steps.append((int(r), float(v)))
        except ValueError as exc:
            raise ConfigError(
                f"{key}: bad schedule entry '{item}' (want round:value)"
            ) from exc
        if steps[-1][0] < 1:
            raise ConfigError(f"{key}: schedule rounds are 1-based")
    steps.sort()
    if len({r for r, _ in steps}) != len(steps):
        raise ConfigError(f"{key}: duplicate schedule round")
    return tuple(steps)


def _parse_value(field: Field, text: str):
    text = text.strip()
    try:
        if field.kind == "int":
            return int(text)
        if field.kind == "float":
            return float(text)
        if field.kind == "bool":
            if text in ("true", "false"):
                return text == "true"
            raise ValueError("want true or false")
        if field.kind == "str":
            return text
        if field.kind == "eta":
            return ETA_TRACKING if text == ETA_TRACKING else float(text)
        if field.kind == "optfloat":
            return None if text == "none" else float(text)
        if field.kind == "schedule":
            return _parse_schedule(text, field.key)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"{field.key}: cannot parse '{text}' as {field.kind}") from exc
    raise ConfigError(f"unhandled field kind {field.kind}")


def _format_value(field: Field, value) -> str:
    if field.kind == "bool":
        return "true" if value else "false"
    if field.kind == "schedule":
        return ",".join(f"{r}:{v!r}" for r, v in value)
    if field.kind == "optfloat":
        return "none" if value is None else repr(float(value))
    if field.kind == "eta":
        return value if value == ETA_TRACKING else repr(float(value))
    if field.kind == "float":
        return repr(float(value))
    return str(value)


def _check_range(field: Field, value):
    if field.choices and value not in field.choices:
        raise ConfigError(f"{field.key}: '{value}' not in {field.choices}")
    if field.minv is not None and isinstance(value, (int, float)) and not isinstance(value, bool):
        if field.exclusive and value <= field.minv:
            raise ConfigError(f"{field.key}: must be > {field.minv:g}, got {value!r}")
        if not field.exclusive and value < field.minv:
            raise ConfigError(f"{field.key}: must be >= {field.minv:g}, got {value!r}")


class Config:
    """Resolved, validated experiment configuration."""

    def __init__(self, values: dict):
        self._values = dict(values)

    def __getitem__(self, key: str):
        try:
            return self._values[key]
        except KeyError:
            raise ConfigError(f"unknown config key '{key}'") from None

    def get(self, key: str, default=None):
        return self._values.get(key, default)

    def items(self):
        return self._values.items()

    def with_overrides(self, overrides: dict) -> "Config":
        """New Config with typed values swapped in for the given dotted keys."""
        vals = dict(self._values)
        for key, value in overrides.items():
            if key not in FIELDS:
                raise ConfigError(f"unknown config key '{key}'")
            vals[key] = value
        return resolve({k: _format_value(FIELDS[k], v) for k, v in vals.items()})

    def serialize(self) -> str:
        lines = [f"{f.key} = {_format_value(f, self._values[f.key])}" for f in SCHEMA]
        return "\n".join(lines) + "\n"

    def hash(self) -> str:
        lines = [
            f"{f.key}={_format_value(f, self._values[f.key])}"
            for f in SCHEMA
            if f.key not in HASH_EXCLUDED
        ]
        return hashlib.sha256("\n".join(lines).encode()).hexdigest()[:10]

    def run_name(self) -> str:
        return f"{self.hash()}-s{self['seed']}"

    def __eq__(self, other):
        return isinstance(other, Config) and self._values == other._values


def parse_text(text: str) -> dict[str, str]:
    """Raw key -> value strings from flat config text."""
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got '{stripped}'")
        key, _, value = stripped.partition("=")
        key = key.strip()
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key '{key}'")
        raw[key] = value.strip()
    return raw


def resolve(raw: dict[str, str], overrides: dict[str, str] | None = None) -> Config:
    """Typed, defaulted, validated Config from raw strings plus overrides."""
    merged = dict(raw)
    merged.update(overrides or {})
    unknown = sorted(set(merged) - set(FIELDS))
    if unknown:
        raise ConfigError(f"unknown config key '{unknown[0]}'")

    values: dict = {}
    for field in SCHEMA:
        if field.key in merged:
            value = _parse_value(field, merged[field.key])
        elif field.default is REQUIRED:
            raise ConfigError(f"missing required config key '{field.key}'")
        else:
            value = field.default
        _check_range(field, value)
        values[field.key] = value

    _apply_dependent_defaults(values)
    _cross_validate(values)
    return Config(values)


def _apply_dependent_defaults(values: dict):
    if values["strategy.server_lr"] is None:
        values["strategy.server_lr"] = 1.0 if values["strategy.kind"] == "scaffold" else 0.1
    if values["data.test_per_class"] == 0:
        values["data.test_per_class"] = max(1, values["data.per_class"] // 4)


def _cross_validate(values: dict):
    kind = values["strategy.kind"]
    if kind == "fedadmm" and values["strategy.rho"] <= 0:
        raise ConfigError("strategy.rho must be > 0 for fedadmm")
    if kind == "fedprox" and values["strategy.rho"] < 0:
        raise ConfigError("strategy.rho must be >= 0 for fedprox")
    eta = values["strategy.eta"]
    if eta == ETA_TRACKING and kind != "fedadmm":
        raise ConfigError("strategy.eta = tracking only applies to fedadmm")
    if eta != ETA_TRACKING and eta <= 0:
        raise ConfigError("strategy.eta must be > 0")
    if values["verify.enabled"] and kind != "fedadmm":
        raise ConfigError("verify mode tracks duals and needs strategy.kind = fedadmm")
    if values["verify.enabled"] and values["strategy.dual_frozen"]:
        raise ConfigError("verify mode needs live duals (strategy.dual_frozen = false)")
    if values["strategy.solver"] == "exact" and values["data.source"] != "quadratic":
        raise ConfigError("the exact local solver needs data.source = quadratic")
    if values["clients.fraction"] > 1.0:
        raise ConfigError("clients.fraction must be in (0, 1]")
    if values["data.curvature_min"] > values["data.curvature_max"]:
        raise ConfigError("data.curvature_min must not exceed data.curvature_max")
    if values["target_accuracy"] is not None and values["target_accuracy"] > 1.0:
        raise ConfigError("target_accuracy is a fraction in (0, 1]")
    if values["data.source"] == "idx":
        for key in ("data.train_images", "data.train_labels", "data.test_images", "data.test_labels"):
            if not values[key]:
                raise ConfigError(f"data.source = idx requires {key}")
    if values["data.source"] == "cifar" and not values["data.train_bins"]:
        raise ConfigError("data.source = cifar requires data.train_bins")
    if values["partition.scheme"] == "imbalanced" and values["partition.total_shards"] < 1:
        raise ConfigError("partition.scheme = imbalanced requires partition.total_shards >= 1")


def load_file(path, overrides: dict[str, str] | None = None) -> Config:
    try:
        text = open(path, encoding="utf-8").read()
    except OSError as exc:
        raise DataFormatError(f"cannot read config '{path}': {exc}") from exc
    return resolve(parse_text(text), overrides)


def schedule_value(schedule: tuple, round_1based: int, base: float) -> float:
    """Step-function lookup: the last scheduled value at or before the round."""
    value = base
    for r, v in schedule:
        if round_1based >= r:
            value = v
    return value
