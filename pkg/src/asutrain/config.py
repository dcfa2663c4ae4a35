"""TOML experiment configuration.

Top-level keys mirror :class:`~asutrain.ps.TrainConfig` field names, with the
model under ``[spec]``. ``[data]`` describes the synthetic dataset and
``[experiment]`` the filters to compare and the links to model::

    n_workers = 4
    filter = "ASU"
    delta = 0.06
    lr = 0.2
    batch_size = 32
    max_iterations = 2000
    eval_every = 100
    seed = 0

    [spec]
    input_dim = 32
    hidden_dims = [64]
    c = 70
    seed = 0

    [data]
    n_samples = 5000
    min_age = 1
    max_age = 70
    theta = 1.0
    noise = 0.5
    seed = 0

    [experiment]
    filters = ["RAW", "DSU", "ASU"]
    compute_seconds = 0.002

    [experiment.delta_overrides]
    DSU = 0.06

    [[experiment.links]]
    name = "1Gbps"
    bandwidth = 1e9
    latency = 0.0
"""
from __future__ import annotations

import re
import sys
from dataclasses import dataclass, field, fields

from .agemodel import ModelSpec
from .data import SyntheticAgeDataset
from .filters import FilterKind
from .label_dist import AgeClassSet
from .netmodel import LinkModel
from .ps import TrainConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib


class ConfigError(ValueError):
    pass


@dataclass
class NamedLink:
    name: str
    link: LinkModel


@dataclass
class ExperimentConfig:
    train: TrainConfig
    data: SyntheticAgeDataset
    filters: list = field(default_factory=lambda: [FilterKind.RAW, FilterKind.DSU, FilterKind.ASU])
    delta_overrides: dict = field(default_factory=dict)
    links: list = field(default_factory=list)
    compute_seconds: float = 0.0

    def delta_for(self, kind: FilterKind) -> float:
        return self.delta_overrides.get(kind, self.train.delta)

    def resolved(self) -> dict:
        """Flat ``key -> value`` view of every setting, for output headers."""
        out = self.train.as_flat_dict()
        d = self.data
        out.update({"data.n_samples": d.n_samples, "data.input_dim": d.input_dim,
                    "data.min_age": d.classes.min_age, "data.max_age": d.classes.max_age,
                    "data.theta": d.theta, "data.noise": d.noise, "data.seed": d.seed})
        out["experiment.filters"] = [k.value for k in self.filters]
        for k, v in self.delta_overrides.items():
            out[f"experiment.delta_overrides.{k.value}"] = v
        out["experiment.compute_seconds"] = self.compute_seconds
        for nl in self.links:
            out[f"experiment.links.{nl.name}"] = (
                f"bandwidth={nl.link.bandwidth!r} latency={nl.link.per_message_latency!r}")
        return out


def _line_of(text: str, key: str) -> int | None:
    pat = re.compile(rf"^\s*{re.escape(key)}\s*=", re.MULTILINE)
    m = pat.search(text)
    return None if m is None else text.count("\n", 0, m.start()) + 1


def _fail(text: str, key: str, msg: str):
    line = _line_of(text, key.split(".")[-1])
    where = f"line {line}: " if line else ""
    raise ConfigError(f"{where}{key}: {msg}")


def _take(table: dict, allowed: set, text: str, prefix: str) -> None:
    for key in table:
        if key not in allowed:
            _fail(text, f"{prefix}{key}", "unknown key")


def parse_config(text: str) -> ExperimentConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(str(exc)) from exc

    train_keys = {f.name for f in fields(TrainConfig)} - {"spec"}
    _take(raw, train_keys | {"spec", "data", "experiment"}, text, "")
    spec_t = raw.get("spec", {})
    _take(spec_t, {f.name for f in fields(ModelSpec)}, text, "spec.")
    data_t = raw.get("data", {})
    _take(data_t, {"n_samples", "min_age", "max_age", "theta", "noise", "seed"}, text, "data.")
    exp_t = raw.get("experiment", {})
    _take(exp_t, {"filters", "delta_overrides", "links", "compute_seconds"}, text, "experiment.")

    try:
        min_age = int(data_t.get("min_age", 1))
        max_age = int(data_t.get("max_age", min_age + int(spec_t.get("c", 70)) - 1))
        classes = AgeClassSet(min_age, max_age)
    except (TypeError, ValueError) as exc:
        _fail(text, "data.max_age", str(exc))
    if "input_dim" not in spec_t:
        raise ConfigError("spec.input_dim: required")
    try:
        spec = ModelSpec(int(spec_t["input_dim"]), tuple(spec_t.get("hidden_dims", ())),
                         int(spec_t.get("c", classes.c)), int(spec_t.get("seed", 0)))
    except (TypeError, ValueError) as exc:
        _fail(text, "spec.hidden_dims", str(exc))
    if spec.c != classes.c:
        _fail(text, "spec.c", f"{spec.c} classes but data ages span {classes.c}")

    kwargs = {}
    for key in train_keys:
        if key in raw:
            kwargs[key] = raw[key]
    for key, value in kwargs.items():
        try:
            TrainConfig(spec, **{key: value})
        except (TypeError, ValueError) as exc:
            _fail(text, key, str(exc))
    try:
        train = TrainConfig(spec, **kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc

    try:
        data = SyntheticAgeDataset(int(data_t.get("n_samples", 5000)), spec.input_dim, classes,
                                   float(data_t.get("theta", 1.0)),
                                   float(data_t.get("noise", 0.5)),
                                   int(data_t.get("seed", 0)))
    except (TypeError, ValueError) as exc:
        _fail(text, "data.n_samples", str(exc))

    try:
        filters = [FilterKind(f) for f in exp_t.get("filters", [train.filter.value])]
    except ValueError as exc:
        _fail(text, "experiment.filters", str(exc))
    try:
        overrides = {FilterKind(k): float(v)
                     for k, v in exp_t.get("delta_overrides", {}).items()}
    except ValueError as exc:
        _fail(text, "experiment.delta_overrides", str(exc))
    links = []
    for entry in exp_t.get("links", []):
        try:
            links.append(NamedLink(str(entry["name"]),
                                   LinkModel(float(entry["bandwidth"]),
                                             float(entry.get("latency", 0.0)))))
        except (KeyError, TypeError, ValueError) as exc:
            _fail(text, "experiment.links", f"bad link entry {entry!r}: {exc}")
    return ExperimentConfig(train, data, filters, overrides, links,
                            float(exp_t.get("compute_seconds", 0.0)))


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        return parse_config(text)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None
