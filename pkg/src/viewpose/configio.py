"""Flat ``section.key = value`` config files for ``ExperimentConfig``.

Sections: ``experiment`` (top-level fields), ``hyper`` (LossHyper),
``plan`` (BatchPlan) and ``world`` (WorldSpec).  Lines starting with ``#``
are comments, so a run manifest is itself a loadable config.  Unset keys
take the representation preset defaults.
"""

from __future__ import annotations

import dataclasses
from enum import Enum
from pathlib import Path
from typing import Mapping

from .harness import ConfigError, ExperimentConfig, Representation

NESTED = ("hyper", "plan", "world")


def _format(value) -> str:
    if isinstance(value, Enum):
        return str(value.value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


def config_items(config: ExperimentConfig) -> list[tuple[str, str]]:
    """Every field as ``(dotted key, text)`` in declaration order."""
    items = []
    for f in dataclasses.fields(config):
        value = getattr(config, f.name)
        if f.name in NESTED:
            for g in dataclasses.fields(value):
                items.append((f"{f.name}.{g.name}", _format(getattr(value, g.name))))
        else:
            items.append((f"experiment.{f.name}", _format(value)))
    return items


def config_to_text(config: ExperimentConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in config_items(config))


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or "." not in key:
            raise ConfigError(f"{source}:{lineno}: expected 'section.key = value', got {raw!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        values[key] = value.strip()
    return values


def _convert(key: str, raw: str, current):
    try:
        if isinstance(current, Enum):
            return type(current)(raw)
        if isinstance(current, bool):
            if raw.lower() not in ("true", "false"):
                raise ValueError(raw)
            return raw.lower() == "true"
        if isinstance(current, int):
            return int(raw)
        if isinstance(current, float):
            return float(raw)
        if isinstance(current, tuple):
            return tuple(int(v) for v in raw.split(",") if v.strip())
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


def resolve_config(values: Mapping[str, str]) -> ExperimentConfig:
    """Build a config from dotted keys, starting from the representation preset."""
    rep = values.get("experiment.representation", Representation.DISCRETE.value)
    try:
        rep = Representation(rep)
    except ValueError:
        valid = ", ".join(r.value for r in Representation)
        raise ConfigError(f"unknown representation {rep!r}; valid: {valid}") from None
    base = ExperimentConfig.preset(rep)

    top: dict = {}
    nested: dict[str, dict] = {name: {} for name in NESTED}
    for key, raw in values.items():
        section, _, name = key.partition(".")
        if section == "experiment":
            if name in NESTED or name not in {f.name for f in dataclasses.fields(base)}:
                raise ConfigError(f"unknown config key {key!r}")
            top[name] = _convert(key, raw, getattr(base, name))
        elif section in nested:
            obj = getattr(base, section)
            if name not in {f.name for f in dataclasses.fields(obj)}:
                raise ConfigError(f"unknown config key {key!r}")
            nested[section][name] = _convert(key, raw, getattr(obj, name))
        else:
            raise ConfigError(f"unknown config section in {key!r}")
    try:
        parts = {s: dataclasses.replace(getattr(base, s), **kv) for s, kv in nested.items()}
        if "N" in top:
            parts["world"] = dataclasses.replace(parts["world"], n_classes=top["N"])
        return dataclasses.replace(base, **top, **parts)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from None


def load_config(path=None, overrides: Mapping[str, str] | None = None) -> ExperimentConfig:
    """Resolve a config file (optional) with dotted-key ``overrides`` on top."""
    values = parse_config_text(Path(path).read_text(), str(path)) if path is not None else {}
    values.update(overrides or {})
    return resolve_config(values)
