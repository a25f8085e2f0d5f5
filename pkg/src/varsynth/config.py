"""Flat ``section.key = value`` configuration files."""
from __future__ import annotations

from importlib import resources
from pathlib import Path
from typing import Mapping


class ConfigError(ValueError):
    """Invalid configuration; the CLI maps it to exit status 1."""


def parse_config_text(text: str, source: str = "<config>") -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, eq, value = line.partition("=")
        key = key.strip()
        if not eq or not key:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw!r}")
        if "." not in key:
            raise ConfigError(f"{source}:{lineno}: key {key!r} lacks a section prefix")
        values[key] = value.strip()
    return values


def load_config_file(path) -> dict[str, str]:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"{path}: config file not found")
    return parse_config_text(path.read_text(encoding="utf-8"), str(path))


def default_values() -> dict[str, str]:
    text = resources.files("varsynth").joinpath("defaults.conf").read_text(encoding="utf-8")
    return parse_config_text(text, "defaults.conf")


class Config:
    """Resolved settings: defaults, then a config file, then explicit overrides."""

    def __init__(self, values: Mapping[str, str]):
        self.values = dict(values)

    @classmethod
    def resolve(cls, config_path=None, overrides: Mapping[str, str] | None = None,
                known_keys=None) -> "Config":
        values = default_values()
        layers = []
        if config_path is not None:
            layers.append((str(config_path), load_config_file(config_path)))
        if overrides:
            layers.append(("command line", dict(overrides)))
        for source, layer in layers:
            if known_keys is not None:
                unknown = sorted(set(layer) - set(values) - set(known_keys))
                if unknown:
                    raise ConfigError(f"{source}: unknown key(s): {', '.join(unknown)}")
            values.update(layer)
        return cls(values)

    def raw(self, key: str) -> str | None:
        value = self.values.get(key)
        return value if value not in (None, "") else None

    def get_str(self, key: str, default: str | None = None) -> str | None:
        value = self.raw(key)
        return default if value is None else value

    def require(self, key: str) -> str:
        value = self.raw(key)
        if value is None:
            raise ConfigError(f"missing required setting {key}")
        return value

    def get_int(self, key: str, minimum: int | None = None) -> int | None:
        value = self.raw(key)
        if value is None:
            return None
        try:
            out = int(value)
        except ValueError:
            raise ConfigError(f"{key}: expected an integer, got {value!r}") from None
        if minimum is not None and out < minimum:
            raise ConfigError(f"{key}: must be >= {minimum}, got {out}")
        return out

    def get_float(self, key: str, minimum: float | None = None) -> float | None:
        value = self.raw(key)
        if value is None:
            return None
        try:
            out = float(value)
        except ValueError:
            raise ConfigError(f"{key}: expected a number, got {value!r}") from None
        if minimum is not None and out < minimum:
            raise ConfigError(f"{key}: must be >= {minimum}, got {out}")
        return out

    def get_path(self, key: str, must_exist: bool = True, required: bool = True) -> Path | None:
        value = self.require(key) if required else self.raw(key)
        if value is None:
            return None
        p = Path(value)
        if must_exist and not p.exists():
            raise ConfigError(f"{key}: {p} does not exist")
        return p

    def dump(self) -> str:
        return "\n".join(f"{k} = {v}" for k, v in sorted(self.values.items()))
