"""Loading of the structured-text (TOML) configuration and data files.

Numeric fields may be written as decimal strings ("68.592") to keep the unit
and precision explicit; :func:`num` accepts either form.
"""

from __future__ import annotations

import copy
from importlib import resources
from pathlib import Path
from typing import Any, Mapping

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


class ConfigError(ValueError):
    """Raised for unreadable or malformed configuration files."""


def num(value: Any, field: str = "value") -> float:
    if isinstance(value, bool):
        raise ConfigError(f"{field}: expected a number, got a boolean")
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        try:
            return float(value.strip())
        except ValueError:
            raise ConfigError(f"{field}: cannot parse {value!r} as a decimal number") from None
    raise ConfigError(f"{field}: expected a number, got {type(value).__name__}")


def num_list(values: Any, field: str = "value") -> list[float]:
    if not isinstance(values, (list, tuple)):
        raise ConfigError(f"{field}: expected a list")
    return [num(v, f"{field}[{i}]") for i, v in enumerate(values)]


def parse_toml(text: str, source: str = "<string>") -> dict:
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        # tomli reports "(at line L, column C)" in the message
        raise ConfigError(f"{source}: {exc}") from None


def load_toml(path: str | Path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_toml(path.read_text(encoding="utf-8"), str(path))


def data_text(name: str) -> str:
    return resources.files("ionphotonics.data").joinpath(name).read_text(encoding="utf-8")


def load_data(name: str) -> dict:
    """Load one of the TOML files shipped in ``ionphotonics/data``."""
    return parse_toml(data_text(name), f"ionphotonics/data/{name}")


def deep_merge(base: Mapping, override: Mapping) -> dict:
    out = copy.deepcopy(dict(base))
    for key, value in override.items():
        if isinstance(value, Mapping) and isinstance(out.get(key), Mapping):
            out[key] = deep_merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def require(section: Mapping, key: str, where: str) -> Any:
    if key not in section:
        raise ConfigError(f"{where}: missing required field '{key}'")
    return section[key]
