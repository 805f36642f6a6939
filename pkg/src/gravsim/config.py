"""Hierarchical plain-text configuration with include support.

One YAML file can define everything a run needs under the sections
``robot``, ``env``, ``training`` and ``sweep``.  A top-level ``include``
entry (path or list of paths, relative to the including file) is loaded
first and deep-merged, with the including file winning on conflicts.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict
from pathlib import Path

import yaml

from .actuation import ActuatorParams
from .contact import ContactParams
from .env import EnvConfig
from .rig import RigSpec
from .robot import GravityEnv


class ConfigError(ValueError):
    pass


def deep_merge(base: dict, override: dict) -> dict:
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = deep_merge(out[key], value)
        else:
            out[key] = value
    return out


def load_config(path: str | Path) -> dict:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text()) or {}
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    includes = data.pop("include", [])
    if isinstance(includes, (str, Path)):
        includes = [includes]
    merged: dict = {}
    for inc in includes:
        merged = deep_merge(merged, load_config(path.parent / inc))
    return deep_merge(merged, data)


def config_hash(data: dict) -> str:
    canon = json.dumps(data, sort_keys=True, default=_json_default)
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


def _json_default(obj):
    if hasattr(obj, "tolist"):
        return obj.tolist()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"not JSON-serializable: {type(obj)}")


def resolve_gravity(value) -> float:
    """Accept a number or a preset name (moon, mars, earth, super-earth)."""
    return GravityEnv.from_name(value).g


def env_config_to_dict(cfg: EnvConfig) -> dict:
    return asdict(cfg)


def env_config_from_dict(data: dict) -> EnvConfig:
    data = dict(data)
    if "gravity" in data:
        data["gravity"] = resolve_gravity(data["gravity"])
    if isinstance(data.get("contact"), dict):
        data["contact"] = ContactParams(**data["contact"])
    if isinstance(data.get("actuator"), dict):
        data["actuator"] = ActuatorParams(**data["actuator"])
    if isinstance(data.get("rig"), dict):
        rig = dict(data["rig"])
        if "attach_offset" in rig:
            rig["attach_offset"] = tuple(rig["attach_offset"])
        data["rig"] = RigSpec(**rig)
    for key in ("fixed_command", "mass_delta_range", "mu_static_range",
                "mu_dynamic_range", "push_interval_s"):
        if isinstance(data.get(key), list):
            data[key] = tuple(data[key])
    for key in ("loco_cmd_ranges", "pose_cmd_ranges"):
        if isinstance(data.get(key), list):
            data[key] = tuple(tuple(r) for r in data[key])
    unknown = set(data) - set(EnvConfig.__dataclass_fields__)
    if unknown:
        raise ConfigError(f"unknown env config fields: {sorted(unknown)}")
    return EnvConfig(**data)
