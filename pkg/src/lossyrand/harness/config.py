"""Profile loading with strict key checking."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path

import yaml

from ..protocol import validate_params
from ..samplers import ParameterSet

PROFILE_DIR_ENV = "LOSSYRAND_PROFILE_DIR"
PROFILE_FILE = "profiles.yaml"
DEFAULT_PATH = Path(__file__).with_name(PROFILE_FILE)

_PROFILE_KEYS = {"description", "mode", "params", "budget", "exact_threshold", "seed"}
_REQUIRED_KEYS = {"mode", "params"}
_PARAM_KEYS = {f.name for f in dataclasses.fields(ParameterSet)} - {"mode"}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Profile:
    name: str
    params: ParameterSet
    budget: int = 1 << 22
    exact_threshold: int = 17
    seed: int = 0
    description: str = ""

    def to_dict(self) -> dict:
        p = dataclasses.asdict(self.params)
        mode = p.pop("mode")
        return {"name": self.name, "description": self.description, "mode": mode, "params": p,
                "budget": self.budget, "exact_threshold": self.exact_threshold, "seed": self.seed}

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()


def default_profile_path() -> Path:
    env = os.environ.get(PROFILE_DIR_ENV)
    return Path(env) / PROFILE_FILE if env else DEFAULT_PATH


def parse_profile(name: str, raw) -> Profile:
    if not isinstance(raw, dict):
        raise ConfigError(f"profile {name!r} must be a mapping")
    unknown = set(raw) - _PROFILE_KEYS
    if unknown:
        raise ConfigError(f"profile {name!r}: unknown keys {sorted(unknown)}")
    missing = _REQUIRED_KEYS - set(raw)
    if missing:
        raise ConfigError(f"profile {name!r}: missing keys {sorted(missing)}")
    params = raw["params"]
    if not isinstance(params, dict):
        raise ConfigError(f"profile {name!r}: params must be a mapping")
    unknown = set(params) - _PARAM_KEYS
    if unknown:
        raise ConfigError(f"profile {name!r}: unknown params {sorted(unknown)}")
    try:
        ps = ParameterSet(mode=raw["mode"], **params)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"profile {name!r}: {exc}") from None
    report = validate_params(ps)
    if not report.accepted:
        cond, detail = report.failures[0]
        raise ConfigError(f"profile {name!r} fails {cond}: {detail}")
    try:
        return Profile(name=name, params=ps, budget=int(raw.get("budget", 1 << 22)),
                       exact_threshold=int(raw.get("exact_threshold", 17)), seed=int(raw.get("seed", 0)),
                       description=str(raw.get("description", "")))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"profile {name!r}: {exc}") from None


def load_profiles(path: str | Path | None = None) -> dict[str, Profile]:
    path = Path(path) if path else default_profile_path()
    try:
        raw = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read profiles: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must map profile names to profiles")
    return {str(name): parse_profile(str(name), body) for name, body in raw.items()}


def get_profile(name: str, path: str | Path | None = None) -> Profile:
    profiles = load_profiles(path)
    try:
        return profiles[name.lower()]
    except KeyError:
        raise ConfigError(f"unknown profile {name!r}; available: {sorted(profiles)}") from None
