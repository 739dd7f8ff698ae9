"""Instance configuration: file-based with environment overrides.

Environment variables (all optional) override file values so deployments can
tune one knob without editing config: COURIERMESH_BIND, COURIERMESH_PORT,
COURIERMESH_TIMEZONE, COURIERMESH_MAX_ROUNDS, COURIERMESH_STALENESS_SECONDS,
COURIERMESH_MAX_ATTEMPTS, COURIERMESH_SMALL_ORDER_MAX_LBS,
COURIERMESH_MEDIUM_ORDER_MAX_LBS.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Any, Optional
from zoneinfo import ZoneInfo, ZoneInfoNotFoundError

from .errors import PARSE_ERROR, VALIDATION_ERROR, ProtocolError

# Rectangle around a small town center; handy default territory for demos.
DEFAULT_TERRITORY = {
    "type": "Polygon",
    "coordinates": [
        [
            [-74.6675, 40.3520],
            [-74.6565, 40.3520],
            [-74.6565, 40.3435],
            [-74.6675, 40.3435],
            [-74.6675, 40.3520],
        ]
    ],
}


@dataclass
class InstanceConfig:
    domainName: str = "hub.example"
    instanceName: str = "Local Hub"
    timezone: str = "America/New_York"
    territory: dict[str, Any] = field(default_factory=lambda: json.loads(json.dumps(DEFAULT_TERRITORY)))
    bind: str = "127.0.0.1"
    port: int = 8571
    maxRounds: int = 5          # counteroffer rounds allowed per side
    positionStalenessSeconds: int = 120
    maxAttempts: int = 3        # dispatch attempts per task chain
    maxActiveDeliveries: int = 3
    smallOrderMaxLbs: float = 5.0   # order-size class boundaries
    mediumOrderMaxLbs: float = 20.0

    def __post_init__(self):
        try:
            ZoneInfo(self.timezone)
        except (ZoneInfoNotFoundError, ValueError):
            raise ProtocolError(VALIDATION_ERROR, f"unknown timezone: {self.timezone!r}") from None
        if self.maxRounds < 1 or self.maxAttempts < 1:
            raise ProtocolError(VALIDATION_ERROR, "maxRounds and maxAttempts must be >= 1")
        if not (0 < self.smallOrderMaxLbs < self.mediumOrderMaxLbs):
            raise ProtocolError(VALIDATION_ERROR, "order-size thresholds must be increasing")

    def tzinfo(self) -> ZoneInfo:
        return ZoneInfo(self.timezone)


_ENV_MAP = {
    "COURIERMESH_BIND": ("bind", str),
    "COURIERMESH_PORT": ("port", int),
    "COURIERMESH_TIMEZONE": ("timezone", str),
    "COURIERMESH_MAX_ROUNDS": ("maxRounds", int),
    "COURIERMESH_STALENESS_SECONDS": ("positionStalenessSeconds", int),
    "COURIERMESH_MAX_ATTEMPTS": ("maxAttempts", int),
    "COURIERMESH_SMALL_ORDER_MAX_LBS": ("smallOrderMaxLbs", float),
    "COURIERMESH_MEDIUM_ORDER_MAX_LBS": ("mediumOrderMaxLbs", float),
}

_FIELDS = {
    "domainName",
    "instanceName",
    "timezone",
    "territory",
    "bind",
    "port",
    "maxRounds",
    "positionStalenessSeconds",
    "maxAttempts",
    "maxActiveDeliveries",
    "smallOrderMaxLbs",
    "mediumOrderMaxLbs",
}


def config_from_dict(raw: dict[str, Any], env: Optional[dict[str, str]] = None) -> InstanceConfig:
    unknown = set(raw) - _FIELDS
    if unknown:
        raise ProtocolError(VALIDATION_ERROR, f"unknown config fields: {sorted(unknown)}")
    merged = dict(raw)
    env = os.environ if env is None else env
    for var, (fname, cast) in _ENV_MAP.items():
        if var in env:
            try:
                merged[fname] = cast(env[var])
            except ValueError:
                raise ProtocolError(VALIDATION_ERROR, f"{var} must be {cast.__name__}") from None
    return InstanceConfig(**merged)


def load_config(path: str, env: Optional[dict[str, str]] = None) -> InstanceConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ProtocolError(PARSE_ERROR, f"config file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ProtocolError(PARSE_ERROR, f"config is not valid JSON: {e}") from None
    if not isinstance(raw, dict):
        raise ProtocolError(PARSE_ERROR, "config must be a JSON object")
    return config_from_dict(raw, env)
