"""Run configuration: defaults, INI config file, command-line overrides.

Config files use INI syntax; every key is optional::

    [run]
    benchmark = banking
    mode = mv3c
    window = 16
    txns = 10000
    seed = 7
    scale = 0.1
    ww_policy = allow
    attr_validation = off
    resultset_fix = on
    verify = serializability

    [banking]
    conflict_pct = 100
    initial_balance = 1000
    max_amount = 200

    [trading]
    zipf_alpha = 1.2
    price_update_pct = 50
    lines = 5
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, fields

BASE_ROWS = 100_000
VERIFY_CHOICES = ("serializability", "repair-equivalence", "none")


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    benchmark: str = "banking"
    mode: str = "mv3c"
    window: int = 16
    txns: int = 10_000
    seed: int = 0
    scale: float = 1.0
    ww_policy: str = "allow"
    attr_validation: bool = False
    resultset_fix: bool = True
    verify: tuple = ()
    conflict_pct: float = 100.0
    initial_balance: float = 1000.0
    max_amount: float = 200.0
    zipf_alpha: float = 1.2
    price_update_pct: float = 50.0
    lines: int = 5

    @property
    def rows(self) -> int:
        """Table size after scaling (accounts, securities, customers)."""
        return max(2, round(BASE_ROWS * self.scale))

    def validate(self) -> "RunConfig":
        if self.benchmark not in ("banking", "trading"):
            raise ConfigError(f"unknown benchmark {self.benchmark!r}")
        if self.mode not in ("mv3c", "abort-restart"):
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.ww_policy not in ("allow", "abort"):
            raise ConfigError(f"unknown ww policy {self.ww_policy!r}")
        if self.window < 1:
            raise ConfigError("window must be >= 1")
        if self.txns < 0:
            raise ConfigError("txns must be >= 0")
        if not self.scale > 0:
            raise ConfigError("scale must be positive")
        if not 0 <= self.conflict_pct <= 100:
            raise ConfigError("conflict percentage must be within [0, 100]")
        if not 0 <= self.price_update_pct <= 100:
            raise ConfigError("price update percentage must be within [0, 100]")
        if self.zipf_alpha < 0:
            raise ConfigError("zipf alpha must be non-negative")
        if self.lines < 1:
            raise ConfigError("lines must be >= 1")
        for v in self.verify:
            if v not in VERIFY_CHOICES:
                raise ConfigError(f"unknown verifier {v!r}")
        return self


_SECTIONS = {
    "run": ("benchmark", "mode", "window", "txns", "seed", "scale", "ww_policy",
            "attr_validation", "resultset_fix", "verify"),
    "banking": ("conflict_pct", "initial_balance", "max_amount"),
    "trading": ("zipf_alpha", "price_update_pct", "lines"),
}
_TYPES = {f.name: f.type for f in fields(RunConfig)}


def parse_switch(text: str) -> bool:
    t = str(text).strip().lower()
    if t in ("on", "true", "yes", "1"):
        return True
    if t in ("off", "false", "no", "0"):
        return False
    raise ConfigError(f"expected on/off, got {text!r}")


def parse_verify(text) -> tuple:
    if isinstance(text, (list, tuple)):
        items = [x for t in text for x in str(t).split(",")]
    else:
        items = str(text).split(",")
    out = tuple(dict.fromkeys(x.strip() for x in items if x.strip()))
    for v in out:
        if v not in VERIFY_CHOICES:
            raise ConfigError(f"unknown verifier {v!r}")
    return tuple(v for v in out if v != "none")


def coerce(name: str, value):
    kind = _TYPES[name]
    try:
        if kind == "bool":
            return parse_switch(value)
        if kind == "int":
            return int(value)
        if kind == "float":
            return float(value)
        if kind == "tuple":
            return parse_verify(value)
        return str(value).strip()
    except ValueError as exc:
        raise ConfigError(f"{name}: {exc}") from None


def load_config(path: str, base: RunConfig | None = None) -> RunConfig:
    parser = configparser.ConfigParser()
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    cfg = base or RunConfig()
    for section in parser.sections():
        allowed = _SECTIONS.get(section)
        if allowed is None:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in parser.items(section):
            name = key.replace("-", "_")
            if name not in allowed:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            setattr(cfg, name, coerce(name, raw))
    return cfg
