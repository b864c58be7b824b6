"""Experiment configuration: a sectioned ``key = value`` text format.

Example::

    [run]
    seed = 7
    workers = 2

    [trajectories]
    L = 8
    p_meas = 0.01

``[run]`` holds settings shared by every subcommand; each subcommand reads its
own section and ignores the others (which are still validated).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable

from .errors import ConfigError


@dataclass(frozen=True)
class Key:
    kind: str  # int | float | str | floats | ints
    default: Any
    check: Callable[[Any], bool] = lambda v: True
    rule: str = ""
    choices: tuple[str, ...] = ()


def _pos(v):
    return v > 0


def _unit(v):
    return 0.0 <= v <= 1.0


def _all_pos(vs):
    return len(vs) > 0 and all(v > 0 for v in vs)


_SEED = Key("int", 0, lambda v: 0 <= v < 2**64, "must be a 64-bit unsigned integer")
_BC = Key("str", "open", choices=("open", "periodic"))

_PROTOCOL = {
    "L": Key("int", 8, lambda v: 1 <= v <= 14, "must lie in [1, 14]"),
    "Jx": Key("float", 1.0, _pos, "must be positive"),
    "dt": Key("float", 1e-2, _pos, "must be positive"),
    "p_meas": Key("float", 0.0, _unit, "must lie in [0, 1]"),
    "p_site": Key("float", 1.0, lambda v: 0 < v <= 1, "must lie in (0, 1]"),
    "steps": Key("int", 2000, lambda v: v >= 1, "must be >= 1"),
    "bc": _BC,
}

SCHEMA: dict[str, dict[str, Key]] = {
    "run": {
        "seed": _SEED,
        "workers": Key("int", 1, lambda v: v >= 1, "must be >= 1"),
        "out": Key("str", ""),
    },
    "trajectories": {
        **_PROTOCOL,
        "n_real": Key("int", 100, lambda v: v >= 1, "must be >= 1"),
        "bins": Key("int", 50, lambda v: v >= 20, "must be >= 20"),
        "burn_in": Key("float", 0.0, lambda v: 0 <= v < 1, "must lie in [0, 1)"),
        "window": Key("float", 0.25, _unit, "must lie in [0, 1]"),
    },
    "noclick": dict(_PROTOCOL, steps=Key("int", 1000, lambda v: v >= 1, "must be >= 1")),
    "spectrum": {
        "L": Key("int", 8, lambda v: 2 <= v <= 12, "must lie in [2, 12]"),
        "Jx": _PROTOCOL["Jx"],
        "bc": _BC,
        "g_min": Key("float", 0.1, lambda v: v >= 0, "must be >= 0"),
        "g_max": Key("float", 10.0, _pos, "must be positive"),
        "n_g": Key("int", 50, lambda v: v >= 1, "must be >= 1"),
    },
    "fermion": {
        "Jx": _PROTOCOL["Jx"],
        "g": Key("floats", (1.2, 4.0, 4.8), lambda vs: len(vs) > 0 and min(vs) >= 0, "must be non-negative"),
        "n_k": Key("int", 401, lambda v: v >= 3, "must be >= 3"),
    },
    "lindblad": {
        "L": Key("int", 2, lambda v: 1 <= v <= 6, "must lie in [1, 6]"),
        "Jx": _PROTOCOL["Jx"],
        "gamma": Key("float", 1.0, lambda v: v >= 0, "must be >= 0"),
        "dt": Key("float", 1e-2, _pos, "must be positive"),
        "t_final": Key("float", 50.0, lambda v: v >= 0, "must be >= 0"),
        "n_out": Key("int", 101, lambda v: v >= 2, "must be >= 2"),
        "bc": _BC,
    },
    "scan": {
        "sizes": Key("ints", (6, 8, 10, 12), lambda vs: len(vs) >= 1 and all(2 <= v <= 12 for v in vs), "must lie in [2, 12]"),
        "Jx": _PROTOCOL["Jx"],
        "bc": _BC,
        "g_min": Key("float", 1.0, _pos, "must be positive"),
        "g_max": Key("float", 8.0, _pos, "must be positive"),
        "n_g": Key("int", 29, lambda v: v >= 2, "must be >= 2"),
        "g_tol": Key("float", 1e-6, _pos, "must be positive"),
    },
    "collapse": {
        **{k: _PROTOCOL[k] for k in ("L", "Jx", "dt", "steps", "bc")},
        "n_real": Key("int", 100, lambda v: v >= 1, "must be >= 1"),
        "p_sites": Key("floats", (0.25, 0.5, 1.0), lambda vs: len(vs) >= 3 and all(0 < v <= 1 for v in vs), "needs >= 3 values in (0, 1]"),
        "g": Key("floats", (0.25, 0.5, 1.0, 2.0, 4.0, 8.0), _all_pos, "must be positive"),
    },
}

SUBCOMMANDS = tuple(k for k in SCHEMA if k != "run")


def parse_value(key: Key, name: str, text: str, where: str) -> Any:
    """Convert and validate one raw value; ``where`` prefixes error messages."""
    raw = text.strip()
    try:
        if key.kind == "int":
            value = int(raw)
        elif key.kind == "float":
            value = float(raw)
        elif key.kind == "floats":
            value = tuple(float(x) for x in raw.split(",") if x.strip())
        elif key.kind == "ints":
            value = tuple(int(x) for x in raw.split(",") if x.strip())
        else:
            value = raw
    except ValueError:
        raise ConfigError(f"{where}: {name} = {raw!r} is not a valid {key.kind}") from None
    if key.choices and value not in key.choices:
        raise ConfigError(f"{where}: {name} must be one of {', '.join(key.choices)}, got {raw!r}")
    if not key.check(value):
        raise ConfigError(f"{where}: {name} = {raw} is out of range ({key.rule})")
    return value


def format_value(value: Any) -> str:
    if isinstance(value, tuple):
        return ", ".join(format_value(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


@dataclass
class ExperimentConfig:
    subcommand: str
    params: dict[str, Any]
    seed: int = 0
    workers: int = 1
    out: str = ""
    extra: dict[str, dict[str, Any]] = field(default_factory=dict, compare=False)

    @classmethod
    def defaults(cls, subcommand: str) -> "ExperimentConfig":
        if subcommand not in SUBCOMMANDS:
            raise ConfigError(f"unknown subcommand {subcommand!r}")
        return cls(subcommand, {k: v.default for k, v in SCHEMA[subcommand].items()})

    def to_text(self) -> str:
        lines = ["[run]"]
        lines += [f"seed = {self.seed}", f"workers = {self.workers}"]
        if self.out:
            lines.append(f"out = {self.out}")
        lines += ["", f"[{self.subcommand}]"]
        lines += [f"{k} = {format_value(v)}" for k, v in self.params.items()]
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        params = {k: list(v) if isinstance(v, tuple) else v for k, v in self.params.items()}
        return dict(subcommand=self.subcommand, seed=self.seed, workers=self.workers, out=self.out, params=params)


def parse_sections(text: str, source: str = "<config>") -> dict[str, dict[str, tuple[str, int]]]:
    """Split config text into ``{section: {key: (raw value, line number)}}``."""
    sections: dict[str, dict[str, tuple[str, int]]] = {}
    current = None
    for n, line in enumerate(text.splitlines(), start=1):
        body = line.split("#", 1)[0].strip()
        if not body:
            continue
        where = f"{source}:{n}"
        if body.startswith("["):
            if not body.endswith("]"):
                raise ConfigError(f"{where}: malformed section header {body!r}")
            current = body[1:-1].strip()
            if current not in SCHEMA:
                raise ConfigError(f"{where}: unknown section [{current}]")
            if current in sections:
                raise ConfigError(f"{where}: duplicate section [{current}]")
            sections[current] = {}
            continue
        if "=" not in body:
            raise ConfigError(f"{where}: expected 'key = value', got {body!r}")
        if current is None:
            raise ConfigError(f"{where}: key outside of any section")
        name, value = (s.strip() for s in body.split("=", 1))
        if name not in SCHEMA[current]:
            raise ConfigError(f"{where}: unknown key {name!r} in [{current}]")
        if name in sections[current]:
            raise ConfigError(f"{where}: duplicate key {name!r}")
        sections[current][name] = (value, n)
    return sections


def parse_config(
    subcommand: str | None,
    text: str = "",
    source: str = "<config>",
    overrides: dict[str, str] | None = None,
) -> ExperimentConfig:
    """Build a validated config from file text plus flag overrides (flags win).

    ``overrides`` maps key names (from either ``[run]`` or the subcommand
    section) to raw flag strings.
    """
    if not subcommand:
        raise ConfigError(f"a subcommand is required (one of {', '.join(SUBCOMMANDS)})")
    cfg = ExperimentConfig.defaults(subcommand)
    sections = parse_sections(text, source)
    for section, entries in sections.items():
        for name, (raw, n) in entries.items():
            value = parse_value(SCHEMA[section][name], name, raw, f"{source}:{n}")
            if section == "run":
                setattr(cfg, name, value)
            elif section == subcommand:
                cfg.params[name] = value
            else:
                cfg.extra.setdefault(section, {})[name] = value
    for name, raw in (overrides or {}).items():
        if name in SCHEMA["run"]:
            setattr(cfg, name, parse_value(SCHEMA["run"][name], name, raw, f"flag --{name}"))
        elif name in SCHEMA[subcommand]:
            cfg.params[name] = parse_value(SCHEMA[subcommand][name], name, raw, f"flag --{name}")
        else:
            raise ConfigError(f"flag --{name} does not apply to {subcommand}")
    return cfg
