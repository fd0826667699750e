"""Effective configuration: file, then command-line flags, then environment.

The config file is flat ``key = value`` text (``sciunit.toml``); strings
may be quoted, integers and booleans are recognized.  ``SCIUNIT_ROOT``
overrides the sciunit root directory last.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .chunkstore import RollingHashParams
from .errors import ConfigError, ParseError

CONFIG_FILENAME = "sciunit.toml"

_PARAM_KEYS = ("window_len", "multiplier", "modulus", "boundary_bits",
               "min_chunk", "max_chunk")


@dataclass(frozen=True)
class Config:
    sciunit_root: str = str(Path.home() / ".sciunit")
    backend: str = "auto"
    repository_url: str = ""
    api_port: int = 7470
    ui_dir: str = ""
    window_len: int = 48
    multiplier: int = 1_000_003
    modulus: int = (1 << 61) - 1
    boundary_bits: int = 12
    min_chunk: int = 1024
    max_chunk: int = 64 * 1024

    def chunk_params(self) -> RollingHashParams:
        return RollingHashParams(**{k: getattr(self, k) for k in _PARAM_KEYS})

    def show(self) -> str:
        lines = []
        for f in fields(self):
            lines.append(f"{f.name} = {getattr(self, f.name)!r}")
        return "\n".join(lines)

    def to_json(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _parse_value(raw: str):
    raw = raw.strip()
    if raw.startswith('"') and raw.endswith('"') and len(raw) >= 2:
        return raw[1:-1]
    if raw.startswith("'") and raw.endswith("'") and len(raw) >= 2:
        return raw[1:-1]
    if raw.lower() in ("true", "false"):
        return raw.lower() == "true"
    try:
        return int(raw.replace("_", ""))
    except ValueError:
        return raw


def parse_config_text(text: str) -> dict:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#") or stripped.startswith("["):
            continue
        if "=" not in stripped:
            raise ParseError(f"expected key = value, got {stripped!r}", line=lineno)
        key, _, raw = stripped.partition("=")
        values[key.strip()] = _parse_value(raw)
    return values


def load_config(path=None, overrides: dict | None = None,
                environ: dict | None = None) -> Config:
    """File values, overridden by flags, overridden by the environment."""
    environ = os.environ if environ is None else environ
    values: dict = {}
    candidates = [Path(path)] if path else [Path.cwd() / CONFIG_FILENAME]
    for candidate in candidates:
        if candidate.is_file():
            values.update(parse_config_text(candidate.read_text()))
        elif path:
            raise ConfigError(f"config file not found: {candidate}")
    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})
    if environ.get("SCIUNIT_ROOT"):
        values["sciunit_root"] = environ["SCIUNIT_ROOT"]
    if environ.get("SCIUNIT_UI_DIR"):
        values["ui_dir"] = environ["SCIUNIT_UI_DIR"]
    known = {f.name for f in fields(Config)}
    unknown = set(values) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    config = Config(**values)
    config.chunk_params()  # validate chunking invariants eagerly
    return config
