"""Reading configuration files and writing run artifacts.

All writers go through a temporary file in the destination directory and
``os.replace`` it into place, so a failed run never leaves a half-written file.
"""

from __future__ import annotations

import csv
import json
import math
import os
import tempfile
from collections.abc import Iterable
from collections.abc import Iterator
from collections.abc import Mapping
from contextlib import contextmanager
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .config import load_yaml_text
from .errors import ConfigError

FLOAT_FORMAT = ".17g"


def load_structured_config(path: str | Path) -> dict[str, Any]:
    """Load JSON or YAML (and TOML when '.toml') into a dict.

    Tries by extension first; falls back to JSON then YAML.
    """
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as e:
        msg = f"Could not read config file {p}: {e.strerror}"
        raise ConfigError(msg, field="config") from None
    ext = p.suffix.lower()

    if ext in {".yml", ".yaml"}:
        return load_yaml_text(text)

    if ext == ".json":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            msg = f"Could not parse config file {p} (line {e.lineno}): {e.msg}"
            raise ConfigError(msg, line=e.lineno) from None
        if not isinstance(data, dict):
            msg = f"Config file {p} must hold a mapping"
            raise ConfigError(msg, line=1)
        return data

    if ext == ".toml":
        try:
            import tomllib  # Python 3.11+
        except ModuleNotFoundError:
            import tomli as tomllib  # type: ignore[no-redef]
        try:
            return tomllib.loads(text)  # type: ignore[attr-defined]
        except tomllib.TOMLDecodeError as e:  # type: ignore[attr-defined]
            msg = f"Could not parse config file {p}: {e}"
            raise ConfigError(msg) from None

    # Fallback: YAML is a superset of JSON
    return load_yaml_text(text)


# Writers -----------------------------------------------------------------------


@contextmanager
def atomic_path(path: str | Path) -> Iterator[Path]:
    """Yield a temporary sibling of ``path`` that replaces it on success."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    os.close(fd)
    try:
        yield Path(tmp)
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def _json_safe(obj: Any) -> Any:
    """Plain JSON types; NaN and infinities become null."""
    if isinstance(obj, Mapping):
        return {str(k): _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _json_safe(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else None
    if isinstance(obj, Path):
        return str(obj)
    return obj


def dumps_json(obj: Any) -> str:
    """Strict JSON text; floats keep their shortest round-trip repr."""
    return json.dumps(_json_safe(obj), indent=2, allow_nan=False)


def write_json(path: str | Path, obj: Any) -> Path:
    """Atomically write ``obj`` as JSON."""
    with atomic_path(path) as tmp:
        tmp.write_text(dumps_json(obj) + "\n")
    return Path(path)


def write_jsonl(path: str | Path, records: Iterable[Any]) -> Path:
    """Atomically write one JSON object per line."""
    with atomic_path(path) as tmp, tmp.open("w") as f:
        for rec in records:
            f.write(json.dumps(_json_safe(rec), allow_nan=False) + "\n")
    return Path(path)


def _cell(v: Any) -> str:
    if isinstance(v, (float, np.floating)):
        return format(float(v), FLOAT_FORMAT)
    return str(v)


def write_csv(path: str | Path, header: list[str], rows: Iterable[Iterable[Any]]) -> Path:
    """Atomically write a CSV table with floats at 17 significant digits."""
    with atomic_path(path) as tmp, tmp.open("w", newline="") as f:
        w = csv.writer(f)
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])
    return Path(path)


def write_schema(prefix: str | Path, schema: dict, defaults: dict | None = None) -> list[Path]:
    """Write ``<prefix>.schema.json`` and, with defaults, ``<prefix>.json`` and ``<prefix>.yml``."""
    out = [write_json(f"{prefix}.schema.json", schema)]
    if defaults is not None:
        out.append(write_json(f"{prefix}.json", defaults))
        with atomic_path(f"{prefix}.yml") as tmp, tmp.open("w") as f:
            yaml.dump(defaults, f, default_flow_style=False, sort_keys=False)
        out.append(Path(f"{prefix}.yml"))
    return out
