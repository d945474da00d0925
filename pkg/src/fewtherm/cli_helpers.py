"""CLI helpers to expose RunConfig fields as argparse flags and build configs.

- Adds flags for nested sections using dotted paths (e.g., --model.potential.omega).
- Sections that are a union of models (potential, force, beta, sampler) get the
  union of their members' fields; ``kind`` selects the member.
- Builds an overrides dict matching the nested config structure.
"""

from __future__ import annotations

from argparse import SUPPRESS
from argparse import BooleanOptionalAction
from collections.abc import Iterator
from collections.abc import Sequence
from pathlib import Path
from types import UnionType
from typing import TYPE_CHECKING
from typing import Annotated
from typing import Any
from typing import Literal
from typing import Union
from typing import get_args
from typing import get_origin

import yaml
from pydantic import BaseModel

from .config import RunConfig
from .config import default_config_dict
from .config import load_preset
from .config import validate_config
from .io import load_structured_config

if TYPE_CHECKING:
    from argparse import ArgumentParser
    from argparse import Namespace

    from pydantic.fields import FieldInfo

DEST_PREFIX = "FT__"


def _help_with_default(fld) -> str | None:
    desc = getattr(fld, "description", None)
    if fld.is_required():
        return f"{desc} (required)" if desc else "(required)"
    if fld.default_factory is not None:
        return desc
    default_val = fld.default
    if isinstance(default_val, bool):
        default_str = str(default_val).lower()
    elif isinstance(default_val, Path):
        default_str = str(default_val)
    else:
        default_str = repr(default_val)
    if desc:
        return f"{desc} (default: {default_str})"
    return f"(default: {default_str})"


def _is_model_type(ann) -> bool:
    return isinstance(ann, type) and issubclass(ann, BaseModel)


def _strip(ann):
    """Drop Annotated wrappers and a trailing None from Optional."""
    while get_origin(ann) is Annotated:
        ann = get_args(ann)[0]
    if get_origin(ann) in (Union, UnionType):
        args = [a for a in get_args(ann) if a is not type(None)]
        if len(args) == 1:
            return _strip(args[0])
    return ann


def _model_members(ann) -> list[type[BaseModel]]:
    """Model types of a model, Optional model or union of models; empty otherwise."""
    ann = _strip(ann)
    if _is_model_type(ann):
        return [ann]
    if get_origin(ann) in (Union, UnionType):
        members = [_strip(a) for a in get_args(ann) if a is not type(None)]
        if members and all(_is_model_type(m) for m in members):
            return members
    return []


def _yaml_value(text: str) -> Any:
    return yaml.safe_load(text)


def iter_fields(model_type: type[BaseModel], path: tuple[str, ...] = ()) -> Iterator[tuple[tuple[str, ...], list, FieldInfo]]:
    """Yield (path, annotations, field) for every leaf field.

    Fields shared by several union members are yielded once with all their annotations.
    """
    leaves: dict[tuple[str, ...], tuple[list, FieldInfo]] = {}
    for name, fld in model_type.model_fields.items():
        members = _model_members(fld.annotation)
        if not members:
            leaves[(*path, name)] = ([fld.annotation], fld)
            continue
        for member in members:
            for sub_path, anns, sub in iter_fields(member, (*path, name)):
                if sub_path in leaves:
                    leaves[sub_path][0].extend(anns)
                else:
                    leaves[sub_path] = (list(anns), sub)
    for leaf_path, (anns, fld) in leaves.items():
        yield leaf_path, anns, fld


def _literal_choices(anns) -> list | None:
    choices: list = []
    for ann in anns:
        ann = _strip(ann)
        if get_origin(ann) is not Literal:
            return None
        choices += [a for a in get_args(ann) if a not in choices]
    return choices


def _add_field_flag(name: str, anns: list, field: FieldInfo, grp) -> None:
    help_text = _help_with_default(field)
    flag = f"--{name}"
    dest = f"{DEST_PREFIX}{name.replace('.', '__')}"
    choices = _literal_choices(anns)
    ann = _strip(anns[0])
    item = set(get_args(ann))
    if choices is not None:
        grp.add_argument(flag, choices=choices, dest=dest, help=help_text, default=SUPPRESS)
    elif get_origin(ann) in (list, tuple, Sequence) and len(item) == 1 and item <= {int, float, str}:
        grp.add_argument(flag, nargs="+", type=get_args(ann)[0], dest=dest, help=help_text, default=SUPPRESS)
    elif ann is bool:
        grp.add_argument(flag, action=BooleanOptionalAction, dest=dest, help=help_text, default=SUPPRESS)
    elif ann in (int, float, str, Path):
        grp.add_argument(flag, type=ann, dest=dest, help=help_text, default=SUPPRESS)
    else:
        grp.add_argument(flag, type=_yaml_value, dest=dest, help=help_text, default=SUPPRESS)


def add_flags_from_model(parser: ArgumentParser, config_model: type[BaseModel] = RunConfig) -> None:
    """Create flags like --section.field for every leaf of the config model.

    Parser defaults are SUPPRESS so we can detect presence via hasattr(args, dest).
    Actual defaults still come from the pydantic model when building the config.
    """
    groups: dict[str, Any] = {}
    for path, ann, fld in iter_fields(config_model):
        section = ".".join(path[:-1]) or "general"
        if section not in groups:
            groups[section] = parser.add_argument_group(section)
        _add_field_flag(".".join(path), ann, fld, groups[section])


def deep_update(base: dict, extra: dict) -> dict:
    """Recursively merge extra into base (in place) and return base.

    A mapping whose ``kind`` differs from the base's replaces it instead of merging.
    """
    for k, v in (extra or {}).items():
        cur = base.get(k)
        if isinstance(v, dict) and isinstance(cur, dict) and v.get("kind", cur.get("kind")) == cur.get("kind"):
            deep_update(cur, v)
        else:
            base[k] = v
    return base


def collect_overrides(args: Namespace, config_model: type[BaseModel] = RunConfig) -> dict:
    """Collect provided CLI flags into a nested overrides dict."""
    overrides: dict = {}
    for path, _, _ in iter_fields(config_model):
        dest = DEST_PREFIX + "__".join(path)
        if not hasattr(args, dest):
            continue
        cur = overrides
        for p in path[:-1]:
            cur = cur.setdefault(p, {})
        cur[path[-1]] = getattr(args, dest)
    return overrides


def build_cfg_from_file_and_args(args: Namespace, config_attr: str = "config") -> dict:
    """Merge defaults <- preset <- file <- CLI flags into a nested config dict."""
    cfg = default_config_dict()
    preset = getattr(args, "preset", None)
    if preset:
        cfg = deep_update(cfg, load_preset(preset))
    path = getattr(args, config_attr, None)
    if path:
        cfg = deep_update(cfg, load_structured_config(path))
    cfg = deep_update(cfg, collect_overrides(args))
    if getattr(args, "seed", None) is not None:
        cfg["ensemble"]["seed"] = args.seed
    if getattr(args, "out", None) is not None:
        cfg["output"]["directory"] = str(args.out)
    return cfg


def run_config_from_args(args: Namespace) -> RunConfig:
    """Validated RunConfig from preset, file and flags; raises ConfigError."""
    return validate_config(build_cfg_from_file_and_args(args))
