"""Audit configuration: one JSON file plus dotted-key overrides."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .errors import InputError

DEFAULTS: dict[str, Any] = {
    "paths": {
        "traces": [],             # JSONL traces (Echo captures and crawl traffic)
        "avs_traces": [],         # unencrypted captures used for data-type analysis
        "bids": None,
        "policies": None,         # directory of <skill_id>.txt
        "platform_policy": None,
        "org_ontology": None,     # None: bundled
        "data_ontology": None,
        "lexicon": None,
        "signatures": None,
        "filter_lists": [],
        "overrides": None,
        "skills": None,
        "gold": None,
        "interests": None,
    },
    "distribution": {"weight": "flows"},
    "slots": {"key": "site+slot"},
    "ingest": {"body_excerpt_max": 4096},
    "sync": {"min_id_length": 8},
    "stats": {"exact_cutoff": 400, "bonferroni": False},
    "policy": {"include_platform_policy": False},
    "bids": {"control": None},
    "platform_org": "Amazon",
}

LIST_PATHS = ("traces", "avs_traces", "filter_lists")


def _merge(base: dict, extra: dict, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, val in extra.items():
        if key not in base:
            raise InputError(f"unknown config key {where + key!r}")
        if isinstance(base[key], dict):
            if not isinstance(val, dict):
                raise InputError(f"config key {where + key!r} must be an object")
            out[key] = _merge(base[key], val, f"{where}{key}.")
        else:
            out[key] = val
    return out


def _coerce(text: str) -> Any:
    try:
        return json.loads(text)
    except ValueError:
        return text


def set_dotted(data: dict, dotted: str, value: Any) -> None:
    keys = dotted.split(".")
    node = data
    for k in keys[:-1]:
        if not isinstance(node.get(k), dict):
            raise InputError(f"unknown config key {dotted!r}")
        node = node[k]
    if keys[-1] not in node:
        raise InputError(f"unknown config key {dotted!r}")
    node[keys[-1]] = value


@dataclass
class AuditConfig:
    data: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))
    base_dir: Path = field(default_factory=Path.cwd)

    @classmethod
    def load(cls, path: str | Path | None = None, overrides: dict[str, Any] | None = None) -> "AuditConfig":
        data = copy.deepcopy(DEFAULTS)
        base = Path.cwd()
        if path is not None:
            path = Path(path)
            try:
                raw = json.loads(path.read_text("utf-8"))
            except (OSError, ValueError) as exc:
                raise InputError(f"cannot read config {path}: {exc}") from exc
            data = _merge(DEFAULTS, raw)
            base = path.resolve().parent
        for key, val in (overrides or {}).items():
            set_dotted(data, key, _coerce(val) if isinstance(val, str) else val)
        cfg = cls(data, base)
        cfg.validate()
        return cfg

    # -- accessors -------------------------------------------------------

    def get(self, dotted: str) -> Any:
        node: Any = self.data
        for k in dotted.split("."):
            node = node[k]
        return node

    def path(self, name: str) -> Path | None:
        val = self.data["paths"][name]
        return None if val is None else self._abs(val)

    def paths(self, name: str) -> list[Path]:
        val = self.data["paths"][name] or []
        if isinstance(val, str):
            val = [val]
        return [self._abs(v) for v in val]

    def _abs(self, value: str) -> Path:
        p = Path(value)
        return p if p.is_absolute() else self.base_dir / p

    def display(self, path: Path) -> str:
        """Path as written in reports: relative to the config directory when possible."""
        try:
            return path.resolve().relative_to(self.base_dir.resolve()).as_posix()
        except ValueError:
            return path.name

    # -- validation ------------------------------------------------------

    def validate(self) -> None:
        d = self.data
        if d["distribution"]["weight"] not in ("flows", "bytes"):
            raise InputError("distribution.weight must be 'flows' or 'bytes'")
        if d["slots"]["key"] not in ("site+slot", "site+slot+iteration"):
            raise InputError("slots.key must be 'site+slot' or 'site+slot+iteration'")
        checks = [
            ("ingest.body_excerpt_max", 1, 1 << 24),
            ("sync.min_id_length", 1, 256),
            ("stats.exact_cutoff", 0, 10_000),
        ]
        for key, lo, hi in checks:
            val = self.get(key)
            if not isinstance(val, int) or isinstance(val, bool) or not lo <= val <= hi:
                raise InputError(f"{key} must be an integer in [{lo}, {hi}]")
        for key in ("stats.bonferroni", "policy.include_platform_policy"):
            if not isinstance(self.get(key), bool):
                raise InputError(f"{key} must be true or false")
        if not isinstance(d["platform_org"], str) or not d["platform_org"]:
            raise InputError("platform_org must be a non-empty string")
        for name in d["paths"]:
            if name in LIST_PATHS:
                targets = self.paths(name)
            else:
                p = self.path(name)
                targets = [p] if p is not None else []
            for p in targets:
                if not p.exists():
                    raise InputError(f"paths.{name}: {p} does not exist")
