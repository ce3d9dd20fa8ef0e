"""Inferred-interest snapshots and their evolution across data requests."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .errors import InputError

REQUEST_LABELS = ("post_install", "post_interact_1", "post_interact_2")


@dataclass(frozen=True)
class InterestSnapshot:
    persona: str
    request_label: str
    interests: frozenset[str] = frozenset()
    file_present: bool = True

    def __post_init__(self):
        if self.request_label not in REQUEST_LABELS:
            raise ValueError(f"unknown request label {self.request_label!r}")
        if not self.file_present and self.interests:
            raise ValueError("a missing interest file cannot carry interests")


@dataclass
class TimelineStep:
    request_label: str
    status: str  # present | missing
    added: list[str] = field(default_factory=list)
    removed: list[str] = field(default_factory=list)
    interests: list[str] = field(default_factory=list)


def load_snapshots(directory: str | Path) -> list[InterestSnapshot]:
    """Read ``<persona>/<request_label>.json`` files.

    Each file is ``{"interests": [...]}``, optionally with ``"file_present": false``.
    A persona directory lacking a label's file yields a missing snapshot for
    that label.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise InputError(f"interest directory {directory} does not exist")
    out = []
    for pdir in sorted(p for p in directory.iterdir() if p.is_dir()):
        loaded = {}
        for label in REQUEST_LABELS:
            path = pdir / f"{label}.json"
            if path.exists():
                try:
                    loaded[label] = json.loads(path.read_text("utf-8"))
                except ValueError as exc:
                    raise InputError(f"{path}: {exc}") from exc
        # the persona's display name may differ from its directory name
        names = {d["persona"] for d in loaded.values() if "persona" in d}
        if len(names) > 1:
            raise InputError(f"{pdir}: files name different personas {sorted(names)}")
        persona = names.pop() if names else pdir.name
        for label in REQUEST_LABELS:
            data = loaded.get(label)
            if data is None:
                out.append(InterestSnapshot(persona, label, frozenset(), False))
                continue
            present = data.get("file_present", True)
            interests = frozenset(data.get("interests", [])) if present else frozenset()
            out.append(InterestSnapshot(persona, label, interests, present))
    return out


def diff_interests(snapshots: Iterable[InterestSnapshot]) -> dict[str, list[TimelineStep]]:
    """Per persona, what was added/removed at each request relative to the
    last snapshot that was actually returned. A missing file is reported as
    ``missing`` and leaves the baseline untouched."""
    order = {label: i for i, label in enumerate(REQUEST_LABELS)}
    by_persona: dict[str, list[InterestSnapshot]] = {}
    for snap in snapshots:
        by_persona.setdefault(snap.persona, []).append(snap)

    out = {}
    for persona in sorted(by_persona):
        steps = []
        baseline: frozenset[str] | None = None
        for snap in sorted(by_persona[persona], key=lambda s: order[s.request_label]):
            if not snap.file_present:
                steps.append(TimelineStep(snap.request_label, "missing"))
                continue
            prev = baseline if baseline is not None else frozenset()
            steps.append(TimelineStep(
                snap.request_label, "present",
                added=sorted(snap.interests - prev),
                removed=sorted(prev - snap.interests),
                interests=sorted(snap.interests),
            ))
            baseline = snap.interests
        out[persona] = steps
    return out
