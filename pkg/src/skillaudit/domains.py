"""Registered-domain (eTLD+1) computation against a bundled public-suffix snapshot."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SuffixRules:
    exact: frozenset[str]
    wildcard: frozenset[str]   # "*.ck" stored as "ck"
    exception: frozenset[str]  # "!www.ck" stored as "www.ck"

    @classmethod
    def parse(cls, text: str) -> "SuffixRules":
        exact, wild, exc = set(), set(), set()
        for raw in text.splitlines():
            line = raw.strip().split()[0] if raw.strip() else ""
            if not line or line.startswith("//"):
                continue
            line = line.lower()
            if line.startswith("!"):
                exc.add(line[1:])
            elif line.startswith("*."):
                wild.add(line[2:])
            else:
                exact.add(line)
        return cls(frozenset(exact), frozenset(wild), frozenset(exc))

    def public_suffix(self, labels: list[str]) -> tuple[int, bool]:
        """Return (number of suffix labels, whether a listed rule matched)."""
        n = len(labels)
        best, known = 1, False
        for i in range(n):
            cand = ".".join(labels[i:])
            size = n - i
            if cand in self.exception:
                return size - 1, True
            if cand in self.exact and size > best:
                best, known = size, True
            elif cand in self.exact and size == 1:
                known = True
            if i + 1 < n:
                parent = ".".join(labels[i + 1:])
                if parent in self.wildcard and size > best:
                    best, known = size, True
        return best, known


@lru_cache(maxsize=None)
def default_rules() -> SuffixRules:
    text = resources.files("skillaudit").joinpath("data/public_suffix_list.dat").read_text("utf-8")
    return SuffixRules.parse(text)


def load_rules(path: str | Path) -> SuffixRules:
    return SuffixRules.parse(Path(path).read_text("utf-8"))


@dataclass(frozen=True)
class DomainParts:
    hostname: str
    registered_domain: str
    suffix: str
    known_suffix: bool
    single_label: bool = False


_warned_suffixes: set[str] = set()


@lru_cache(maxsize=65536)
def _split(hostname: str, rules: SuffixRules) -> DomainParts:
    host = hostname.strip().rstrip(".").lower()
    labels = host.split(".")
    if len(labels) == 1:
        return DomainParts(host, host, "", False, single_label=True)
    size, known = rules.public_suffix(labels)
    suffix = ".".join(labels[-size:])
    if size >= len(labels):
        # the hostname is itself a public suffix
        return DomainParts(host, host, suffix, known)
    return DomainParts(host, ".".join(labels[-size - 1:]), suffix, known)


def split_domain(hostname: str, rules: SuffixRules | None = None) -> DomainParts:
    parts = _split(hostname, rules or default_rules())
    if parts.single_label:
        log.warning("single-label hostname %r returned unchanged", hostname)
    elif not parts.known_suffix and parts.suffix not in _warned_suffixes:
        _warned_suffixes.add(parts.suffix)
        log.warning("unknown public suffix %r; using last two labels", parts.suffix)
    return parts


def registered_domain(hostname: str, rules: SuffixRules | None = None) -> str:
    """eTLD+1 of ``hostname``, e.g. ``device-metrics-us-2.amazon.com`` -> ``amazon.com``.

    Unknown suffixes fall back to the last two labels (logged once per suffix);
    single-label names come back unchanged.
    """
    return split_domain(hostname, rules).registered_domain
