from __future__ import annotations

from pathlib import Path

import pytest

from skillaudit.config import AuditConfig
from skillaudit.demo import generate_demo
from skillaudit.pipeline import run_pipeline
from skillaudit.trace import FlowRecord, HttpEvent, DnsQuery, PersonaId

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def demo_config(tmp_path_factory) -> Path:
    return generate_demo(tmp_path_factory.mktemp("demo"))


@pytest.fixture(scope="session")
def demo_report(demo_config):
    return run_pipeline(AuditConfig.load(demo_config))


def flow(sid="s1", ts=0, ip="10.0.0.1", protocol="tls", persona="P", skill="sk", phase="interact",
         sni=None, dns=None, http=None, nbytes=100, kind="interest") -> FlowRecord:
    """Compact FlowRecord builder for unit tests."""
    if isinstance(dns, tuple):
        dns = DnsQuery(dns[0], tuple(dns[1]))
    if isinstance(http, str):
        http = HttpEvent("GET", http)
    return FlowRecord(sid, PersonaId(persona, kind), skill, phase, ts, "outbound", ip,
                      53 if protocol == "dns" else 443, protocol, nbytes, sni, dns, http)
