"""Offline auditing of smart-speaker traffic, header-bidding bids and skill privacy policies."""

__version__ = "0.1.0"

from .config import AuditConfig
from .domains import registered_domain
from .endpoints import classify_purpose, map_org, parse_filter_list, traffic_distribution
from .errors import AuditError, InputError, InvariantViolation, StageError
from .metrics import validation_metrics
from .pipeline import run_pipeline
from .policy import audit_skill, classify_disclosure, extract_flows
from .report import emit
from .stats import mann_whitney_one_sided
from .syncs import detect_syncs, extract_identifiers, partner_sets
from .trace import ingest_trace, resolve_domains, segment_sessions

__all__ = [
    "AuditConfig", "AuditError", "InputError", "InvariantViolation", "StageError",
    "audit_skill", "classify_disclosure", "classify_purpose", "detect_syncs", "emit", "extract_flows",
    "extract_identifiers", "ingest_trace", "map_org", "mann_whitney_one_sided", "parse_filter_list",
    "partner_sets", "registered_domain", "resolve_domains", "run_pipeline", "segment_sessions",
    "traffic_distribution", "validation_metrics",
]
