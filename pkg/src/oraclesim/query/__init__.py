"""Provable-style query engine: sources, parsing helpers, authenticity proofs."""

from oraclesim.query.engine import DataSourceType, QueryEngine, QueryResult, QuerySpec
from oraclesim.query.fixtures import ContentStore, FixtureRegistry
from oraclesim.query.helpers import (
    HelperError,
    HelperErrorCode,
    ParsingHelper,
    helper_json,
    helper_slice,
    helper_xml,
    helper_xpath,
)
from oraclesim.query.proofs import AuthenticityProof, EngineKeys, ProofType, encrypt_param, verify_proof

__all__ = [
    "AuthenticityProof",
    "ContentStore",
    "DataSourceType",
    "EngineKeys",
    "FixtureRegistry",
    "HelperError",
    "HelperErrorCode",
    "ParsingHelper",
    "ProofType",
    "QueryEngine",
    "QueryResult",
    "QuerySpec",
    "encrypt_param",
    "helper_json",
    "helper_slice",
    "helper_xml",
    "helper_xpath",
    "verify_proof",
]
