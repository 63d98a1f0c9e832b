"""Deterministic simulator for decentralized blockchain oracle networks."""

from oraclesim.aggregation import AggregationMethod, AggregationResult, ResultStatus, aggregate_boolean, aggregate_numeric
from oraclesim.consensus import AnswerDomain, HumanConsensus, InquiryStatus, Side
from oraclesim.ledger import Address, Ledger, LedgerEvent
from oraclesim.market import OracleMarket, ReputationContract, SlaProposal, SlaStatus
from oraclesim.network import OracleNetwork
from oraclesim.node import Behavior, OracleNode
from oraclesim.query import ParsingHelper, QueryEngine, QuerySpec
from oraclesim.reporting import ReportingContract, commitment_digest

__all__ = [
    "Address",
    "AggregationMethod",
    "AggregationResult",
    "AnswerDomain",
    "Behavior",
    "HumanConsensus",
    "InquiryStatus",
    "Ledger",
    "LedgerEvent",
    "OracleMarket",
    "OracleNetwork",
    "OracleNode",
    "ParsingHelper",
    "QueryEngine",
    "QuerySpec",
    "ReportingContract",
    "ReputationContract",
    "ResultStatus",
    "SlaProposal",
    "SlaStatus",
    "Side",
    "aggregate_boolean",
    "aggregate_numeric",
    "commitment_digest",
]
