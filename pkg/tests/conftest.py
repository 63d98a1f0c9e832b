from __future__ import annotations

import sys

import pytest

from oraclesim.aggregation import AggregationMethod
from oraclesim.ledger import Ledger
from oraclesim.market import OracleMarket, SlaProposal
from oraclesim.network import OracleNetwork
from oraclesim.query.engine import QuerySpec
from oraclesim.reporting import ReportingContract
from oraclesim.scenario.runner import builtin_fixtures

KRAKEN_URL = "https://api.kraken.com/0/public/Ticker?pair=ETHUSD"
MIRROR_URL = "https://mirror.example/0/public/Ticker?pair=ETHUSD"
KRAKEN_LAST_TRADE = "json(result.XETHZUSD.c.0)"


@pytest.fixture(scope="session")
def fixtures():
    return builtin_fixtures()


@pytest.fixture
def ledger():
    return Ledger()


@pytest.fixture
def market(ledger):
    return OracleMarket(ledger)


@pytest.fixture
def reporting(ledger, market):
    return ReportingContract(ledger, market)


def price_query(**kw) -> QuerySpec:
    return QuerySpec.url(KRAKEN_URL, KRAKEN_LAST_TRADE, **kw)


def make_proposal(**overrides) -> SlaProposal:
    fields = dict(
        query=price_query(),
        oracles_needed=3,
        bidding_window=2,
        penalty=100,
        reward=300,
        aggregator=AggregationMethod.MEDIAN,
        scale=100,
    )
    fields.update(overrides)
    return SlaProposal(**fields)


@pytest.fixture
def network(fixtures):
    return OracleNetwork(seed=1, fixtures=fixtures)


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    if acceptance is None or not acceptance.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, passed, detail in sorted(acceptance.RESULTS):
        terminalreporter.write_line(f"criterion {number:>2} {'PASS' if passed else 'FAIL'}  {title}: {detail}")
