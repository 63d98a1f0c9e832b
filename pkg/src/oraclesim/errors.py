"""Exception hierarchy shared by all contracts and off-chain components."""

from __future__ import annotations


class OracleSimError(Exception):
    """Base class for every error raised by the simulator."""


# -- ledger -----------------------------------------------------------------


class LedgerError(OracleSimError):
    pass


class UnknownAddress(LedgerError):
    pass


class InsufficientFunds(LedgerError):
    pass


class ArithmeticOverflow(LedgerError):
    pass


class EscrowClosed(LedgerError):
    """Raised on a second release of the same escrow."""


class UnknownEscrow(LedgerError):
    pass


class InvariantViolation(OracleSimError):
    """A global invariant (conservation, monotonicity, ...) no longer holds."""


# -- contracts --------------------------------------------------------------


class ContractError(OracleSimError):
    pass


class InvalidProposal(ContractError):
    pass


class WindowClosed(ContractError):
    pass


class WindowOpen(ContractError):
    """The operation needs a window that has not elapsed yet."""


class Unqualified(ContractError):
    pass


class DuplicateAction(ContractError):
    pass


class NotSelected(ContractError):
    pass


class InvalidState(ContractError):
    pass


class InsufficientBids(ContractError):
    """Bidding ended with too few qualified bids; the SLA has been voided."""


class NotOwner(ContractError):
    pass


class NoCommitment(ContractError):
    pass


class DigestMismatch(ContractError):
    """A reveal does not reproduce the stored commitment digest."""


class UnknownKey(ContractError):
    pass


class InvalidAnswer(ContractError):
    pass


# -- off-chain --------------------------------------------------------------


class QueryError(OracleSimError):
    pass


class UnknownFixture(QueryError):
    pass


class FixtureDigestMismatch(QueryError):
    pass


class DecryptError(QueryError):
    pass


class PipelineError(OracleSimError):
    pass


class SchemaViolation(PipelineError):
    def __init__(self, step: int, path: str, message: str) -> None:
        super().__init__(f"step {step}: schema violation at {path}: {message}")
        self.step = step
        self.path = path


class AdapterError(PipelineError):
    def __init__(self, adapter: str, message: str) -> None:
        super().__init__(f"adapter {adapter!r} failed: {message}")
        self.adapter = adapter


class ConfigError(OracleSimError):
    pass


class MalformedLog(OracleSimError):
    def __init__(self, line_no: int, message: str) -> None:
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no
