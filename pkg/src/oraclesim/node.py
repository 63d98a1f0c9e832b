"""Off-chain oracle node: watches the log, runs subtask pipelines, reports on-chain.

An :class:`Assignment` is an ordered pipeline of :class:`Subtask` objects.
Every subtask declares JSON-Schema input and output shapes; values are
validated on the way in and on the way out, so a subtask never sees input
that violates its declared schema. Binary documents use the extra schema
type ``"bytes"``.

External adapters are in-process handlers registered under a name and
invoked as ``handler(document, params) -> document``.
"""

from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass, field
from decimal import ROUND_HALF_EVEN, Decimal, InvalidOperation
from typing import Any, Callable, Mapping

import jsonschema
from jsonschema import Draft202012Validator

from oraclesim.aggregation import (
    AggregationMethod,
    AnswerValue,
    aggregate_boolean,
    aggregate_numeric,
)
from oraclesim.errors import (
    AdapterError,
    ContractError,
    DigestMismatch,
    OracleSimError,
    PipelineError,
    QueryError,
    SchemaViolation,
)
from oraclesim.ledger import Address, Ledger, decode_payload
from oraclesim.market import OracleMarket, SlaProposal
from oraclesim.query.engine import DataSourceType, QueryEngine, QuerySpec
from oraclesim.query.helpers import helper_json, helper_slice, helper_xml, helper_xpath
from oraclesim.reporting import (
    SALT_BYTES,
    ReportingContract,
    RevealState,
    canon,
    commitment_digest,
    decode_canon,
)

# -- schemas ----------------------------------------------------------------

_TYPE_CHECKER = Draft202012Validator.TYPE_CHECKER.redefine(
    "bytes", lambda _checker, value: isinstance(value, (bytes, bytearray))
)
SchemaValidator = jsonschema.validators.extend(Draft202012Validator, type_checker=_TYPE_CHECKER)

SchemaRef = Mapping[str, Any]

ANY: SchemaRef = {}
TEXT: SchemaRef = {"type": ["string", "bytes"]}
TEXT_OR_PARSED: SchemaRef = {"type": ["string", "bytes", "object", "array"]}
SCALAR: SchemaRef = {"type": ["string", "number", "boolean", "bytes"]}
STRING: SchemaRef = {"type": "string"}
BYTES: SchemaRef = {"type": "bytes"}

_validators: dict[str, Any] = {}


def _validator(schema: SchemaRef) -> Any:
    key = json.dumps(schema, sort_keys=True)
    validator = _validators.get(key)
    if validator is None:
        validator = _validators[key] = SchemaValidator(schema)
    return validator


def check_schema(schema: SchemaRef, value: Any, step: int) -> None:
    """Raise SchemaViolation naming ``step`` and the offending path."""
    error = jsonschema.exceptions.best_match(_validator(schema).iter_errors(value))
    if error is not None:
        path = "$" + "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in error.absolute_path)
        raise SchemaViolation(step, path, error.message)


_ALL_TYPES = frozenset({"null", "boolean", "object", "array", "number", "string", "bytes"})


def _types(schema: SchemaRef) -> frozenset[str]:
    declared = schema.get("type")
    if declared is None:
        return _ALL_TYPES
    types = {declared} if isinstance(declared, str) else set(declared)
    if "number" in types:
        types.add("integer")
    if "integer" in types:
        types.add("number")
    return frozenset(types)


def schemas_compatible(output: SchemaRef, following_input: SchemaRef) -> bool:
    """Can some value satisfy both schemas' type constraints?"""
    return bool(_types(output) & _types(following_input))


# -- pipeline types -----------------------------------------------------------

BUILTIN_KINDS = (
    "http_get",
    "http_post",
    "source",
    "parse_json",
    "parse_xml",
    "xpath",
    "slice",
    "to_chain_format",
)

_BUILTIN_SCHEMAS: dict[str, tuple[SchemaRef, SchemaRef]] = {
    "http_get": (ANY, BYTES),
    "http_post": (ANY, BYTES),
    "source": (ANY, ANY),
    "parse_json": (TEXT_OR_PARSED, ANY),
    "parse_xml": (TEXT, STRING),
    "xpath": (TEXT, STRING),
    "slice": (TEXT, TEXT),
    "to_chain_format": (SCALAR, BYTES),
}

_REQUIRED_PARAMS = {
    "http_get": ("url",),
    "http_post": ("url", "body"),
    "source": ("query",),
    "parse_json": ("path",),
    "parse_xml": ("path",),
    "xpath": ("expr",),
    "slice": ("offset", "length"),
    "to_chain_format": ("type",),
}


@dataclass(frozen=True)
class Subtask:
    kind: str
    params: Mapping[str, Any] = field(default_factory=dict)
    input_schema: SchemaRef = field(default_factory=dict)
    output_schema: SchemaRef = field(default_factory=dict)

    @classmethod
    def builtin(cls, kind: str, **params: Any) -> Subtask:
        if kind not in _BUILTIN_SCHEMAS:
            raise PipelineError(f"unknown subtask kind {kind!r}")
        missing = [p for p in _REQUIRED_PARAMS[kind] if p not in params]
        if missing:
            raise PipelineError(f"{kind} needs params {missing}")
        in_schema, out_schema = _BUILTIN_SCHEMAS[kind]
        return cls(kind, params, in_schema, out_schema)

    @property
    def adapter_name(self) -> str | None:
        return self.kind[len("adapter:") :] if self.kind.startswith("adapter:") else None


@dataclass(frozen=True)
class AdapterDescriptor:
    name: str
    input_schema: SchemaRef
    output_schema: SchemaRef

    def subtask(self, **params: Any) -> Subtask:
        return Subtask(f"adapter:{self.name}", params, self.input_schema, self.output_schema)


@dataclass(frozen=True)
class Assignment:
    """One node's job for one SLA.

    ``mirrors`` holds further complete pipelines over alternate sources; the
    node aggregates all pipeline outputs locally before committing.
    ``error`` marks an assignment that could not be built.
    """

    id: str
    sla: int
    subtasks: tuple[Subtask, ...]
    mirrors: tuple[tuple[Subtask, ...], ...] = ()
    answer_kind: str = "numeric"
    aggregator: AggregationMethod = AggregationMethod.MEDIAN
    scale: int = 1
    error: str | None = None

    def __post_init__(self) -> None:
        if self.error is not None:
            return
        for pipeline in (self.subtasks, *self.mirrors):
            if not pipeline:
                raise PipelineError(f"assignment {self.id}: empty pipeline")
            for k in range(len(pipeline) - 1):
                if not schemas_compatible(pipeline[k].output_schema, pipeline[k + 1].input_schema):
                    raise PipelineError(
                        f"assignment {self.id}: output of step {k} ({pipeline[k].kind}) cannot feed "
                        f"step {k + 1} ({pipeline[k + 1].kind})"
                    )

    @property
    def failed(self) -> bool:
        return self.error is not None


@dataclass(frozen=True)
class TraceRecord:
    assignment: str
    step: int
    kind: str
    input_digest: str
    output_digest: str
    status: str

    def to_line(self) -> str:
        return (
            f"{self.assignment} {self.step} {self.kind} "
            f"{self.input_digest} {self.output_digest} {self.status}"
        )


@dataclass(frozen=True)
class PipelineResult:
    value: AnswerValue
    encoded: bytes
    trace: tuple[TraceRecord, ...]


def value_digest(value: Any) -> str:
    if isinstance(value, (bytes, bytearray)):
        material = b"\x03" + bytes(value)
    else:
        material = b"\x00" + json.dumps(value, sort_keys=True, separators=(",", ":"), default=str).encode()
    return hashlib.sha256(material).hexdigest()[:16]


def export_trace(records) -> str:
    return "".join(r.to_line() + "\n" for r in records)


def to_chain_value(value: Any, kind: str, scale: int = 1) -> AnswerValue:
    """Convert a parsed document value to the on-chain answer type."""
    if kind == "boolean":
        if isinstance(value, bool):
            return value
        text = value.decode() if isinstance(value, bytes) else str(value)
        lowered = text.strip().lower()
        if lowered in ("true", "1", "yes"):
            return True
        if lowered in ("false", "0", "no"):
            return False
        raise PipelineError(f"cannot read {text!r} as a boolean")
    if kind == "numeric":
        if isinstance(value, bool):
            raise PipelineError("boolean where a number was expected")
        text = value.decode() if isinstance(value, bytes) else str(value)
        try:
            scaled = Decimal(text.strip()) * scale
            return int(scaled.to_integral_value(rounding=ROUND_HALF_EVEN))
        except (InvalidOperation, ValueError):
            raise PipelineError(f"cannot read {text!r} as a number") from None
    if kind == "bytes":
        return value if isinstance(value, bytes) else str(value).encode("utf-8")
    raise PipelineError(f"unknown answer kind {kind!r}")


def build_pipeline(query: QuerySpec, answer_kind: str, scale: int) -> tuple[Subtask, ...]:
    """Translate a query spec into subtasks: fetch, helpers, chain encoding."""
    if query.source is DataSourceType.URL:
        if len(query.params) > 1:
            steps = [Subtask.builtin("http_post", url=query.params[0], body=query.params[1])]
        else:
            steps = [Subtask.builtin("http_get", url=query.params[0])]
    else:
        bare = QuerySpec(query.source, query.params, (), subqueries=query.subqueries, target=query.target)
        steps = [Subtask.builtin("source", query=bare.to_dict())]
    for helper in query.helpers:
        kind = helper.kind.value
        if kind == "json":
            steps.append(Subtask.builtin("parse_json", path=helper.args[0]))
        elif kind == "xml":
            steps.append(Subtask.builtin("parse_xml", path=helper.args[0]))
        elif kind == "xpath":
            steps.append(Subtask.builtin("xpath", expr=helper.args[0]))
        else:
            steps.append(Subtask.builtin("slice", offset=helper.args[0], length=helper.args[1]))
    steps.append(Subtask.builtin("to_chain_format", type=answer_kind, scale=scale))
    return tuple(steps)


# -- behaviors ----------------------------------------------------------------

BEHAVIOR_KINDS = ("honest", "lazy", "colluding", "random", "tamper")


@dataclass(frozen=True)
class Behavior:
    """How a node treats its assignments.

    honest     reveal what the pipeline produced
    lazy       commit, then never reveal
    colluding  commit and reveal the group's agreed value
    random     commit and reveal a value drawn from the node's generator
    tamper     commit honestly, then reveal a different value
    """

    kind: str = "honest"
    group: str | None = None
    value: Any = None

    def __post_init__(self) -> None:
        if self.kind not in BEHAVIOR_KINDS:
            raise ValueError(f"unknown behavior {self.kind!r}")
        if self.kind == "colluding" and self.value is None:
            raise ValueError("colluding behavior needs a value")


# -- node -----------------------------------------------------------------------


@dataclass
class PendingReport:
    assignment: Assignment
    commit_value: AnswerValue
    reveal_value: AnswerValue
    salt: bytes
    committed: bool = False
    revealed: bool = False
    reveals: bool = True


class OracleNode:
    def __init__(
        self,
        index: int,
        address: Address,
        ledger: Ledger,
        market: OracleMarket,
        reporting: ReportingContract,
        engine: QueryEngine,
        behavior: Behavior | None = None,
        seed: int = 0,
    ) -> None:
        self.index = index
        self.address = address
        self.ledger = ledger
        self.market = market
        self.reporting = reporting
        self.engine = engine
        self.behavior = behavior or Behavior()
        self.rng = random.Random(seed ^ index)
        self._adapters: dict[str, tuple[AdapterDescriptor, Callable[[Any, Mapping[str, Any]], Any]]] = {}
        self._pending: dict[int, PendingReport] = {}

    @property
    def label(self) -> str:
        return self.ledger.label(self.address)

    def register_adapter(
        self, descriptor: AdapterDescriptor, handler: Callable[[Any, Mapping[str, Any]], Any]
    ) -> None:
        if descriptor.name in self._adapters:
            raise PipelineError(f"adapter {descriptor.name!r} already registered on {self.label}")
        self._adapters[descriptor.name] = (descriptor, handler)

    # -- watching the log ------------------------------------------------------

    def bid_on_proposals(self, from_height: int, to_height: int | None = None) -> list[int]:
        """Bid on every open proposal this node can afford and qualifies for."""
        placed = []
        for event in self.ledger.iter_events("sla_proposed", from_height, to_height, self.market.address):
            sla_id = decode_payload(event.payload)["sla"]
            try:
                self.market.submit_bid(self.address, sla_id)
            except OracleSimError:
                continue
            placed.append(sla_id)
        return placed

    def watch_and_build(self, from_height: int = 0) -> list[Assignment]:
        """Assignments for every finalized SLA that selected this node.

        Pure with respect to node state, so replaying the same range yields
        the same list.
        """
        proposals: dict[int, dict[str, Any]] = {}
        for event in self.ledger.iter_events("sla_proposed", emitter=self.market.address):
            data = decode_payload(event.payload)
            proposals[data["sla"]] = data["proposal"]
        me = self.address.hex()
        assignments = []
        for event in self.ledger.iter_events("sla_finalized", from_height, emitter=self.market.address):
            data = decode_payload(event.payload)
            if me not in data["selected"]:
                continue
            assignments.append(self.build_assignment(data["sla"], proposals.get(data["sla"])))
        return assignments

    def build_assignment(self, sla_id: int, proposal_data: Mapping[str, Any] | None) -> Assignment:
        assignment_id = f"sla{sla_id}@{self.index}"
        try:
            if proposal_data is None:
                raise QueryError("no proposal on record")
            proposal = SlaProposal.from_dict(dict(proposal_data))
            main = build_pipeline(proposal.query, proposal.answer_kind, proposal.scale)
            mirrors = tuple(
                build_pipeline(proposal.query.with_main(url), proposal.answer_kind, proposal.scale)
                for url in proposal.query.mirrors
            )
            return Assignment(
                assignment_id, sla_id, main, mirrors, proposal.answer_kind, proposal.aggregator, proposal.scale
            )
        except (OracleSimError, KeyError, TypeError, ValueError) as exc:
            return Assignment(assignment_id, sla_id, (), error=f"malformed query: {exc}")

    # -- execution ---------------------------------------------------------------

    def _execute(self, subtask: Subtask, value: Any, step: int) -> Any:
        kind, params = subtask.kind, subtask.params
        if kind == "http_get":
            return self.engine.http(params["url"])
        if kind == "http_post":
            return self.engine.http(params["url"], params["body"])
        if kind == "source":
            return self.engine.fetch(QuerySpec.from_dict(params["query"]))
        if kind == "parse_json":
            return helper_json(value, params["path"])
        if kind == "parse_xml":
            return helper_xml(value, params["path"])
        if kind == "xpath":
            return helper_xpath(value, params["expr"])
        if kind == "slice":
            return helper_slice(value, params["offset"], params["length"])
        if kind == "to_chain_format":
            return canon(to_chain_value(value, params["type"], params.get("scale", 1)))
        name = subtask.adapter_name
        if name is None or name not in self._adapters:
            raise PipelineError(f"step {step}: unresolvable subtask kind {kind!r}")
        _, handler = self._adapters[name]
        try:
            return handler(value, dict(params))
        except OracleSimError:
            raise
        except Exception as exc:
            raise AdapterError(name, str(exc)) from exc

    def _run_pipeline(self, assignment_id: str, pipeline: tuple[Subtask, ...]) -> tuple[Any, list[TraceRecord]]:
        for k, subtask in enumerate(pipeline):
            name = subtask.adapter_name
            if subtask.kind not in BUILTIN_KINDS and (name is None or name not in self._adapters):
                raise PipelineError(f"step {k}: unresolvable subtask kind {subtask.kind!r}")
        trace: list[TraceRecord] = []
        value: Any = None
        for k, subtask in enumerate(pipeline):
            check_schema(subtask.input_schema, value, k)
            output = self._execute(subtask, value, k)
            check_schema(subtask.output_schema, output, k)
            trace.append(TraceRecord(assignment_id, k, subtask.kind, value_digest(value), value_digest(output), "ok"))
            value = output
        return value, trace

    def run_assignment(self, assignment: Assignment) -> PipelineResult:
        """Run every pipeline of the assignment strictly in order.

        With mirrors, each pipeline's answer is combined by the SLA's
        aggregator (a simple majority for boolean SLAs).
        """
        if assignment.failed:
            raise PipelineError(assignment.error)
        pipelines = (assignment.subtasks, *assignment.mirrors)
        outputs, trace = [], []
        for b, pipeline in enumerate(pipelines):
            run_id = assignment.id if b == 0 else f"{assignment.id}#{b}"
            output, records = self._run_pipeline(run_id, pipeline)
            outputs.append(output)
            trace.extend(records)
        values = [decode_canon(o) if isinstance(o, bytes) and pipeline[-1].kind == "to_chain_format" else o
                  for o, pipeline in zip(outputs, pipelines)]
        value = values[0] if len(values) == 1 else self._combine(assignment, values)
        return PipelineResult(value, canon(value), tuple(trace))

    @staticmethod
    def _combine(assignment: Assignment, values: list[Any]) -> AnswerValue:
        branches = [Address(hashlib.sha256(b"branch" + bytes([i])).digest()) for i in range(len(values))]
        if assignment.answer_kind == "boolean":
            s = len(values)
            result = aggregate_boolean(list(zip(branches, values)), s // 2 + 1, s)
        else:
            method = assignment.aggregator
            if method is AggregationMethod.REPUTATION_WEIGHTED:
                method = AggregationMethod.TRIMMED
            result = aggregate_numeric(list(zip(branches, values)), method)
        if not result.decided:
            raise PipelineError(f"assignment {assignment.id}: sources disagree, no local answer")
        return result.answer

    # -- reporting -----------------------------------------------------------------

    def _behavior_value(self, honest: AnswerValue | None, assignment: Assignment) -> AnswerValue | None:
        kind = self.behavior.kind
        if kind == "colluding":
            return to_chain_value(self.behavior.value, assignment.answer_kind, assignment.scale)
        if kind == "random":
            if assignment.answer_kind == "boolean":
                return self.rng.random() < 0.5
            base = abs(honest) if isinstance(honest, int) and not isinstance(honest, bool) else assignment.scale
            return self.rng.randint(0, 2 * max(base, 1))
        return honest

    def handle(self, assignment: Assignment) -> PipelineResult | None:
        """Run an assignment and queue the report. Failed runs report nothing."""
        try:
            result = self.run_assignment(assignment)
        except OracleSimError:
            result = None
        self.report(assignment, result)
        return result

    def report(self, assignment: Assignment, result: PipelineResult | None) -> str | None:
        """Queue commit and reveal for ``assignment`` and act on the current phase."""
        if assignment.sla in self._pending:
            return self._progress(assignment.sla)
        honest = result.value if result is not None else None
        try:
            value = self._behavior_value(honest, assignment)
        except PipelineError:
            value = None
        if value is None:
            return None
        reveal_value = value
        if self.behavior.kind == "tamper":
            reveal_value = (not value) if isinstance(value, bool) else (
                value + 1 if isinstance(value, int) else bytes(value) + b"\x00"
            )
        salt = self.rng.randbytes(SALT_BYTES)
        self._pending[assignment.sla] = PendingReport(
            assignment, value, reveal_value, salt, reveals=self.behavior.kind != "lazy"
        )
        return self._progress(assignment.sla)

    def pending(self) -> dict[int, PendingReport]:
        return dict(self._pending)

    def tick(self) -> list[tuple[int, str]]:
        """Advance every queued report whose phase is now open."""
        actions = []
        for sla_id in list(self._pending):
            action = self._progress(sla_id)
            if action:
                actions.append((sla_id, action))
        return actions

    def _progress(self, sla_id: int) -> str | None:
        pending = self._pending[sla_id]
        sla = self.market.get(sla_id)
        height = self.ledger.height
        if not pending.committed and sla.commit_open(height):
            digest = commitment_digest(sla_id, self.address, pending.commit_value, pending.salt)
            try:
                self.reporting.commit(sla_id, self.address, digest)
            except ContractError:
                return None
            pending.committed = True
            return "commit"
        if pending.committed and not pending.revealed and pending.reveals and sla.reveal_open(height):
            pending.revealed = True
            try:
                self.reporting.reveal(sla_id, self.address, pending.reveal_value, pending.salt)
            except DigestMismatch:
                return "reveal-rejected"
            except ContractError:
                return None
            return "reveal"
        if not sla.commit_open(height) and not sla.reveal_open(height) and height >= sla.reveal_closes:
            del self._pending[sla_id]
        return None

    def revealed_ok(self, sla_id: int) -> bool:
        return self.reporting.reveal_state(sla_id, self.address) is RevealState.REVEALED
