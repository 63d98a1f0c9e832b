"""Query evaluation: data source types, parameter arrays and parsing helpers."""

from __future__ import annotations

import enum
import hashlib
import json
import re
import threading
from dataclasses import dataclass
from typing import Any, Callable, Mapping, Sequence

from oraclesim.errors import QueryError, UnknownFixture
from oraclesim.query.fixtures import WOLFRAM_PREFIX, ContentStore, FixtureRegistry
from oraclesim.query.helpers import ParsingHelper, apply_helpers
from oraclesim.query.proofs import AuthenticityProof, EngineKeys, ProofType, make_proof


class DataSourceType(str, enum.Enum):
    URL = "URL"
    WOLFRAM_ALPHA = "WolframAlphaStub"
    CONTENT_STORE = "ContentStore"
    RANDOM = "Random"
    COMPUTATION = "Computation"
    NESTED = "Nested"
    IDENTITY = "Identity"
    DECRYPT = "Decrypt"


@dataclass(frozen=True)
class QuerySpec:
    """What to fetch and how to post-process it.

    ``params`` follows the ``query: (parameter1, parameter2, ...)`` form; the
    first parameter is the main argument (for URL sources, the URL; a second
    parameter turns the GET into a POST with that body).

    ``Nested`` queries evaluate ``subqueries`` first and substitute their
    results for ``${0}``, ``${1}``, ... in ``params``. Without a ``target``
    the substituted first parameter is the result; with one, the substituted
    parameters are run against that source.

    ``mirrors`` lists further URL keys serving the same document; an oracle
    node queries each and aggregates locally.
    """

    source: DataSourceType
    params: tuple[str, ...]
    helpers: tuple[ParsingHelper, ...] = ()
    proof_type: ProofType = ProofType.NONE
    subqueries: tuple[QuerySpec, ...] = ()
    target: DataSourceType | None = None
    mirrors: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.params:
            raise QueryError("a query needs at least its main parameter")
        if not all(isinstance(p, str) for p in self.params):
            raise QueryError("query parameters are strings")
        if self.mirrors and self.source is not DataSourceType.URL:
            raise QueryError("mirrors only apply to URL sources")
        if self.source is DataSourceType.NESTED and not self.subqueries:
            raise QueryError("a Nested query needs subqueries")
        if self.target is DataSourceType.NESTED:
            raise QueryError("a Nested target cannot itself be Nested")

    @classmethod
    def url(cls, url: str, *helpers: str | ParsingHelper, **kw: Any) -> QuerySpec:
        return cls(DataSourceType.URL, (url,), _helpers(helpers), **kw)

    @classmethod
    def identity(cls, value: str, *helpers: str | ParsingHelper) -> QuerySpec:
        return cls(DataSourceType.IDENTITY, (value,), _helpers(helpers))

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {
            "source": self.source.value,
            "params": list(self.params),
            "helpers": [str(h) for h in self.helpers],
            "proof": self.proof_type.value,
        }
        if self.subqueries:
            data["subqueries"] = [q.to_dict() for q in self.subqueries]
        if self.target is not None:
            data["target"] = self.target.value
        if self.mirrors:
            data["mirrors"] = list(self.mirrors)
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> QuerySpec:
        if not isinstance(data, Mapping):
            raise QueryError("a query must be a mapping")
        unknown = set(data) - {"source", "params", "helpers", "proof", "subqueries", "target", "mirrors"}
        if unknown:
            raise QueryError(f"unknown query fields {sorted(unknown)}")
        try:
            source = DataSourceType(data["source"])
            params = data["params"]
            if isinstance(params, str):
                params = [params]
            target = data.get("target")
            return cls(
                source=source,
                params=tuple(str(p) for p in params),
                helpers=_helpers(data.get("helpers", ())),
                proof_type=ProofType(data.get("proof", "none")),
                subqueries=tuple(cls.from_dict(q) for q in data.get("subqueries", ())),
                target=DataSourceType(target) if target is not None else None,
                mirrors=tuple(str(m) for m in data.get("mirrors", ())),
            )
        except KeyError as exc:
            raise QueryError(f"query missing {exc}") from None
        except (TypeError, ValueError) as exc:
            raise QueryError(f"malformed query: {exc}") from None

    def digest(self) -> bytes:
        encoded = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(b"ORACLE-QUERY-V1" + encoded).digest()

    def with_main(self, url: str) -> QuerySpec:
        """Same query against a different main argument (used for mirrors)."""
        return QuerySpec(self.source, (url,) + self.params[1:], self.helpers, self.proof_type)


def _helpers(items: Sequence[str | ParsingHelper]) -> tuple[ParsingHelper, ...]:
    return tuple(h if isinstance(h, ParsingHelper) else ParsingHelper.parse(h) for h in items)


@dataclass(frozen=True)
class QueryResult:
    result: Any
    proof: AuthenticityProof | None = None


_PLACEHOLDER = re.compile(r"\$\{(\d+)\}")


def _as_param(value: Any) -> str:
    if isinstance(value, bytes):
        try:
            return value.decode("utf-8")
        except UnicodeDecodeError:
            return value.hex()
    if isinstance(value, str):
        return value
    return json.dumps(value, sort_keys=True, separators=(",", ":"))


class QueryEngine:
    """Evaluates :class:`QuerySpec` objects against local fixtures.

    ``execute`` is a pure function of (spec, fixture registry, engine seed):
    the only randomness is the Random source, which is a keyed expansion of
    the seed and the request id.
    """

    def __init__(
        self,
        seed: int,
        fixtures: FixtureRegistry | None = None,
        clock: Callable[[], int] = lambda: 0,
    ) -> None:
        self.seed = seed
        self.keys = EngineKeys(seed)
        self.fixtures = fixtures or FixtureRegistry()
        self.content = ContentStore()
        self.clock = clock
        self._computations: dict[str, Callable[..., Any]] = {}
        self._lock = threading.Lock()

    @property
    def public_key(self) -> bytes:
        return self.keys.public_key

    @property
    def encryption_key(self) -> bytes:
        return self.keys.encryption_key

    def register_computation(self, name: str, fn: Callable[..., Any]) -> None:
        with self._lock:
            if name in self._computations:
                raise QueryError(f"computation {name!r} already registered")
            self._computations[name] = fn

    # -- sources -------------------------------------------------------------

    def fetch(self, spec: QuerySpec) -> Any:
        """Raw source result of ``spec``, before parsing helpers."""
        source, params = spec.source, spec.params
        if source is DataSourceType.IDENTITY:
            return params[0]
        if source is DataSourceType.URL:
            return self.http(params[0], params[1] if len(params) > 1 else None)
        if source is DataSourceType.WOLFRAM_ALPHA:
            return self.fixtures.get(WOLFRAM_PREFIX + params[0]).decode("utf-8")
        if source is DataSourceType.CONTENT_STORE:
            return self.content.get(params[0])
        if source is DataSourceType.RANDOM:
            request_id = params[1] if len(params) > 1 else spec.digest().hex()
            return self.random_bytes(_int_param(params[0]), request_id)[0]
        if source is DataSourceType.COMPUTATION:
            with self._lock:
                fn = self._computations.get(params[0])
            if fn is None:
                raise QueryError(f"unknown computation {params[0]!r}")
            return fn(*params[1:])
        if source is DataSourceType.DECRYPT:
            return self.decrypt_param(params[0])
        return self._nested(spec)

    def http(self, url: str, body: str | None = None) -> bytes:
        key = url if body is None else f"POST {url}"
        try:
            return self.fixtures.get(key)
        except UnknownFixture:
            raise UnknownFixture(f"no fixture for {key!r}") from None

    def _nested(self, spec: QuerySpec) -> Any:
        values = [_as_param(self.evaluate(sub)) for sub in spec.subqueries]

        def substitute(text: str) -> str:
            def repl(match: re.Match[str]) -> str:
                index = int(match.group(1))
                if index >= len(values):
                    raise QueryError(f"placeholder ${{{index}}} has no subquery")
                return values[index]

            return _PLACEHOLDER.sub(repl, text)

        params = tuple(substitute(p) for p in spec.params)
        if spec.target is None:
            return params[0]
        return self.fetch(QuerySpec(spec.target, params))

    # -- public operations ----------------------------------------------------

    def evaluate(self, spec: QuerySpec) -> Any:
        return apply_helpers(self.fetch(spec), spec.helpers)

    def execute(self, spec: QuerySpec) -> QueryResult:
        result = self.evaluate(spec)
        proof = None
        if spec.proof_type is ProofType.SIGNATURE:
            proof = make_proof(self.keys, spec.digest(), result, self.clock())
        return QueryResult(result, proof)

    def random_bytes(self, n: int, request_id: str) -> tuple[bytes, AuthenticityProof]:
        """Stubbed secure randomness: a SHAKE-256 expansion of (seed, request id)."""
        if n < 1:
            raise QueryError("random_bytes needs n >= 1")
        seed = self.seed.to_bytes(16, "big", signed=True)
        rid = request_id.encode("utf-8")
        material = b"ORACLE-RANDOM-V1" + seed + len(rid).to_bytes(4, "big") + rid
        output = hashlib.shake_256(material).digest(n)
        return output, make_proof(self.keys, random_query_digest(n, request_id), output, self.clock())

    def decrypt_param(self, ciphertext: str) -> str:
        return self.keys.decrypt(ciphertext)


def random_query_digest(n: int, request_id: str) -> bytes:
    encoded = json.dumps({"random": n, "request_id": request_id}, sort_keys=True).encode()
    return hashlib.sha256(b"ORACLE-QUERY-V1" + encoded).digest()


def _int_param(text: str) -> int:
    try:
        return int(text)
    except ValueError:
        raise QueryError(f"expected an integer parameter, got {text!r}") from None
