"""Parsing helpers applied to intermediate query results.

Four helpers exist: ``json(path)``, ``xml(path)``, ``xpath(expr)`` and
``slice(offset, length)``. Each failure carries one of three distinct error
codes so callers can tell a malformed document from a missing element or a
bad byte range.

Path grammars are deliberately small:

* json: dot-separated object keys, with non-negative integers indexing
  arrays, e.g. ``result.XETHZUSD.c.0``. The empty path is the document.
* xml: slash-separated element names starting at the root element,
  e.g. ``r/p``. The first child with a matching tag is taken at each step.
* xpath: child-axis steps from the root, each a tag name or ``*`` with an
  optional 1-based positional predicate, e.g. ``/html/body/div[2]/p``.
  When several nodes match, the first in document order wins.
"""

from __future__ import annotations

import enum
import json
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from typing import Any

from oraclesim.errors import QueryError


class HelperErrorCode(str, enum.Enum):
    PARSE_FAILURE = "parse_failure"
    PATH_MISS = "path_miss"
    OUT_OF_BOUNDS = "out_of_bounds"
    BAD_ARGUMENT = "bad_argument"


class HelperError(QueryError):
    def __init__(self, code: HelperErrorCode, message: str) -> None:
        super().__init__(f"{code.value}: {message}")
        self.code = code


class HelperKind(str, enum.Enum):
    JSON = "json"
    XML = "xml"
    XPATH = "xpath"
    SLICE = "slice"


_HELPER_RE = re.compile(r"^\s*(json|xml|xpath|slice)\((.*)\)\s*$", re.DOTALL)


@dataclass(frozen=True)
class ParsingHelper:
    kind: HelperKind
    args: tuple[Any, ...]

    @classmethod
    def json(cls, path: str) -> ParsingHelper:
        return cls(HelperKind.JSON, (path,))

    @classmethod
    def xml(cls, path: str) -> ParsingHelper:
        return cls(HelperKind.XML, (path,))

    @classmethod
    def xpath(cls, expr: str) -> ParsingHelper:
        return cls(HelperKind.XPATH, (expr,))

    @classmethod
    def slice(cls, offset: int, length: int) -> ParsingHelper:
        return cls(HelperKind.SLICE, (offset, length))

    @classmethod
    def parse(cls, text: str) -> ParsingHelper:
        """Parse the textual form, e.g. ``json(a.b)`` or ``slice(2, 4)``."""
        match = _HELPER_RE.match(text)
        if not match:
            raise HelperError(HelperErrorCode.BAD_ARGUMENT, f"unrecognized helper {text!r}")
        kind, inner = HelperKind(match.group(1)), match.group(2).strip()
        if kind is HelperKind.SLICE:
            parts = [p.strip() for p in inner.split(",")]
            if len(parts) != 2 or not all(re.fullmatch(r"-?\d+", p) for p in parts):
                raise HelperError(HelperErrorCode.BAD_ARGUMENT, f"slice takes (offset, length): {text!r}")
            return cls.slice(int(parts[0]), int(parts[1]))
        return cls(kind, (inner,))

    def __str__(self) -> str:
        return f"{self.kind.value}({', '.join(str(a) for a in self.args)})"

    def apply(self, doc: Any) -> Any:
        if self.kind is HelperKind.JSON:
            return helper_json(doc, self.args[0])
        if self.kind is HelperKind.XML:
            return helper_xml(doc, self.args[0])
        if self.kind is HelperKind.XPATH:
            return helper_xpath(doc, self.args[0])
        return helper_slice(doc, *self.args)


def apply_helpers(doc: Any, helpers) -> Any:
    for helper in helpers:
        doc = helper.apply(doc)
    return doc


def _as_text(doc: Any) -> str:
    if isinstance(doc, bytes):
        try:
            return doc.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise HelperError(HelperErrorCode.PARSE_FAILURE, f"not UTF-8: {exc}") from None
    if isinstance(doc, str):
        return doc
    raise HelperError(HelperErrorCode.PARSE_FAILURE, f"expected a text document, got {type(doc).__name__}")


def helper_json(doc: Any, path: str) -> Any:
    """Extract the element at ``path``. Already-parsed documents pass through."""
    if isinstance(doc, (str, bytes)):
        try:
            node = json.loads(_as_text(doc))
        except json.JSONDecodeError as exc:
            raise HelperError(HelperErrorCode.PARSE_FAILURE, f"invalid JSON: {exc}") from None
    else:
        node = doc
    if path == "":
        return node
    for key in path.split("."):
        if isinstance(node, dict):
            if key not in node:
                raise HelperError(HelperErrorCode.PATH_MISS, f"no key {key!r} in {path!r}")
            node = node[key]
        elif isinstance(node, list):
            if not key.isdigit():
                raise HelperError(HelperErrorCode.PATH_MISS, f"{key!r} is not an array index in {path!r}")
            index = int(key)
            if index >= len(node):
                raise HelperError(HelperErrorCode.PATH_MISS, f"index {index} past end in {path!r}")
            node = node[index]
        else:
            raise HelperError(HelperErrorCode.PATH_MISS, f"cannot descend into scalar at {key!r} in {path!r}")
    return node


def _parse_xml(doc: Any) -> ET.Element:
    try:
        return ET.fromstring(_as_text(doc))
    except ET.ParseError as exc:
        raise HelperError(HelperErrorCode.PARSE_FAILURE, f"invalid XML: {exc}") from None


def helper_xml(doc: Any, path: str) -> str:
    root = _parse_xml(doc)
    steps = [s for s in path.strip("/").split("/")]
    if not steps or not steps[0]:
        raise HelperError(HelperErrorCode.BAD_ARGUMENT, "empty xml path")
    if root.tag != steps[0]:
        raise HelperError(HelperErrorCode.PATH_MISS, f"root is <{root.tag}>, path starts with {steps[0]!r}")
    node = root
    for step in steps[1:]:
        child = node.find(step) if re.fullmatch(r"[\w.\-]+", step) else None
        if child is None:
            raise HelperError(HelperErrorCode.PATH_MISS, f"no <{step}> under <{node.tag}>")
        node = child
    return node.text or ""


_XPATH_STEP = re.compile(r"^([\w.\-]+|\*)(?:\[(\d+)\])?$")


def _xpath_steps(expr: str) -> list[tuple[str, int | None]]:
    body = expr.strip()
    if body.startswith("/"):
        body = body[1:]
    if not body or "//" in expr:
        raise HelperError(HelperErrorCode.BAD_ARGUMENT, f"unsupported xpath {expr!r}")
    steps = []
    for raw in body.split("/"):
        match = _XPATH_STEP.match(raw)
        if not match:
            raise HelperError(HelperErrorCode.BAD_ARGUMENT, f"unsupported xpath step {raw!r}")
        position = int(match.group(2)) if match.group(2) else None
        if position == 0:
            raise HelperError(HelperErrorCode.BAD_ARGUMENT, "xpath positions are 1-based")
        steps.append((match.group(1), position))
    return steps


def _select(candidates: list[ET.Element], name: str, position: int | None) -> list[ET.Element]:
    matching = [c for c in candidates if name == "*" or c.tag == name]
    if position is None:
        return matching
    return matching[position - 1 : position]


def helper_xpath(doc: Any, expr: str) -> str:
    """Text of the first node selected by a child-axis xpath."""
    steps = _xpath_steps(expr)
    root = _parse_xml(doc)
    (name, position), rest = steps[0], steps[1:]
    nodes = _select([root], name, position)
    for name, position in rest:
        # contexts are in document order, so the concatenation stays in order
        nodes = [hit for ctx in nodes for hit in _select(list(ctx), name, position)]
    if not nodes:
        raise HelperError(HelperErrorCode.PATH_MISS, f"xpath {expr!r} selected nothing")
    return nodes[0].text or ""


def helper_slice(data: Any, offset: int, length: int) -> Any:
    if not isinstance(data, (bytes, str)):
        raise HelperError(HelperErrorCode.PARSE_FAILURE, f"slice needs bytes, got {type(data).__name__}")
    if offset < 0 or length < 0 or offset + length > len(data):
        raise HelperError(
            HelperErrorCode.OUT_OF_BOUNDS, f"slice({offset}, {length}) outside input of length {len(data)}"
        )
    return data[offset : offset + length]
