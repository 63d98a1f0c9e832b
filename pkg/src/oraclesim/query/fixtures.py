"""Fixture source registry: the stand-in for live HTTP endpoints.

A registry is a directory of documents plus a manifest listing, for every
URL-string key, the document's relative path and SHA-256 digest::

    fixtures:
      - key: https://api.kraken.com/0/public/Ticker?pair=ETHUSD
        path: kraken_ethusd.json
        sha256: 6f1c...

The manifest is YAML (so plain JSON also works). Digests are checked when the
registry is loaded. Keys beginning with ``POST `` answer HTTP POST queries and
keys beginning with ``wolframalpha:`` hold canned answers for the WolframAlpha
stub.
"""

from __future__ import annotations

import hashlib
import threading
from pathlib import Path

import yaml

from oraclesim.errors import ConfigError, FixtureDigestMismatch, UnknownFixture

WOLFRAM_PREFIX = "wolframalpha:"


class FixtureRegistry:
    def __init__(self, documents: dict[str, bytes] | None = None) -> None:
        self._docs: dict[str, bytes] = dict(documents or {})

    @classmethod
    def load(cls, manifest_path: str | Path) -> FixtureRegistry:
        manifest_path = Path(manifest_path)
        try:
            manifest = yaml.safe_load(manifest_path.read_text(encoding="utf-8"))
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read fixture manifest {manifest_path}: {exc}") from None
        entries = (manifest or {}).get("fixtures")
        if not isinstance(entries, list):
            raise ConfigError(f"{manifest_path}: 'fixtures' must be a list")
        registry = cls()
        base = manifest_path.parent
        for index, entry in enumerate(entries):
            try:
                key, rel, expected = entry["key"], entry["path"], entry["sha256"]
            except (TypeError, KeyError) as exc:
                raise ConfigError(f"{manifest_path}: fixtures[{index}] missing {exc}") from None
            try:
                data = (base / rel).read_bytes()
            except OSError as exc:
                raise ConfigError(f"{manifest_path}: fixtures[{index}]: {exc}") from None
            actual = hashlib.sha256(data).hexdigest()
            if actual != str(expected).lower():
                raise FixtureDigestMismatch(f"{rel}: manifest says {expected}, file hashes to {actual}")
            registry.add(str(key), data)
        return registry

    def add(self, key: str, document: bytes | str) -> None:
        if isinstance(document, str):
            document = document.encode("utf-8")
        self._docs[key] = document

    def get(self, key: str) -> bytes:
        try:
            return self._docs[key]
        except KeyError:
            raise UnknownFixture(key) from None

    def __contains__(self, key: str) -> bool:
        return key in self._docs

    def keys(self) -> list[str]:
        return sorted(self._docs)


class ContentStore:
    """Local content-addressed map, standing in for IPFS."""

    def __init__(self) -> None:
        self._docs: dict[str, bytes] = {}
        self._lock = threading.Lock()

    def put(self, document: bytes | str) -> str:
        if isinstance(document, str):
            document = document.encode("utf-8")
        digest = hashlib.sha256(document).hexdigest()
        with self._lock:
            self._docs[digest] = document
        return digest

    def get(self, digest: str) -> bytes:
        try:
            return self._docs[digest.lower()]
        except KeyError:
            raise UnknownFixture(f"content {digest}") from None
