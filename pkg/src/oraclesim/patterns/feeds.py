"""Publish-subscribe feeds and broadcast channels."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Any

from oraclesim.errors import NotOwner
from oraclesim.ledger import Address, Ledger, json_payload, transactional


@dataclass(frozen=True)
class FeedValue:
    value: Any
    version: int
    height: int


class PubSubFeed:
    """A single latest value with a version counter.

    The "new data" flag is kept by each subscriber as the last version it
    saw; :meth:`feed_poll` is a local read that answers whether anything
    newer exists.
    """

    def __init__(self, ledger: Ledger, owner: Address, label: str = "pubsub-feed") -> None:
        self.ledger = ledger
        self.owner = owner
        self.address = ledger.register_contract(self, label)
        self._latest: FeedValue | None = None

    @property
    def version(self) -> int:
        return self._latest.version if self._latest else 0

    @transactional
    def feed_publish(self, caller: Address, value: Any) -> int:
        if caller != self.owner:
            raise NotOwner(f"{self.ledger.label(caller)} does not own {self.ledger.label(self.address)}")
        self.ledger.require_funds(caller, 0, with_fee=True)
        self.ledger.charge_fee(caller)
        version = self.version + 1
        self._latest = FeedValue(value, version, self.ledger.height)
        self.ledger.emit(self.address, "feed_published", json_payload({"version": version}))
        return version

    def feed_poll(self, last_seen_version: int) -> tuple[Any, int] | None:
        latest = self._latest
        if latest is None or latest.version <= last_seen_version:
            return None
        return latest.value, latest.version


class Subscriber:
    """Client-side poller remembering the last version it consumed."""

    def __init__(self, feed: PubSubFeed) -> None:
        self.feed = feed
        self.last_seen = 0

    @property
    def flag(self) -> bool:
        """True when the feed holds data this subscriber has not read yet."""
        return self.feed.version > self.last_seen

    def poll(self) -> Any | None:
        update = self.feed.feed_poll(self.last_seen)
        if update is None:
            return None
        value, self.last_seen = update
        return value


class ReadMode(str, enum.Enum):
    FULL_HISTORY = "full_history"
    LATEST = "latest"


class BroadcastChannel:
    """Append-only message channel; readers take the whole series or the newest entry."""

    def __init__(self, ledger: Ledger, owner: Address, label: str = "broadcast-channel") -> None:
        self.ledger = ledger
        self.owner = owner
        self.address = ledger.register_contract(self, label)
        self._messages: list[Any] = []

    @transactional
    def channel_publish(self, caller: Address, message: Any) -> int:
        if caller != self.owner:
            raise NotOwner(f"{self.ledger.label(caller)} does not own {self.ledger.label(self.address)}")
        self.ledger.require_funds(caller, 0, with_fee=True)
        self.ledger.charge_fee(caller)
        self._messages.append(message)
        index = len(self._messages)
        self.ledger.emit(self.address, "channel_message", json_payload({"index": index}))
        return index

    def channel_read(self, mode: ReadMode | str = ReadMode.FULL_HISTORY) -> list[Any]:
        if ReadMode(mode) is ReadMode.LATEST:
            return self._messages[-1:]
        return list(self._messages)
