"""Immediate-read storage and salted Merkle commitments to bulk data."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Sequence

from oraclesim.errors import NotOwner, UnknownKey
from oraclesim.ledger import Address, Ledger, json_payload, transactional

LEAF_TAG = b"\x00"
NODE_TAG = b"\x01"
SALT_BYTES = 32


@dataclass(frozen=True)
class StoredEntry:
    value: bytes
    version: int
    height: int


class ImmediateReadStore:
    """Owner-written key/value storage that any contract can look up.

    Typical use is a certificate registry holding only the digest of each
    document. :meth:`ir_retrieve` is a plain read: no transaction, no fee.
    """

    def __init__(self, ledger: Ledger, owner: Address, label: str = "immediate-read") -> None:
        self.ledger = ledger
        self.owner = owner
        self.address = ledger.register_contract(self, label)
        self._entries: dict[str, StoredEntry] = {}

    @transactional
    def ir_store(self, caller: Address, key: str, digest: bytes) -> int:
        """Store or update ``key``; returns the entry's new version."""
        if caller != self.owner:
            raise NotOwner(f"{self.ledger.label(caller)} does not own {self.ledger.label(self.address)}")
        self.ledger.require_funds(caller, 0, with_fee=True)
        self.ledger.charge_fee(caller)
        previous = self._entries.get(key)
        version = previous.version + 1 if previous else 1
        self._entries[key] = StoredEntry(bytes(digest), version, self.ledger.height)
        self.ledger.emit(self.address, "ir_stored", json_payload({"key": key, "version": version}))
        return version

    def ir_retrieve(self, key: str) -> bytes:
        return self.entry(key).value

    def entry(self, key: str) -> StoredEntry:
        try:
            return self._entries[key]
        except KeyError:
            raise UnknownKey(f"no entry under {key!r}") from None

    def __contains__(self, key: str) -> bool:
        return key in self._entries


def leaf_digest(data: bytes, salt: bytes) -> bytes:
    return hashlib.sha256(LEAF_TAG + salt + data).digest()


def node_digest(left: bytes, right: bytes) -> bytes:
    return hashlib.sha256(NODE_TAG + left + right).digest()


PADDING_LEAF = hashlib.sha256(LEAF_TAG).digest()


@dataclass(frozen=True)
class MerkleProof:
    index: int
    siblings: tuple[bytes, ...]


@dataclass
class SaltedMerkleTree:
    """Binary Merkle tree over salted leaves, padded to a power of two.

    Leaves hash as ``H(0x00 || salt || data)``, interior nodes as
    ``H(0x01 || left || right)``; padding leaves are ``H(0x00)``.
    """

    leaves: list[tuple[bytes, bytes]]
    levels: list[list[bytes]] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if not self.leaves:
            raise ValueError("a Merkle tree needs at least one leaf")
        for _, salt in self.leaves:
            if len(salt) != SALT_BYTES:
                raise ValueError("salts are 32 bytes")
        level = [leaf_digest(data, salt) for data, salt in self.leaves]
        width = 1
        while width < len(level):
            width *= 2
        level += [PADDING_LEAF] * (width - len(level))
        self.levels = [level]
        while len(level) > 1:
            level = [node_digest(level[i], level[i + 1]) for i in range(0, len(level), 2)]
            self.levels.append(level)

    @classmethod
    def build(cls, data: Sequence[bytes], salts: Sequence[bytes]) -> SaltedMerkleTree:
        if len(data) != len(salts):
            raise ValueError(f"{len(data)} leaves but {len(salts)} salts")
        return cls([(bytes(d), bytes(s)) for d, s in zip(data, salts)])

    @property
    def root(self) -> bytes:
        return self.levels[-1][0]

    @property
    def depth(self) -> int:
        return len(self.levels) - 1

    def prove(self, index: int) -> MerkleProof:
        if not 0 <= index < len(self.leaves):
            raise IndexError(f"leaf {index} out of range 0..{len(self.leaves) - 1}")
        siblings = []
        position = index
        for level in self.levels[:-1]:
            siblings.append(level[position ^ 1])
            position //= 2
        return MerkleProof(index, tuple(siblings))


def merkle_build(data: Sequence[bytes], salts: Sequence[bytes]) -> bytes:
    return SaltedMerkleTree.build(data, salts).root


def merkle_verify(root: bytes, data: bytes, salt: bytes, proof: MerkleProof) -> bool:
    if proof.index < 0 or proof.index >> len(proof.siblings):
        return False
    digest = leaf_digest(data, salt)
    position = proof.index
    for sibling in proof.siblings:
        digest = node_digest(sibling, digest) if position & 1 else node_digest(digest, sibling)
        position //= 2
    return digest == root
