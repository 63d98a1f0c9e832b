"""Signature-attestation authenticity proofs and engine key material.

The engine signs ``query_digest || result_digest || height`` with Ed25519,
whose signatures are deterministic, so replays reproduce proofs byte for
byte. Keys are derived from the scenario seed.

Encrypted query parameters use X25519 key agreement, HKDF-SHA256 and
AES-256-GCM. The ciphertext is ``ephemeral_pub || nonce || sealed``,
base64-encoded so it can travel inside a string parameter.
"""

from __future__ import annotations

import base64
import enum
import hashlib
import json
from dataclasses import dataclass
from typing import Any

from cryptography.exceptions import InvalidSignature, InvalidTag
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey, Ed25519PublicKey
from cryptography.hazmat.primitives.asymmetric.x25519 import X25519PrivateKey, X25519PublicKey
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from oraclesim.errors import DecryptError

_RAW = serialization.Encoding.Raw
_RAW_PUB = serialization.PublicFormat.Raw
_RAW_PRIV = serialization.PrivateFormat.Raw
_NO_ENC = serialization.NoEncryption()
_HKDF_INFO = b"ORACLESIM-PARAM-ENC-V1"


class ProofType(str, enum.Enum):
    """Closed set of proof kinds. Only signature attestations are built."""

    NONE = "none"
    SIGNATURE = "signature"


def result_bytes(result: Any) -> bytes:
    """Byte form of a result document, as written to result files."""
    if isinstance(result, bytes):
        return result
    if isinstance(result, str):
        return result.encode("utf-8")
    return json.dumps(result, sort_keys=True, separators=(",", ":")).encode()


def result_digest(result: Any) -> bytes:
    return hashlib.sha256(result_bytes(result)).digest()


def _seed_bytes(seed: int, purpose: bytes) -> bytes:
    return hashlib.sha256(purpose + seed.to_bytes(16, "big", signed=True)).digest()


class EngineKeys:
    """Signing and decryption keys derived deterministically from a seed."""

    def __init__(self, seed: int) -> None:
        self._signing = Ed25519PrivateKey.from_private_bytes(_seed_bytes(seed, b"sign"))
        self._decrypting = X25519PrivateKey.from_private_bytes(_seed_bytes(seed, b"decrypt"))
        self.public_key = self._signing.public_key().public_bytes(_RAW, _RAW_PUB)
        self.encryption_key = self._decrypting.public_key().public_bytes(_RAW, _RAW_PUB)

    @property
    def key_id(self) -> str:
        return key_id(self.public_key)

    def sign(self, message: bytes) -> bytes:
        return self._signing.sign(message)

    def decrypt(self, ciphertext: str) -> str:
        return decrypt_with(self._decrypting, ciphertext)


def key_id(public_key: bytes) -> str:
    return hashlib.sha256(public_key).hexdigest()[:16]


@dataclass(frozen=True)
class AuthenticityProof:
    query_digest: bytes
    result_digest: bytes
    height: int
    signer: str
    signature: bytes
    kind: ProofType = ProofType.SIGNATURE

    def signed_message(self) -> bytes:
        return signed_message(self.query_digest, self.result_digest, self.height)

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind.value,
            "query_digest": self.query_digest.hex(),
            "result_digest": self.result_digest.hex(),
            "height": self.height,
            "signer": self.signer,
            "signature": self.signature.hex(),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> AuthenticityProof:
        return cls(
            query_digest=bytes.fromhex(data["query_digest"]),
            result_digest=bytes.fromhex(data["result_digest"]),
            height=int(data["height"]),
            signer=str(data["signer"]),
            signature=bytes.fromhex(data["signature"]),
            kind=ProofType(data.get("kind", "signature")),
        )


def signed_message(query_digest: bytes, result_digest: bytes, height: int) -> bytes:
    return query_digest + result_digest + height.to_bytes(8, "big")


def make_proof(keys: EngineKeys, query_digest: bytes, result: Any, height: int) -> AuthenticityProof:
    digest = result_digest(result)
    signature = keys.sign(signed_message(query_digest, digest, height))
    return AuthenticityProof(query_digest, digest, height, keys.key_id, signature)


def verify_proof(
    result: Any,
    proof: AuthenticityProof,
    public_key: bytes,
    query_digest: bytes | None = None,
) -> bool:
    """True iff ``proof`` binds ``result`` (and the query, if given) under ``public_key``.

    Never raises: anything malformed simply fails verification.
    """
    try:
        if proof.kind is not ProofType.SIGNATURE:
            return False
        if proof.signer != key_id(public_key):
            return False
        if result_digest(result) != proof.result_digest:
            return False
        if query_digest is not None and query_digest != proof.query_digest:
            return False
        Ed25519PublicKey.from_public_bytes(public_key).verify(proof.signature, proof.signed_message())
        return True
    except (InvalidSignature, ValueError, TypeError, AttributeError, OverflowError):
        return False


def _derive_aes_key(shared: bytes) -> bytes:
    return HKDF(algorithm=hashes.SHA256(), length=32, salt=None, info=_HKDF_INFO).derive(shared)


def encrypt_param(plaintext: str, recipient_key: bytes, entropy: bytes) -> str:
    """Encrypt ``plaintext`` to an X25519 public key.

    ``entropy`` (at least 44 bytes) supplies the ephemeral key and nonce, so
    a seeded caller gets reproducible ciphertexts.
    """
    if len(entropy) < 44:
        raise ValueError("need 44 bytes of entropy")
    ephemeral = X25519PrivateKey.from_private_bytes(entropy[:32])
    nonce = entropy[32:44]
    shared = ephemeral.exchange(X25519PublicKey.from_public_bytes(recipient_key))
    sealed = AESGCM(_derive_aes_key(shared)).encrypt(nonce, plaintext.encode("utf-8"), None)
    blob = ephemeral.public_key().public_bytes(_RAW, _RAW_PUB) + nonce + sealed
    return base64.b64encode(blob).decode("ascii")


def decrypt_with(private_key: X25519PrivateKey, ciphertext: str) -> str:
    try:
        blob = base64.b64decode(ciphertext, validate=True)
    except (ValueError, TypeError):
        raise DecryptError("ciphertext is not base64") from None
    if len(blob) < 32 + 12 + 16:
        raise DecryptError("ciphertext too short")
    peer, nonce, sealed = blob[:32], blob[32:44], blob[44:]
    try:
        shared = private_key.exchange(X25519PublicKey.from_public_bytes(peer))
        plain = AESGCM(_derive_aes_key(shared)).decrypt(nonce, sealed, None)
    except (InvalidTag, ValueError):
        raise DecryptError("wrong key or corrupted ciphertext") from None
    return plain.decode("utf-8")


def x25519_keypair(secret: bytes) -> tuple[X25519PrivateKey, bytes]:
    """Helper for parties (e.g. purchasers) that want results encrypted to them."""
    private = X25519PrivateKey.from_private_bytes(hashlib.sha256(secret).digest())
    return private, private.public_key().public_bytes(_RAW, _RAW_PUB)
