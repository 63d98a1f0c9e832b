"""Oracle design patterns as reusable contract templates."""

from oraclesim.patterns.feeds import BroadcastChannel, FeedValue, PubSubFeed, ReadMode, Subscriber
from oraclesim.patterns.request_response import (
    FAILED_TOPIC,
    STEP_TOPICS,
    Abort,
    Delivery,
    LifecycleRun,
    RequestResponseOracle,
)
from oraclesim.patterns.storage import (
    ImmediateReadStore,
    MerkleProof,
    SaltedMerkleTree,
    leaf_digest,
    merkle_build,
    merkle_verify,
    node_digest,
)

__all__ = [
    "Abort",
    "BroadcastChannel",
    "Delivery",
    "FAILED_TOPIC",
    "FeedValue",
    "ImmediateReadStore",
    "LifecycleRun",
    "MerkleProof",
    "PubSubFeed",
    "ReadMode",
    "RequestResponseOracle",
    "STEP_TOPICS",
    "SaltedMerkleTree",
    "Subscriber",
    "leaf_digest",
    "merkle_build",
    "merkle_verify",
    "node_digest",
]
