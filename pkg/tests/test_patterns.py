from __future__ import annotations

import hashlib

import pytest
from conftest import make_proposal
from hypothesis import given, settings
from hypothesis import strategies as st

from oraclesim.errors import NotOwner, UnknownKey
from oraclesim.ledger import Ledger
from oraclesim.network import OracleNetwork
from oraclesim.patterns import (
    FAILED_TOPIC,
    STEP_TOPICS,
    BroadcastChannel,
    ImmediateReadStore,
    MerkleProof,
    PubSubFeed,
    ReadMode,
    RequestResponseOracle,
    SaltedMerkleTree,
    Subscriber,
    merkle_build,
    merkle_verify,
)
from oraclesim.query.engine import DataSourceType, QuerySpec
from oraclesim.query.proofs import decrypt_with, encrypt_param, x25519_keypair


def sha(*parts: bytes) -> bytes:
    return hashlib.sha256(b"".join(parts)).digest()


def salts(n: int, tag: bytes = b"s") -> list[bytes]:
    return [sha(tag, bytes([i])) for i in range(n)]


class TestImmediateRead:
    def store(self):
        ledger = Ledger()
        owner = ledger.create_account(0, label="registry-owner")
        return ledger, owner, ImmediateReadStore(ledger, owner)

    def test_round_trip(self):
        _, owner, store = self.store()
        digest = sha(b"certificate #1")
        assert store.ir_store(owner, "cert-1", digest) == 1
        assert store.ir_retrieve("cert-1") == digest

    def test_unknown_key(self):
        _, _, store = self.store()
        with pytest.raises(UnknownKey):
            store.ir_retrieve("nope")

    def test_update_returns_newest(self):
        _, owner, store = self.store()
        store.ir_store(owner, "cert", sha(b"v1"))
        assert store.ir_store(owner, "cert", sha(b"v2")) == 2
        assert store.ir_retrieve("cert") == sha(b"v2")

    def test_only_owner_writes(self):
        ledger, _, store = self.store()
        with pytest.raises(NotOwner):
            store.ir_store(ledger.create_account(0), "cert", sha(b"x"))

    def test_read_is_free_and_silent(self):
        ledger, owner, store = self.store()
        store.ir_store(owner, "cert", sha(b"x"))
        before = len(ledger.events)
        store.ir_retrieve("cert")
        assert len(ledger.events) == before


class TestMerkle:
    def test_single_leaf(self):
        salt = salts(1)[0]
        tree = SaltedMerkleTree.build([b"only"], [salt])
        assert tree.root == sha(b"\x00", salt, b"only")
        assert tree.depth == 0
        proof = tree.prove(0)
        assert proof.siblings == ()
        assert merkle_verify(tree.root, b"only", salt, proof)

    def test_hand_built_depth_two(self):
        data = [b"alice", b"bob", b"carol", b"dave"]
        s = salts(4)
        leaves = [sha(b"\x00", s[i], data[i]) for i in range(4)]
        left, right = sha(b"\x01", leaves[0], leaves[1]), sha(b"\x01", leaves[2], leaves[3])
        root = sha(b"\x01", left, right)
        tree = SaltedMerkleTree.build(data, s)
        assert tree.root == root == merkle_build(data, s)
        proof = tree.prove(2)
        assert proof.siblings == (leaves[3], left)
        assert merkle_verify(root, b"carol", s[2], proof)
        assert not merkle_verify(root, b"carol", s[3], proof)

    def test_padding(self):
        s = salts(3)
        tree = SaltedMerkleTree.build([b"a", b"b", b"c"], s)
        pad = sha(b"\x00")
        leaves = [sha(b"\x00", s[i], d) for i, d in enumerate([b"a", b"b", b"c"])]
        assert tree.root == sha(b"\x01", sha(b"\x01", leaves[0], leaves[1]), sha(b"\x01", leaves[2], pad))

    def test_tampered_proof_node(self):
        s = salts(4)
        tree = SaltedMerkleTree.build([b"a", b"b", b"c", b"d"], s)
        proof = tree.prove(1)
        bad = MerkleProof(1, (proof.siblings[0], sha(b"forged")))
        assert not merkle_verify(tree.root, b"b", s[1], bad)

    def test_index_out_of_range(self):
        tree = SaltedMerkleTree.build([b"a"], salts(1))
        with pytest.raises(IndexError):
            tree.prove(1)

    def test_index_beyond_depth_rejected(self):
        s = salts(2)
        tree = SaltedMerkleTree.build([b"a", b"b"], s)
        proof = tree.prove(0)
        assert not merkle_verify(tree.root, b"a", s[0], MerkleProof(2, proof.siblings))

    def test_mismatched_salts(self):
        with pytest.raises(ValueError):
            SaltedMerkleTree.build([b"a", b"b"], salts(1))

    def test_salt_length(self):
        with pytest.raises(ValueError):
            SaltedMerkleTree.build([b"a"], [b"short"])

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.binary(max_size=16), min_size=1, max_size=16), st.binary(min_size=1, max_size=8))
    def test_every_proof_verifies(self, data, tag):
        s = salts(len(data), tag)
        tree = SaltedMerkleTree.build(data, s)
        for i, d in enumerate(data):
            assert merkle_verify(tree.root, d, s[i], tree.prove(i))


class TestFeeds:
    def feed(self):
        ledger = Ledger()
        owner = ledger.create_account(0)
        return ledger, owner, PubSubFeed(ledger, owner)

    def test_version_gate(self):
        _, owner, feed = self.feed()
        assert feed.feed_publish(owner, "v1") == 1
        assert feed.feed_poll(0) == ("v1", 1)
        assert feed.feed_poll(1) is None

    def test_latest_wins(self):
        _, owner, feed = self.feed()
        feed.feed_publish(owner, "v1")
        feed.feed_publish(owner, "v2")
        assert feed.feed_poll(0) == ("v2", 2)

    def test_poll_before_publish(self):
        _, _, feed = self.feed()
        assert feed.feed_poll(0) is None

    def test_owner_only(self):
        ledger, _, feed = self.feed()
        with pytest.raises(NotOwner):
            feed.feed_publish(ledger.create_account(0), 1)

    def test_subscriber_flag(self):
        _, owner, feed = self.feed()
        sub, other = Subscriber(feed), Subscriber(feed)
        assert not sub.flag
        feed.feed_publish(owner, 10)
        assert sub.flag and other.flag
        assert sub.poll() == 10
        assert not sub.flag and other.flag
        assert sub.poll() is None

    def test_polling_is_local(self):
        ledger, owner, feed = self.feed()
        feed.feed_publish(owner, 1)
        before = len(ledger.events)
        feed.feed_poll(0)
        assert len(ledger.events) == before

    @given(st.lists(st.one_of(st.just("publish"), st.just("poll")), max_size=30))
    def test_poll_never_repeats_a_version(self, actions):
        _, owner, feed = self.feed()
        sub = Subscriber(feed)
        seen = []
        for i, action in enumerate(actions):
            if action == "publish":
                feed.feed_publish(owner, i)
            elif sub.poll() is not None:
                seen.append(sub.last_seen)
        assert seen == sorted(set(seen))


class TestChannel:
    def channel(self):
        ledger = Ledger()
        owner = ledger.create_account(0)
        return owner, BroadcastChannel(ledger, owner)

    def test_full_history_and_latest(self):
        owner, channel = self.channel()
        for rate in ("1.08", "1.09", "1.07"):
            channel.channel_publish(owner, rate)
        assert channel.channel_read(ReadMode.FULL_HISTORY) == ["1.08", "1.09", "1.07"]
        assert channel.channel_read("latest") == ["1.07"]

    def test_empty_latest(self):
        _, channel = self.channel()
        assert channel.channel_read(ReadMode.LATEST) == []

    def test_owner_only(self):
        _, channel = self.channel()
        with pytest.raises(NotOwner):
            channel.channel_publish(channel.ledger.create_account(0), "x")


def rr_network(fixtures, nodes=3, seed=2):
    net = OracleNetwork(seed=seed, fixtures=fixtures)
    for _ in range(nodes):
        net.add_node(1000)
    rr = RequestResponseOracle(net)
    purchaser = net.ledger.create_account(10_000, label="purchaser")
    return net, rr, purchaser


def step_sequence(ledger, sla_id):
    marker = str(sla_id).encode()
    return [e.topic for e in ledger.events if e.topic.startswith("rr_step_") and e.payload == marker]


class TestRequestResponse:
    def test_single_shot_emits_seven_steps_in_order(self, fixtures):
        net, rr, purchaser = rr_network(fixtures)
        run = rr.run(purchaser, make_proposal())
        (delivery,) = run.deliveries
        assert delivery.result.answer == 301248
        assert step_sequence(net.ledger, delivery.sla_id) == list(STEP_TOPICS)
        assert run.aborted == [] and run.pending == []

    def test_unfunded_purchaser_aborts_at_step_three(self, fixtures):
        net, rr, _ = rr_network(fixtures)
        broke = net.ledger.create_account(5)
        run = rr.run(broke, make_proposal(reward=300))
        (abort,) = run.aborted
        assert "payment" in abort.reason
        assert step_sequence(net.ledger, abort.sla_id) == ["rr_step_1", "rr_step_2", FAILED_TOPIC]
        assert run.deliveries == []

    def test_unreadable_encrypted_param_aborts(self, fixtures):
        net, rr, purchaser = rr_network(fixtures)
        _, stranger = x25519_keypair(b"someone else")
        hidden = encrypt_param("ETHUSD", stranger, bytes(64))
        query = QuerySpec(DataSourceType.DECRYPT, (hidden,))
        run = rr.run(purchaser, make_proposal(query=query))
        assert len(run.aborted) == 1 and "encrypted" in run.aborted[0].reason

    def test_no_bidders_aborts(self, fixtures):
        net, rr, purchaser = rr_network(fixtures, nodes=1)
        run = rr.run(purchaser, make_proposal(oracles_needed=3))
        assert len(run.aborted) == 1
        assert step_sequence(net.ledger, run.aborted[0].sla_id)[-1] == FAILED_TOPIC

    def test_schedule_ten_over_thirty_blocks(self, fixtures):
        net, rr, purchaser = rr_network(fixtures)
        run = rr.run(purchaser, make_proposal(), schedule=10, blocks=30)
        assert run.cycles == 3
        assert [d.cycle for d in run.deliveries] == [0, 1, 2]
        for delivery in run.deliveries:
            assert step_sequence(net.ledger, delivery.sla_id) == list(STEP_TOPICS)
        assert sum(1 for e in net.ledger.events if e.topic == "rr_step_7") == 3

    def test_bad_schedule(self, fixtures):
        _, rr, purchaser = rr_network(fixtures)
        with pytest.raises(ValueError):
            rr.run(purchaser, make_proposal(), schedule=0, blocks=10)

    def test_encrypted_delivery(self, fixtures):
        _, rr, purchaser = rr_network(fixtures)
        private, public = x25519_keypair(b"purchaser")
        (delivery,) = rr.run(purchaser, make_proposal(), encrypt_to=public).deliveries
        assert decrypt_with(private, delivery.ciphertext) == "301248"

    def test_payload_is_decimal_sla_id(self, fixtures):
        net, rr, purchaser = rr_network(fixtures)
        net.market.propose_sla(purchaser, make_proposal())  # occupies id 0
        (delivery,) = rr.run(purchaser, make_proposal()).deliveries
        steps = [e for e in net.ledger.events if e.topic == "rr_step_1"]
        assert [e.payload for e in steps] == [str(delivery.sla_id).encode("ascii")]
        assert delivery.sla_id != 0
