import hashlib
import random

import pytest

from fairledger.errors import (BadParams, CorruptShard, InsufficientShards, NodeUnreachable, NoSuchBucket,
                               NotFound, Unauthorized, UnknownTarget)
from fairledger.identity import generate_config, parse_config
from fairledger.object_store import HEADER, ObjectStore, erasure_params

import builders


def make_store(tmp_path, orgs=4, seed=0, outsider=False):
    ids = parse_config(generate_config(orgs=orgs, outsider=outsider))
    store = ObjectStore(tmp_path / "objects", ids, seed=seed)
    store.create_bucket("experiments", "gadds")
    return store


def test_params():
    assert [erasure_params(n) for n in (4, 5, 6, 8)] == [(2, 2), (3, 2), (3, 3), (4, 4)]


def test_one_mib_on_eight_nodes(tmp_path):
    store = make_store(tmp_path)
    data = random.Random(1).randbytes(1 << 20)
    did, rev = store.put_object("experiments", data, "peer0.org1")
    obj = store.get_stored(did)
    assert (obj.revisions[0].k, obj.revisions[0].m) == (4, 4)
    files = [p for n in store.channel_nodes("gadds") for p in store.nodes[n].shard_files()]
    assert len(files) == 8
    assert {p.stat().st_size for p in files} == {HEADER.size + (1 << 18)}
    assert rev == hashlib.sha256(data).hexdigest()


def test_second_put_same_did(tmp_path):
    store = make_store(tmp_path)
    did, r1 = store.put_object("experiments", b"first", "peer0.org1")
    did2, r2 = store.put_object("experiments", b"second", "peer0.org2", did=did)
    assert did2 == did and r1 != r2
    assert len(store.get_stored(did).revisions) == 2
    assert store.get_object(did, "peer0.org3") == b"second"
    assert store.get_object(did, "peer0.org3", revision=r1) == b"first"


def test_outsider_cannot_write_or_read(tmp_path):
    store = make_store(tmp_path, orgs=3, outsider=True)
    with pytest.raises(Unauthorized):
        store.put_object("experiments", b"x", "peer0.outsider")
    did, _ = store.put_object("experiments", b"x", "peer0.org1")
    with pytest.raises(Unauthorized):
        store.get_object(did, "peer0.outsider")


def test_loss_tolerance(tmp_path):
    store = make_store(tmp_path)
    data = builders.FIBRE_CSV * 50
    did, _ = store.put_object("experiments", data, "peer0.org1")
    nodes = store.channel_nodes("gadds")
    for n in nodes[:4]:
        store.kill(n)
    assert store.get_object(did, "peer0.org1") == data
    store.kill(nodes[4])
    with pytest.raises(InsufficientShards):
        store.get_object(did, "peer0.org1")
    store.revive(nodes[0])
    assert store.get_object(did, "peer0.org1") == data


def test_corrupt_shard_is_skipped(tmp_path):
    store = make_store(tmp_path)
    data = b"0123456789" * 100
    did, rev = store.put_object("experiments", data, "peer0.org1")
    placement = store.get_stored(did).revision().placement
    store.node(placement[0]).corrupt(did, rev, 0, offset=3)
    with pytest.raises(CorruptShard):
        store.node(placement[0]).read(did, rev, 0)
    assert store.get_object(did, "peer0.org2") == data
    health = {h.node: h for h in store.storage_report("gadds")}
    assert health[placement[0]].corrupt == 1


def test_storage_report(tmp_path):
    store = make_store(tmp_path)
    assert all(h.stored == h.corrupt == h.missing == 0 and h.reachable for h in store.storage_report("gadds"))
    store.put_object("experiments", b"one object", "peer0.org1")
    assert [h.stored for h in store.storage_report("gadds")] == [1] * 8
    store.kill("storage0.org2")
    down = {h.node: h for h in store.storage_report("gadds")}["storage0.org2"]
    assert not down.reachable and down.missing == 1


def test_placement_rotates(tmp_path):
    store = make_store(tmp_path)
    a, _ = store.put_object("experiments", b"a", "peer0.org1")
    b, _ = store.put_object("experiments", b"b", "peer0.org1")
    pa = store.get_stored(a).revision().placement
    pb = store.get_stored(b).revision().placement
    assert pb == pa[1:] + pa[:1]
    assert len(set(pa)) == 8


def test_registry_persists(tmp_path):
    store = make_store(tmp_path, seed=5)
    did, _ = store.put_object("experiments", b"persist me", "peer0.org1")
    again = ObjectStore(tmp_path / "objects", store.identities)
    assert again.get_object(did, "peer0.org4") == b"persist me"
    assert again.did_gen.next() != did


def test_seed_changes_dids(tmp_path):
    a = make_store(tmp_path / "a", seed=1).put_object("experiments", b"x", "peer0.org1")[0]
    b = make_store(tmp_path / "b", seed=2).put_object("experiments", b"x", "peer0.org1")[0]
    c = make_store(tmp_path / "c", seed=1).put_object("experiments", b"x", "peer0.org1")[0]
    assert a != b and a == c


def test_errors(tmp_path):
    store = make_store(tmp_path)
    with pytest.raises(NoSuchBucket):
        store.put_object("nope", b"x", "peer0.org1")
    with pytest.raises(BadParams):
        store.create_bucket("Bad_Name", "gadds")
    with pytest.raises(NotFound):
        store.get_object("0" * 32, "peer0.org1")
    with pytest.raises(UnknownTarget):
        store.kill("storage9.org9")
    store.kill("storage1.org1")
    with pytest.raises(NodeUnreachable):
        store.put_object("experiments", b"x", "peer0.org1")


def test_too_few_storage_nodes(tmp_path):
    ids = parse_config(generate_config(orgs=1, storage_per_org=3))
    store = ObjectStore(tmp_path / "o", ids)
    store.create_bucket("experiments", "gadds")
    with pytest.raises(BadParams):
        store.put_object("experiments", b"x", "peer0.org1")
