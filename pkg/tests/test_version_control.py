import hashlib

import pytest

from fairledger.consensus import Outcome
from fairledger.errors import BadSeq, DidMismatch, NotFound, Unauthorized, ValidationRejected
from fairledger.ledger import Validity
from fairledger.version_control import (
    HistoryStore, checkout, history, modify_experiment, rebuild_histories, record_snapshot, resolve_latest,
)

from builders import FIBRE_CSV, record, signed_tx


def sha(b):
    return hashlib.sha256(b).hexdigest()


@pytest.fixture
def edited(cluster):
    """One submit followed by a metadata edit and a data edit."""
    base = record("exp-1")
    cluster.submit("peer0.org1", base, FIBRE_CSV)
    modify_experiment(cluster, "peer1.org2", "exp-1", base.with_elements(description="recalibrated"))
    modify_experiment(cluster, "peer0.org3", "exp-1", data=FIBRE_CSV + b"122.0,309.9\n")
    return cluster


def test_first_and_third_commit(edited):
    snaps = history(edited, "exp-1", "peer0.org2")
    assert [s.seq for s in snaps] == [1, 2, 3]
    assert len({s.did for s in snaps}) == 1
    heights = [s.height for s in snaps]
    assert heights == sorted(heights) and len(set(heights)) == 3


def test_metadata_edit_keeps_revision(edited):
    s1, s2, s3 = history(edited, "exp-1", "peer0.org2")
    assert s2.revision == s1.revision == sha(FIBRE_CSV)
    assert s3.revision != s2.revision


def test_rejected_edit_leaves_history(edited):
    with pytest.raises(ValidationRejected):
        modify_experiment(edited, "peer0.org1", "exp-1", record("exp-1", language="english"))
    assert len(history(edited, "exp-1", "peer0.org1")) == 3


def test_history_errors(edited):
    with pytest.raises(Unauthorized):
        history(edited, "exp-1", "peer0.outsider")
    with pytest.raises(NotFound):
        history(edited, "nope", "peer0.org1")


def test_checkout_versions(edited):
    rec1, data1 = checkout(edited, "exp-1", 1, "peer0.org2")
    assert rec1 == record("exp-1") and data1 == FIBRE_CSV
    rec2, data2 = checkout(edited, "exp-1", 2, "peer0.org2")
    assert rec2.elements["description"] == "recalibrated" and data2 == FIBRE_CSV
    assert checkout(edited, "exp-1", 3, "peer0.org2") == edited.fetch("exp-1", "peer0.org2")
    with pytest.raises(BadSeq):
        checkout(edited, "exp-1", 0, "peer0.org2")
    with pytest.raises(BadSeq):
        checkout(edited, "exp-1", 4, "peer0.org2")


def test_name_and_id_carry_over(edited):
    modify_experiment(edited, "peer0.org1", "exp-1", record("other-id", name="renamed", title="new title"))
    rec, _ = edited.fetch("exp-1", "peer0.org1")
    assert (rec.experiment_id, rec.experiment_name, rec.elements["title"]) == ("exp-1", "fibres", "new title")


def test_concurrent_edits_later_commit_wins(cluster):
    cluster.submit("peer0.org1", record("exp-c"), b"v0")
    a = cluster.start_modify("peer0.org2", "exp-c", record("exp-c", description="edit A"))
    cluster.step().step()
    b = cluster.start_modify("peer0.org3", "exp-c", record("exp-c", description="edit B"))
    cluster.run_until(lambda: a.done and b.done)
    assert a.outcome is b.outcome is Outcome.COMMITTED_VALID
    assert (a.height, a.position) < (b.height, b.position)
    latest = cluster.histories["gadds"].resolve_latest("exp-c")
    assert latest.tx_id == b.tx_id
    assert cluster.fetch("exp-c", "peer0.org1")[0].elements["description"] == "edit B"


def test_same_block_position_tiebreak(ids):
    store = HistoryStore("gadds")
    base = record("exp-t")
    txs = [signed_tx(ids, "peer0.org1", base.with_elements(description=str(i)), Validity.VALID) for i in range(3)]
    record_snapshot(store, txs[0], "m1", 1, 0, "d" * 32, "r0", 1)
    record_snapshot(store, txs[2], "m2", 2, 5, "d" * 32, "r0", 2)
    record_snapshot(store, txs[1], "m2", 2, 2, "d" * 32, "r0", 2)
    assert resolve_latest(store, "exp-t").position == 5


def test_single_version_latest(ids):
    store = HistoryStore("gadds")
    tx = signed_tx(ids, "peer0.org1", record("solo"), Validity.VALID)
    store.record_snapshot(tx, "m", 1, 0, "d" * 32, "r", 1)
    assert store.resolve_latest("solo").seq == 1


def test_foreign_did(ids):
    store = HistoryStore("gadds")
    tx = signed_tx(ids, "peer0.org1", record("x"), Validity.VALID)
    store.record_snapshot(tx, "m", 1, 0, "a" * 32, "r", 1)
    with pytest.raises(DidMismatch):
        store.record_snapshot(tx, "m2", 2, 0, "b" * 32, "r", 2)
    foreign = signed_tx(ids, "peer0.org1", record("y"), Validity.VALID, did="c" * 32)
    with pytest.raises(DidMismatch):
        store.record_snapshot(foreign, "m3", 3, 0, "a" * 32, "r", 3)


def test_persisted_history(tmp_path, ids):
    path = tmp_path / "h.json"
    store = HistoryStore("gadds", path)
    store.record_snapshot(signed_tx(ids, "peer0.org1", record("p"), Validity.VALID), "m", 1, 0, "d" * 32, "r", 1)
    assert HistoryStore("gadds", path).get("p").snapshots == store.get("p").snapshots


def test_rebuild_from_ledger(edited):
    ledger = edited.read_ledger("gadds", "peer0.org1")
    rebuilt = rebuild_histories(ledger, edited.store)
    assert rebuilt.get("exp-1").snapshots == edited.histories["gadds"].get("exp-1").snapshots
