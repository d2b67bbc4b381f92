"""Linear experiment histories over committed (meta)data tuples.

A snapshot binds one VALID ledger transaction (by MID and tx_id) to one object
revision.  The experiment ID, name and DID never change across snapshots; the
latest version is decided by ledger commit order, not by submission time.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import TYPE_CHECKING

from .errors import BadSeq, DidMismatch, NotFound, Unauthorized
from .identity import Action
from .ledger import Ledger, LedgerTransaction, Validity
from .metadata_schema import MetadataRecord
from .object_store import ObjectStore

if TYPE_CHECKING:
    from .simnet import Cluster, Submission


@dataclass(frozen=True)
class Snapshot:
    seq: int
    mid: str
    tx_id: str
    did: str
    revision: str
    timestamp: int
    author: str
    height: int
    position: int

    @property
    def commit_order(self) -> tuple[int, int]:
        return self.height, self.position


@dataclass
class ExperimentHistory:
    experiment_id: str
    experiment_name: str
    did: str
    snapshots: list[Snapshot] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"experiment_id": self.experiment_id, "experiment_name": self.experiment_name, "did": self.did,
                "snapshots": [asdict(s) for s in self.snapshots]}

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentHistory":
        return cls(d["experiment_id"], d["experiment_name"], d["did"], [Snapshot(**s) for s in d["snapshots"]])


class HistoryStore:
    def __init__(self, channel: str, path: Path | None = None):
        self.channel = channel
        self.path = path
        self.experiments: dict[str, ExperimentHistory] = {}
        if path is not None and path.exists():
            raw = json.loads(path.read_text(encoding="utf-8"))
            self.experiments = {e["experiment_id"]: ExperimentHistory.from_dict(e) for e in raw["experiments"]}

    def save(self):
        if self.path is None:
            return
        self.path.parent.mkdir(parents=True, exist_ok=True)
        tmp = self.path.with_suffix(".tmp")
        raw = {"channel": self.channel, "experiments": [e.to_dict() for e in self.experiments.values()]}
        tmp.write_text(json.dumps(raw, sort_keys=True, indent=1), encoding="utf-8")
        os.replace(tmp, self.path)

    def get(self, experiment_id: str) -> ExperimentHistory:
        try:
            return self.experiments[experiment_id]
        except KeyError:
            raise NotFound(f"no experiment {experiment_id}") from None

    def __contains__(self, experiment_id: str) -> bool:
        return experiment_id in self.experiments

    def record_snapshot(self, tx: LedgerTransaction, mid: str, height: int, position: int, did: str,
                        revision: str, timestamp: int) -> Snapshot:
        if tx.validity is not Validity.VALID:
            raise ValueError("only VALID transactions enter the history")
        eid = tx.record.experiment_id
        hist = self.experiments.get(eid)
        if hist is None:
            if tx.did and tx.did != did:
                raise DidMismatch(f"transaction carries DID {tx.did}, object is {did}")
            hist = ExperimentHistory(eid, tx.record.experiment_name, did)
        elif did != hist.did or (tx.did and tx.did != hist.did):
            raise DidMismatch(f"experiment {eid} is bound to DID {hist.did}")
        snap = Snapshot(len(hist.snapshots) + 1, mid, tx.tx_id, did, revision, timestamp, tx.submitter,
                        height, position)
        hist.snapshots.append(snap)
        self.experiments[eid] = hist
        self.save()
        return snap

    def resolve_latest(self, experiment_id: str) -> Snapshot:
        return max(self.get(experiment_id).snapshots, key=lambda s: s.commit_order)


def record_snapshot(store: HistoryStore, tx: LedgerTransaction, mid: str, height: int, position: int,
                    did: str, revision: str, timestamp: int) -> HistoryStore:
    store.record_snapshot(tx, mid, height, position, did, revision, timestamp)
    return store


def resolve_latest(store: HistoryStore, experiment_id: str) -> Snapshot:
    return store.resolve_latest(experiment_id)


def rebuild_histories(ledger: Ledger, store: ObjectStore) -> HistoryStore:
    """Derive the history store from a ledger replica plus the object registry."""
    links: dict[tuple[str, str], tuple[str, str]] = {}
    for obj in store.objects.values():
        for rev in obj.revisions:
            if rev.link:
                links[(rev.link["mid"], rev.link["tx_id"])] = (obj.did, rev.revision)
    out = HistoryStore(ledger.channel)
    for block, pos, tx in ledger.valid_transactions():
        hist = out.experiments.get(tx.record.experiment_id)
        linked = links.get((block.mid, tx.tx_id))
        if linked is not None:
            did, revision = linked
        elif hist is not None and hist.snapshots:
            did, revision = hist.did, hist.snapshots[-1].revision
        else:
            continue  # committed but its data never landed
        out.record_snapshot(tx, block.mid, block.height, pos, did, revision, block.timestamp)
    return out


# -- cluster-level operations ----------------------------------------------

def _authorize(cluster: "Cluster", requester: str, action: Action, channel: str):
    if not cluster.identities.authorize(requester, action, channel):
        raise Unauthorized(f"{requester} lacks {action.value} on {channel}")


def modify_experiment(cluster: "Cluster", client: str, experiment_id: str, record: MetadataRecord | None = None,
                      data: bytes | None = None, channel: str | None = None) -> "Submission":
    """Submit a new (meta)data tuple for an existing experiment and run it to completion.

    Raises VALIDATION_REJECTED or NO_QUORUM_TIMEOUT instead of returning a failed submission.
    """
    return cluster.modify(client, experiment_id, record, data, channel)


def history(cluster: "Cluster", experiment_id: str, requester: str, channel: str | None = None) -> list[Snapshot]:
    channel = channel or cluster.default_channel
    _authorize(cluster, requester, Action.READ_METADATA, channel)
    return list(cluster.histories[channel].get(experiment_id).snapshots)


def checkout(cluster: "Cluster", experiment_id: str, seq: int, requester: str,
             channel: str | None = None) -> tuple[MetadataRecord, bytes]:
    channel = channel or cluster.default_channel
    _authorize(cluster, requester, Action.READ_DATA, channel)
    hist = cluster.histories[channel].get(experiment_id)
    if not 1 <= seq <= len(hist.snapshots):
        raise BadSeq(f"version {seq} outside 1..{len(hist.snapshots)}")
    snap = hist.snapshots[seq - 1]
    tx = cluster.read_ledger(channel, requester).find_transaction(snap.mid, snap.tx_id)
    data = cluster.store.get_object(snap.did, requester, snap.revision)
    return tx.record, data
