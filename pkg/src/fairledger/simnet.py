"""Deterministic multi-node simulation of a cluster.

Time is a logical tick.  Every hop takes ``latency`` ticks; messages due in
the same tick are delivered in (destination, message hash) order and each
delivery runs the destination state machine once and appends one trace
entry.  Cluster state lives under a state directory (ledger files, orderer
block logs, shards, histories), so a cluster can be closed and reopened.
"""

from __future__ import annotations

import json
import random
import tempfile
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable

from .canonical import canonical_bytes, sha256_hex
from .consensus import (BLOCK_TIMEOUT, ENDORSEMENT_TIMEOUT, Byzantine, EvcPeer, Envelope, MsgType, Orderer,
                        Outcome, make_proposal)
from .errors import (BadParams, ExperimentExists, FairLedgerError, MaxTicksExceeded, NodeUnreachable, NoQuorum,
                     NotFound, ScriptError, Unauthorized, UnknownPeer, UnknownTarget, ValidationRejected)
from .identity import Action, ClusterIdentitySet, Role, load_credentials
from .ledger import Block, Ledger, Validity, verify_chain_file
from .metadata_schema import MetadataRecord, Template, default_templates, validate_record
from .object_store import ObjectStore
from .version_control import HistoryStore, Snapshot, checkout

CLIENT_DEADLINE = ENDORSEMENT_TIMEOUT + BLOCK_TIMEOUT + 10
DEFAULT_MAX_TICKS = 10_000


class EventKind(str, Enum):
    SUBMIT = "SUBMIT"
    MODIFY = "MODIFY"
    QUERY = "QUERY"
    FETCH = "FETCH"
    CHECKOUT = "CHECKOUT"
    KILL_NODE = "KILL_NODE"
    REVIVE_NODE = "REVIVE_NODE"
    BYZANTINE_ON = "BYZANTINE_ON"
    BYZANTINE_OFF = "BYZANTINE_OFF"
    CORRUPT_SHARD = "CORRUPT_SHARD"
    TAMPER_LEDGER_BYTE = "TAMPER_LEDGER_BYTE"


@dataclass(frozen=True)
class ScenarioEvent:
    at_tick: int
    kind: EventKind
    params: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioEvent":
        try:
            at = int(d["at_tick"])
            kind = EventKind(d["kind"])
        except (KeyError, TypeError, ValueError) as exc:
            raise ScriptError(f"bad scenario event {d!r}: {exc}") from exc
        if at < 0:
            raise ScriptError(f"negative at_tick in {d!r}")
        return cls(at, kind, dict(d.get("params") or {}))


def load_script(source: str | Path | list) -> list[ScenarioEvent]:
    if isinstance(source, list):
        raw = source
    else:
        try:
            raw = json.loads(Path(source).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ScriptError(f"cannot read script {source}: {exc}") from exc
    if not isinstance(raw, list):
        raise ScriptError("a scenario script is a JSON array of events")
    return [ScenarioEvent.from_dict(e) for e in raw]


@dataclass
class SimConfig:
    config: str | Path | ClusterIdentitySet
    seed: int = 0
    latency: int = 1
    script: str | Path | list | None = None
    state_dir: str | Path | None = None
    max_ticks: int = DEFAULT_MAX_TICKS


@dataclass
class Trace:
    entries: list[dict] = field(default_factory=list)

    def append(self, tick: int, node: str, event: dict, digest: str):
        self.entries.append({"tick": tick, "node": node, "event": event, "digest": digest})

    def to_jsonl(self) -> str:
        return "".join(canonical_bytes(e).decode("utf-8") + "\n" for e in self.entries)

    def write(self, path: str | Path):
        Path(path).write_text(self.to_jsonl(), encoding="utf-8")

    def digest(self) -> str:
        return sha256_hex(self.to_jsonl().encode("utf-8"))

    def of_kind(self, kind: str) -> list[dict]:
        return [e for e in self.entries if e["event"].get("kind") == kind]


@dataclass
class Submission:
    sid: int
    kind: str  # "submit" or "modify"
    client: str
    channel: str
    record: MetadataRecord
    tx_id: str
    home: str
    submitted_at: int
    data: bytes | None = None
    bucket: str | None = None
    did: str = ""
    outcome: Outcome | None = None
    mid: str = ""
    height: int = -1
    position: int = -1
    snapshot: Snapshot | None = None
    failures: list = field(default_factory=list)
    error: str | None = None

    @property
    def done(self) -> bool:
        return self.outcome is not None

    @property
    def experiment_id(self) -> str:
        return self.record.experiment_id

    def summary(self) -> dict:
        return {"sid": self.sid, "kind": self.kind, "client": self.client, "experiment_id": self.experiment_id,
                "tx_id": self.tx_id, "outcome": self.outcome.value if self.outcome else None, "mid": self.mid,
                "did": self.snapshot.did if self.snapshot else self.did, "error": self.error,
                "seq": self.snapshot.seq if self.snapshot else None}


class ClientEndpoint:
    """Receives orderer status notices on behalf of one acting identity."""

    def __init__(self, peer_id: str, on_status: Callable[[str, str, str], None]):
        self.peer_id = peer_id
        self.node_id = f"client:{peer_id}"
        self.alive = True
        self.on_status = on_status
        self.notices = 0

    def handle(self, env: Envelope, now: int):
        if env.msg_type is MsgType.ACK and env.payload.get("kind") == "STATUS":
            self.notices += 1
            self.on_status(self.peer_id, env.payload["tx_id"], env.payload["status"])
            return {"kind": "status", "tx_id": env.payload["tx_id"], "status": env.payload["status"]}, []
        return {"kind": "ignored"}, []

    def state_digest(self) -> str:
        return sha256_hex(canonical_bytes({"client": self.peer_id, "notices": self.notices}))


class Cluster:
    def __init__(self, identities: ClusterIdentitySet, state_dir: str | Path | None = None, seed: int | None = None,
                 latency: int = 1, templates: dict[str, Template] | None = None):
        if latency < 1:
            raise BadParams("latency must be at least one tick")
        self.identities = identities
        self.state_dir = Path(state_dir) if state_dir else Path(tempfile.mkdtemp(prefix="fairledger-"))
        self.state_dir.mkdir(parents=True, exist_ok=True)
        meta = self._read_meta()
        self.seed = seed if seed is not None else meta.get("seed", 0)
        self.latency = latency
        self.now: int = meta.get("now", 0)
        self.templates = templates or default_templates()
        self.trace = Trace()
        self.queue: dict[int, list[tuple[str, Envelope]]] = {}
        self.submissions: list[Submission] = []
        self._commits: list[tuple[str, str, Block]] = []
        self.default_channel = next(iter(identities.channels))

        self.peers = {
            p.peer_id: EvcPeer(p, identities, self.templates, self.state_dir / "ledgers")
            for p in identities.peers.values() if p.role is Role.EVC
        }
        self.orderers = {
            p.peer_id: Orderer(p, identities, self.state_dir / "orderers")
            for p in identities.peers.values() if p.role is Role.ORDERER
        }
        for peer in self.peers.values():
            peer.commit_hooks.append(self._on_commit)
        self.store = ObjectStore(self.state_dir / "objects", identities, seed=self.seed)
        if seed is not None:
            self.store.did_gen.seed = seed
        self.histories = {
            ch: HistoryStore(ch, self.state_dir / "history" / f"{ch}.json") for ch in identities.channels
        }
        self.clients: dict[str, ClientEndpoint] = {}
        for node_id in meta.get("killed", []):
            self._set_alive(node_id, False, reload=False)
        for node_id, mode in meta.get("byzantine", {}).items():
            self.peers[node_id].byzantine = Byzantine(mode)

    @classmethod
    def open(cls, config_path: str | Path, state_dir: str | Path | None = None, seed: int | None = None,
             **kwargs) -> "Cluster":
        identities = load_credentials(config_path)
        if state_dir is None:
            p = Path(config_path)
            state_dir = p.with_name(p.stem + ".state")
        return cls(identities, state_dir, seed, **kwargs)

    # -- persisted runtime meta ------------------------------------------------

    @property
    def meta_path(self) -> Path:
        return self.state_dir / "cluster.json"

    def _read_meta(self) -> dict:
        if self.meta_path.exists():
            return json.loads(self.meta_path.read_text(encoding="utf-8"))
        return {}

    def save(self):
        killed = sorted(n for n in self.node_ids() if not self._alive(n))
        meta = {"now": self.now, "seed": self.seed, "killed": killed,
                "byzantine": {p: peer.byzantine.value for p, peer in sorted(self.peers.items()) if peer.byzantine}}
        self.meta_path.write_text(json.dumps(meta, sort_keys=True, indent=1), encoding="utf-8")

    # -- topology --------------------------------------------------------------

    def node_ids(self) -> list[str]:
        return sorted([*self.peers, *self.orderers, *self.store.nodes])

    def _alive(self, node_id: str) -> bool:
        if node_id in self.peers:
            return self.peers[node_id].alive
        if node_id in self.orderers:
            return self.orderers[node_id].alive
        if node_id in self.store.nodes:
            return self.store.nodes[node_id].alive
        raise UnknownTarget(node_id)

    def _set_alive(self, node_id: str, alive: bool, reload: bool = True):
        if node_id in self.peers:
            node = self.peers[node_id]
        elif node_id in self.orderers:
            node = self.orderers[node_id]
        elif node_id in self.store.nodes:
            self.store.nodes[node_id].alive = alive
            return
        else:
            raise UnknownTarget(node_id)
        node.alive = alive
        if not alive:
            for batch in self.queue.values():
                batch[:] = [(d, e) for d, e in batch if d != node_id]
        if reload:
            node.load()

    def kill(self, node_id: str):
        self._set_alive(node_id, False)

    def revive(self, node_id: str):
        self._set_alive(node_id, True)

    def _endpoint(self, dest: str):
        if dest in self.peers:
            return self.peers[dest]
        if dest in self.orderers:
            return self.orderers[dest]
        if dest.startswith("client:"):
            return self.clients.get(dest[len("client:"):])
        return None

    def _client(self, peer_id: str) -> ClientEndpoint:
        if peer_id not in self.clients:
            self.identities.peer(peer_id)
            self.clients[peer_id] = ClientEndpoint(peer_id, self._on_status)
        return self.clients[peer_id]

    def digests(self) -> dict[str, str]:
        out = {pid: p.state_digest() for pid, p in self.peers.items()}
        out.update({oid: o.state_digest() for oid, o in self.orderers.items()})
        out.update({cid: c.state_digest() for cid, c in self.clients.items()})
        return dict(sorted(out.items()))

    def cluster_digest(self) -> str:
        return sha256_hex(canonical_bytes(self.digests()))

    def home_peer(self, client: str, channel: str) -> str:
        evc = self.identities.evc_peers(channel)
        org = self.identities.peer(client).org
        ordered = ([client] if client in evc else []) + \
                  [p for p in evc if self.identities.peers[p].org == org] + evc
        for pid in ordered:
            if self.peers[pid].alive:
                return pid
        return ordered[0]

    def read_ledger(self, channel: str, requester: str) -> Ledger:
        home = self.home_peer(requester, channel)
        if not self.peers[home].alive:
            raise NodeUnreachable(f"no live peer serves channel {channel}")
        return self.peers[home].ledgers[channel]

    # -- scheduling ------------------------------------------------------------

    def send(self, dest: str, env: Envelope):
        self.queue.setdefault(self.now + self.latency, []).append((dest, env))

    def _record(self, node: str, event: dict, digest: str | None = None):
        self.trace.append(self.now, node, event, digest or self.cluster_digest())

    def step(self):
        batch = self.queue.pop(self.now, [])
        batch.sort(key=lambda item: (item[0], item[1].digest))
        for dest, env in batch:
            node = self._endpoint(dest)
            if node is None or not node.alive:
                continue
            desc, out = node.handle(env, self.now)
            self._record(dest, {"msg": env.msg_type.value, "from": env.sender, **desc}, node.state_digest())
            for d, e in out:
                self.send(d, e)
            self._drain_commits()
        for oid in sorted(self.orderers):
            orderer = self.orderers[oid]
            if not orderer.alive:
                continue
            result = orderer.on_tick(self.now)
            if result is not None:
                desc, out = result
                self._record(oid, desc, orderer.state_digest())
                for d, e in out:
                    self.send(d, e)
        for sub in self.pending():
            if self.now - sub.submitted_at >= CLIENT_DEADLINE:
                self._resolve_timeout(sub)
        self.now += 1
        return self

    def pending(self) -> list[Submission]:
        return [s for s in self.submissions if not s.done]

    def quiescent(self) -> bool:
        return not any(self.queue.values()) and not self.pending() and all(
            o.idle() for o in self.orderers.values() if o.alive)

    def run_until(self, predicate: Callable[[], bool], max_ticks: int = DEFAULT_MAX_TICKS):
        start = self.now
        while not predicate():
            if self.now - start >= max_ticks:
                raise MaxTicksExceeded(f"condition not reached within {max_ticks} ticks")
            self.step()
        return self

    def run_until_quiescent(self, max_ticks: int = DEFAULT_MAX_TICKS):
        return self.run_until(self.quiescent, max_ticks)

    # -- submissions -----------------------------------------------------------

    def start_submit(self, client: str, record: MetadataRecord, data: bytes, bucket: str,
                     channel: str | None = None) -> Submission:
        channel = channel or self.default_channel
        self.identities.channel(channel)
        if record.experiment_id in self.histories[channel]:
            raise ExperimentExists(f"experiment {record.experiment_id} exists; modify it instead")
        if not data:
            raise BadParams("data must be nonempty")
        self._require_storage(channel)
        return self._launch("submit", client, record, channel, data=data, bucket=bucket)

    def start_modify(self, client: str, experiment_id: str, record: MetadataRecord | None = None,
                     data: bytes | None = None, channel: str | None = None) -> Submission:
        channel = channel or self.default_channel
        if not self.identities.authorize(client, Action.SUBMIT, channel):
            raise Unauthorized(f"{client} may not modify experiments on {channel}")
        hist = self.histories[channel].get(experiment_id)
        if record is None and data is None:
            raise BadParams("a modification needs new metadata, new data, or both")
        if record is None:
            record = self.latest_record(experiment_id, client, channel)
        # the experiment name and identifier always carry over from the original entry
        record = MetadataRecord(hist.experiment_name, hist.experiment_id, dict(record.elements), record.template_id)
        if data is not None:
            if not data:
                raise BadParams("data must be nonempty")
            self._require_storage(channel)
        return self._launch("modify", client, record, channel, data=data, did=hist.did)

    def _require_storage(self, channel: str):
        down = [n for n in self.store.channel_nodes(channel) if not self.store.nodes[n].alive]
        if down:
            raise NodeUnreachable(f"storage nodes down: {', '.join(down)}")

    def _launch(self, kind: str, client: str, record: MetadataRecord, channel: str, data: bytes | None = None,
                bucket: str | None = None, did: str = "") -> Submission:
        identity = self.identities.peer(client)
        proposal = make_proposal(identity, record, channel, did)
        sub = Submission(len(self.submissions) + 1, kind, client, channel, record, proposal.tx.tx_id,
                         self.home_peer(client, channel), self.now, data=data, bucket=bucket, did=did)
        self.submissions.append(sub)
        endpoint = self._client(client)
        env = Envelope(MsgType.PROPOSAL, channel, client, proposal.to_payload()).signed(identity)
        targets = self.identities.evc_peers(channel) + [self.identities.channel(channel).orderer]
        for dest in targets:
            self.send(dest, env)
        self._record(endpoint.node_id, {"kind": f"{kind}-start", "sid": sub.sid, "tx_id": sub.tx_id,
                                        "experiment_id": record.experiment_id, "fanout": len(targets)},
                     endpoint.state_digest())
        return sub

    def _on_commit(self, peer_id: str, channel: str, block: Block):
        self._commits.append((peer_id, channel, block))

    def _drain_commits(self):
        while self._commits:
            peer_id, channel, block = self._commits.pop(0)
            positions = {tx.tx_id: i for i, tx in enumerate(block.transactions)}
            for sub in self.pending():
                if sub.home == peer_id and sub.channel == channel and sub.tx_id in positions:
                    self._resolve_commit(sub, block, positions[sub.tx_id])

    def _on_status(self, client: str, tx_id: str, status: str):
        for sub in self.pending():
            if sub.client == client and sub.tx_id == tx_id:
                self._resolve(sub, Outcome(status))

    def _resolve_timeout(self, sub: Submission):
        self._resolve(sub, Outcome.NO_QUORUM_TIMEOUT)

    def _resolve(self, sub: Submission, outcome: Outcome):
        sub.outcome = outcome
        endpoint = self._client(sub.client)
        summary = sub.summary()
        summary["op"] = summary.pop("kind")
        self._record(endpoint.node_id, {"kind": "resolved", **summary}, endpoint.state_digest())

    def _resolve_commit(self, sub: Submission, block: Block, position: int):
        tx = block.transactions[position]
        sub.mid, sub.height, sub.position = block.mid, block.height, position
        if tx.validity is Validity.VALID:
            try:
                sub.snapshot = self._finalize(sub, block, position)
            except FairLedgerError as exc:
                sub.error = exc.code
            self._resolve(sub, Outcome.COMMITTED_VALID)
        else:
            template = self.templates.get(sub.record.template_id)
            if template is not None and template.template_id == sub.record.template_id:
                sub.failures = [[n, f.value] for n, f in validate_record(sub.record, template).failures]
            self._resolve(sub, Outcome.COMMITTED_INVALID)

    def _finalize(self, sub: Submission, block: Block, position: int) -> Snapshot:
        """Upload data (if any) and record the version-control snapshot for a VALID commit."""
        tx = block.transactions[position]
        histories = self.histories[sub.channel]
        link = {"mid": block.mid, "tx_id": tx.tx_id}
        if sub.kind == "submit":
            if tx.record.experiment_id in histories:
                raise ExperimentExists(tx.record.experiment_id)
            self.store.create_bucket(sub.bucket, sub.channel)
            did, revision = self.store.put_object(sub.bucket, sub.data, sub.client, timestamp=self.now, link=link)
        else:
            hist = histories.get(tx.record.experiment_id)
            did = hist.did
            if sub.data is not None:
                bucket = self.store.get_stored(did).bucket
                _, revision = self.store.put_object(bucket, sub.data, sub.client, did=did, timestamp=self.now,
                                                    link=link)
            else:
                revision = hist.snapshots[-1].revision
        sub.did = did
        return histories.record_snapshot(tx, block.mid, block.height, position, did, revision, block.timestamp)

    # -- lifecycle (blocking) --------------------------------------------------

    def submit(self, client: str, record: MetadataRecord, data: bytes, bucket: str = "experiments",
               channel: str | None = None) -> Submission:
        sub = self.start_submit(client, record, data, bucket, channel)
        self.run_until(lambda: sub.done)
        return sub

    def modify(self, client: str, experiment_id: str, record: MetadataRecord | None = None,
               data: bytes | None = None, channel: str | None = None) -> Submission:
        sub = self.start_modify(client, experiment_id, record, data, channel)
        self.run_until(lambda: sub.done)
        if sub.outcome is Outcome.COMMITTED_INVALID:
            raise ValidationRejected(f"modification of {experiment_id} failed quality control", submission=sub)
        if sub.outcome is Outcome.NO_QUORUM_TIMEOUT:
            raise NoQuorum(f"modification of {experiment_id} timed out", submission=sub)
        return sub

    def latest_record(self, experiment_id: str, requester: str, channel: str | None = None) -> MetadataRecord:
        channel = channel or self.default_channel
        snap = self.histories[channel].resolve_latest(experiment_id)
        return self.read_ledger(channel, requester).find_transaction(snap.mid, snap.tx_id).record

    def search(self, predicate: str, requester: str, channel: str | None = None):
        channel = channel or self.default_channel
        return self.read_ledger(channel, requester).query(predicate, requester, channel)

    def fetch(self, experiment_id: str, requester: str, channel: str | None = None) -> tuple[MetadataRecord, bytes]:
        channel = channel or self.default_channel
        if not self.identities.authorize(requester, Action.READ_DATA, channel):
            raise Unauthorized(f"{requester} may not download from {channel}")
        snap = self.histories[channel].resolve_latest(experiment_id)
        return checkout(self, experiment_id, snap.seq, requester, channel)

    def ledger_file(self, peer_id: str, channel: str | None = None) -> Path:
        if peer_id not in self.peers:
            raise UnknownTarget(f"{peer_id} is not an EVC peer")
        return self.peers[peer_id].ledger_path(channel or self.default_channel)

    def verify_peer(self, peer_id: str, channel: str | None = None):
        channel = channel or self.default_channel
        return verify_chain_file(self.ledger_file(peer_id, channel), self.identities, channel,
                                 self.peers[peer_id].reflag(channel))


# -- module-level operations ------------------------------------------------

def build_cluster(config: SimConfig) -> Cluster:
    identities = config.config if isinstance(config.config, ClusterIdentitySet) else load_credentials(config.config)
    return Cluster(identities, config.state_dir, config.seed, config.latency)


def step(cluster: Cluster) -> Cluster:
    return cluster.step()


def _data_param(params: dict, required: bool) -> bytes | None:
    if "data_text" in params:
        return params["data_text"].encode("utf-8")
    if "data_hex" in params:
        return bytes.fromhex(params["data_hex"])
    if "data_path" in params:
        return Path(params["data_path"]).read_bytes()
    if required:
        raise ScriptError("event needs data_text, data_hex or data_path")
    return None


def _record_param(params: dict, required: bool) -> MetadataRecord | None:
    if "record" in params:
        return MetadataRecord.from_dict(params["record"])
    if "record_path" in params:
        return MetadataRecord.from_dict(json.loads(Path(params["record_path"]).read_text(encoding="utf-8")))
    if required:
        raise ScriptError("event needs record or record_path")
    return None


def _result(fn: Callable[[], object]) -> dict:
    try:
        return {"ok": True, **fn()}
    except FairLedgerError as exc:
        return {"ok": False, "error": exc.code}


def inject(cluster: Cluster, event: ScenarioEvent) -> Cluster:
    p = event.params
    kind = event.kind
    node = p.get("node")
    desc: dict = {"kind": "inject", "event": kind.value, "params": {k: v for k, v in sorted(p.items())
                                                                  if k not in ("record", "data_text", "data_hex")}}
    if kind is EventKind.KILL_NODE:
        cluster.kill(_target(node))
    elif kind is EventKind.REVIVE_NODE:
        cluster.revive(_target(node))
    elif kind is EventKind.BYZANTINE_ON:
        if node not in cluster.peers:
            raise UnknownTarget(f"{node} is not an EVC peer")
        cluster.peers[node].byzantine = Byzantine(p.get("mode", Byzantine.INVERT.value))
    elif kind is EventKind.BYZANTINE_OFF:
        if node not in cluster.peers:
            raise UnknownTarget(f"{node} is not an EVC peer")
        cluster.peers[node].byzantine = None
    elif kind is EventKind.CORRUPT_SHARD:
        desc["shard"] = _corrupt_shard(cluster, p)
    elif kind is EventKind.TAMPER_LEDGER_BYTE:
        desc["offset"] = _tamper(cluster, p)
    elif kind is EventKind.SUBMIT:
        record, data = _record_param(p, True), _data_param(p, True)
        desc["result"] = _result(lambda: {"sid": cluster.start_submit(
            p["client"], record, data, p.get("bucket", "experiments"), p.get("channel")).sid})
    elif kind is EventKind.MODIFY:
        channel = p.get("channel")
        cluster.histories[channel or cluster.default_channel].get(p["experiment_id"])
        record = _record_param(p, False)
        if record is None and "set" in p:
            record = cluster.latest_record(p["experiment_id"], p["client"], channel).with_elements(**p["set"])
        data = _data_param(p, False)
        desc["result"] = _result(lambda: {"sid": cluster.start_modify(
            p["client"], p["experiment_id"], record, data, channel).sid})
    elif kind is EventKind.QUERY:
        if "verify_chain" in p:
            check = cluster.verify_peer(p["verify_chain"], p.get("channel"))
            desc["result"] = {"ok": check.ok, "height": check.height, "reason": check.reason}
        else:
            desc["result"] = _result(lambda: {"hits": [
                [h.record.experiment_id, h.mid, h.tx_id]
                for h in cluster.search(p["predicate"], p["requester"], p.get("channel"))]})
    elif kind is EventKind.FETCH:
        desc["result"] = _result(lambda: _fetch_digest(cluster.fetch(p["experiment_id"], p["requester"],
                                                                     p.get("channel"))))
    elif kind is EventKind.CHECKOUT:
        desc["result"] = _result(lambda: _fetch_digest(checkout(cluster, p["experiment_id"], int(p["seq"]),
                                                                p["requester"], p.get("channel"))))
    cluster._record("scenario", desc)
    return cluster


def _target(node) -> str:
    if not isinstance(node, str):
        raise UnknownTarget("event needs a node")
    return node


def _fetch_digest(pair: tuple[MetadataRecord, bytes]) -> dict:
    record, data = pair
    return {"record": sha256_hex(canonical_bytes(record.to_dict())), "data": sha256_hex(data)}


def _corrupt_shard(cluster: Cluster, p: dict) -> dict:
    node_id = _target(p.get("node"))
    if node_id not in cluster.store.nodes:
        raise UnknownTarget(f"{node_id} is not a storage node")
    did = p.get("did")
    if did is None and "experiment_id" in p:
        did = cluster.histories[p.get("channel") or cluster.default_channel].get(p["experiment_id"]).did
    candidates = [did] if did else sorted(cluster.store.objects)
    for d in candidates:
        obj = cluster.store.objects.get(d)
        if obj is None:
            continue
        rev = obj.revision(p.get("revision"))
        if node_id in rev.placement:
            index = rev.placement.index(node_id)
            cluster.store.nodes[node_id].corrupt(d, rev.revision, index, int(p.get("offset", 0)))
            return {"did": d, "revision": rev.revision, "index": index}
    raise UnknownTarget(f"no shard to corrupt on {node_id}")


def _tamper(cluster: Cluster, p: dict) -> int:
    path = cluster.ledger_file(_target(p.get("node") or p.get("peer")), p.get("channel"))
    raw = bytearray(path.read_bytes())
    offset = int(p["offset"]) if "offset" in p else random.Random(cluster.seed).randrange(len(raw))
    raw[offset % len(raw)] ^= int(p.get("xor", 1)) or 1
    path.write_bytes(bytes(raw))
    return offset % len(raw)


def run_scenario(config: SimConfig, cluster: Cluster | None = None) -> Trace:
    """Play a script against a (new or given) cluster until quiescence."""
    cluster = cluster or build_cluster(config)
    events = load_script(config.script) if config.script is not None else []
    start = cluster.now
    events = sorted(events, key=lambda e: e.at_tick)  # stable: script order within a tick
    cursor = 0
    while True:
        while cursor < len(events) and start + events[cursor].at_tick <= cluster.now:
            try:
                inject(cluster, events[cursor])
            except (UnknownTarget, NotFound, UnknownPeer, KeyError) as exc:
                raise ScriptError(f"event {cursor}: {exc}") from exc
            cursor += 1
        if cursor >= len(events) and cluster.quiescent():
            break
        if cluster.now - start >= config.max_ticks:
            raise MaxTicksExceeded(f"scenario still running after {config.max_ticks} ticks")
        cluster.step()
    cluster.save()
    return cluster.trace
