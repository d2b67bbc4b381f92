"""Erasure-coded, bucket-organized object storage across storage nodes.

Each channel with ``N_s`` storage nodes uses ``m = N_s // 2`` parity shards and
``k = N_s - m`` data shards, one shard per node, so any ``m`` nodes may be lost.
Shards live at ``<root>/<node>/<did>/<revision>/<index>.shard`` behind a 64-byte
header; the object registry (buckets, revisions, placement) is a JSON file.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .canonical import sha256_hex
from .erasure import decode_shards, encode_shards
from .errors import (BadParams, CorruptShard, InsufficientShards, NodeUnreachable, NoSuchBucket, NotFound,
                     Unauthorized, UnknownTarget)
from .identity import Action, ClusterIdentitySet

SHARD_MAGIC = b"FLSH"
SHARD_VERSION = 1
# magic, version, did, revision prefix, index, k, m, original length, checksum prefix
HEADER = struct.Struct(">4sB16s16sBBBQ16s")
assert HEADER.size == 64

MIN_STORAGE_NODES = 4
_BUCKET_RE = re.compile(r"^[a-z0-9][a-z0-9.\-]{1,61}[a-z0-9]$")


def erasure_params(n_storage: int) -> tuple[int, int]:
    m = n_storage // 2
    return n_storage - m, m


@dataclass(frozen=True)
class Bucket:
    name: str
    channel: str
    project: str = ""


@dataclass(frozen=True)
class Shard:
    did: str
    revision: str
    index: int
    payload: bytes
    checksum: str
    node: str


@dataclass(frozen=True)
class Revision:
    revision: str
    size: int
    k: int
    m: int
    placement: tuple[str, ...]
    timestamp: int
    link: dict | None = None  # {"mid": ..., "tx_id": ...} of the metadata transaction

    def to_dict(self) -> dict:
        d = asdict(self)
        d["placement"] = list(self.placement)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Revision":
        return cls(d["revision"], d["size"], d["k"], d["m"], tuple(d["placement"]), d["timestamp"], d.get("link"))


@dataclass
class StoredObject:
    did: str
    bucket: str
    revisions: list[Revision] = field(default_factory=list)

    def revision(self, rev: str | None = None) -> Revision:
        if not self.revisions:
            raise NotFound(f"object {self.did} has no revisions")
        if rev is None:
            return self.revisions[-1]
        for r in reversed(self.revisions):
            if r.revision == rev:
                return r
        raise NotFound(f"object {self.did} has no revision {rev[:12]}")


@dataclass(frozen=True)
class NodeHealth:
    node: str
    reachable: bool
    stored: int
    corrupt: int
    missing: int


class StorageNode:
    """One storage device.  A killed node keeps its files but serves nothing."""

    def __init__(self, node_id: str, root: Path):
        self.node_id = node_id
        self.root = root / node_id
        self.alive = True

    def shard_path(self, did: str, revision: str, index: int) -> Path:
        return self.root / did / revision / f"{index}.shard"

    def _require_alive(self):
        if not self.alive:
            raise NodeUnreachable(self.node_id)

    def write(self, shard: Shard, k: int, m: int, original_length: int) -> None:
        self._require_alive()
        header = HEADER.pack(SHARD_MAGIC, SHARD_VERSION, bytes.fromhex(shard.did), bytes.fromhex(shard.revision)[:16],
                             shard.index, k, m, original_length, bytes.fromhex(shard.checksum)[:16])
        path = self.shard_path(shard.did, shard.revision, shard.index)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        tmp.write_bytes(header + shard.payload)
        os.replace(tmp, path)

    def read(self, did: str, revision: str, index: int) -> Shard | None:
        """Return the shard, None when absent; raise CorruptShard on any header or checksum mismatch."""
        self._require_alive()
        path = self.shard_path(did, revision, index)
        if not path.exists():
            return None
        raw = path.read_bytes()
        if len(raw) < HEADER.size:
            raise CorruptShard(f"{path}: short file")
        magic, version, h_did, h_rev, h_index, _k, _m, _n, h_sum = HEADER.unpack_from(raw)
        payload = raw[HEADER.size:]
        checksum = sha256_hex(payload)
        if (magic != SHARD_MAGIC or version != SHARD_VERSION or h_did.hex() != did or h_index != index
                or h_rev != bytes.fromhex(revision)[:16] or h_sum != bytes.fromhex(checksum)[:16]):
            raise CorruptShard(f"{path}: header or checksum mismatch")
        return Shard(did, revision, index, payload, checksum, self.node_id)

    def corrupt(self, did: str, revision: str, index: int, offset: int = 0) -> None:
        path = self.shard_path(did, revision, index)
        raw = bytearray(path.read_bytes())
        pos = HEADER.size + offset % max(1, len(raw) - HEADER.size)
        raw[pos] ^= 0xFF
        path.write_bytes(bytes(raw))

    def shard_files(self) -> list[Path]:
        return sorted(self.root.glob("*/*/*.shard")) if self.root.exists() else []


class DidGenerator:
    """Deterministic 128-bit identifiers: hash of (seed, draw counter)."""

    def __init__(self, seed: int = 0, counter: int = 0):
        self.seed = seed
        self.counter = counter

    def next(self) -> str:
        did = hashlib.sha256(f"fairledger-did:{self.seed}:{self.counter}".encode()).hexdigest()[:32]
        self.counter += 1
        return did


class ObjectStore:
    def __init__(self, root: str | Path, identities: ClusterIdentitySet, seed: int = 0):
        self.root = Path(root)
        self.identities = identities
        self.nodes = {
            pid: StorageNode(pid, self.root)
            for org in identities.organizations.values() for pid in org.storage_node_ids
        }
        self.buckets: dict[str, Bucket] = {}
        self.objects: dict[str, StoredObject] = {}
        self.did_gen = DidGenerator(seed)
        self._load()

    # -- registry ------------------------------------------------------------

    @property
    def registry_path(self) -> Path:
        return self.root / "registry.json"

    def _load(self):
        if not self.registry_path.exists():
            return
        raw = json.loads(self.registry_path.read_text(encoding="utf-8"))
        self.buckets = {b["name"]: Bucket(b["name"], b["channel"], b["project"]) for b in raw["buckets"]}
        self.objects = {
            o["did"]: StoredObject(o["did"], o["bucket"], [Revision.from_dict(r) for r in o["revisions"]])
            for o in raw["objects"]
        }
        self.did_gen = DidGenerator(raw["did_seed"], raw["did_counter"])

    def _save(self):
        raw = {
            "did_seed": self.did_gen.seed,
            "did_counter": self.did_gen.counter,
            "buckets": [asdict(b) for b in self.buckets.values()],
            "objects": [{"did": o.did, "bucket": o.bucket, "revisions": [r.to_dict() for r in o.revisions]}
                        for o in self.objects.values()],
        }
        self.root.mkdir(parents=True, exist_ok=True)
        tmp = self.registry_path.with_suffix(".tmp")
        tmp.write_text(json.dumps(raw, sort_keys=True, indent=1), encoding="utf-8")
        os.replace(tmp, self.registry_path)

    # -- topology ------------------------------------------------------------

    def node(self, node_id: str) -> StorageNode:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise UnknownTarget(f"no storage node {node_id}") from None

    def kill(self, node_id: str) -> None:
        self.node(node_id).alive = False

    def revive(self, node_id: str) -> None:
        self.node(node_id).alive = True

    def channel_nodes(self, channel: str) -> list[str]:
        return self.identities.storage_nodes(channel)

    def params(self, channel: str) -> tuple[int, int]:
        return erasure_params(len(self.channel_nodes(channel)))

    def create_bucket(self, name: str, channel: str, project: str = "") -> Bucket:
        if not _BUCKET_RE.match(name):
            raise BadParams(f"bucket name {name!r} is not DNS-safe lowercase")
        self.identities.channel(channel)
        existing = self.buckets.get(name)
        if existing is not None:
            if existing.channel != channel:
                raise BadParams(f"bucket {name} already exists on channel {existing.channel}")
            return existing
        bucket = Bucket(name, channel, project or name)
        self.buckets[name] = bucket
        self._save()
        return bucket

    def bucket_of(self, did: str) -> Bucket:
        return self.buckets[self.get_stored(did).bucket]

    def get_stored(self, did: str) -> StoredObject:
        try:
            return self.objects[did]
        except KeyError:
            raise NotFound(f"no object with DID {did}") from None

    # -- data path -----------------------------------------------------------

    def put_object(self, bucket: str, data: bytes, writer: str, did: str | None = None,
                   timestamp: int = 0, link: dict | None = None) -> tuple[str, str]:
        """Store a new immutable revision; mints a DID when none is given."""
        if bucket not in self.buckets:
            raise NoSuchBucket(bucket)
        b = self.buckets[bucket]
        if not self.identities.authorize(writer, Action.SUBMIT, b.channel):
            raise Unauthorized(f"{writer} may not write to channel {b.channel}")
        if did is not None:
            obj = self.get_stored(did)
            if obj.bucket != bucket:
                raise BadParams(f"DID {did} lives in bucket {obj.bucket}")
        nodes = self.channel_nodes(b.channel)
        if len(nodes) < MIN_STORAGE_NODES:
            raise BadParams(f"channel {b.channel} has {len(nodes)} storage nodes, need {MIN_STORAGE_NODES}")
        dead = [n for n in nodes if not self.nodes[n].alive]
        if dead:
            raise NodeUnreachable(f"storage nodes down: {', '.join(dead)}")
        k, m = erasure_params(len(nodes))

        if did is None:
            placement_offset = sum(1 for o in self.objects.values() if self.buckets[o.bucket].channel == b.channel)
            placement = tuple(nodes[(i + placement_offset) % len(nodes)] for i in range(k + m))
            did = self.did_gen.next()
            obj = StoredObject(did, bucket)
        else:
            obj = self.objects[did]
            placement = obj.revisions[-1].placement if obj.revisions else tuple(nodes)

        revision = sha256_hex(data)
        for index, payload in enumerate(encode_shards(data, k, m)):
            shard = Shard(did, revision, index, payload, sha256_hex(payload), placement[index])
            self.nodes[placement[index]].write(shard, k, m, len(data))
        # registered only after every shard is acknowledged
        obj.revisions.append(Revision(revision, len(data), k, m, placement, timestamp, link))
        self.objects[did] = obj
        self._save()
        return did, revision

    def gather(self, did: str, rev: Revision) -> dict[int, bytes]:
        shards: dict[int, bytes] = {}
        for index, node_id in enumerate(rev.placement):
            if len(shards) == rev.k:
                break
            node = self.nodes[node_id]
            if not node.alive:
                continue
            try:
                shard = node.read(did, rev.revision, index)
            except CorruptShard:
                continue
            if shard is not None:
                shards[index] = shard.payload
        return shards

    def get_object(self, did: str, requester: str, revision: str | None = None) -> bytes:
        obj = self.get_stored(did)
        channel = self.buckets[obj.bucket].channel
        if not self.identities.authorize(requester, Action.READ_DATA, channel):
            raise Unauthorized(f"{requester} may not read channel {channel}")
        rev = obj.revision(revision)
        shards = self.gather(did, rev)
        if len(shards) < rev.k:
            raise InsufficientShards(f"{did}: {len(shards)} of {rev.k} required shards readable")
        data = decode_shards(shards, rev.k, rev.m, rev.size)
        if sha256_hex(data) != rev.revision:
            raise CorruptShard(f"{did}: decoded bytes do not match revision {rev.revision[:12]}")
        return data

    def storage_report(self, channel: str) -> list[NodeHealth]:
        expected: dict[str, list[tuple[str, str, int]]] = {n: [] for n in self.channel_nodes(channel)}
        for obj in self.objects.values():
            if self.buckets[obj.bucket].channel != channel:
                continue
            for rev in obj.revisions:
                for index, node_id in enumerate(rev.placement):
                    expected.setdefault(node_id, []).append((obj.did, rev.revision, index))
        report = []
        for node_id, shards in expected.items():
            node = self.nodes[node_id]
            if not node.alive:
                report.append(NodeHealth(node_id, False, 0, 0, len(shards)))
                continue
            stored = corrupt = missing = 0
            for did, rev, index in shards:
                try:
                    found = node.read(did, rev, index)
                except CorruptShard:
                    corrupt += 1
                    continue
                if found is None:
                    missing += 1
                else:
                    stored += 1
            report.append(NodeHealth(node_id, True, stored, corrupt, missing))
        return report

    def stored_bytes(self, channel: str) -> int:
        """Bytes on disk for a channel, shard headers included."""
        total = 0
        for node_id in self.channel_nodes(channel):
            total += sum(p.stat().st_size for p in self.nodes[node_id].shard_files())
        return total
