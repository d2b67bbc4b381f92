"""Static cluster identities, signing and the consortium authorization rule.

Credentials are pre-generated (see :func:`generate_config`) and loaded from a
JSON cluster config; nothing is enrolled or revoked at runtime.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from cryptography.exceptions import InvalidSignature
from cryptography.hazmat.primitives.asymmetric.ed25519 import Ed25519PrivateKey, Ed25519PublicKey
from cryptography.hazmat.primitives.serialization import Encoding, PublicFormat

from .errors import InvalidTopology, MalformedConfig, MissingCredential, UnknownPeer


class Role(str, Enum):
    EVC = "EVC"
    ORDERER = "ORDERER"
    STORAGE = "STORAGE"
    CLIENT = "CLIENT"


class Action(str, Enum):
    READ_METADATA = "READ_METADATA"
    READ_DATA = "READ_DATA"
    SUBMIT = "SUBMIT"


@dataclass(frozen=True)
class Organization:
    name: str
    domain: str
    peer_ids: tuple[str, ...]
    storage_node_ids: tuple[str, ...]


@dataclass(frozen=True)
class PeerIdentity:
    peer_id: str
    org: str
    role: Role
    credential: str | None  # hex Ed25519 private seed
    public_handle: str  # hex Ed25519 public key


@dataclass(frozen=True)
class Consortium:
    name: str
    channel: str
    member_orgs: frozenset[str]


@dataclass(frozen=True)
class Channel:
    name: str
    consortium: str
    orderer: str


@dataclass(frozen=True)
class Signature:
    signer: str
    bytes: bytes

    def to_dict(self) -> dict:
        return {"signer": self.signer, "bytes": self.bytes.hex()}

    @classmethod
    def from_dict(cls, d: dict) -> "Signature":
        return cls(signer=d["signer"], bytes=bytes.fromhex(d["bytes"]))


def _public_from_private(credential: str) -> str:
    key = Ed25519PrivateKey.from_private_bytes(bytes.fromhex(credential))
    return key.public_key().public_bytes(Encoding.Raw, PublicFormat.Raw).hex()


def sign(identity: PeerIdentity, message: bytes) -> Signature:
    """Ed25519 signature; deterministic for a fixed key and message."""
    if not identity.credential:
        raise MissingCredential(f"{identity.peer_id} holds no credential")
    key = Ed25519PrivateKey.from_private_bytes(bytes.fromhex(identity.credential))
    return Signature(identity.peer_id, key.sign(message))


def verify(public_handle: str, message: bytes, sig: Signature) -> bool:
    try:
        Ed25519PublicKey.from_public_bytes(bytes.fromhex(public_handle)).verify(sig.bytes, message)
    except (InvalidSignature, ValueError, TypeError):
        return False
    return True


@dataclass
class ClusterIdentitySet:
    organizations: dict[str, Organization]
    peers: dict[str, PeerIdentity]
    consortiums: dict[str, Consortium]
    channels: dict[str, Channel]
    _channel_orgs: dict[str, frozenset[str]] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._channel_orgs = {
            name: self.consortiums[ch.consortium].member_orgs for name, ch in self.channels.items()
        }

    def peer(self, peer_id: str) -> PeerIdentity:
        try:
            return self.peers[peer_id]
        except KeyError:
            raise UnknownPeer(peer_id) from None

    @property
    def orderers(self) -> list[PeerIdentity]:
        return [p for p in self.peers.values() if p.role is Role.ORDERER]

    def channel(self, name: str) -> Channel:
        try:
            return self.channels[name]
        except KeyError:
            raise UnknownPeer(f"unknown channel {name!r}") from None

    def channel_orgs(self, channel: str) -> frozenset[str]:
        return self._channel_orgs.get(channel, frozenset())

    def _members(self, channel: str, role: Role) -> list[str]:
        orgs = self.channel_orgs(channel)
        out = []
        for org in sorted(orgs):
            o = self.organizations[org]
            ids = o.storage_node_ids if role is Role.STORAGE else o.peer_ids
            out.extend(pid for pid in ids if self.peers[pid].role is role)
        return out

    def evc_peers(self, channel: str) -> list[str]:
        return self._members(channel, Role.EVC)

    def storage_nodes(self, channel: str) -> list[str]:
        return self._members(channel, Role.STORAGE)

    def channels_of(self, peer_id: str) -> list[str]:
        org = self.peer(peer_id).org
        return sorted(c for c, orgs in self._channel_orgs.items() if org in orgs)

    def authorize(self, requester: str, action: Action | str, channel: str) -> bool:
        """Consortium membership decides every action, reads and submits alike."""
        Action(action)
        org = self.peer(requester).org
        return org in self.channel_orgs(channel)


def authorize(identities: ClusterIdentitySet, requester: str, action: Action | str, channel: str) -> bool:
    return identities.authorize(requester, action, channel)


def _require(cond: bool, exc, msg: str):
    if not cond:
        raise exc(msg)


def parse_config(raw: dict) -> ClusterIdentitySet:
    try:
        org_rows = raw["organizations"]
        peer_rows = raw["peers"]
        cons_rows = raw["consortiums"]
        chan_rows = raw["channels"]
        orgs = {
            o["name"]: Organization(o["name"], o["domain"], tuple(o.get("peer_ids", [])),
                                    tuple(o.get("storage_node_ids", [])))
            for o in org_rows
        }
        peers = {
            p["peer_id"]: PeerIdentity(p["peer_id"], p["org"], Role(p["role"]), p.get("credential"),
                                       p["public_handle"])
            for p in peer_rows
        }
        consortiums = {
            c["name"]: Consortium(c["name"], c["channel"], frozenset(c["member_orgs"])) for c in cons_rows
        }
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedConfig(f"bad config structure: {exc}") from exc

    _require(len(orgs) > 0, InvalidTopology, "no organizations configured")
    _require(len(orgs) == len(org_rows), InvalidTopology, "duplicate organization name")
    _require(len(peers) == len(peer_rows), InvalidTopology, "duplicate peer id")
    domains = [o.domain for o in orgs.values()]
    _require(len(set(domains)) == len(domains), InvalidTopology, "organization domains must be unique")

    owner: dict[str, str] = {}
    for o in orgs.values():
        for pid in o.peer_ids + o.storage_node_ids:
            _require(pid not in owner, InvalidTopology, f"{pid} listed in more than one organization")
            owner[pid] = o.name
    for pid, p in peers.items():
        _require(owner.get(pid) == p.org, InvalidTopology, f"{pid} not listed under organization {p.org}")
        in_storage = pid in orgs[p.org].storage_node_ids
        _require(in_storage == (p.role is Role.STORAGE), InvalidTopology,
                 f"{pid}: storage nodes and only storage nodes belong in storage_node_ids")
        if p.credential is not None:
            try:
                ok = _public_from_private(p.credential) == p.public_handle
            except ValueError:
                ok = False
            _require(ok, MalformedConfig, f"{pid}: credential does not match public_handle")
    _require(set(owner) == set(peers), InvalidTopology, "organization lists an unconfigured peer")
    for o in orgs.values():
        n = sum(1 for pid in o.peer_ids if peers[pid].role is Role.ORDERER)
        _require(n == 1, InvalidTopology, f"organization {o.name} has {n} orderers, expected 1")

    channels: dict[str, Channel] = {}
    for c in chan_rows:
        try:
            name = c["name"]
        except (KeyError, TypeError) as exc:
            raise MalformedConfig("channel without a name") from exc
        owning = [k.name for k in consortiums.values() if k.channel == name]
        _require(len(owning) == 1, InvalidTopology, f"channel {name} needs exactly one consortium")
        cons = consortiums[owning[0]]
        _require(cons.member_orgs <= set(orgs), InvalidTopology, f"consortium {cons.name} names unknown orgs")
        _require(len(cons.member_orgs) > 0, InvalidTopology, f"consortium {cons.name} is empty")
        orderer = c.get("orderer")
        if orderer is None:
            first = orgs[sorted(cons.member_orgs)[0]]
            orderer = next(pid for pid in first.peer_ids if peers[pid].role is Role.ORDERER)
        _require(orderer in peers and peers[orderer].role is Role.ORDERER
                 and peers[orderer].org in cons.member_orgs,
                 InvalidTopology, f"channel {name}: bad orderer {orderer}")
        channels[name] = Channel(name, cons.name, orderer)
    for cons in consortiums.values():
        _require(cons.channel in channels, InvalidTopology, f"consortium {cons.name} names unknown channel")
    return ClusterIdentitySet(orgs, peers, consortiums, channels)


def load_credentials(config_path: str | Path) -> ClusterIdentitySet:
    try:
        raw = json.loads(Path(config_path).read_bytes().decode("utf-8"))
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise MalformedConfig(f"cannot read {config_path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise MalformedConfig("config root must be an object")
    return parse_config(raw)


def _keypair(seed: int, peer_id: str) -> tuple[str, str]:
    secret = hashlib.sha256(f"fairledger-keygen:{seed}:{peer_id}".encode()).hexdigest()
    return secret, _public_from_private(secret)


def generate_config(
    orgs: int = 3,
    evc_per_org: int = 2,
    storage_per_org: int = 2,
    clients_per_org: int = 0,
    outsider: bool = False,
    seed: int = 0,
    channel: str = "gadds",
) -> dict:
    """Build a cluster config with one channel shared by ``orgs`` organizations.

    With ``outsider=True`` an extra organization is placed alone on a second
    channel, so it holds valid credentials but no access to the main one.
    """
    org_rows, peer_rows = [], []

    def add_org(name: str, evc: int, storage: int, clients: int):
        peer_ids, storage_ids = [], []
        roles = [(f"peer{i}.{name}", Role.EVC) for i in range(evc)]
        roles.append((f"orderer.{name}", Role.ORDERER))
        roles += [(f"client{i}.{name}", Role.CLIENT) for i in range(clients)]
        roles += [(f"storage{i}.{name}", Role.STORAGE) for i in range(storage)]
        for pid, role in roles:
            (storage_ids if role is Role.STORAGE else peer_ids).append(pid)
            secret, public = _keypair(seed, pid)
            peer_rows.append({"peer_id": pid, "org": name, "role": role.value,
                              "credential": secret, "public_handle": public})
        org_rows.append({"name": name, "domain": f"{name}.gadds.local",
                         "peer_ids": peer_ids, "storage_node_ids": storage_ids})

    members = [f"org{i + 1}" for i in range(orgs)]
    for name in members:
        add_org(name, evc_per_org, storage_per_org, clients_per_org)
    channels = [{"name": channel, "orderer": f"orderer.{members[0]}"}] if members else []
    consortiums = [{"name": f"{channel}-consortium", "channel": channel, "member_orgs": members}]
    if outsider:
        add_org("outsider", 1, storage_per_org, 1)
        channels.append({"name": "outside", "orderer": "orderer.outsider"})
        consortiums.append({"name": "outside-consortium", "channel": "outside", "member_orgs": ["outsider"]})
    return {"organizations": org_rows, "channels": channels, "consortiums": consortiums, "peers": peer_rows}


def write_config(config: dict, path: str | Path) -> None:
    Path(path).write_text(json.dumps(config, sort_keys=True, indent=2) + "\n", encoding="utf-8")


