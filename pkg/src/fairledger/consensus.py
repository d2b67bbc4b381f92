"""Proof-of-Authority endorsement, ordering, validation and commit.

EVC peers endorse proposals by running the chaincode (credential check plus
template comparison), the channel orderer collects endorsements and cuts
blocks, and every EVC peer re-validates each block before committing it.
All nodes are deterministic state machines that exchange signed envelopes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable

from .canonical import ZERO_HASH, canonical_bytes, sha256_hex
from .errors import (BadOrdererSig, BadSignature, ForkError, LedgerError, NothingPending, TemplateMismatch,
                     WrongChannel, WrongRole)
from .identity import Action, ClusterIdentitySet, PeerIdentity, Role, Signature, sign, verify
from .ledger import (Block, Endorsement, Ledger, LedgerTransaction, Validity, decode_block, encode_frame,
                     orderer_sig_ok, read_frames)
from .metadata_schema import MetadataRecord, Template, validate_record

MAX_BLOCK_TXS = 10
BLOCK_TIMEOUT = 5
ENDORSEMENT_TIMEOUT = 20


class MsgType(str, Enum):
    PROPOSAL = "PROPOSAL"
    ENDORSEMENT = "ENDORSEMENT"
    BLOCK = "BLOCK"
    ACK = "ACK"


class Outcome(str, Enum):
    COMMITTED_VALID = "COMMITTED_VALID"
    COMMITTED_INVALID = "COMMITTED_INVALID"
    NO_QUORUM_TIMEOUT = "NO_QUORUM_TIMEOUT"


class Byzantine(str, Enum):
    INVERT = "invert"
    SILENT = "silent"
    BADSIG = "badsig"


@dataclass(frozen=True)
class EndorsementPolicy:
    evc_count: int

    def __post_init__(self):
        if self.evc_count < 1:
            raise ValueError("endorsement policy needs at least one EVC peer")

    @property
    def quorum(self) -> int:
        return self.evc_count // 2 + 1


# -- wire format ------------------------------------------------------------

@dataclass(frozen=True)
class Envelope:
    msg_type: MsgType
    channel: str
    sender: str
    payload: dict
    sig: Signature | None = None

    def signing_bytes(self) -> bytes:
        return canonical_bytes({"msg_type": self.msg_type.value, "channel": self.channel,
                                "sender": self.sender, "payload": self.payload})

    def signed(self, identity: PeerIdentity) -> "Envelope":
        return Envelope(self.msg_type, self.channel, self.sender, self.payload, sign(identity, self.signing_bytes()))

    def verify(self, identities: ClusterIdentitySet) -> bool:
        peer = identities.peers.get(self.sender)
        return peer is not None and self.sig is not None and verify(peer.public_handle, self.signing_bytes(), self.sig)

    def to_dict(self) -> dict:
        return {"msg_type": self.msg_type.value, "channel": self.channel, "sender": self.sender,
                "payload": self.payload, "sig": self.sig.to_dict() if self.sig else None}

    @classmethod
    def from_dict(cls, d: dict) -> "Envelope":
        return cls(MsgType(d["msg_type"]), d["channel"], d["sender"], d["payload"],
                   Signature.from_dict(d["sig"]) if d["sig"] else None)

    def encode(self) -> bytes:
        return canonical_bytes(self.to_dict())

    @property
    def digest(self) -> str:
        return sha256_hex(self.encode())


@dataclass(frozen=True)
class Proposal:
    client: str
    tx: LedgerTransaction
    channel: str

    @property
    def client_sig(self) -> Signature | None:
        return self.tx.client_sig

    def to_payload(self) -> dict:
        return {"client": self.client, "tx": self.tx.to_dict()}

    @classmethod
    def from_payload(cls, payload: dict, channel: str) -> "Proposal":
        return cls(payload["client"], LedgerTransaction.from_dict(payload["tx"]), channel)


def make_proposal(client: PeerIdentity, record: MetadataRecord, channel: str, did: str = "") -> Proposal:
    tx = LedgerTransaction(client.peer_id, record, did)
    signed = LedgerTransaction(client.peer_id, record, did, client_sig=sign(client, tx.preimage))
    return Proposal(client.peer_id, signed, channel)


# -- chaincode --------------------------------------------------------------

def chaincode(tx: LedgerTransaction, channel: str, identities: ClusterIdentitySet,
              templates: dict[str, Template]) -> bool:
    """Credential endorsement plus template comparison; pure and deterministic."""
    client = identities.peers.get(tx.submitter)
    if client is None or tx.client_sig is None or tx.client_sig.signer != tx.submitter:
        return False
    if not verify(client.public_handle, tx.preimage, tx.client_sig):
        return False
    if not identities.authorize(tx.submitter, Action.SUBMIT, channel):
        return False
    template = templates.get(tx.record.template_id)
    if template is None:
        return False
    try:
        return validate_record(tx.record, template).valid
    except TemplateMismatch:
        return False


def _check_evc(identities: ClusterIdentitySet, peer_id: str, channel: str):
    peer = identities.peer(peer_id)
    if peer.role is not Role.EVC:
        raise WrongRole(f"{peer_id} is {peer.role.value}, not EVC")
    if channel not in identities.channels or peer.org not in identities.channel_orgs(channel):
        raise WrongChannel(f"{peer_id} does not serve channel {channel}")


# -- genesis ----------------------------------------------------------------

def genesis_block(channel: str, identities: ClusterIdentitySet) -> Block:
    """Channel configuration block; identical on every node built from the same config."""
    ch = identities.channel(channel)
    orderer = identities.peer(ch.orderer)
    cons = identities.consortiums[ch.consortium]
    record = MetadataRecord(
        experiment_name="genesis",
        experiment_id=f"{channel}-genesis",
        elements={"channel": channel, "consortium": cons.name, "members": ",".join(sorted(cons.member_orgs)),
                  "orderer": ch.orderer},
        template_id="channel-config",
    )
    tx = LedgerTransaction(orderer.peer_id, record, "", validity=Validity.VALID)
    unsigned = Block(0, ZERO_HASH, 0, (tx,))
    return Block(0, ZERO_HASH, 0, (tx,), sign(orderer, unsigned.signing_bytes()))


# -- EVC peer ---------------------------------------------------------------

Outgoing = list[tuple[str, Envelope]]
CommitHook = Callable[[str, str, Block], None]


class EvcPeer:
    def __init__(self, identity: PeerIdentity, identities: ClusterIdentitySet, templates: dict[str, Template],
                 ledger_dir: Path | None = None):
        if identity.role is not Role.EVC:
            raise WrongRole(identity.peer_id)
        self.identity = identity
        self.identities = identities
        self.templates = templates
        self.ledger_dir = ledger_dir
        self.alive = True
        self.byzantine: Byzantine | None = None
        self.commit_hooks: list[CommitHook] = []
        self.faults: dict[str, str] = {}
        self.ledgers: dict[str, Ledger] = {}
        self.buffered: dict[str, dict[int, Block]] = {}
        self._sync_sent: dict[str, int] = {}
        self.load()

    @property
    def node_id(self) -> str:
        return self.identity.peer_id

    def ledger_path(self, channel: str) -> Path | None:
        return self.ledger_dir / self.node_id / f"{channel}.ledger" if self.ledger_dir else None

    def load(self):
        """(Re)build volatile state by replaying persisted ledgers."""
        self.ledgers = {}
        self.buffered = {}
        self._sync_sent = {}
        self.faults = {}
        for channel in self.identities.channels_of(self.node_id):
            path = self.ledger_path(channel)
            if path is not None and path.exists():
                try:
                    ledger = Ledger.open(path, channel, self.identities, self.reflag(channel))
                except LedgerError as exc:
                    # a ledger file that does not replay takes the peer out of service; the file is left as found
                    self.faults[channel] = str(exc)
                    self.alive = False
                    ledger = Ledger(channel, self.identities)
                    ledger.append_block(genesis_block(channel, self.identities))
            else:
                ledger = Ledger(channel, self.identities)
                ledger.append_block(genesis_block(channel, self.identities))
                ledger.path = path
                if path is not None:
                    path.parent.mkdir(parents=True, exist_ok=True)
                    path.write_bytes(ledger.file_bytes())
            self.ledgers[channel] = ledger

    def policy(self, channel: str) -> EndorsementPolicy:
        return EndorsementPolicy(len(self.identities.evc_peers(channel)))

    def reflag(self, channel: str):
        return lambda tx: expected_validity(tx, channel, self.identities, self.templates)

    def state_digest(self) -> str:
        return sha256_hex(canonical_bytes({
            "alive": self.alive,
            "byzantine": self.byzantine.value if self.byzantine else None,
            "tips": {c: [l.height, l.tip_mid] for c, l in sorted(self.ledgers.items())},
            "buffered": {c: sorted(b) for c, b in sorted(self.buffered.items()) if b},
        }))

    def handle(self, env: Envelope, now: int) -> tuple[dict, Outgoing]:
        if env.msg_type is MsgType.PROPOSAL:
            return self._on_proposal(env)
        if env.msg_type is MsgType.BLOCK:
            return self._on_block(env)
        return {"kind": "ignored", "msg_type": env.msg_type.value}, []

    def _on_proposal(self, env: Envelope) -> tuple[dict, Outgoing]:
        proposal = Proposal.from_payload(env.payload, env.channel)
        endorsement = endorse(self, proposal)
        if endorsement is None:
            return {"kind": "endorse-withheld", "tx_id": proposal.tx.tx_id}, []
        orderer = self.identities.channel(env.channel).orderer
        out = Envelope(MsgType.ENDORSEMENT, env.channel, self.node_id, endorsement.to_dict()).signed(self.identity)
        return {"kind": "endorse", "tx_id": proposal.tx.tx_id, "verdict": endorsement.verdict}, [(orderer, out)]

    def _on_block(self, env: Envelope) -> tuple[dict, Outgoing]:
        channel = env.channel
        ledger = self.ledgers.get(channel)
        block = Block.from_dict(env.payload["block"])
        if ledger is None:
            return {"kind": "block-rejected", "reason": "WRONG_CHANNEL"}, []
        if block.height < ledger.height:
            return {"kind": "block-duplicate", "height": block.height}, []
        if block.height > ledger.height:
            self.buffered.setdefault(channel, {})[block.height] = block
            if self._sync_sent.get(channel) == ledger.height:
                return {"kind": "block-buffered", "height": block.height}, []
            self._sync_sent[channel] = ledger.height
            orderer = self.identities.channel(channel).orderer
            ack = Envelope(MsgType.ACK, channel, self.node_id, {"kind": "SYNC", "from_height": ledger.height})
            return ({"kind": "block-buffered", "height": block.height, "sync_from": ledger.height},
                    [(orderer, ack.signed(self.identity))])
        committed = []
        try:
            while True:
                flagged = validate_block(self, channel, block)
                commit(self, channel, flagged)
                committed.append({"height": flagged.height, "mid": flagged.mid,
                                  "flags": [t.validity.value for t in flagged.transactions]})
                nxt = self.buffered.get(channel, {}).pop(ledger.height, None)
                if nxt is None:
                    break
                block = nxt
        except (LedgerError, BadOrdererSig) as exc:
            return {"kind": "block-rejected", "reason": exc.code, "committed": committed}, []
        return {"kind": "commit", "blocks": committed}, []


def endorse(peer: EvcPeer, proposal: Proposal) -> Endorsement | None:
    """Validate and endorse a proposal on one EVC peer.  Returns None when a silent byzantine peer withholds."""
    _check_evc(peer.identities, peer.node_id, proposal.channel)
    verdict = chaincode(proposal.tx, proposal.channel, peer.identities, peer.templates)
    mode = peer.byzantine
    if mode is Byzantine.SILENT:
        return None
    if mode is Byzantine.INVERT:
        verdict = not verdict
    tx_id = proposal.tx.tx_id
    if mode is Byzantine.BADSIG:
        sig = Signature(peer.node_id, bytes(64))
    else:
        sig = sign(peer.identity, Endorsement.message(tx_id, verdict))
    return Endorsement(peer.node_id, tx_id, verdict, sig)


def endorsement_ok(e: Endorsement, tx_id: str, channel: str, identities: ClusterIdentitySet) -> bool:
    peer = identities.peers.get(e.endorser)
    if peer is None or peer.role is not Role.EVC or peer.org not in identities.channel_orgs(channel):
        return False
    return e.tx_id == tx_id and e.sig.signer == e.endorser and verify(
        peer.public_handle, Endorsement.message(e.tx_id, e.verdict), e.sig)


def count_positive(tx: LedgerTransaction, channel: str, identities: ClusterIdentitySet) -> int:
    endorsers = {e.endorser for e in tx.endorsements
                 if e.verdict and endorsement_ok(e, tx.tx_id, channel, identities)}
    return len(endorsers)


def expected_validity(tx: LedgerTransaction, channel: str, identities: ClusterIdentitySet,
                      templates: dict[str, Template]) -> Validity:
    """VALID iff a quorum endorsed positively and the chaincode passes on re-execution."""
    q = EndorsementPolicy(len(identities.evc_peers(channel))).quorum
    ok = count_positive(tx, channel, identities) >= q and chaincode(tx, channel, identities, templates)
    return Validity.VALID if ok else Validity.INVALID


def validate_block(peer: EvcPeer, channel: str, block: Block) -> Block:
    """Flag each transaction VALID or INVALID."""
    if not orderer_sig_ok(block, peer.identities) or \
            block.orderer_sig.signer != peer.identities.channel(channel).orderer:
        raise BadOrdererSig(f"block {block.height} not signed by the channel orderer")
    ledger = peer.ledgers[channel]
    if block.prev_mid != ledger.tip_mid or block.height != ledger.height:
        raise ForkError(f"block {block.height} does not extend tip at height {ledger.height - 1}")
    return block.with_transactions([tx.with_validity(expected_validity(tx, channel, peer.identities, peer.templates))
                                    for tx in block.transactions])


def commit(peer: EvcPeer, channel: str, block: Block) -> None:
    """Append to this peer's ledger copy, then notify listeners."""
    peer.ledgers[channel].append_block(block)
    for hook in peer.commit_hooks:
        hook(peer.node_id, channel, block)


# -- orderer ----------------------------------------------------------------

@dataclass
class PendingTx:
    proposal: Proposal
    first_seen: int
    endorsements: dict[str, Endorsement] = field(default_factory=dict)
    closed_at: int | None = None

    @property
    def positives(self) -> int:
        return sum(1 for e in self.endorsements.values() if e.verdict)


@dataclass
class OrdererChannel:
    channel: str
    evc: list[str]
    blocks: list[Block] = field(default_factory=list)
    pending: dict[str, PendingTx] = field(default_factory=dict)

    @property
    def policy(self) -> EndorsementPolicy:
        return EndorsementPolicy(len(self.evc))

    @property
    def tip(self) -> Block:
        return self.blocks[-1]

    def closed(self) -> list[str]:
        return [tx_id for tx_id, p in self.pending.items() if p.closed_at is not None]


class Orderer:
    def __init__(self, identity: PeerIdentity, identities: ClusterIdentitySet, state_dir: Path | None = None):
        if identity.role is not Role.ORDERER:
            raise WrongRole(identity.peer_id)
        self.identity = identity
        self.identities = identities
        self.state_dir = state_dir
        self.alive = True
        self.chains: dict[str, OrdererChannel] = {}
        self.load()

    @property
    def node_id(self) -> str:
        return self.identity.peer_id

    def blocks_path(self, channel: str) -> Path | None:
        return self.state_dir / self.node_id / f"{channel}.blocks" if self.state_dir else None

    def load(self):
        self.chains = {}
        for name, ch in sorted(self.identities.channels.items()):
            if ch.orderer != self.node_id:
                continue
            chain = OrdererChannel(name, self.identities.evc_peers(name))
            path = self.blocks_path(name)
            if path is not None and path.exists():
                chain.blocks = [decode_block(f) for f in read_frames(path.read_bytes())]
            else:
                chain.blocks = [genesis_block(name, self.identities)]
                self._persist(name, chain.blocks[0])
            self.chains[name] = chain

    def _persist(self, channel: str, block: Block):
        path = self.blocks_path(channel)
        if path is None:
            return
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "ab") as fh:
            fh.write(encode_frame(block.encode()))

    def state_digest(self) -> str:
        return sha256_hex(canonical_bytes({
            "alive": self.alive,
            "chains": {
                name: [len(c.blocks), c.tip.mid,
                       [[t, len(p.endorsements), p.closed_at] for t, p in c.pending.items()]]
                for name, c in sorted(self.chains.items())
            },
        }))

    def idle(self) -> bool:
        return not any(c.pending for c in self.chains.values())

    def handle(self, env: Envelope, now: int) -> tuple[dict, Outgoing]:
        chain = self.chains.get(env.channel)
        if chain is None:
            return {"kind": "ignored", "reason": "not the channel orderer"}, []
        if env.msg_type is MsgType.PROPOSAL:
            proposal = Proposal.from_payload(env.payload, env.channel)
            tx_id = proposal.tx.tx_id
            if tx_id in chain.pending:
                return {"kind": "proposal-duplicate", "tx_id": tx_id}, []
            chain.pending[tx_id] = PendingTx(proposal, now)
            return {"kind": "proposal-registered", "tx_id": tx_id}, []
        if env.msg_type is MsgType.ENDORSEMENT:
            e = Endorsement.from_dict(env.payload)
            try:
                recorded = collect(self, env.channel, e, now)
            except (BadSignature, WrongRole) as exc:
                return {"kind": "endorsement-rejected", "endorser": e.endorser, "reason": exc.code}, []
            return {"kind": "endorsement", "endorser": e.endorser, "tx_id": e.tx_id, "recorded": recorded}, []
        if env.msg_type is MsgType.ACK and env.payload.get("kind") == "SYNC":
            start = int(env.payload["from_height"])
            out = [(env.sender, self._block_envelope(env.channel, b)) for b in chain.blocks[start:]]
            return {"kind": "sync", "to": env.sender, "from_height": start}, out
        return {"kind": "ignored", "msg_type": env.msg_type.value}, []

    def _block_envelope(self, channel: str, block: Block) -> Envelope:
        return Envelope(MsgType.BLOCK, channel, self.node_id, {"block": block.to_dict()}).signed(self.identity)

    def on_tick(self, now: int) -> tuple[dict, Outgoing] | None:
        events, out = [], []
        for name, chain in sorted(self.chains.items()):
            q = chain.policy.quorum
            for tx_id, p in list(chain.pending.items()):
                if p.closed_at is None and now - p.first_seen >= ENDORSEMENT_TIMEOUT:
                    if len(p.endorsements) >= q:
                        p.closed_at = now
                        events.append({"kind": "collection-timeout-closed", "tx_id": tx_id})
                    else:
                        del chain.pending[tx_id]
                        ack = Envelope(MsgType.ACK, name, self.node_id,
                                       {"kind": "STATUS", "tx_id": tx_id, "status": Outcome.NO_QUORUM_TIMEOUT.value})
                        out.append((f"client:{p.proposal.client}", ack.signed(self.identity)))
                        events.append({"kind": "no-quorum-drop", "tx_id": tx_id, "responses": len(p.endorsements)})
            while True:
                closed = chain.closed()
                if len(closed) >= MAX_BLOCK_TXS:
                    trigger = "size"
                elif closed and now - min(chain.pending[t].closed_at for t in closed) >= BLOCK_TIMEOUT:
                    trigger = "timeout"
                else:
                    break
                block = cut_block(self, name, trigger, now)
                events.append({"kind": "cut", "trigger": trigger, "height": block.height, "mid": block.mid,
                               "txs": len(block.transactions)})
                env = self._block_envelope(name, block)
                out.extend((peer, env) for peer in chain.evc)
        if not events:
            return None
        return {"kind": "orderer-tick", "events": events}, out


def collect(orderer: Orderer, channel: str, e: Endorsement, now: int = 0) -> bool:
    """Record an endorsement.  Returns False when ignored (duplicate, late, unknown tx)."""
    chain = orderer.chains[channel]
    peer = orderer.identities.peers.get(e.endorser)
    if peer is None or peer.role is not Role.EVC or e.endorser not in chain.evc:
        raise WrongRole(f"{e.endorser} is not an EVC peer of {channel}")
    if not endorsement_ok(e, e.tx_id, channel, orderer.identities):
        raise BadSignature(f"endorsement from {e.endorser} does not verify")
    p = chain.pending.get(e.tx_id)
    if p is None or p.closed_at is not None or e.endorser in p.endorsements:
        return False
    p.endorsements[e.endorser] = e
    if p.positives >= chain.policy.quorum or len(p.endorsements) == len(chain.evc):
        p.closed_at = now
    return True


def cut_block(orderer: Orderer, channel: str, trigger: str, now: int) -> Block:
    """Package closed transactions, in arrival order, into a signed block."""
    chain = orderer.chains[channel]
    closed = chain.closed()
    if not closed:
        raise NothingPending(f"no closed transactions on {channel} ({trigger})")
    take = closed[:MAX_BLOCK_TXS]
    txs = []
    for tx_id in take:
        p = chain.pending.pop(tx_id)
        ends = tuple(p.endorsements[k] for k in sorted(p.endorsements))
        t = p.proposal.tx
        txs.append(LedgerTransaction(t.submitter, t.record, t.did, t.client_sig, ends, Validity.PENDING, t.tx_id))
    tip = chain.tip
    unsigned = Block(tip.height + 1, tip.mid, now, tuple(txs))
    block = Block(unsigned.height, unsigned.prev_mid, now, unsigned.transactions,
                  sign(orderer.identity, unsigned.signing_bytes()))
    chain.blocks.append(block)
    orderer._persist(channel, block)
    return block


def submit_pipeline(client: str, record: MetadataRecord, data_ref: bytes, cluster, bucket: str = "experiments",
                    channel: str | None = None) -> Outcome:
    """Drive the full submit flow for one record on a simulated cluster and return the client-visible status."""
    return cluster.submit(client, record, data_ref, bucket, channel).outcome
