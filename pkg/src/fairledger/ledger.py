"""Append-only hash-chained metadata ledger, one replica per peer and channel.

Blocks keep INVALID transactions; they are flagged at validation time and
filtered from every read path.  Persistence is one length-prefixed canonical
JSON block per entry, so replaying a file rebuilds the ledger byte for byte.
"""

from __future__ import annotations

import json
import re
import struct
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Callable, Iterator

from .canonical import ZERO_HASH, canonical_bytes, content_hash, sha256_hex
from .errors import (BadHeight, BadPredicate, BadSignature, ForkError, LedgerError, NotFound, PendingTx)
from .identity import Action, ClusterIdentitySet, Role, Signature, verify
from .metadata_schema import MetadataRecord


class Validity(str, Enum):
    PENDING = "PENDING"
    VALID = "VALID"
    INVALID = "INVALID"


@dataclass(frozen=True)
class Endorsement:
    endorser: str
    tx_id: str
    verdict: bool
    sig: Signature

    @staticmethod
    def message(tx_id: str, verdict: bool) -> bytes:
        return f"{tx_id}:{int(verdict)}".encode()

    def to_dict(self) -> dict:
        return {"endorser": self.endorser, "tx_id": self.tx_id, "verdict": self.verdict, "sig": self.sig.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "Endorsement":
        return cls(d["endorser"], d["tx_id"], d["verdict"], Signature.from_dict(d["sig"]))


def tx_preimage(submitter: str, record: MetadataRecord, did: str) -> bytes:
    return canonical_bytes({"submitter": submitter, "record": record.to_dict(), "did": did})


@dataclass(frozen=True)
class LedgerTransaction:
    submitter: str
    record: MetadataRecord
    did: str = ""
    client_sig: Signature | None = None
    endorsements: tuple[Endorsement, ...] = ()
    validity: Validity = Validity.PENDING
    tx_id: str = ""

    def __post_init__(self):
        if not self.tx_id:
            object.__setattr__(self, "tx_id", self.compute_id())

    def compute_id(self) -> str:
        return sha256_hex(tx_preimage(self.submitter, self.record, self.did))

    @property
    def preimage(self) -> bytes:
        return tx_preimage(self.submitter, self.record, self.did)

    def with_validity(self, validity: Validity) -> "LedgerTransaction":
        return replace(self, validity=validity)

    def to_dict(self) -> dict:
        return {
            "tx_id": self.tx_id,
            "submitter": self.submitter,
            "record": self.record.to_dict(),
            "did": self.did,
            "client_sig": self.client_sig.to_dict() if self.client_sig else None,
            "endorsements": [e.to_dict() for e in self.endorsements],
            "validity": self.validity.value,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LedgerTransaction":
        return cls(
            submitter=d["submitter"],
            record=MetadataRecord.from_dict(d["record"]),
            did=d["did"],
            client_sig=Signature.from_dict(d["client_sig"]) if d["client_sig"] else None,
            endorsements=tuple(Endorsement.from_dict(e) for e in d["endorsements"]),
            validity=Validity(d["validity"]),
            tx_id=d["tx_id"],
        )


# recomputes the flag a committed transaction should carry
Reflag = Callable[["LedgerTransaction"], "Validity"]


def tx_root(tx_ids: list[str]) -> str:
    return content_hash(tx_ids)


def compute_mid(height: int, prev_mid: str, timestamp: int, tx_ids: list[str]) -> str:
    return content_hash({"height": height, "prev_mid": prev_mid, "timestamp": timestamp, "tx_root": tx_root(tx_ids)})


@dataclass(frozen=True)
class Block:
    height: int
    prev_mid: str
    timestamp: int
    transactions: tuple[LedgerTransaction, ...]
    orderer_sig: Signature | None = None
    mid: str = ""

    def __post_init__(self):
        if not self.mid:
            object.__setattr__(self, "mid", self.compute_mid())

    def compute_mid(self) -> str:
        return compute_mid(self.height, self.prev_mid, self.timestamp, [t.tx_id for t in self.transactions])

    def signing_bytes(self) -> bytes:
        """What the orderer signs: the whole block as cut, flags still PENDING."""
        body = self.to_dict()
        del body["orderer_sig"]
        for tx in body["transactions"]:
            tx["validity"] = Validity.PENDING.value
        return canonical_bytes(body)

    def with_transactions(self, txs) -> "Block":
        return replace(self, transactions=tuple(txs))

    def to_dict(self) -> dict:
        return {
            "mid": self.mid,
            "height": self.height,
            "prev_mid": self.prev_mid,
            "timestamp": self.timestamp,
            "transactions": [t.to_dict() for t in self.transactions],
            "orderer_sig": self.orderer_sig.to_dict() if self.orderer_sig else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Block":
        return cls(
            height=d["height"],
            prev_mid=d["prev_mid"],
            timestamp=d["timestamp"],
            transactions=tuple(LedgerTransaction.from_dict(t) for t in d["transactions"]),
            orderer_sig=Signature.from_dict(d["orderer_sig"]) if d["orderer_sig"] else None,
            mid=d["mid"],
        )

    def encode(self) -> bytes:
        return canonical_bytes(self.to_dict())


def orderer_sig_ok(block: Block, identities: ClusterIdentitySet, channel: str | None = None) -> bool:
    """Signed by an orderer; by the channel's own orderer when ``channel`` is given."""
    sig = block.orderer_sig
    if sig is None:
        return False
    if channel is not None and (channel not in identities.channels or
                                sig.signer != identities.channels[channel].orderer):
        return False
    signer = identities.peers.get(sig.signer)
    if signer is None or signer.role is not Role.ORDERER:
        return False
    return verify(signer.public_handle, block.signing_bytes(), sig)


# -- predicates -------------------------------------------------------------

_CLAUSE = re.compile(r'^\s*([A-Za-z_][\w.\-]*)\s*([=~])\s*(.*?)\s*$')
_RECORD_FIELDS = ("experiment_id", "experiment_name", "template_id")


@dataclass(frozen=True)
class Predicate:
    """Conjunction of ``element=value`` (exact) and ``element~value`` (case-insensitive substring)."""

    clauses: tuple[tuple[str, str, str], ...]

    @classmethod
    def parse(cls, text: str) -> "Predicate":
        if not isinstance(text, str) or not text.strip():
            raise BadPredicate("empty predicate")
        clauses = []
        for part in text.split("&"):
            m = _CLAUSE.match(part)
            if not m:
                raise BadPredicate(f"cannot parse clause {part!r}")
            name, op, value = m.groups()
            if len(value) >= 2 and value[0] == value[-1] == '"':
                value = value[1:-1]
            if not value or (op == "~" and "~" in value) or '"' in value:
                raise BadPredicate(f"bad value in clause {part!r}")
            clauses.append((name, op, value))
        return cls(tuple(clauses))

    def matches(self, record: MetadataRecord) -> bool:
        for name, op, value in self.clauses:
            actual = getattr(record, name) if name in _RECORD_FIELDS else record.elements.get(name)
            if actual is None:
                return False
            if op == "=" and actual != value:
                return False
            if op == "~" and value.lower() not in actual.lower():
                return False
        return True


# -- ledger -----------------------------------------------------------------

@dataclass(frozen=True)
class QueryHit:
    record: MetadataRecord
    mid: str
    tx_id: str


@dataclass(frozen=True)
class ChainCheck:
    ok: bool
    height: int | None = None
    reason: str = ""

    def __bool__(self):
        return self.ok


_FRAME = struct.Struct(">I")


@dataclass
class Ledger:
    channel: str
    identities: ClusterIdentitySet
    path: Path | None = None
    blocks: list[Block] = field(default_factory=list)
    index: dict[str, list[tuple[int, int]]] = field(default_factory=dict)
    _by_mid: dict[str, int] = field(default_factory=dict, repr=False)

    @classmethod
    def open(cls, path: str | Path, channel: str, identities: ClusterIdentitySet,
             reflag: Reflag | None = None) -> "Ledger":
        """Replay a persisted ledger file; raises LedgerError if it does not replay cleanly.

        With ``reflag``, every committed flag must also match the verdict recomputed from the block.
        """
        ledger = cls(channel, identities)
        p = Path(path)
        if p.exists():
            for frame in read_frames(p.read_bytes()):
                block = decode_block(frame)
                if reflag is not None and flags_disagree(block, reflag):
                    raise LedgerError(f"validity flags in block {block.height} disagree with its endorsements")
                ledger.append_block(block)
        ledger.path = p
        return ledger

    @property
    def height(self) -> int:
        return len(self.blocks)

    @property
    def tip(self) -> Block | None:
        return self.blocks[-1] if self.blocks else None

    @property
    def tip_mid(self) -> str:
        return self.blocks[-1].mid if self.blocks else ZERO_HASH

    def check_extends(self, block: Block) -> None:
        if block.prev_mid != self.tip_mid:
            raise ForkError(f"block {block.height} does not extend tip {self.tip_mid[:12]}")
        if block.height != len(self.blocks):
            raise BadHeight(f"expected height {len(self.blocks)}, got {block.height}")

    def append_block(self, block: Block) -> "Ledger":
        self.check_extends(block)
        if not orderer_sig_ok(block, self.identities, self.channel):
            raise BadSignature(f"orderer signature on block {block.height} does not verify")
        if not block.transactions:
            raise LedgerError("block holds no transactions")
        if block.mid != block.compute_mid():
            raise LedgerError("block mid does not match its header")
        if any(tx.validity is Validity.PENDING for tx in block.transactions):
            raise PendingTx(f"block {block.height} still holds PENDING transactions")
        self.blocks.append(block)
        self._by_mid[block.mid] = block.height
        # height 0 carries the channel configuration and is never indexed
        if block.height > 0:
            for pos, tx in enumerate(block.transactions):
                if tx.validity is Validity.VALID:
                    self.index.setdefault(tx.record.experiment_id, []).append((block.height, pos))
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with open(self.path, "ab") as fh:
                fh.write(encode_frame(block.encode()))
        return self

    def get_block(self, mid: str) -> Block:
        try:
            return self.blocks[self._by_mid[mid]]
        except KeyError:
            raise NotFound(f"no block with mid {mid}") from None

    def valid_transactions(self) -> Iterator[tuple[Block, int, LedgerTransaction]]:
        for block in self.blocks[1:]:
            for pos, tx in enumerate(block.transactions):
                if tx.validity is Validity.VALID:
                    yield block, pos, tx

    def transactions_for_experiment(self, experiment_id: str) -> list[tuple[str, LedgerTransaction]]:
        return [(self.blocks[h].mid, self.blocks[h].transactions[p]) for h, p in self.index.get(experiment_id, [])]

    def find_transaction(self, mid: str, tx_id: str) -> LedgerTransaction:
        for tx in self.get_block(mid).transactions:
            if tx.tx_id == tx_id:
                return tx
        raise NotFound(f"transaction {tx_id[:12]} not in block {mid[:12]}")

    def query(self, predicate: str | Predicate, requester: str, channel: str | None = None) -> list[QueryHit]:
        pred = predicate if isinstance(predicate, Predicate) else Predicate.parse(predicate)
        if not self.identities.authorize(requester, Action.READ_METADATA, channel or self.channel):
            return []
        return [QueryHit(tx.record, block.mid, tx.tx_id)
                for block, _, tx in self.valid_transactions() if pred.matches(tx.record)]

    def verify_chain(self) -> ChainCheck:
        return verify_blocks(self.blocks, self.identities, self.channel)

    def file_bytes(self) -> bytes:
        return b"".join(encode_frame(b.encode()) for b in self.blocks)


def append_block(ledger: Ledger, block: Block) -> Ledger:
    return ledger.append_block(block)


def get_block(ledger: Ledger, mid: str) -> Block:
    return ledger.get_block(mid)


def query(ledger: Ledger, predicate: str, requester: str, channel: str | None = None) -> list[QueryHit]:
    return ledger.query(predicate, requester, channel)


def transactions_for_experiment(ledger: Ledger, experiment_id: str) -> list[tuple[str, LedgerTransaction]]:
    return ledger.transactions_for_experiment(experiment_id)


def flags_disagree(block: Block, reflag: Reflag) -> bool:
    # the genesis configuration carries no endorsements, so only later blocks are re-flagged
    return block.height > 0 and any(reflag(tx) is not tx.validity for tx in block.transactions)


def verify_blocks(blocks: list[Block], identities: ClusterIdentitySet, channel: str | None = None,
                  reflag: Reflag | None = None) -> ChainCheck:
    prev = ZERO_HASH
    for i, block in enumerate(blocks):
        if block.height != i:
            return ChainCheck(False, i, "height gap")
        if block.prev_mid != prev:
            return ChainCheck(False, i, "prev_mid link broken")
        if not block.transactions:
            return ChainCheck(False, i, "empty block")
        for tx in block.transactions:
            if tx.tx_id != tx.compute_id():
                return ChainCheck(False, i, f"tx {tx.tx_id[:12]} content does not hash to its id")
            if tx.validity is Validity.PENDING:
                return ChainCheck(False, i, "PENDING transaction in committed block")
        if block.mid != block.compute_mid():
            return ChainCheck(False, i, "mid does not recompute")
        if not orderer_sig_ok(block, identities, channel):
            return ChainCheck(False, i, "orderer signature invalid")
        if reflag is not None and flags_disagree(block, reflag):
            return ChainCheck(False, i, "validity flag disagrees with endorsements")
        prev = block.mid
    return ChainCheck(True, None, "ok")


def verify_chain(ledger: Ledger) -> ChainCheck:
    return ledger.verify_chain()


def encode_frame(payload: bytes) -> bytes:
    return _FRAME.pack(len(payload)) + payload


def read_frames(data: bytes) -> list[bytes]:
    frames, off = [], 0
    while off < len(data):
        if off + _FRAME.size > len(data):
            raise LedgerError("truncated frame header")
        (n,) = _FRAME.unpack_from(data, off)
        off += _FRAME.size
        if off + n > len(data):
            raise LedgerError("truncated frame")
        frames.append(data[off:off + n])
        off += n
    return frames


def decode_block(frame: bytes) -> Block:
    try:
        raw = json.loads(frame.decode("utf-8"))
        block = Block.from_dict(raw)
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError, ValueError, AttributeError) as exc:
        raise LedgerError(f"undecodable block: {exc}") from exc
    if block.encode() != frame:
        raise LedgerError("block bytes are not in canonical form")
    return block


def verify_chain_file(path: str | Path, identities: ClusterIdentitySet, channel: str | None = None,
                      reflag: Reflag | None = None) -> ChainCheck:
    """Check a persisted ledger file without trusting any in-memory state."""
    try:
        blocks = [decode_block(f) for f in read_frames(Path(path).read_bytes())]
    except (OSError, LedgerError) as exc:
        return ChainCheck(False, None, str(exc))
    return verify_blocks(blocks, identities, channel, reflag)
