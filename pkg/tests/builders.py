"""Helpers that assemble records, transactions and ledgers directly, bypassing the network."""

from __future__ import annotations

from fairledger.consensus import genesis_block
from fairledger.identity import ClusterIdentitySet, generate_config, parse_config, sign
from fairledger.ledger import Block, Endorsement, Ledger, LedgerTransaction, Validity
from fairledger.metadata_schema import DUBLIN_CORE_ELEMENTS, MetadataRecord

FIBRE_ELEMENTS = {
    "title": "core-shell hydrogel fibres",
    "creator": "Microfluidics Lab",
    "subject": "microfluidics; hydrogel; fibre spinning",
    "description": "inner and outer diameters of the glass capillaries",
    "publisher": "University of Bergen",
    "contributor": "Department of Physics",
    "date": "2021-03-01",
    "type": "Dataset",
    "format": "text/csv",
    "identifier": "exp-fibre-001",
    "source": "bench rig 2",
    "language": "en",
    "relation": "none",
    "coverage": "Bergen",
    "rights": "CC-BY-4.0",
}
assert sorted(FIBRE_ELEMENTS) == sorted(DUBLIN_CORE_ELEMENTS)

FIBRE_CSV = b"inner_um,outer_um\n120.5,310.2\n118.9,305.7\n121.3,312.0\n"


def record(eid: str = "exp-1", name: str = "fibres", **changes) -> MetadataRecord:
    return MetadataRecord(name, eid, {**FIBRE_ELEMENTS, **changes})


def identities(**kwargs) -> ClusterIdentitySet:
    return parse_config(generate_config(**kwargs))


def signed_tx(ids: ClusterIdentitySet, submitter: str, rec: MetadataRecord, validity: Validity,
              channel: str = "gadds", did: str = "") -> LedgerTransaction:
    """A transaction endorsed positively by every EVC peer of the channel."""
    client = ids.peer(submitter)
    bare = LedgerTransaction(submitter, rec, did)
    ends = tuple(Endorsement(p, bare.tx_id, True, sign(ids.peer(p), Endorsement.message(bare.tx_id, True)))
                 for p in ids.evc_peers(channel))
    return LedgerTransaction(submitter, rec, did, sign(client, bare.preimage), ends, validity)


def make_block(ids: ClusterIdentitySet, prev: Block, txs, channel: str = "gadds", timestamp: int | None = None) -> Block:
    orderer = ids.peer(ids.channel(channel).orderer)
    ts = prev.height + 1 if timestamp is None else timestamp
    unsigned = Block(prev.height + 1, prev.mid, ts, tuple(txs))
    return Block(unsigned.height, unsigned.prev_mid, ts, unsigned.transactions, sign(orderer, unsigned.signing_bytes()))


def build_ledger(ids: ClusterIdentitySet, batches, channel: str = "gadds", path=None) -> Ledger:
    """Genesis plus one block per batch of transactions, persisted to ``path`` when given."""
    ledger = Ledger(channel, ids, path)
    if path is not None:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(b"")
    ledger.append_block(genesis_block(channel, ids))
    for txs in batches:
        ledger.append_block(make_block(ids, ledger.tip, txs, channel))
    return ledger
