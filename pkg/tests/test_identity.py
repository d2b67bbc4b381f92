import copy
import json

import pytest

from fairledger.errors import InvalidTopology, MalformedConfig, MissingCredential, UnknownPeer
from fairledger.identity import (
    Action, Role, Signature, authorize, generate_config, load_credentials, parse_config, sign, verify,
    write_config,
)


def test_fig1_topology_counts(ids):
    non_storage = [p for p in ids.peers.values() if p.role is not Role.STORAGE]
    assert len(non_storage) == 9
    assert len(ids.orderers) == 3
    assert len(ids.evc_peers("gadds")) == 6
    assert len(ids.storage_nodes("gadds")) == 6


def test_empty_org_list_rejected():
    with pytest.raises(InvalidTopology):
        parse_config({"organizations": [], "peers": [], "consortiums": [], "channels": []})


def test_two_orderers_in_one_org_rejected(fig1_config):
    raw = copy.deepcopy(fig1_config)
    row = next(p for p in raw["peers"] if p["peer_id"] == "peer1.org1")
    row["role"] = "ORDERER"
    with pytest.raises(InvalidTopology):
        parse_config(raw)


def test_duplicate_domain_rejected(fig1_config):
    raw = copy.deepcopy(fig1_config)
    raw["organizations"][1]["domain"] = raw["organizations"][0]["domain"]
    with pytest.raises(InvalidTopology):
        parse_config(raw)


def test_peer_in_two_orgs_rejected(fig1_config):
    raw = copy.deepcopy(fig1_config)
    raw["organizations"][1]["peer_ids"].append("peer0.org1")
    with pytest.raises(InvalidTopology):
        parse_config(raw)


def test_mismatched_keypair_rejected(fig1_config):
    raw = copy.deepcopy(fig1_config)
    raw["peers"][0]["public_handle"] = raw["peers"][1]["public_handle"]
    with pytest.raises(MalformedConfig):
        parse_config(raw)


def test_load_credentials_roundtrip(tmp_path, fig1_config):
    path = tmp_path / "c.json"
    write_config(fig1_config, path)
    assert load_credentials(path).peers == parse_config(fig1_config).peers
    (tmp_path / "bad.json").write_text("{not json")
    with pytest.raises(MalformedConfig):
        load_credentials(tmp_path / "bad.json")


def test_keygen_is_deterministic_per_seed():
    assert generate_config(seed=3) == generate_config(seed=3)
    assert generate_config(seed=3)["peers"][0]["credential"] != generate_config(seed=4)["peers"][0]["credential"]


def test_sign_verify_roundtrip(ids):
    me = ids.peer("peer0.org1")
    sig = sign(me, b"hello ledger")
    assert verify(me.public_handle, b"hello ledger", sig)


def test_flipped_byte_rejected(ids):
    me = ids.peer("peer0.org1")
    msg = bytearray(b"hello ledger")
    sig = sign(me, bytes(msg))
    msg[3] ^= 0x01
    assert not verify(me.public_handle, bytes(msg), sig)


def test_wrong_signer_rejected(ids):
    sig = sign(ids.peer("peer0.org1"), b"m")
    assert not verify(ids.peer("peer0.org2").public_handle, b"m", sig)
    assert not verify("zz", b"m", sig)
    assert not verify(ids.peer("peer0.org1").public_handle, b"m", Signature("peer0.org1", b"short"))


def test_sign_without_credential(fig1_config):
    raw = copy.deepcopy(fig1_config)
    raw["peers"][0]["credential"] = None
    pid = raw["peers"][0]["peer_id"]
    with pytest.raises(MissingCredential):
        sign(parse_config(raw).peer(pid), b"m")


def test_signature_serialisation(ids):
    sig = sign(ids.peer("peer0.org1"), b"m")
    assert Signature.from_dict(json.loads(json.dumps(sig.to_dict()))) == sig


def test_authorize_consortium_rule(two_channel_ids):
    i = two_channel_ids
    assert authorize(i, "peer0.org2", Action.READ_DATA, "gadds")
    assert not authorize(i, "peer0.outsider", Action.READ_DATA, "gadds")
    assert authorize(i, "peer0.org3", Action.SUBMIT, "gadds")
    assert authorize(i, "peer0.outsider", Action.SUBMIT, "outside")
    with pytest.raises(UnknownPeer):
        authorize(i, "nobody", Action.READ_METADATA, "gadds")
    assert not authorize(i, "peer0.org1", Action.READ_METADATA, "no-such-channel")


def test_unknown_peer(ids):
    with pytest.raises(UnknownPeer):
        ids.peer("ghost")


def test_channels_of(two_channel_ids):
    assert two_channel_ids.channels_of("peer0.org1") == ["gadds"]
    assert two_channel_ids.channels_of("peer0.outsider") == ["outside"]
