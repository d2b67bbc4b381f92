from fairledger.object_store import NodeHealth
from fairledger.report import commit_series, plot_storage_report, plot_trace
from fairledger.simnet import Cluster

from builders import record

PNG = b"\x89PNG\r\n\x1a\n"


def test_storage_figure(tmp_path):
    rows = [NodeHealth("a", True, 3, 0, 0), NodeHealth("b", True, 2, 1, 0), NodeHealth("c", False, 0, 0, 3)]
    path = plot_storage_report(rows, tmp_path / "s.png")
    assert path.read_bytes()[:8] == PNG


def test_trace_figure(tmp_path, ids):
    c = Cluster(ids, tmp_path / "state")
    c.submit("peer0.org1", record("a"), b"1")
    c.submit("peer0.org1", record("b"), b"2")
    series = commit_series(c.trace.entries)
    assert sorted(series) == sorted(ids.evc_peers("gadds"))
    assert all([h for _, h in pts] == [2, 3] for pts in series.values())
    assert plot_trace(c.trace.entries, tmp_path / "t.svg").read_text().lstrip().startswith("<?xml")


def test_faulty_ledger_takes_peer_down(tmp_path, ids):
    c = Cluster(ids, tmp_path / "state")
    c.submit("peer0.org1", record("a"), b"1")
    path = c.ledger_file("peer0.org2")
    path.write_bytes(path.read_bytes()[:-3])
    again = Cluster(ids, tmp_path / "state")
    assert not again.peers["peer0.org2"].alive and again.peers["peer0.org2"].faults
    assert not again.verify_peer("peer0.org2")
    assert again.submit("peer0.org1", record("b"), b"2").outcome.value == "COMMITTED_VALID"
