import json
import sys

import pytest

from fairledger.identity import generate_config, parse_config, write_config
from fairledger.simnet import Cluster

import builders


@pytest.fixture
def fig1_config():
    """Three organizations, two EVC peers, one orderer and two storage nodes each."""
    return generate_config(orgs=3, evc_per_org=2, storage_per_org=2)


@pytest.fixture
def ids(fig1_config):
    return parse_config(fig1_config)


@pytest.fixture
def two_channel_ids():
    return parse_config(generate_config(outsider=True))


@pytest.fixture
def cluster(tmp_path, two_channel_ids):
    return Cluster(two_channel_ids, tmp_path / "state", seed=7)


@pytest.fixture
def fibre():
    return builders.record()


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "cluster.json"
    write_config(generate_config(outsider=True, clients_per_org=1), path)
    return path


@pytest.fixture
def record_file(tmp_path):
    def make(name="meta.json", **changes):
        path = tmp_path / name
        path.write_text(json.dumps(builders.record(**changes).to_dict()), encoding="utf-8")
        return path
    return make


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    if module is None or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in module.summary_lines():
        terminalreporter.write_line(line)
