"""Decentralized (meta)data sharing: a Proof-of-Authority metadata ledger, an
erasure-coded object store and experiment version control, driven by a
deterministic cluster simulator."""

from .consensus import Outcome, submit_pipeline
from .identity import load_credentials
from .metadata_schema import MetadataRecord, dublin_core_template, validate_record
from .simnet import Cluster, SimConfig, build_cluster, run_scenario

__all__ = [
    "Cluster",
    "MetadataRecord",
    "Outcome",
    "SimConfig",
    "build_cluster",
    "dublin_core_template",
    "load_credentials",
    "run_scenario",
    "submit_pipeline",
    "validate_record",
]
__version__ = "0.1.0"
