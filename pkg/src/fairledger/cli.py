"""Command-line client driving the (meta)data lifecycle on a simulated cluster.

Exit codes: 0 success, 1 I/O / config / lookup errors (also a failed
verify-chain), 2 metadata rejected by quality control, 3 no endorsement
quorum, 4 unauthorized, 5 not enough storage shards to rebuild the data.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .consensus import Outcome
from .errors import (FairLedgerError, InsufficientShards, NoQuorum, Unauthorized,
                     ValidationRejected)
from .identity import generate_config, load_credentials, write_config
from .metadata_schema import load_record
from .report import plot_storage_report, plot_trace
from .simnet import Cluster, SimConfig, run_scenario
from .version_control import checkout, history

EXIT_OK, EXIT_ERROR, EXIT_INVALID, EXIT_NO_QUORUM, EXIT_UNAUTHORIZED, EXIT_SHARDS = range(6)

_EXIT_FOR = [
    (ValidationRejected, EXIT_INVALID),
    (NoQuorum, EXIT_NO_QUORUM),
    (Unauthorized, EXIT_UNAUTHORIZED),
    (InsufficientShards, EXIT_SHARDS),
]


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_ERROR):
        super().__init__(message)
        self.exit_code = code


def _emit(args, payload, lines: list[str]):
    if args.json:
        print(json.dumps(payload, sort_keys=True, indent=1))
    else:
        for line in lines:
            print(line)


def _table(headers: list[str], rows: list[list]) -> list[str]:
    cells = [headers] + [[str(c) for c in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(headers))]
    return ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in cells]


def _open(args) -> Cluster:
    if not args.config:
        raise CliError("--config is required")
    return Cluster.open(args.config, args.state)


def _channel(args, cluster: Cluster) -> str:
    return args.channel or cluster.default_channel


def _actor(args, cluster: Cluster) -> str:
    if args.as_:
        cluster.identities.peer(args.as_)
        return args.as_
    return cluster.identities.evc_peers(_channel(args, cluster))[0]


def _write_pair(out_dir: str, record, data: bytes) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "metadata.json").write_text(json.dumps(record.to_dict(), sort_keys=True, indent=2) + "\n",
                                       encoding="utf-8")
    (out / "data.bin").write_bytes(data)
    return out


# -- subcommands ------------------------------------------------------------

def cmd_keygen(args) -> int:
    config = generate_config(orgs=args.orgs, evc_per_org=args.evc_per_org, storage_per_org=args.storage_per_org,
                             clients_per_org=args.clients_per_org, outsider=args.outsider, seed=args.seed)
    write_config(config, args.config)
    ids = load_credentials(args.config)
    _emit(args, {"config": args.config, "peers": len(ids.peers)},
          [f"wrote {args.config}: {len(ids.organizations)} organizations, {len(ids.peers)} identities"])
    return EXIT_OK


def cmd_sim(args) -> int:
    if not args.config:
        raise CliError("--config is required")
    # a scenario starts from a fresh cluster unless --state names one to continue
    cluster = Cluster(load_credentials(args.config), args.state, seed=args.seed)
    trace = run_scenario(SimConfig(args.config, seed=args.seed, script=args.script, max_ticks=args.max_ticks),
                         cluster)
    if args.trace_out:
        trace.write(args.trace_out)
    if args.plot:
        plot_trace(trace.entries, args.plot)
    resolved = [s.summary() for s in cluster.submissions]
    _emit(args, {"ticks": cluster.now, "trace_digest": trace.digest(), "submissions": resolved},
          [f"ran to tick {cluster.now}; {len(trace.entries)} trace entries; digest {trace.digest()}"]
          + [f"  #{s['sid']} {s['kind']} {s['experiment_id']}: {s['outcome']}" for s in resolved])
    return EXIT_OK


def cmd_submit(args) -> int:
    cluster = _open(args)
    try:
        record = load_record(args.metadata)
        data = Path(args.data).read_bytes()
    except (OSError, ValueError, KeyError) as exc:
        raise CliError(f"cannot read input: {exc}") from exc
    sub = cluster.submit(_actor(args, cluster), record, data, args.bucket, _channel(args, cluster))
    cluster.save()
    summary = sub.summary()
    summary["failures"] = sub.failures
    if sub.outcome is Outcome.COMMITTED_VALID and not sub.error:
        _emit(args, summary, [f"experiment_id {sub.experiment_id}", f"mid {sub.mid}", f"did {sub.snapshot.did}"])
        return EXIT_OK
    if sub.outcome is Outcome.COMMITTED_VALID:
        _emit(args, summary, [f"metadata committed ({sub.mid}) but data upload failed: {sub.error}"])
        return EXIT_ERROR
    if sub.outcome is Outcome.COMMITTED_INVALID:
        lines = [f"rejected by quality control (mid {sub.mid})"]
        lines += [f"  {name}: {kind}" for name, kind in sub.failures] or ["  credential or permission check failed"]
        _emit(args, summary, lines)
        return EXIT_INVALID
    _emit(args, summary, ["no endorsement quorum before timeout"])
    return EXIT_NO_QUORUM


def cmd_search(args) -> int:
    cluster = _open(args)
    channel = _channel(args, cluster)
    hits = cluster.search(args.predicate, _actor(args, cluster), channel)
    hist = cluster.histories[channel]
    rows = []
    for h in hits:
        seqs = len(hist.experiments[h.record.experiment_id].snapshots) if h.record.experiment_id in hist else 0
        rows.append([h.record.experiment_id, h.record.experiment_name, h.record.elements.get("title", ""),
                     h.mid[:12], seqs])
    payload = [dict(zip(["experiment_id", "name", "title", "mid", "versions"], r)) for r in rows]
    _emit(args, payload, _table(["EXPERIMENT", "NAME", "TITLE", "MID", "VERSIONS"], rows))
    return EXIT_OK


def cmd_fetch(args) -> int:
    cluster = _open(args)
    record, data = cluster.fetch(args.experiment_id, _actor(args, cluster), _channel(args, cluster))
    out = _write_pair(args.out, record, data)
    _emit(args, {"out": str(out), "bytes": len(data)}, [f"wrote {out}/metadata.json and {out}/data.bin"])
    return EXIT_OK


def cmd_modify(args) -> int:
    cluster = _open(args)
    try:
        record = load_record(args.metadata) if args.metadata else None
        data = Path(args.data).read_bytes() if args.data else None
    except (OSError, ValueError, KeyError) as exc:
        raise CliError(f"cannot read input: {exc}") from exc
    try:
        sub = cluster.modify(_actor(args, cluster), args.experiment_id, record, data, _channel(args, cluster))
    finally:
        cluster.save()
    _emit(args, sub.summary(), [f"version {sub.snapshot.seq} of {sub.experiment_id}", f"mid {sub.mid}"])
    return EXIT_OK


def cmd_history(args) -> int:
    cluster = _open(args)
    snaps = history(cluster, args.experiment_id, _actor(args, cluster), _channel(args, cluster))
    rows = [[s.seq, s.mid[:12], s.revision[:12], s.timestamp, s.author] for s in snaps]
    payload = [{"seq": s.seq, "mid": s.mid, "revision": s.revision, "timestamp": s.timestamp, "author": s.author}
               for s in snaps]
    _emit(args, payload, _table(["SEQ", "MID", "REVISION", "TIMESTAMP", "AUTHOR"], rows))
    return EXIT_OK


def cmd_checkout(args) -> int:
    cluster = _open(args)
    record, data = checkout(cluster, args.experiment_id, args.version, _actor(args, cluster), _channel(args, cluster))
    out = _write_pair(args.out, record, data)
    _emit(args, {"out": str(out), "version": args.version}, [f"version {args.version} written to {out}"])
    return EXIT_OK


def cmd_verify_chain(args) -> int:
    cluster = _open(args)
    check = cluster.verify_peer(args.peer, _channel(args, cluster))
    _emit(args, {"ok": check.ok, "height": check.height, "reason": check.reason},
          ["chain ok" if check.ok else f"chain BROKEN at block {check.height}: {check.reason}"])
    return EXIT_OK if check.ok else EXIT_ERROR


def cmd_storage_report(args) -> int:
    cluster = _open(args)
    channel = _channel(args, cluster)
    rows = cluster.store.storage_report(channel)
    k, m = cluster.store.params(channel)
    table = [[r.node, "up" if r.reachable else "DOWN", r.stored, r.corrupt, r.missing] for r in rows]
    lines = [f"channel {channel}: k={k} data + m={m} parity shards"]
    lines += _table(["NODE", "STATUS", "STORED", "CORRUPT", "MISSING"], table)
    if args.plot:
        plot_storage_report(rows, args.plot, f"{channel}: shard health")
        lines.append(f"figure written to {args.plot}")
    _emit(args, {"channel": channel, "k": k, "m": m, "nodes": [r.__dict__ for r in rows]}, lines)
    return EXIT_OK


# -- parser -----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="cluster config JSON")
    common.add_argument("--state", help="state directory (default: <config>.state next to the config)")
    common.add_argument("--as", dest="as_", metavar="PEER_ID", help="acting identity")
    common.add_argument("--channel", help="channel (default: first configured)")
    common.add_argument("--json", action="store_true", help="machine-readable output")

    parser = argparse.ArgumentParser(prog="fairledger", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("keygen", parents=[common], help="generate a cluster config with credentials")
    p.add_argument("--orgs", type=int, default=3)
    p.add_argument("--evc-per-org", type=int, default=2)
    p.add_argument("--storage-per-org", type=int, default=2)
    p.add_argument("--clients-per-org", type=int, default=0)
    p.add_argument("--outsider", action="store_true", help="add an organization on a separate channel")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_keygen)

    p = sub.add_parser("sim", parents=[common], help="run a scenario script")
    p.add_argument("--script", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trace-out")
    p.add_argument("--plot", help="write a ledger-height timeline figure")
    p.add_argument("--max-ticks", type=int, default=10_000)
    p.set_defaults(func=cmd_sim)

    p = sub.add_parser("submit", parents=[common], help="submit a new experiment")
    p.add_argument("--metadata", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--bucket", default="experiments")
    p.set_defaults(func=cmd_submit)

    p = sub.add_parser("search", parents=[common], help="query the ledger")
    p.add_argument("predicate")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("fetch", parents=[common], help="download the latest version")
    p.add_argument("experiment_id")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fetch)

    p = sub.add_parser("modify", parents=[common], help="submit new metadata and/or data for an experiment")
    p.add_argument("experiment_id")
    p.add_argument("--metadata")
    p.add_argument("--data")
    p.set_defaults(func=cmd_modify)

    p = sub.add_parser("history", parents=[common], help="list versions of an experiment")
    p.add_argument("experiment_id")
    p.set_defaults(func=cmd_history)

    p = sub.add_parser("checkout", parents=[common], help="write a historical version")
    p.add_argument("experiment_id")
    p.add_argument("--version", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_checkout)

    p = sub.add_parser("verify-chain", parents=[common], help="check a peer's persisted ledger")
    p.add_argument("--peer", required=True)
    p.set_defaults(func=cmd_verify_chain)

    p = sub.add_parser("storage-report", parents=[common], help="per-node shard health")
    p.add_argument("--plot", help="write a bar chart of shard health")
    p.set_defaults(func=cmd_storage_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FairLedgerError as exc:
        print(f"error [{exc.code}]: {exc}", file=sys.stderr)
        for cls, code in _EXIT_FOR:
            if isinstance(exc, cls):
                return code
        return EXIT_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
