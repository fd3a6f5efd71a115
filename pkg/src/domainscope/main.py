import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .config import apply_overrides, config_hash, default_config_path, load_config, workspace_config
from .errors import DomainscopeError, UsageError
from .hosts import SUFFIX_LIST_VERSION
from .pipeline import Workspace
from .throttle import utc_now

SUBCOMMANDS = ("discover", "measure", "mentions", "graph", "stats", "report", "pipeline")
MANIFEST_NAME = "manifest.json"


class _ArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def parse_args(argv=None):
    parser = _ArgumentParser(prog="domainscope", description="Webometric analysis of organization web domains")
    parser.add_argument("command", choices=SUBCOMMANDS, help="Pipeline stage to run")
    parser.add_argument("--config", default=default_config_path(), help="Path to config JSON")
    parser.add_argument("--registry", help="Registry file or directory")
    parser.add_argument("--cache", help="Result cache path (overrides DOMAINSCOPE_CACHE)")
    parser.add_argument("--backend", help="fixture or live:<name>")
    parser.add_argument("--min-domains", type=int, help="Minimum domains for network analysis")
    parser.add_argument("--jobs", type=int, help="Worker threads")
    parser.add_argument("--out", help="Output directory")
    parser.add_argument("--log-level", help="Logging level, e.g. DEBUG")
    return parser.parse_args(argv)


def _run(workspace, command):
    if command == "discover":
        entries = workspace.discover()
        print(f"{len(entries)} candidate domains queued for review")
    elif command == "measure":
        snapshots = workspace.measure()
        missing = sum(1 for s in snapshots.values() if s.missing)
        print(f"{len(snapshots)} domains measured, {missing} without data")
    elif command == "mentions":
        measured, skipped = workspace.mentions()
        for org, plan, edges in measured:
            unreliable = sum(1 for e in edges if not e.reliable)
            print(f"{org.id}: {plan.total_queries} pairs, {unreliable} unreliable")
        for item in skipped:
            print(f"Skipped {item.org_id}: {item.reason}")
    elif command == "graph":
        networks, skipped = workspace.write_graphs()
        for item in networks:
            print(f"{item.org.id}: n={item.network.n} m={item.network.m} density={item.network.density:.3f}")
        for item in skipped:
            print(f"Skipped {item.org_id}: {item.reason}")
    elif command == "stats":
        matrix, correlation, pca = workspace.stats()
        print(f"{len(matrix.rows)} nodes, {matrix.complete_rows()} complete rows")
        if correlation is None or pca is None:
            for note in workspace.notes:
                print(note)
    elif command == "report":
        workspace.report()
    elif command == "pipeline":
        workspace.discover()
        workspace.report()


def _write_manifest(out_dir, manifest):
    path = Path(out_dir) / MANIFEST_NAME
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as handle:
        json.dump(manifest, handle, indent=2, sort_keys=True)
        handle.write("\n")


def run_subcommand(argv):
    started = utc_now()
    config = None
    workspace = None
    manifest = {}
    status = 0
    try:
        args = parse_args(argv)
        config = load_config(args.config)
        apply_overrides(config, args, os.environ)
        level = getattr(logging, config["runtime"]["log_level"], logging.INFO)
        logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(message)s")
        settings = workspace_config(config)
        manifest = {
            "command": args.command,
            "config_hash": config_hash(config),
            "suffix_list": SUFFIX_LIST_VERSION,
            "registry": str(settings.registry),
            "backend_ids": [settings.backend],
        }
        workspace = Workspace(config)
        _run(workspace, args.command)
    except DomainscopeError as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        status = exc.exit_status
    except (OSError, ValueError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        status = 1
    finally:
        if workspace is not None:
            manifest["backend_calls"] = workspace.backend_calls
            workspace.close()
        if config is not None and manifest:
            manifest.update({"started_at": started, "finished_at": utc_now(), "exit_status": status})
            _write_manifest(config["paths"]["out"], manifest)
    return status


def main(argv=None):
    return run_subcommand(sys.argv[1:] if argv is None else argv)


if __name__ == "__main__":
    sys.exit(main())
