import argparse
import logging
import sys

from domainscope.config import default_config_path, load_config
from domainscope.errors import DomainscopeError
from domainscope.registry import load_registry, save_registry, summarize_registry


def parse_args(argv=None):
    parser = argparse.ArgumentParser(description="Write the canonical JSON mirror of a registry")
    parser.add_argument("--config", default=default_config_path(), help="Path to config JSON")
    parser.add_argument("--registry", help="Registry file or directory (defaults to paths.registry)")
    parser.add_argument("--out", required=True, help="Destination JSON file")
    return parser.parse_args(argv)


def main(argv=None):
    args = parse_args(argv)
    config = load_config(args.config)
    logging.basicConfig(
        level=getattr(logging, config["runtime"]["log_level"], logging.INFO),
        format="%(asctime)s %(levelname)s %(message)s",
    )
    try:
        orgs = load_registry(args.registry or config["paths"]["registry"])
        save_registry(args.out, orgs)
    except DomainscopeError as exc:
        print(f"Registry mirror failed: {exc}", file=sys.stderr)
        return exc.exit_status
    summary = summarize_registry(orgs)
    print(f"Wrote {args.out}: {len(orgs)} organizations, {summary.grand_total} domains")
    return 0


if __name__ == "__main__":
    sys.exit(main())
