"""Command-line entry point: graphattr-export."""

from __future__ import annotations

import argparse
import sys

from .export import DEVIATION_LIMIT, ExportError, export


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="graphattr-export",
        description="Convert a torch GNN checkpoint to canonical model JSON",
    )
    parser.add_argument("--ckpt", required=True, help="torch checkpoint path")
    parser.add_argument("--arch", choices=["gcn", "sage", "gin"],
                        help="architecture hint; needed when the checkpoint does not record it")
    parser.add_argument("--val", required=True,
                        help="validation graphs (dataset or graph JSON)")
    parser.add_argument("--out", required=True, help="output model JSON path")
    parser.add_argument("--manifest", help="manifest path; defaults next to --out")
    parser.add_argument("--limit", type=float, default=DEVIATION_LIMIT,
                        help="max tolerated logit deviation")
    args = parser.parse_args(argv)
    try:
        _, manifest = export(
            args.ckpt,
            arch=args.arch,
            validation_graphs_path=args.val,
            out_path=args.out,
            manifest_path=args.manifest,
            deviation_limit=args.limit,
        )
    except (ExportError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(
        f"exported {manifest.arch} checkpoint to {args.out}; "
        f"max logit deviation {manifest.max_abs_logit_deviation:.3e} over "
        f"{manifest.num_validation_graphs} graphs"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
