"""Command-line interface for the embedding exporter."""
from __future__ import annotations

import argparse
import sys
from typing import Optional

from .encoders import EncoderError, load_encoder
from .export import MODES, ExportError, export_embeddings
from .traces import TraceError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ioembed-export",
        description="Encode trace texts with a frozen sentence encoder and write IOEM files.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("export", help="run the exporter")
    p.add_argument("--traces", required=True, help="trace JSONL file")
    p.add_argument("--model", required=True, help="encoder name, or debug-hash:<dim> for offline use")
    p.add_argument("--mode", choices=MODES, default="per_user_all")
    p.add_argument("--out", required=True, help="output interchange file")
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--device", default="cpu", help="cpu, cuda, or auto")
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        encoder = load_encoder(args.model, device=args.device)
    except EncoderError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        manifest = export_embeddings(
            args.traces, encoder, args.mode, args.out, batch_size=args.batch_size
        )
    except (ExportError, TraceError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"{args.out}: {manifest['records']} records, d_c={manifest['d_c']}, "
          f"{manifest['empty_content_warnings']} warnings")
    return 0


if __name__ == "__main__":
    sys.exit(main())
