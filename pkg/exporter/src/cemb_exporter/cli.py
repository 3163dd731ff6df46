"""CLI for the embedding exporter.

Exit codes: 0 success, 1 usage error, 2 data/model error.
"""

from __future__ import annotations

import argparse
import json
import sys

from .cemb import FormatError
from .export import ExportConfig, export_speech_frames, export_text_embeddings, verify_roundtrip


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:
        raise _UsageError(f"{self.prog}: {message}\n{self.format_usage()}")


def build_parser() -> _Parser:
    parser = _Parser(prog="cemb-export", description=__doc__)
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("speech", help="frame-level speech features -> CEMB kind 1")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--model", required=True, help="pretrained speech model id or path")
    p.add_argument("--audio-root")
    p.add_argument("--device", default="cpu")
    p.add_argument("--batch-size", type=int, default=8)
    p.set_defaults(which="speech")

    p = sub.add_parser("text", help="sentence-level text embeddings -> CEMB kind 0")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--model", required=True, help="pretrained text model id or path")
    p.add_argument("--pooling", choices=["model-native-sentence", "mean-of-tokens"],
                   default="model-native-sentence")
    p.add_argument("--device", default="cpu")
    p.add_argument("--batch-size", type=int, default=8)
    p.set_defaults(which="text")

    p = sub.add_parser("verify", help="structural + finiteness check of a CEMB file")
    p.add_argument("--path", required=True)
    p.set_defaults(which="verify")
    return parser


def dispatch(argv: list[str]) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    if not getattr(args, "which", None):
        print(parser.format_usage(), file=sys.stderr)
        return 1
    try:
        if args.which == "speech":
            cfg = ExportConfig(speech_model_id=args.model, device=args.device,
                               batch_size=args.batch_size)
            info = export_speech_frames(args.manifest, args.out, cfg,
                                        audio_root=args.audio_root)
        elif args.which == "text":
            cfg = ExportConfig(text_model_id=args.model, device=args.device,
                               batch_size=args.batch_size, text_pooling=args.pooling)
            info = export_text_embeddings(args.manifest, args.out, cfg)
        else:
            info = verify_roundtrip(args.path)
        print(json.dumps(info, sort_keys=True))
        return 0
    except (FormatError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
