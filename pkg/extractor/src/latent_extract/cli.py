"""Extraction CLI.

Exit codes: 0 success, 1 usage error, 2 input/output error, 3 model load
failure. Logs to stderr (level via ``LATENT_EXTRACT_LOG``).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from .encoders import BUILTIN_MODELS, ModelLoadError
from .extract import (
    ExtractionError,
    ExtractionJob,
    extract,
    extract_prompt_bank,
    image_inputs,
    text_inputs,
)

logger = logging.getLogger(__name__)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        raise _UsageError(message)


def _cmd_extract(args: argparse.Namespace) -> int:
    if args.modality == "text":
        inputs = text_inputs(args.input)
    else:
        inputs = image_inputs(args.input)
    result = extract(ExtractionJob(
        model=args.model,
        modality=args.modality,
        inputs=inputs,
        output_stem=Path(args.out),
        batch_size=args.batch_size,
        dim=args.dim,
    ))
    print(f"rows      {result.n_rows}")
    print(f"dim       {result.dim}")
    print(f"pooling   {result.pooling}")
    print(f"skipped   {len(result.skipped)}")
    print(f"matrix    {result.matrix_path}")
    print(f"ids       {result.ids_path}")
    print(f"manifest  {result.manifest_path}")
    return 0


def _cmd_bank(args: argparse.Namespace) -> int:
    doc = json.loads(Path(args.prompts).read_text(encoding="utf-8"))
    classes = doc.get("classes")
    if not isinstance(classes, list):
        raise ExtractionError(f"{args.prompts}: expected a 'classes' list")
    base = Path(args.prompts).parent
    for entry in classes:
        if entry.get("prompts"):
            entry["prompts"] = str(base / entry["prompts"])
    bank_path = extract_prompt_bank(
        classes, model=args.model, output_dir=args.out,
        batch_size=args.batch_size, dim=args.dim,
    )
    print(f"bank      {bank_path}")
    return 0


def _cmd_models(_args: argparse.Namespace) -> int:
    for name, modality in sorted(BUILTIN_MODELS.items()):
        print(f"{name}  ({modality}, builtin)")
    print("hf:<model-id>  (text or vision, transformers checkpoint)")
    print("st:<model-id>  (text, sentence-transformers checkpoint)")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(
        prog="latent-extract",
        description="Extract embeddings from frozen encoders into NPY + ids + manifest files.",
    )
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("extract", help="embed a text file or image directory")
    p.add_argument("--model", required=True, help="encoder id (see 'models')")
    p.add_argument("--modality", required=True, choices=("text", "vision"))
    p.add_argument("--input", required=True, help="text file, image dir, or image list file")
    p.add_argument("--out", required=True, help="output stem (writes <stem>.npy etc.)")
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--dim", type=int, help="dimension for builtin hashed encoders")
    p.set_defaults(func=_cmd_extract)

    p = sub.add_parser("bank", help="embed per-class prompt files into a prompt bank")
    p.add_argument("--model", required=True)
    p.add_argument("--prompts", required=True,
                   help="JSON: {classes: [{name, prompts, role?}]}")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--dim", type=int)
    p.set_defaults(func=_cmd_bank)

    p = sub.add_parser("models", help="list available encoder ids")
    p.set_defaults(func=_cmd_models)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        stream=sys.stderr,
        level=getattr(logging, os.environ.get("LATENT_EXTRACT_LOG", "WARNING").upper(),
                      logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
    )
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command is None:
        parser.print_help(sys.stderr)
        return 1
    try:
        return args.func(args)
    except _UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ExtractionError, OSError, json.JSONDecodeError) as exc:
        print(f"extraction error: {exc}", file=sys.stderr)
        return 2
    except ModelLoadError as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
