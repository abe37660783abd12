"""extractor CLI: run a model over a labeled image folder and write
wire-format files (plus sidecar metadata) for the selection engine."""

from __future__ import annotations

import argparse
import logging
import sys

from .jobs import (
    GRAD_SCALARS,
    ExtractionJob,
    extract_features,
    extract_gradients,
    extract_probs,
    load_folder,
    train_probe,
)
from .models import SUPPORTED, build_adapter

KINDS = ("features", "gradients", "probs", "probe")


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, stream=sys.stderr,
                        format="%(levelname)s %(message)s")
    parser = argparse.ArgumentParser(
        prog="extractor",
        description="Dump per-sample features/gradients/probabilities of a "
                    "vision model over an image folder with class "
                    "subdirectories.")
    parser.add_argument("--model", required=True,
                        help=f"backbone name, one of {SUPPORTED}")
    parser.add_argument("--data", required=True,
                        help="image folder with one subdirectory per class")
    parser.add_argument("--kinds", default="features",
                        help=f"comma list from {KINDS}")
    parser.add_argument("--out-prefix", required=True)
    parser.add_argument("--weights", default=None,
                        help="state-dict checkpoint; random init otherwise")
    parser.add_argument("--source-classes", type=int, default=5,
                        help="classifier head width when no checkpoint sets it")
    parser.add_argument("--batch-size", type=int, default=16)
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--grad-scalar", default="sum_logits",
                        choices=GRAD_SCALARS)
    parser.add_argument("--probe-epochs", type=int, default=2)
    parser.add_argument("--probe-lr", type=float, default=1e-3)
    args = parser.parse_args(argv)

    kinds = [k.strip() for k in args.kinds.split(",") if k.strip()]
    for kind in kinds:
        if kind not in KINDS:
            parser.print_usage(sys.stderr)
            print(f"error: unknown kind '{kind}'", file=sys.stderr)
            return 1

    job = ExtractionJob(
        model_name=args.model, data_dir=args.data, out_prefix=args.out_prefix,
        weights_path=args.weights, source_classes=args.source_classes,
        batch_size=args.batch_size, device=args.device, seed=args.seed,
        grad_scalar=args.grad_scalar, probe_epochs=args.probe_epochs,
        probe_lr=args.probe_lr)

    try:
        folder = load_folder(job.data_dir)
        adapter = None
        if any(k in kinds for k in ("features", "gradients", "probs")):
            adapter = build_adapter(job.model_name, job.source_classes,
                                    job.weights_path, job.seed, job.device)
        for kind in kinds:
            if kind == "features":
                out = extract_features(job, folder, adapter)
            elif kind == "gradients":
                out = extract_gradients(job, folder, adapter)
            elif kind == "probs":
                out = extract_probs(job, folder, adapter)
            else:
                out = train_probe(job, folder)
            print(f"wrote {out}")
    except (FileNotFoundError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
