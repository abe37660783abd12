"""Command-line interface.

One binary, eight subcommands: score, rank, eval, simulate, project,
subsample, synth, inspect. The CLI is a thin shell over the library: every
numeric result it writes is exactly the library's return value, JSON is
emitted with sorted keys so reports diff cleanly, and all randomness comes
from explicit --seed flags. MZSEL_LOG only changes log verbosity, never
outputs.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import dynamics as dyn
from . import evaluation as ev
from . import scores as sc
from .data import (
    METHOD_NAMES,
    load_embeddings,
    load_manifest,
    save_embeddings,
    stratified_subsample,
)
from .errors import MzselError
from .kernels import gram_kernel, load_kernel, random_projection

log = logging.getLogger("mzsel")


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; the contract here is exit 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def _dump_json(doc, out: str | None) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _parse_floats(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip() != ""]


def _parse_ints(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip() != ""]


# --- subcommand implementations -----------------------------------------------------


def _cmd_score(args) -> int:
    params: dict = {"seed": args.seed}
    if args.method == "lfc":
        value = sc.lfc_score(load_embeddings(args.embeddings))
    elif args.method == "lgc":
        value = sc.lgc_score(load_embeddings(args.embeddings),
                             k=args.k, seed=args.seed)
        params["k"] = args.k
    elif args.method == "leep":
        value = sc.leep_score(load_embeddings(args.embeddings))
    elif args.method == "rsa":
        if not args.probe:
            raise _UsageError("--method rsa requires --probe")
        value = sc.rsa_score(load_embeddings(args.embeddings),
                             load_embeddings(args.probe))
    elif args.method == "domsim":
        if not args.source_means:
            raise _UsageError("--method domsim requires --source-means")
        value = sc.domain_similarity_score(
            load_embeddings(args.source_means), load_embeddings(args.embeddings),
            gamma=args.gamma, min_count=args.min_class_count)
        params["gamma"] = args.gamma
    elif args.method == "featmet":
        weights = tuple(_parse_floats(args.weights))
        value = sc.feature_metrics_score(load_embeddings(args.embeddings),
                                         weights=weights)
        params["weights"] = list(weights)
    else:
        raise _UsageError(f"--method {args.method} is not scorable per-model")

    model = args.model_name or Path(args.embeddings).stem
    doc = {"task": args.task, "method": args.method, "model": model,
           "score": value, "params": params}
    _dump_json(doc, args.out)
    print(f"{args.method} score for {model}: {value:.6f}")
    return 0


def _cmd_rank(args) -> int:
    doc = json.loads(Path(args.scores).read_text())
    entries = [ev.ScoreEntry(e["model"], e["method"], e["score"]) for e in doc]
    ranked = ev.rank_models(entries)
    _dump_json({"ranked_models": ranked}, args.out)
    for i, name in enumerate(ranked, start=1):
        print(f"{i:3d}. {name}")
    return 0


def _cmd_eval(args) -> int:
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    for m in methods:
        if m not in METHOD_NAMES:
            raise _UsageError(f"unknown method '{m}' in --methods")
    config = ev.EvalConfig(
        per_class_cap=args.per_class_cap,
        seed=args.seed,
        projection_dim=args.k,
        gamma=args.gamma,
        fm_weights=tuple(_parse_floats(args.weights)),
        min_class_count=args.min_class_count,
        topk=tuple(_parse_ints(args.topk)),
        jobs=args.jobs,
    )
    tasks = []
    any_skipped = False
    for manifest_path in args.manifest:
        manifest = load_manifest(manifest_path)
        reports, skipped = ev.run_benchmark(manifest, methods, config)
        any_skipped = any_skipped or bool(skipped)
        tasks.append({
            "task": manifest.task_name,
            "manifest": str(manifest_path),
            "reports": [r.to_dict() for r in reports],
            "skipped_methods": skipped,
        })
        for entry in skipped:
            log.warning("task %s: method %s skipped: %s",
                        manifest.task_name, entry["method"], entry["reason"])

    doc: dict = {"tasks": tasks}
    if len(tasks) > 1:
        doc["macro_average"] = _macro_average(tasks)
    _dump_json(doc, args.out)

    for task in tasks:
        for report in task["reports"]:
            rho = report["spearman_to_accuracy"]
            trials = report["trials_to_best"]
            print(f"[{task['task']}] {report['method']:8s} "
                  f"spearman={'n/a' if rho is None else f'{rho:+.3f}'} "
                  f"trials={'n/a' if trials is None else trials}")
        for entry in task["skipped_methods"]:
            print(f"[{task['task']}] {entry['method']:8s} SKIPPED: {entry['reason']}")
    return 2 if any_skipped else 0


def _macro_average(tasks: list[dict]) -> dict:
    """Unweighted per-method mean of ranking metrics across tasks (macro)."""
    acc: dict[str, dict[str, list[float]]] = {}
    for task in tasks:
        for report in task["reports"]:
            slot = acc.setdefault(report["method"],
                                  {"spearman_to_accuracy": [], "trials_to_best": []})
            for key in ("spearman_to_accuracy", "trials_to_best"):
                if report[key] is not None:
                    slot[key].append(report[key])
    return {
        method: {key: (sum(vals) / len(vals) if vals else None)
                 for key, vals in slots.items()}
        for method, slots in acc.items()
    }


def _cmd_simulate(args) -> int:
    if bool(args.embeddings) == bool(args.kernel):
        raise _UsageError("simulate needs exactly one of --embeddings / --kernel")
    if args.embeddings:
        eset = load_embeddings(args.embeddings)
        kernel = gram_kernel(eset)
        y = dyn.signed_labels(eset.labels, eset.num_classes)
    else:
        kernel = load_kernel(args.kernel)
        if not args.labels:
            raise _UsageError("--kernel requires --labels (file with +/-1 targets, d=1)")
        label_set = load_embeddings(args.labels)
        y = label_set.vectors[:, 0].astype(np.float64)

    if args.residual:
        f0 = load_embeddings(args.residual).vectors[:, 0].astype(np.float64)
        if f0.shape[0] != y.shape[0]:
            raise _UsageError("--residual outputs do not match the sample count")
        residual = y - f0
    else:
        residual = y

    times = np.asarray(_parse_floats(args.times))
    trace = dyn.loss_trajectory(kernel, residual, args.eta, times)
    speed = dyn.training_speed(kernel, residual)
    gen = dyn.generalization_score(kernel, y, args.eig_floor)
    lhs, rhs = dyn.jensen_gap(kernel, residual, args.eig_floor)

    lines = ["t,loss,first_order_estimate"]
    for t, loss in zip(trace.times, trace.losses):
        first_order = trace.residual_norm - 2.0 * args.eta * t * speed
        lines.append(f"{t},{loss},{first_order}")
    csv_text = "\n".join(lines) + "\n"
    if args.out_csv:
        Path(args.out_csv).write_text(csv_text)
    else:
        sys.stdout.write(csv_text)

    summary = {"training_speed": speed, "generalization_score": gen,
               "jensen_lhs": lhs, "jensen_rhs": rhs,
               "eta": args.eta, "initial_loss": trace.residual_norm}
    _dump_json(summary, args.out)
    print(f"training_speed={speed:.6g} generalization={gen:.6g} "
          f"jensen: {lhs:.6g} <= {rhs:.6g}")
    return 0


def _cmd_project(args) -> int:
    eset = load_embeddings(args.embeddings)
    projected = random_projection(eset, args.k, args.seed)
    save_embeddings(projected, args.out_file)
    print(f"projected {eset.d} -> {projected.d} dims "
          f"({'pass-through' if projected.d == eset.d else 'gaussian'})")
    return 0


def _cmd_subsample(args) -> int:
    eset = load_embeddings(args.embeddings)
    capped = stratified_subsample(eset, args.per_class_cap, args.seed)
    save_embeddings(capped, args.out_file)
    print(f"kept {capped.n} of {eset.n} samples (cap {args.per_class_cap})")
    return 0


def _cmd_synth(args) -> int:
    if args.alignment:
        spectrum = _parse_floats(args.alignment)
        if len(spectrum) != args.n_models:
            raise _UsageError("--alignment length must equal --n-models")
    else:
        spectrum = list(np.linspace(0.1, 0.95, args.n_models))
    manifest_path = ev.gen_synthetic_zoo(
        args.out_dir, args.n_models, args.n_classes, args.per_class, args.d,
        spectrum, args.seed, per_class_cap=args.per_class_cap)
    print(f"wrote synthetic zoo manifest: {manifest_path}")
    return 0


def _cmd_inspect(args) -> int:
    eset = load_embeddings(args.path)
    norms = np.linalg.norm(eset.vectors.astype(np.float64), axis=1)
    counts = eset.class_counts()
    print(f"kind:        {eset.kind.name.lower()}")
    print(f"samples:     {eset.n}")
    print(f"dimension:   {eset.d}")
    print(f"num_classes: {eset.num_classes}")
    print(f"class counts: {' '.join(str(int(c)) for c in counts)}")
    print(f"vector norms: min={norms.min():.6g} max={norms.max():.6g} "
          f"mean={norms.mean():.6g}")
    if eset.kind.name == "PROBABILITIES":
        dev = np.abs(eset.vectors.astype(np.float64).sum(axis=1) - 1.0)
        print(f"row-sum deviation: max={dev.max():.3g} mean={dev.mean():.3g}")
    return 0


# --- argument wiring -----------------------------------------------------------------


def _build_parser() -> _Parser:
    parser = _Parser(prog="mzsel",
                     description="Model-zoo selection scores, linearized "
                                 "fine-tuning dynamics, and ranking benchmarks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("score", help="compute one selection score for one model")
    p.add_argument("--method", required=True, choices=[m for m in METHOD_NAMES
                                                       if m != "random"])
    p.add_argument("--embeddings", required=True,
                   help="features/gradients/probabilities file, per method")
    p.add_argument("--probe", help="probe features file (rsa)")
    p.add_argument("--source-means", help="source class-means file (domsim)")
    p.add_argument("--model-name", default=None)
    p.add_argument("--task", default="adhoc")
    p.add_argument("--k", type=int, default=sc.DEFAULT_PROJECTION_DIM)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--gamma", type=float, default=sc.DEFAULT_EMD_GAMMA)
    p.add_argument("--min-class-count", type=int, default=sc.DEFAULT_MIN_CLASS_COUNT)
    p.add_argument("--weights", default="0.5,0.5")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("rank", help="rank models from a scores JSON list")
    p.add_argument("--scores", required=True)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_rank)

    p = sub.add_parser("eval", help="run the benchmark over zoo manifests")
    p.add_argument("--manifest", required=True, action="append",
                   help="manifest JSON; repeat for multiple tasks")
    p.add_argument("--methods", default="lfc,lgc,leep,rsa,domsim,featmet,random")
    p.add_argument("--per-class-cap", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--topk", default="1,3")
    p.add_argument("--k", type=int, default=sc.DEFAULT_PROJECTION_DIM)
    p.add_argument("--gamma", type=float, default=sc.DEFAULT_EMD_GAMMA)
    p.add_argument("--min-class-count", type=int, default=sc.DEFAULT_MIN_CLASS_COUNT)
    p.add_argument("--weights", default="0.5,0.5")
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    p.add_argument("--out")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("simulate", help="closed-form linearized loss trajectory")
    p.add_argument("--embeddings", help="features or gradients file (binary task)")
    p.add_argument("--kernel", help="kernel file (wire kind 3)")
    p.add_argument("--labels", help="targets file (d=1 vectors of +/-1), "
                                    "required with --kernel")
    p.add_argument("--residual", help="initial model outputs file (d=1); "
                                      "residual defaults to the labels")
    p.add_argument("--eta", type=float, default=1.0)
    p.add_argument("--times", default="0,0.1,0.5,1,2")
    p.add_argument("--eig-floor", type=float, default=None)
    p.add_argument("--out-csv")
    p.add_argument("--out")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("project", help="seeded gaussian random projection")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--k", type=int, default=sc.DEFAULT_PROJECTION_DIM)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-file", required=True)
    p.set_defaults(func=_cmd_project)

    p = sub.add_parser("subsample", help="stratified per-class cap")
    p.add_argument("--embeddings", required=True)
    p.add_argument("--per-class-cap", type=int, default=25)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-file", required=True)
    p.set_defaults(func=_cmd_subsample)

    p = sub.add_parser("synth", help="generate a synthetic planted-ranking zoo")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--n-models", type=int, default=8)
    p.add_argument("--n-classes", type=int, default=4)
    p.add_argument("--per-class", type=int, default=25)
    p.add_argument("--d", type=int, default=32)
    p.add_argument("--alignment", default=None,
                   help="comma list in [0,1], one per model; default linspace")
    p.add_argument("--per-class-cap", type=int, default=25)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("inspect", help="summarize a wire-format file")
    p.add_argument("path")
    p.set_defaults(func=_cmd_inspect)

    return parser


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("MZSEL_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        stream=sys.stderr)
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except MzselError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
