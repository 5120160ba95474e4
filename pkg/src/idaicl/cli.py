"""Command-line surface for the calibration engine.

Subcommands: ``stats`` (persist demo statistics into a bundle),
``predict`` (closed-form scoring with prior adjustment, JSON lines out),
``oracle`` (closed form vs explicit Monte-Carlo augmentation with
z-gaps), ``simulate`` (synthetic task bundles), ``eval`` (accuracy and
macro-F1 of a prediction file), ``bench`` (closed form vs MC timing).

Exit codes: 0 success, 2 input/usage error, 3 numeric failure.  The env
var IDA_THREADS caps Monte-Carlo worker threads.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
import time
from dataclasses import dataclass

import numpy as np

from .bundle import Bundle, read_bundle, write_bundle
from .core import AugmentConfig, ClassPriors, DemoStats
from .errors import (
    InvalidBundle,
    IoError,
    NumericError,
    ValidationError,
)
from .metrics import EvalReport, evaluate
from .oracle import mc_scores, worker_count
from .scoring import BatchScorer, adjust_with_priors, decide
from .stats import estimate_stats, regularize
from .synthetic import SyntheticSpec, empirical_priors, generate_task


@dataclass(frozen=True)
class RunConfig:
    """Parsed flags shared by the scoring commands."""

    bundle_path: str
    lam: float = 0.5
    tau: float = 1.0
    restrict_candidates: bool = False
    dedup: bool = False
    m_samples: int = 1000
    seed: int = 0
    output_path: str | None = None


def _config_from_args(args) -> RunConfig:
    return RunConfig(
        bundle_path=args.bundle,
        lam=getattr(args, "lam", 0.5),
        tau=getattr(args, "tau", 1.0),
        restrict_candidates=getattr(args, "restrict_candidates", False),
        dedup=getattr(args, "dedup", False),
        m_samples=getattr(args, "m_samples", 1000),
        seed=getattr(args, "seed", 0),
        output_path=getattr(args, "output", None),
    )


def _dedup_rows(features: np.ndarray) -> np.ndarray:
    return np.unique(features, axis=0)


def _bundle_stats(bundle: Bundle, config: RunConfig) -> DemoStats:
    """Stats stored in the bundle, else computed from its demos."""
    if bundle.stats is not None:
        return bundle.stats
    if bundle.n_demos == 0:
        raise ValidationError(
            "bundle has no stats and no demo features to compute stats from"
        )
    feats = bundle.demo_features
    if config.dedup:
        feats = _dedup_rows(feats)
    return estimate_stats(feats)


def _bundle_priors(bundle: Bundle, tau: float) -> ClassPriors | None:
    if tau == 0.0:
        return None
    if bundle.demo_labels is None:
        raise ValidationError(
            "prior adjustment (tau > 0) requires demo labels in the bundle"
        )
    return empirical_priors(bundle.demo_labels, bundle.num_classes)


def _open_output(path: str | None):
    if path is None:
        return sys.stdout, False
    try:
        return open(path, "w", encoding="utf-8"), True
    except OSError as e:
        raise IoError(f"cannot open output file {path}: {e}") from e


def cmd_stats(args) -> int:
    config = _config_from_args(args)
    bundle = read_bundle(config.bundle_path)
    feats = bundle.demo_features
    if config.dedup:
        feats = _dedup_rows(feats)
    stats = estimate_stats(feats, diagonal=args.diagonal)
    eigs = np.linalg.eigvalsh(stats.cov)
    write_bundle(config.bundle_path, dataclasses.replace(bundle, stats=stats))
    print(f"count: {stats.count}")
    print(f"trace: {np.trace(stats.cov):.17g}")
    print(f"min_eigenvalue: {eigs.min():.17g}")
    return 0


def cmd_predict(args) -> int:
    config = _config_from_args(args)
    bundle = read_bundle(config.bundle_path)
    stats = _bundle_stats(bundle, config)
    priors = _bundle_priors(bundle, config.tau)
    aug = AugmentConfig(lam=config.lam, tau=config.tau)
    scorer = BatchScorer(
        bundle.head, stats, aug.lam, restrict_candidates=config.restrict_candidates
    )
    out, close = _open_output(config.output_path)
    try:
        for qi in range(bundle.n_queries):
            scores = scorer.scores(bundle.query_features[qi])
            if priors is not None:
                adjusted = adjust_with_priors(scores, priors, aug.tau)
            else:
                adjusted = scores
            decision = decide(adjusted, adjusted=priors is not None)
            record = {
                "query_id": qi,
                "log_scores": [float(v) for v in scores.log_scores],
                "adjusted_log_scores": [float(v) for v in adjusted.log_scores],
                "decision": decision.candidate_index,
                "saturated": bool(adjusted.saturated),
            }
            out.write(json.dumps(record) + "\n")
    finally:
        if close:
            out.close()
    return 0


def cmd_oracle(args) -> int:
    config = _config_from_args(args)
    bundle = read_bundle(config.bundle_path)
    stats = _bundle_stats(bundle, config)
    if config.lam > 0:
        stats = regularize(stats, 1e-9)
    scorer = BatchScorer(
        bundle.head, stats, config.lam, restrict_candidates=config.restrict_candidates
    )
    n = bundle.n_queries
    if args.limit is not None:
        n = min(n, args.limit)
    queries = []
    max_abs_z = 0.0
    enforced_fail = False
    for qi in range(n):
        h = bundle.query_features[qi]
        report = mc_scores(
            bundle.head,
            h,
            stats,
            config.lam,
            config.m_samples,
            config.seed + qi,
            restrict_candidates=config.restrict_candidates,
        )
        closed = np.exp(scorer.raw_scores(h))
        rows = []
        cols = bundle.head.candidates
        for j in range(len(cols)):
            gap = float(report.estimates[j] - closed[j])
            stderr = float(report.stderrs[j])
            if stderr > 0:
                z = gap / stderr
                max_abs_z = max(max_abs_z, abs(z))
                if abs(z) > 5:
                    enforced_fail = True
            else:
                z = 0.0 if gap == 0.0 else None
            rows.append(
                {
                    "token": int(cols[j]),
                    "estimate": float(report.estimates[j]),
                    "stderr": stderr,
                    "closed_form": float(closed[j]),
                    "z_gap": z,
                }
            )
        queries.append(
            {"query_id": qi, "candidates": rows, "decision": int(report.decision)}
        )
    doc = {
        "lambda": config.lam,
        "m_samples": config.m_samples,
        "seed": config.seed,
        "threads": worker_count(),
        "queries": queries,
        "max_abs_z": max_abs_z,
        "passed": not enforced_fail,
    }
    out, close = _open_output(config.output_path)
    try:
        out.write(json.dumps(doc, indent=2) + "\n")
    finally:
        if close:
            out.close()
    return 3 if enforced_fail else 0


def cmd_simulate(args) -> int:
    if args.spec is not None:
        try:
            with open(args.spec, "r", encoding="utf-8") as f:
                raw = json.load(f)
        except OSError as e:
            raise IoError(f"cannot read spec file {args.spec}: {e}") from e
        except json.JSONDecodeError as e:
            raise ValidationError(f"spec file {args.spec} is not valid JSON: {e}") from e
        if not isinstance(raw, dict):
            raise ValidationError("spec file must hold a JSON object")
    else:
        required = {
            "dim": args.dim,
            "num_classes": args.num_classes,
            "class_means": args.class_means,
            "demo_priors": args.demo_priors,
            "n_demos": args.n_demos,
            "n_queries": args.n_queries,
        }
        missing = [k for k, v in required.items() if v is None]
        if missing:
            raise ValidationError(
                "simulate needs --spec or inline flags; missing: "
                + ", ".join("--" + k.replace("_", "-") for k in missing)
            )
        try:
            class_means = json.loads(args.class_means)
        except json.JSONDecodeError as e:
            raise ValidationError(f"--class-means is not valid JSON: {e}") from e
        raw = {
            "dim": args.dim,
            "num_classes": args.num_classes,
            "class_means": class_means,
            "demo_priors": [float(p) for p in args.demo_priors.split(",")],
            "n_demos": args.n_demos,
            "n_queries": args.n_queries,
            "shared_cov_scale": args.cov_scale,
            "head_noise": args.head_noise,
            "seed": args.seed,
        }
    allowed = {f.name for f in dataclasses.fields(SyntheticSpec)}
    unknown = sorted(set(raw) - allowed)
    if unknown:
        raise ValidationError(f"unknown spec fields: {', '.join(unknown)}")
    spec = SyntheticSpec(**{k: (np.array(v) if k == "class_means" else v) for k, v in raw.items()})
    bundle = generate_task(spec)
    write_bundle(args.out, bundle)
    print(f"wrote bundle to {args.out}")
    print(f"demos: {bundle.n_demos}  queries: {bundle.n_queries}  classes: {bundle.num_classes}")
    return 0


def _report_doc(report: EvalReport) -> dict:
    return {
        "accuracy": report.accuracy,
        "macro_f1": report.macro_f1,
        "precision": [float(v) for v in report.precision],
        "recall": [float(v) for v in report.recall],
        "f1": [float(v) for v in report.f1],
        "confusion": [[int(v) for v in row] for row in report.confusion],
        "n": report.n,
    }


def cmd_eval(args) -> int:
    bundle = read_bundle(args.bundle)
    if bundle.query_labels is None:
        raise ValidationError("bundle has no query labels to evaluate against")
    preds = []
    try:
        with open(args.predictions, "r", encoding="utf-8") as f:
            for ln, line in enumerate(f, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as e:
                    raise ValidationError(
                        f"{args.predictions}:{ln}: not valid JSON: {e}"
                    ) from e
                if not isinstance(record, dict) or "decision" not in record:
                    raise ValidationError(
                        f"{args.predictions}:{ln}: missing 'decision' field"
                    )
                preds.append(int(record["decision"]))
    except OSError as e:
        raise IoError(f"cannot read predictions file {args.predictions}: {e}") from e
    report = evaluate(preds, bundle.query_labels, bundle.num_classes)
    doc = _report_doc(report)
    out, close = _open_output(args.output)
    try:
        out.write(json.dumps(doc, indent=2) + "\n")
    finally:
        if close:
            out.close()
    if args.csv is not None:
        try:
            with open(args.csv, "w", encoding="utf-8") as f:
                names = bundle.label_names
                f.write("truth\\pred," + ",".join(names) + "\n")
                for i, row in enumerate(report.confusion):
                    f.write(names[i] + "," + ",".join(str(int(v)) for v in row) + "\n")
        except OSError as e:
            raise IoError(f"cannot write csv file {args.csv}: {e}") from e
    return 0


def cmd_bench(args) -> int:
    config = _config_from_args(args)
    bundle = read_bundle(config.bundle_path)
    if bundle.n_queries == 0:
        raise ValidationError("bench needs at least one query in the bundle")
    stats = _bundle_stats(bundle, config)
    if config.lam > 0:
        stats = regularize(stats, 1e-9)
    scorer = BatchScorer(
        bundle.head, stats, config.lam, restrict_candidates=config.restrict_candidates
    )
    reps = max(20, args.reps)
    batch = bundle.query_features[: min(8, bundle.n_queries)]
    h0 = bundle.query_features[0]

    closed_times = []
    mc_times = []
    for rep in range(reps):
        t0 = time.perf_counter()
        for h in batch:
            scorer.raw_scores(h)
        t1 = time.perf_counter()
        closed_times.append((t1 - t0) / batch.shape[0])
        t0 = time.perf_counter()
        mc_scores(
            bundle.head,
            h0,
            stats,
            config.lam,
            config.m_samples,
            config.seed + rep,
            restrict_candidates=config.restrict_candidates,
        )
        t1 = time.perf_counter()
        mc_times.append(t1 - t0)
    closed_med = float(np.median(closed_times))
    mc_med = float(np.median(mc_times))
    doc = {
        "dim": bundle.dim,
        "vocab_size": bundle.vocab_size,
        "m_samples": config.m_samples,
        "reps": reps,
        "closed_form_per_query_s": closed_med,
        "mc_per_query_s": mc_med,
        "speedup": mc_med / closed_med if closed_med > 0 else float("inf"),
    }
    out, close = _open_output(config.output_path)
    try:
        out.write(json.dumps(doc, indent=2) + "\n")
    finally:
        if close:
            out.close()
    return 0


def _add_scoring_flags(p: argparse.ArgumentParser, tau: bool = True) -> None:
    p.add_argument("--lambda", dest="lam", type=float, default=0.5,
                   help="augmentation strength (default 0.5)")
    if tau:
        p.add_argument("--tau", type=float, default=1.0,
                       help="prior adjustment strength (default 1.0)")
    p.add_argument("--restrict-candidates", action="store_true",
                   help="normalize over answer tokens only instead of the full vocabulary")
    p.add_argument("--dedup", action="store_true",
                   help="drop duplicate demo feature rows before computing stats")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="idaicl",
        description="Closed-form implicit demonstration augmentation for ICL classification.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="compute demo statistics and store them in the bundle")
    p.add_argument("bundle", help="bundle directory")
    p.add_argument("--diagonal", action="store_true",
                   help="keep only the diagonal of the covariance")
    p.add_argument("--dedup", action="store_true",
                   help="drop duplicate demo feature rows first")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("predict", help="score queries and write JSON-lines predictions")
    p.add_argument("bundle", help="bundle directory")
    _add_scoring_flags(p)
    p.add_argument("--output", "-o", default=None, help="output path (default stdout)")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("oracle", help="compare closed-form scores against explicit MC augmentation")
    p.add_argument("bundle", help="bundle directory")
    _add_scoring_flags(p, tau=False)
    p.add_argument("--m-samples", type=int, default=1000,
                   help="Monte-Carlo samples per query (default 1000)")
    p.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")
    p.add_argument("--limit", type=int, default=None,
                   help="check only the first N queries")
    p.add_argument("--output", "-o", default=None, help="output path (default stdout)")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("simulate", help="generate a synthetic task bundle")
    p.add_argument("out", help="output bundle directory")
    p.add_argument("--spec", default=None, help="JSON file with the task parameters")
    p.add_argument("--dim", type=int, default=None)
    p.add_argument("--num-classes", type=int, default=None)
    p.add_argument("--class-means", default=None,
                   help="JSON matrix of shape num_classes x dim")
    p.add_argument("--demo-priors", default=None,
                   help="comma-separated class proportions for the demos")
    p.add_argument("--n-demos", type=int, default=None)
    p.add_argument("--n-queries", type=int, default=None)
    p.add_argument("--cov-scale", type=float, default=1.0)
    p.add_argument("--head-noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("eval", help="score a predictions file against bundle labels")
    p.add_argument("predictions", help="JSON-lines predictions from `predict`")
    p.add_argument("bundle", help="bundle directory with query labels")
    p.add_argument("--output", "-o", default=None, help="report path (default stdout)")
    p.add_argument("--csv", default=None, help="also dump the confusion matrix as CSV")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="time closed-form scoring against explicit MC")
    p.add_argument("bundle", help="bundle directory")
    _add_scoring_flags(p, tau=False)
    p.add_argument("--m-samples", type=int, default=10000,
                   help="Monte-Carlo samples per query (default 10000)")
    p.add_argument("--reps", type=int, default=20,
                   help="timing repetitions, floored at 20")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", "-o", default=None, help="report path (default stdout)")
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, InvalidBundle, IoError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except NumericError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
