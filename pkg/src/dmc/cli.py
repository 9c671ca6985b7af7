"""Command-line interface.

Subcommands: eval, compose, partition, parse, similarity, aggregate-frames,
validate. Exit codes: 0 success, 2 invalid input, 3 internal error. All
file outputs are written atomically; reports are JSON with sorted keys, so
identical inputs (and seed/threads) produce byte-identical bytes.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from dmc import __version__
from dmc.captions import parse_dense_text
from dmc.compose import (
    CompositionConfig,
    build_dataset,
    concat_motions,
    filter_pool,
    partition_by_verbs,
)
from dmc.core import (
    DenseAnnotation,
    InputError,
    Timestamp,
    parse_timestamp,
    validate_annotation,
)
from dmc.evaluation import EvalConfig, aggregate_frame_labels, evaluate
from dmc.similarity import similarity_report
from dmc.soda import external_scores_from_dict
from dmc.storage import (
    read_annotations,
    read_embeddings,
    read_pool,
    save_motion,
    write_annotations,
    write_text_atomic,
)

log = logging.getLogger("dmc")


def _dump(payload: dict) -> str:
    return json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def _emit(payload: dict, out: str | None) -> None:
    text = _dump(payload)
    if out:
        write_text_atomic(out, text)
    else:
        sys.stdout.write(text)


def _read_json(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON: {exc}") from exc


def cmd_eval(args: argparse.Namespace) -> int:
    refs = read_annotations(args.refs)
    preds = read_annotations(args.preds)
    options: dict = {}
    if args.config:
        raw = _read_json(args.config)
        allowed = {"iou_thresholds", "scorers", "soda_iou_weighted", "threads"}
        unknown = set(raw) - allowed
        if unknown:
            raise InputError(f"unknown config keys: {sorted(unknown)}")
        options.update(raw)
        for key in ("iou_thresholds", "scorers"):
            if key in options:
                options[key] = tuple(options[key])
    if args.threads is not None:
        options["threads"] = args.threads
    config = EvalConfig(**options)
    external = None
    if args.scores_matrix:
        raw = _read_json(args.scores_matrix)
        ref_table = {a.sequence_id: a for a in refs}
        pred_table = {a.sequence_id: a for a in preds}
        if "scores" in raw:  # single-sequence file
            shared = sorted(set(ref_table) & set(pred_table))
            if len(shared) != 1:
                raise InputError(
                    "single-matrix score file needs exactly one shared sequence id"
                )
            raw = {shared[0]: raw}
        external = {}
        for seq_id, record in raw.items():
            if seq_id not in ref_table or seq_id not in pred_table:
                raise InputError(f"score matrix for unknown sequence id {seq_id!r}")
            external[seq_id] = external_scores_from_dict(
                record, ref_table[seq_id], pred_table[seq_id], label=seq_id
            )
    report = evaluate(refs, preds, config, external)
    write_text_atomic(args.out, _dump(report.to_dict()))
    return 0


def cmd_compose(args: argparse.Namespace) -> int:
    cfg = CompositionConfig(seed=args.seed, min_alignment=args.min_alignment)
    load_motions = args.motions is not None
    pool = read_pool(args.pool, motions_dir=args.motions, load_motions=load_motions)
    kept, filter_report = filter_pool(pool, cfg.min_alignment)
    for message in filter_report.warnings:
        log.warning("%s", message)
    built = build_dataset(kept, args.count, cfg)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_annotations(out_dir / "annotations.jsonl", built.annotations)
    manifest = built.manifest.to_dict()
    manifest["mode"] = args.mode
    manifest["pool_filter"] = {
        "kept": filter_report.kept,
        "removed": filter_report.removed,
        "kept_by_source": filter_report.kept_by_source,
        "removed_by_source": filter_report.removed_by_source,
        "unscored_kept": filter_report.unscored_kept,
    }
    write_text_atomic(out_dir / "manifest.json", _dump(manifest))
    if load_motions:
        pool_by_id = {entry.id: entry for entry in kept}
        motions_dir = out_dir / "motions"
        motions_dir.mkdir(exist_ok=True)
        for plan, annotation in zip(built.plans, built.annotations):
            motion = concat_motions(
                plan, pool_by_id, mode=args.mode, cfg=cfg,
                sequence_id=annotation.sequence_id,
            )
            save_motion(motions_dir / f"{annotation.sequence_id}.dmc", motion)
    return 0


def cmd_partition(args: argparse.Namespace) -> int:
    lines = []
    with open(args.captions, encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise InputError(f"{args.captions}:{lineno}: invalid JSON: {exc}") from exc
            if "segments" in record:
                annotation = DenseAnnotation.from_dict(record)
                items = [
                    (f"{annotation.sequence_id}#{i}", seg.caption)
                    for i, seg in enumerate(annotation.segments)
                ]
            elif "caption" in record:
                items = [(record.get("id", f"line-{lineno}"), record["caption"])]
            else:
                raise InputError(
                    f"{args.captions}:{lineno}: record needs 'caption' or 'segments'"
                )
            for item_id, caption in items:
                count, label = partition_by_verbs(caption)
                lines.append(
                    json.dumps(
                        {"id": item_id, "caption": caption,
                         "verb_count": count, "label": label},
                        sort_keys=True, ensure_ascii=False,
                    )
                )
    text = "".join(line + "\n" for line in lines)
    if args.out:
        write_text_atomic(args.out, text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_parse(args: argparse.Namespace) -> int:
    if args.infile:
        text = Path(args.infile).read_text(encoding="utf-8")
    else:
        text = sys.stdin.read()
    if args.duration_cs is not None:
        duration = Timestamp(args.duration_cs)
    elif args.duration:
        duration = parse_timestamp(args.duration)
    else:
        raise InputError("one of --duration or --duration-cs is required")
    outcome = parse_dense_text(text, duration, mode=args.mode, sequence_id=args.id)
    payload = {
        "annotation": outcome.annotation.to_dict(),
        "dropped_lines": outcome.dropped_lines,
        "warnings": [{"line": line, "message": msg} for line, msg in outcome.warnings],
    }
    _emit(payload, args.out)
    return 0


def cmd_similarity(args: argparse.Namespace) -> int:
    motions = read_embeddings(args.motions)
    texts = read_embeddings(args.texts)
    shuffled = [read_embeddings(path) for path in args.shuffled or []]
    report = similarity_report(
        motions, texts, shuffled, batch=args.batch, seed=args.seed
    )
    _emit(report, args.out)
    return 0


def cmd_aggregate_frames(args: argparse.Namespace) -> int:
    raw = _read_json(args.labels)
    if not isinstance(raw, list) or not all(isinstance(x, str) for x in raw):
        raise InputError(f"{args.labels}: expected a JSON array of label strings")
    annotation = aggregate_frame_labels(raw, args.fps, sequence_id=args.id)
    _emit(annotation.to_dict(), args.out)
    return 0


def cmd_validate(args: argparse.Namespace) -> int:
    annotations = read_annotations(args.annotations)
    per_id = {}
    total = 0
    for annotation in annotations:
        violations = validate_annotation(annotation, strict_nonoverlap=args.strict)
        if violations:
            per_id[annotation.sequence_id] = [
                {"segment_index": v.segment_index, "rule": v.rule, "detail": v.detail}
                for v in violations
            ]
            total += len(violations)
    _emit({"sequences": len(annotations), "total_violations": total,
           "violations": per_id}, args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dmc",
        description="Dense motion captioning: evaluation, parsing, and composition.",
    )
    parser.add_argument("--version", action="version", version=f"dmc {__version__}")
    parser.add_argument(
        "--log-level", default="warning",
        choices=("debug", "info", "warning", "error"),
    )
    parser.add_argument(
        "--json-errors", action="store_true",
        help="emit errors as JSON on stderr",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("eval", help="score predictions against references")
    p.add_argument("--preds", required=True)
    p.add_argument("--refs", required=True)
    p.add_argument("--scores-matrix", help="external caption-score matrices (JSON)")
    p.add_argument("--config", help="evaluation config (JSON)")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("compose", help="build a composed dataset from an atomic pool")
    p.add_argument("--pool", required=True)
    p.add_argument("--motions", help="directory with atomic motion binaries")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", default="blend", choices=("hard", "blend"))
    p.add_argument("--min-alignment", type=float, default=0.5)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_compose)

    p = sub.add_parser("partition", help="label captions simple/complex by verb count")
    p.add_argument("--captions", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_partition)

    p = sub.add_parser("parse", help="parse timestamped caption text")
    p.add_argument("--in", dest="infile", help="input file (default: stdin)")
    p.add_argument("--duration", help="total duration as MM:SS:CC")
    p.add_argument("--duration-cs", type=int, help="total duration in centiseconds")
    p.add_argument("--mode", default="strict", choices=("strict", "lenient"))
    p.add_argument("--id", default="")
    p.add_argument("--out")
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("similarity", help="embedding cosine and retrieval scores")
    p.add_argument("--motions", required=True)
    p.add_argument("--texts", required=True)
    p.add_argument("--shuffled", action="append")
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_similarity)

    p = sub.add_parser("aggregate-frames", help="frame labels to timed segments")
    p.add_argument("--labels", required=True, help="JSON array of per-frame labels")
    p.add_argument("--fps", type=float, required=True)
    p.add_argument("--id", default="")
    p.add_argument("--out")
    p.set_defaults(func=cmd_aggregate_frames)

    p = sub.add_parser("validate", help="check annotation invariants")
    p.add_argument("--annotations", required=True)
    p.add_argument("--strict", action="store_true", help="also flag overlaps")
    p.add_argument("--out")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (InputError, OSError) as exc:
        _report_error(args, exc, 2)
        return 2
    except Exception as exc:  # pragma: no cover - defensive
        _report_error(args, exc, 3)
        return 3


def _report_error(args: argparse.Namespace, exc: Exception, code: int) -> None:
    if getattr(args, "json_errors", False):
        sys.stderr.write(
            json.dumps(
                {"code": code, "error": str(exc), "type": type(exc).__name__},
                sort_keys=True,
            )
            + "\n"
        )
    else:
        log.error("%s", exc)


if __name__ == "__main__":
    raise SystemExit(main())
