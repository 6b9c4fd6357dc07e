"""Batch command-line pipeline.

Subcommands: synth, extract, harvest, augment, evaluate, pipeline.  Exit
codes: 0 success, 1 config or usage error, 2 no useful output produced.
Per-image progress goes to stderr as machine-parseable key=value lines.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from multiprocessing import get_context
from pathlib import Path

import numpy as np

from . import confirm as confirm_mod
from .annotations import (
    Annotation,
    LabeledBox,
    ManifestEntry,
    read_manifest,
    read_xml,
    write_manifest,
    write_xml,
)
from .config import PipelineConfig, load_config
from .errors import (
    AutoboxError,
    ConfigError,
    EmptyPatchDb,
    InsufficientProposals,
    IoFailure,
    NoGroundTruth,
    NonConvergence,
)
from .extraction import filter_proposals, merge_until
from .geometry import Box
from .metrics import (
    Detection,
    compute_report,
    load_detections_jsonl,
    pr_curves,
    render_text_table,
    save_detections_jsonl,
    write_report_json,
)
from .occlusion import OcclusionSpec, harvest_patch, simulate_occlusion
from .patchdb import PatchDb
from .proposals import dump_proposals_jsonl, propose
from .raster import crop, load_image, resize_preserve_aspect, save_image
from .synth import SceneSpec, generate_corpus, render_training_crops

log = logging.getLogger("autobox")

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NO_OUTPUT = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override a single config key (repeatable)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=0, help="0 = all available CPUs")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="autobox", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic ground-truthed corpus")
    _add_common(p)
    p.add_argument("--out", required=True)

    p = sub.add_parser("extract", help="label images with exactly-N bounding boxes")
    _add_common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--model-dir", help="labeled crop directories for the baseline classifier")
    p.add_argument("--scorer-dir", help="exchange directory for an external scorer")
    p.add_argument("--scorer-timeout", type=float, default=60.0)
    p.add_argument("--dump-proposals", action="store_true",
                   help="write raw proposals as JSON lines per image")

    p = sub.add_parser("harvest", help="store masked patches of annotated boxes")
    _add_common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--db", "--out", dest="db", required=True)

    p = sub.add_parser("augment", help="emit occlusion-augmented copies")
    _add_common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--db", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("evaluate", help="score detections against ground truth")
    _add_common(p)
    p.add_argument("--predictions", required=True)
    p.add_argument("--ground-truth", required=True, help="manifest with annotation paths")
    p.add_argument("--out", required=True)

    p = sub.add_parser("pipeline", help="synth + extract + harvest + augment + evaluate")
    _add_common(p)
    p.add_argument("--out", required=True)
    return parser


# --- extract worker -------------------------------------------------------

_WORKER: dict = {}


def _init_worker(values: dict, model) -> None:
    _WORKER["config"] = PipelineConfig(values)
    _WORKER["model"] = model


def _extract_one(task: tuple) -> dict:
    index, image_abs, image_rel, n, out_dir, dump = task
    cfg: PipelineConfig = _WORKER["config"]
    model = _WORKER["model"]
    t0 = time.perf_counter()
    rec: dict = {"index": index, "image_rel": image_rel, "n": n,
                 "name": Path(image_rel).name, "outcome": "drop", "reason": None,
                 "iterations": 0, "ms": 0.0}
    try:
        img = load_image(image_abs)
    except IoFailure as exc:
        rec.update(reason="IoFailure", detail=str(exc), ms=_ms(t0))
        return rec

    if cfg["resize.enabled"]:
        img = resize_preserve_aspect(img, cfg["resize.target_long_side"])
        out_name = Path(image_rel).name
        save_image(img, Path(out_dir) / "images" / out_name)
        rec["image_out_rel"] = str(Path("images") / out_name)
    rec["height"], rec["width"] = img.shape[:2]

    proposals = propose(img, cfg.propose_config())
    if dump:
        dump_path = Path(out_dir) / "proposals" / (Path(image_rel).stem + ".jsonl")
        dump_path.parent.mkdir(parents=True, exist_ok=True)
        dump_proposals_jsonl(proposals, dump_path)
    try:
        ext_cfg = cfg.extract_config()
        area_max = None
        if ext_cfg.area_max_frac is not None:
            area_max = int(ext_cfg.area_max_frac * img.shape[0] * img.shape[1])
        filtered = filter_proposals(proposals, ext_cfg.area_min, ext_cfg.aspect_max, area_max)
        result = merge_until(filtered, n, ext_cfg)
    except (NonConvergence, InsufficientProposals) as exc:
        rec.update(reason=type(exc).__name__, detail=str(exc), ms=_ms(t0))
        return rec

    rec["boxes"] = [(b.xmin, b.ymin, b.width, b.height) for b in result.boxes]
    rec["iterations"] = result.iterations_used
    rec["final_thr"] = result.final_iou_threshold

    mode = cfg["confirm.mode"]
    gate = mode == "all" or (mode == "multi" and n > 1)
    if model is not None:
        if gate:
            policy = confirm_mod.ConfirmPolicy(
                score_threshold=cfg["confirm.score_threshold"],
                valid_labels=frozenset(model.labels),
            )
            decisions = confirm_mod.confirm_boxes(img, result.boxes, model, policy)
            rec["labels"] = [d.label for d in decisions]
            rec["scores"] = [d.score for d in decisions]
            rec["accepted"] = [d.accepted for d in decisions]
            rec["reject_reasons"] = [d.reason for d in decisions]
            rec["gated"] = True
        else:
            scored = [model.classify(crop(img, b)) for b in result.boxes]
            rec["labels"] = [s.label for s in scored]
            rec["scores"] = [s.score for s in scored]
            rec["gated"] = False
    rec["outcome"] = "ok"
    rec["ms"] = _ms(t0)
    return rec


def _ms(t0: float) -> float:
    return (time.perf_counter() - t0) * 1000.0


def _load_model_from_dir(model_dir, temperature: float):
    model_dir = Path(model_dir)
    crops = []
    for label_dir in sorted(p for p in model_dir.iterdir() if p.is_dir()):
        for img_path in sorted(label_dir.glob("*.png")) + sorted(label_dir.glob("*.jpg")):
            crops.append((label_dir.name, load_image(img_path)))
    if not crops:
        raise ConfigError(f"no labeled crops under {model_dir}")
    return confirm_mod.train_baseline(crops, temperature=temperature)


def run_extract(
    cfg: PipelineConfig,
    manifest_path,
    out_dir,
    model_dir=None,
    scorer_dir=None,
    scorer_timeout: float = 60.0,
    workers: int = 0,
    dump_proposals: bool = False,
) -> int:
    manifest_path = Path(manifest_path)
    out_dir = Path(out_dir)
    entries = [e for e in read_manifest(manifest_path) if not e.dropped]
    base = manifest_path.parent
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "annotations").mkdir(exist_ok=True)
    if cfg["resize.enabled"]:
        (out_dir / "images").mkdir(exist_ok=True)

    mode = cfg["confirm.mode"]
    needs_model = mode in ("multi", "all")
    model = None
    if model_dir is not None:
        model = _load_model_from_dir(model_dir, cfg["confirm.temperature"])
    if needs_model and model is None and scorer_dir is None:
        raise ConfigError(
            f"confirm.mode={mode} requires --model-dir or --scorer-dir (or set confirm.mode=off)"
        )

    tasks = []
    for i, entry in enumerate(entries):
        image_abs = str(base / entry.image_path)
        tasks.append((i, image_abs, entry.image_path, entry.n_objects, str(out_dir), dump_proposals))

    worker_model = None if scorer_dir is not None else model
    if workers == 0:
        workers = os.cpu_count() or 1
    if workers > 1 and len(tasks) > 1:
        ctx = get_context("fork")
        with ctx.Pool(workers, initializer=_init_worker, initargs=(cfg.values, worker_model)) as pool:
            records = pool.map(_extract_one, tasks)
    else:
        _init_worker(cfg.values, worker_model)
        records = [_extract_one(t) for t in tasks]

    if scorer_dir is not None:
        _apply_external_scores(records, cfg, base, out_dir, scorer_dir, scorer_timeout)

    def image_ref_for(rec, entry) -> str:
        # Resized copies live under the output directory; otherwise point
        # back at the source image, relative to the new manifest.
        ref = rec.get("image_out_rel")
        if ref is None:
            ref = os.path.relpath(base / entry.image_path, out_dir)
        return ref

    keep_partial = cfg["confirm.keep_partial"]
    detections: list[Detection] = []
    out_entries: list[ManifestEntry] = []
    written = 0
    for entry, rec in zip(entries, records):
        if rec["outcome"] != "ok":
            out_entries.append(ManifestEntry(image_ref_for(rec, entry), entry.n_objects,
                                             dropped_reason=rec["reason"]))
            log.info("stage=extract image=%s outcome=drop reason=%s ms=%.0f",
                     rec["name"], rec["reason"], rec["ms"])
            continue
        boxes = [Box(*t) for t in rec["boxes"]]
        labels = rec.get("labels") or ["object"] * len(boxes)
        scores = rec.get("scores") or [1.0] * len(boxes)
        accepted = rec.get("accepted")
        if rec.get("gated") and accepted is not None:
            if not all(accepted) and not keep_partial:
                out_entries.append(ManifestEntry(image_ref_for(rec, entry), entry.n_objects,
                                                 dropped_reason="ConfirmRejected"))
                log.info("stage=extract image=%s outcome=drop reason=ConfirmRejected ms=%.0f",
                         rec["name"], rec["ms"])
                continue
            kept = [(b, lb, sc) for b, lb, sc, ok in zip(boxes, labels, scores, accepted) if ok]
            if not kept:
                out_entries.append(ManifestEntry(image_ref_for(rec, entry), entry.n_objects,
                                                 dropped_reason="ConfirmRejected"))
                log.info("stage=extract image=%s outcome=drop reason=ConfirmRejected ms=%.0f",
                         rec["name"], rec["ms"])
                continue
            boxes, labels, scores = map(list, zip(*kept))

        name = rec["name"]
        annotation = Annotation(
            image_filename=name,
            image_width=rec["width"],
            image_height=rec["height"],
            objects=[LabeledBox(lb, b) for lb, b in zip(labels, boxes)],
        )
        ann_rel = str(Path("annotations") / (Path(name).stem + ".xml"))
        write_xml(annotation, out_dir / ann_rel)
        out_entries.append(ManifestEntry(image_ref_for(rec, entry), entry.n_objects,
                                         annotation_path=ann_rel))
        for b, lb, sc in zip(boxes, labels, scores):
            detections.append(Detection(image_filename=name, label=lb, box=b, score=sc))
        written += 1
        log.info("stage=extract image=%s outcome=ok boxes=%d iterations=%d ms=%.0f",
                 name, len(boxes), rec["iterations"], rec["ms"])

    write_manifest(out_entries, out_dir / "manifest.tsv")
    save_detections_jsonl(detections, out_dir / "predictions.jsonl")
    return EXIT_OK if written >= 1 else EXIT_NO_OUTPUT


def _apply_external_scores(records, cfg, base, out_dir, scorer_dir, timeout) -> None:
    """Batch-score extracted crops through the file exchange protocol."""
    scorer_dir = Path(scorer_dir)
    crops = []
    slots = []  # (record, box_index) aligned with crops
    for rec in records:
        if rec["outcome"] != "ok" or "boxes" not in rec:
            continue
        out_rel = rec.get("image_out_rel")
        img = load_image(out_dir / out_rel if out_rel else base / rec["image_rel"])
        for j, t in enumerate(rec["boxes"]):
            crop_id = f"{Path(rec['name']).stem}_{j:02d}"
            crops.append((crop_id, crop(img, Box(*t))))
            slots.append((rec, j))
    if not crops:
        return
    confirm_mod.write_scoring_request(crops, scorer_dir)
    scores = confirm_mod.poll_scoring_response(
        scorer_dir / confirm_mod.SCORER_RESPONSE, [cid for cid, _ in crops], timeout=timeout
    )
    valid = {s.label for s in scores.values()}
    threshold = cfg["confirm.score_threshold"]
    mode = cfg["confirm.mode"]
    for rec in records:
        if rec["outcome"] == "ok" and "boxes" in rec:
            rec["labels"] = [None] * len(rec["boxes"])
            rec["scores"] = [None] * len(rec["boxes"])
            rec["gated"] = mode == "all" or (mode == "multi" and rec["n"] > 1)
            rec["accepted"] = [True] * len(rec["boxes"])
    for (rec, j), (crop_id, _) in zip(slots, crops):
        cs = scores[crop_id]
        rec["labels"][j] = cs.label
        rec["scores"][j] = cs.score
        if rec["gated"]:
            rec["accepted"][j] = cs.label in valid and cs.score > threshold


def run_synth(cfg: PipelineConfig, out_dir, seed: int) -> int:
    out_dir = Path(out_dir)
    template = SceneSpec(
        canvas_width=cfg["synth.canvas_width"],
        canvas_height=cfg["synth.canvas_height"],
        noise_amplitude=cfg["synth.noise"],
        min_gap=cfg["synth.min_gap"],
    )
    manifest = generate_corpus(
        out_dir,
        template,
        count=cfg["synth.count"],
        seed=seed,
        n_range=(cfg["synth.n_min"], cfg["synth.n_max"]),
        log=log.info,
    )
    render_training_crops(
        out_dir / "sprites",
        per_category=cfg["synth.train_crops_per_category"],
        seed=seed + 1,
    )
    entries = read_manifest(manifest)
    return EXIT_OK if entries else EXIT_NO_OUTPUT


def run_harvest(cfg: PipelineConfig, manifest_path, db_dir) -> int:
    manifest_path = Path(manifest_path)
    base = manifest_path.parent
    db = PatchDb(db_dir)
    added = 0
    for entry in read_manifest(manifest_path):
        if entry.dropped:
            continue
        annotation = read_xml(base / entry.annotation_path)
        img = load_image(base / entry.image_path)
        stem = Path(entry.image_path).stem
        for obj in annotation.objects:
            b = obj.box
            patch_id = f"{stem}_{obj.label}_{b.xmin}_{b.ymin}_{b.width}_{b.height}"
            if patch_id in db:
                log.info("stage=harvest patch=%s outcome=skip reason=exists", patch_id)
                continue
            try:
                patch = harvest_patch(img, b, obj.label, annotation.image_filename)
            except AutoboxError as exc:
                log.info("stage=harvest patch=%s outcome=skip reason=%s",
                         patch_id, type(exc).__name__)
                continue
            db.add(patch, patch_id)
            added += 1
            log.info("stage=harvest patch=%s outcome=ok", patch_id)
    log.info("stage=harvest outcome=done added=%d total=%d", added, len(db))
    return EXIT_OK if len(db) >= 1 else EXIT_NO_OUTPUT


def run_augment(cfg: PipelineConfig, manifest_path, db_dir, out_dir, seed: int) -> int:
    manifest_path = Path(manifest_path)
    base = manifest_path.parent
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    (out_dir / "annotations").mkdir(parents=True, exist_ok=True)
    modes = cfg["occlude.modes"]
    directions = cfg["occlude.directions"]
    db = PatchDb(db_dir)
    if "patch" in modes and len(db) == 0:
        raise EmptyPatchDb(f"patch mode requested but {db_dir} holds no patches")
    cov_min, cov_max = cfg["occlude.coverage_min"], cfg["occlude.coverage_max"]

    out_entries = []
    written = 0
    for i, entry in enumerate(read_manifest(manifest_path)):
        if entry.dropped:
            continue
        annotation = read_xml(base / entry.annotation_path)
        img = load_image(base / entry.image_path)
        name = Path(entry.image_path).name
        for mi, mode in enumerate(modes):
            for di, direction in enumerate(directions):
                drng = np.random.default_rng([seed, i, mi, di])
                coverage = float(drng.uniform(cov_min, cov_max))
                spec = OcclusionSpec(
                    mode=mode,
                    direction=direction,
                    coverage=coverage,
                    rng_seed=int(drng.integers(0, 2**63 - 1)),
                )
                try:
                    aug_img, _ = simulate_occlusion(img, annotation, spec, db)
                except AutoboxError as exc:
                    log.info("stage=augment image=%s mode=%s direction=%s outcome=skip reason=%s",
                             name, mode, direction, type(exc).__name__)
                    continue
                aug_name = f"aug_{mode}_{direction}_{name}"
                save_image(aug_img, out_dir / "images" / aug_name)
                aug_ann = Annotation(
                    image_filename=aug_name,
                    image_width=annotation.image_width,
                    image_height=annotation.image_height,
                    objects=list(annotation.objects),
                )
                ann_rel = str(Path("annotations") / (Path(aug_name).stem + ".xml"))
                write_xml(aug_ann, out_dir / ann_rel)
                out_entries.append(
                    ManifestEntry(str(Path("images") / aug_name), len(aug_ann.objects) or 1,
                                  annotation_path=ann_rel)
                )
                written += 1
                log.info("stage=augment image=%s mode=%s direction=%s outcome=ok",
                         aug_name, mode, direction)
    write_manifest(out_entries, out_dir / "manifest.tsv")
    return EXIT_OK if written >= 1 else EXIT_NO_OUTPUT


def run_evaluate(cfg: PipelineConfig, predictions_path, ground_truth_manifest, out_dir) -> int:
    manifest_path = Path(ground_truth_manifest)
    base = manifest_path.parent
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    detections = load_detections_jsonl(predictions_path)
    annotations = []
    for entry in read_manifest(manifest_path):
        if not entry.dropped:
            annotations.append(read_xml(base / entry.annotation_path))
    report = compute_report(
        detections,
        annotations,
        iou_threshold=cfg["eval.iou_threshold"],
        score_suppress=cfg.score_suppress(),
    )
    write_report_json(report, out_dir / "report.json")
    table = render_text_table(report)
    with open(out_dir / "report.txt", "w", encoding="utf-8") as fh:
        fh.write(table)
    if cfg["eval.figures"]:
        from .plots import render_report_figures

        curves = pr_curves(detections, annotations, cfg["eval.iou_threshold"])
        render_report_figures(report, curves, out_dir)
    sys.stdout.write(table)
    log.info("stage=evaluate outcome=ok map=%.4f recall=%.4f",
             report.map_score, report.recall_score)
    return EXIT_OK


def run_pipeline(cfg: PipelineConfig, out_dir, seed: int, workers: int) -> int:
    out_dir = Path(out_dir)
    corpus = out_dir / "corpus"
    labeled = out_dir / "labeled"
    rc = run_synth(cfg, corpus, seed)
    if rc != EXIT_OK:
        return rc
    rc = run_extract(cfg, corpus / "manifest.tsv", labeled,
                     model_dir=corpus / "sprites", workers=workers)
    if rc != EXIT_OK:
        return rc
    rc = run_harvest(cfg, labeled / "manifest.tsv", out_dir / "patchdb")
    if rc != EXIT_OK:
        return rc
    rc = run_augment(cfg, labeled / "manifest.tsv", out_dir / "patchdb",
                     out_dir / "augmented", seed)
    if rc != EXIT_OK:
        return rc
    return run_evaluate(cfg, labeled / "predictions.jsonl", corpus / "manifest.tsv",
                        out_dir / "eval")


def main(argv=None) -> int:
    logging.basicConfig(stream=sys.stderr, level=logging.INFO, format="%(message)s")
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        cfg = load_config(args.config, args.set)
        if args.command == "synth":
            return run_synth(cfg, args.out, args.seed)
        if args.command == "extract":
            return run_extract(cfg, args.manifest, args.out,
                               model_dir=args.model_dir,
                               scorer_dir=args.scorer_dir,
                               scorer_timeout=args.scorer_timeout,
                               workers=args.workers,
                               dump_proposals=args.dump_proposals)
        if args.command == "harvest":
            return run_harvest(cfg, args.manifest, args.db)
        if args.command == "augment":
            return run_augment(cfg, args.manifest, args.db, args.out, args.seed)
        if args.command == "evaluate":
            return run_evaluate(cfg, args.predictions, args.ground_truth, args.out)
        if args.command == "pipeline":
            return run_pipeline(cfg, args.out, args.seed, args.workers)
        raise ConfigError(f"unknown command {args.command!r}")
    except NoGroundTruth as exc:
        log.error("error=%s detail=%s", type(exc).__name__, exc)
        return EXIT_NO_OUTPUT
    except AutoboxError as exc:
        log.error("error=%s detail=%s", type(exc).__name__, exc)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
