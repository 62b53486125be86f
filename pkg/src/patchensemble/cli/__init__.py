"""``patchensemble`` command line.

Exit codes: 0 success, 1 configuration or usage error, 2 some inputs failed.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

from ..aggregation import Label
from ..ensemble import detect_image
from ..errors import ConfigError, EmptyAfterFilter, PatchEnsembleError, SingleClass, SpecError, UnknownRecipe
from ..evaluation import (
    SimulationSpec,
    compute_auc,
    confusion_at,
    histogram,
    rows_to_csv,
    simulate_policy_comparison,
)
from ..patching import DEFAULT_ALIGNED_COUNT
from ..recipes import (
    DatasetRecipe,
    MaterializeError,
    SourceManifest,
    TrainingConfigMetadata,
    builtin_recipe,
    materialize,
)
from .io import build_ensemble, list_images, load_config_file, read_image, read_records, record_id, write_png

log = logging.getLogger("patchensemble")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_PARTIAL = 2

DEFAULT_POLICIES = "proposed,kthreshold:5,kthreshold:10,kthreshold:25,mean,median"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _open_out(path):
    if path in (None, "-"):
        return sys.stdout, False
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    return open(path, "w", newline=""), True


def _write_text(path, text):
    fh, close = _open_out(path)
    try:
        fh.write(text)
    finally:
        if close:
            fh.close()


# -- detect ----------------------------------------------------------------


def cmd_detect(args) -> int:
    decls, patch_size, threshold = load_config_file(args.config, args.patches_per_scorer)
    ensemble = build_ensemble(decls, patch_size,
                              threshold if args.threshold is None else args.threshold)
    paths = list_images(args.inputs)
    if not paths:
        raise ConfigError("no input images found")

    def run(path):
        try:
            verdict = detect_image(read_image(path), ensemble, key=path, seed=args.seed)
            return verdict.to_dict()
        except (PatchEnsembleError, OSError) as exc:
            log.warning("%s: %s", path, exc)
            return {"image": path, "error": f"{type(exc).__name__}: {exc}"}

    if args.workers > 1:
        with ThreadPoolExecutor(max_workers=args.workers) as pool:
            records = list(pool.map(run, paths))
    else:
        records = [run(p) for p in paths]

    _write_text(args.output, "".join(json.dumps(r) + "\n" for r in records))
    failed = sum("error" in r for r in records)
    if failed:
        log.warning("%d of %d images failed", failed, len(records))
        return EXIT_PARTIAL
    return EXIT_OK


# -- evaluate --------------------------------------------------------------


def _truth_of(row):
    for key in ("truth", "ground_truth", "target"):
        if key in row and row[key] not in (None, ""):
            return Label.parse(row[key])
    return None


def _score_of(row):
    for key in ("score", "fused_score"):
        if key in row and row[key] not in (None, ""):
            return float(row[key])
    return None


def _metrics_block(scores, truths, threshold, bins):
    samples = (scores, [t is Label.SYNTHETIC for t in truths])
    block = {"n": len(scores),
             "n_real": sum(t is Label.REAL for t in truths),
             "n_synthetic": sum(t is Label.SYNTHETIC for t in truths)}
    try:
        roc = compute_auc(samples)
        conf = confusion_at(samples, threshold)
    except SingleClass as exc:
        block["error"] = f"SingleClass: {exc}"
        return block, None, None
    block.update(roc.to_dict())
    block["confusion"] = conf.to_dict()
    return block, roc, histogram(samples, bins)


def cmd_evaluate(args) -> int:
    rows = read_records(args.scores)
    labels = {}
    if args.labels:
        for r in read_records(args.labels):
            truth = _truth_of(r)
            if truth is None and "label" in r:
                truth = Label.parse(r["label"])
            labels[str(record_id(r))] = (truth, r.get(args.group_by))

    scores, truths, groups = [], [], []
    skipped = 0
    for r in rows:
        if "error" in r:
            skipped += 1
            continue
        score = _score_of(r)
        rid = str(record_id(r))
        truth = _truth_of(r)
        group = r.get(args.group_by)
        if rid in labels:
            truth = labels[rid][0] if labels[rid][0] is not None else truth
            group = group if group is not None else labels[rid][1]
        if score is None or truth is None or not math.isfinite(score):
            skipped += 1
            continue
        scores.append(score)
        truths.append(truth)
        groups.append(group)
    if not scores:
        raise ConfigError("no usable labeled scores")

    threshold = 0.0 if args.threshold is None else args.threshold
    global_block, roc, hist = _metrics_block(scores, truths, threshold, args.bins)
    result = {"threshold": threshold, "skipped": skipped, "global": global_block}
    names = sorted({g for g in groups if g is not None}, key=str)
    if names:
        result["groups"] = {}
        for name in names:
            idx = [i for i, g in enumerate(groups) if g == name]
            block, _, _ = _metrics_block([scores[i] for i in idx], [truths[i] for i in idx],
                                         threshold, args.bins)
            result["groups"][str(name)] = block

    _write_text(args.output, json.dumps(result, indent=2, sort_keys=True) + "\n")
    if args.roc_csv and roc is not None:
        _write_text(args.roc_csv, roc.curve_csv())
    if args.hist_csv and hist is not None:
        _write_text(args.hist_csv, hist.to_csv())
    return EXIT_OK


# -- build-dataset ---------------------------------------------------------


def _load_recipe(arg, d4_ideal):
    if arg.lower().endswith(".json") or os.path.isfile(arg):
        try:
            with open(arg) as fh:
                return DatasetRecipe.from_dict(json.load(fh))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read recipe {arg}: {exc}") from exc
    return builtin_recipe(arg, d4_ideal=d4_ideal)


def cmd_build_dataset(args) -> int:
    recipe = _load_recipe(args.recipe, args.d4_ideal)
    try:
        manifest = SourceManifest.from_jsonl(args.manifest)
    except OSError as exc:
        raise ConfigError(f"cannot read manifest: {exc}") from exc
    os.makedirs(args.output, exist_ok=True)

    patch_dir = os.path.join(args.output, "patches")

    def write_patch(row, patch):
        stem = hashlib.sha1(row.source.encode("utf-8")).hexdigest()[:16]
        name = f"{stem}_{row.patch_index:03d}.png"
        write_png(os.path.join(patch_dir, name), patch)
        return os.path.join("patches", name)

    if args.write_patches:
        os.makedirs(patch_dir, exist_ok=True)
    try:
        out = materialize(recipe, manifest, args.seed, read_image, workers=args.workers,
                          patch_writer=write_patch if args.write_patches else None)
    except MaterializeError as exc:
        log.error("%s", exc)
        return EXIT_PARTIAL
    with open(os.path.join(args.output, "dataset.jsonl"), "w") as fh:
        fh.write(out.to_jsonl())
    with open(os.path.join(args.output, "recipe.json"), "w") as fh:
        json.dump(recipe.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    meta = TrainingConfigMetadata(recipe.id, patch_size=recipe.patch_size).to_dict()
    meta["seed"] = args.seed
    with open(os.path.join(args.output, "training_config.json"), "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")
    log.info("wrote %d rows for recipe %s", len(out.rows), recipe.id)
    return EXIT_OK


# -- simulate --------------------------------------------------------------


def cmd_simulate(args) -> int:
    spec_dict = {}
    if args.spec:
        try:
            with open(args.spec) as fh:
                spec_dict = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise SpecError(f"cannot read spec {args.spec}: {exc}") from exc
        if not isinstance(spec_dict, dict):
            raise SpecError("simulation spec must be a JSON object")
    if args.seed is not None:
        spec_dict["seed"] = args.seed
    spec = SimulationSpec.from_dict(spec_dict)
    policies = [p for p in args.policies.split(",") if p.strip()]
    threshold = 0.0 if args.threshold is None else args.threshold
    rows = simulate_policy_comparison(spec, policies, threshold)
    fmt = args.format or ("csv" if (args.output or "").lower().endswith(".csv") else "json")
    if fmt == "csv":
        text = rows_to_csv(rows)
    else:
        text = json.dumps({"spec": spec.__dict__, "threshold": threshold,
                           "rows": [r.to_dict() for r in rows]}, indent=2) + "\n"
    _write_text(args.output, text)
    return EXIT_OK


# -- parser ----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="patchensemble", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("detect", help="classify images as real or synthetic")
    p.add_argument("inputs", nargs="+", help="image files or directories")
    p.add_argument("--config", help="ensemble config (JSON); default: five ONNX models in "
                                    "$PATCHENSEMBLE_MODEL_DIR")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--patches-per-scorer", type=int, default=DEFAULT_ALIGNED_COUNT,
                   help="patch count for grid-aligned scorers without an explicit count")
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--output", "-o", default="-")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("evaluate", help="ROC/AUC and confusion metrics for labeled scores")
    p.add_argument("scores", help="JSON-lines or CSV with score/fused_score and truth fields")
    p.add_argument("--labels", help="optional file mapping image/id to truth")
    p.add_argument("--group-by", default="group")
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--bins", type=int, default=50)
    p.add_argument("--roc-csv")
    p.add_argument("--hist-csv")
    p.add_argument("--output", "-o", default="-")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("build-dataset", help="materialize a patch-level training manifest")
    p.add_argument("--recipe", required=True, help="D1..D5 or a recipe JSON file")
    p.add_argument("--manifest", required=True, help="source manifest (JSON lines)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--output", "-o", required=True, help="output directory")
    p.add_argument("--write-patches", action="store_true")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--d4-ideal", action="store_true", help="Metfaces-only D4 variant")
    p.set_defaults(func=cmd_build_dataset)

    p = sub.add_parser("simulate", help="compare aggregation policies on simulated scores")
    p.add_argument("--spec", help="simulation spec (JSON)")
    p.add_argument("--policies", default=DEFAULT_POLICIES)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threshold", type=float, default=None)
    p.add_argument("--format", choices=("csv", "json"))
    p.add_argument("--output", "-o", default="-")
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, SpecError, UnknownRecipe, EmptyAfterFilter) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except PatchEnsembleError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
