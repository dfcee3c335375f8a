"""Command-line entry point: ``plstm <subcommand> ...``.

Exit codes: 0 success, 2 usage error, 3 data error, 4 check or training
failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from . import evaluation, gradcheck, synth
from .model import CELL_KINDS, CheckpointError, NetworkSpec, load_checkpoint, save_checkpoint
from .preprocess import PreprocessError, default_part_grouping, preprocess_sequence
from .skeleton import (
    SEQUENCE_SUFFIX,
    Catalog,
    CatalogEntry,
    SkeletonFormatError,
    load_catalog,
    load_sequence,
    save_catalog,
    save_sequence,
)
from .train import TrainingConfig, TrainingError, load_samples, parse_config_text, train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_CHECK = 0, 2, 3, 4

log = logging.getLogger("plstm")


class DataError(Exception):
    pass


MODEL_DEFAULTS = {
    "cell": "plstm",
    "layers": 2,
    "hidden": 40,
    "part_hidden": "8",
    "classes": 0,
    "bias": True,
    "two_actor": False,
}


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    v = str(text).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _read_catalog(path) -> Catalog:
    try:
        catalog = load_catalog(path)
    except FileNotFoundError:
        raise DataError(f"catalog not found: {path}") from None
    except SkeletonFormatError as exc:
        raise DataError(str(exc)) from None
    if catalog.rejects:
        log.warning("%d unparseable catalog names, e.g. %s", len(catalog.rejects), catalog.rejects[0])
    return catalog


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args) -> int:
    spec = synth.SynthSpec(
        classes=args.classes,
        subjects=args.subjects,
        cameras=args.cameras,
        setups=args.setups,
        frames=args.frames,
        noise=args.noise,
        seed=args.seed,
        distractor_rate=args.distractor_rate,
    )
    try:
        catalog = synth.generate_catalog(spec, args.out)
    except OSError as exc:
        raise DataError(f"cannot write to {args.out}: {exc}") from None
    print(f"catalog {Path(args.out) / 'catalog.txt'} samples {len(catalog)}")
    return EXIT_OK


def cmd_preprocess(args) -> int:
    catalog = _read_catalog(args.catalog)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = ["sample_id status main_body dropped_bodies skipped_frames"]
    entries, failed, dropped_total = [], 0, 0
    for entry in catalog:
        try:
            seq = load_sequence(entry.path)
            result = preprocess_sequence(seq, per_frame=args.per_frame_basis)
        except (OSError, SkeletonFormatError, PreprocessError) as exc:
            failed += 1
            rows.append(f"{entry.sample_id} failed - - - # {exc}")
            log.warning("%s: %s", entry.sample_id, exc)
            continue
        skipped = sum(1 for b in result.sequence.track(result.main_body) if b is None)
        dropped = ",".join(str(b) for b in result.dropped_bodies) or "-"
        dropped_total += len(result.dropped_bodies)
        for b in result.dropped_bodies:
            log.info("%s: dropped noisy body %s", entry.sample_id, b)
        path = out / f"{entry.sample_id}{SEQUENCE_SUFFIX}"
        save_sequence(result.sequence, path)
        entries.append(CatalogEntry(entry.sample_id, entry.meta, str(path)))
        rows.append(f"{entry.sample_id} ok {result.main_body} {dropped} {skipped}")
    save_catalog(Catalog(entries), out / "catalog.txt")
    (out / "preprocess_report.txt").write_text("\n".join(rows) + "\n", encoding="utf-8")
    print(f"processed {len(entries)} failed {failed} dropped_bodies {dropped_total}")
    return EXIT_OK


def cmd_split(args) -> int:
    catalog = _read_catalog(args.catalog)
    try:
        split = evaluation.make_split(catalog, args.protocol)
    except evaluation.SplitError as exc:
        raise DataError(str(exc)) from None
    text = evaluation.split_to_text(split)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"{split.name} train {len(split.train)} test {len(split.test)}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def _train_settings(args) -> tuple[dict, TrainingConfig]:
    """Merge defaults, config file and flags (flags win)."""
    model = dict(MODEL_DEFAULTS)
    tr = {f.name: f.default for f in dataclasses.fields(TrainingConfig)}
    if args.config:
        try:
            text = Path(args.config).read_text(encoding="utf-8")
        except OSError as exc:
            raise DataError(f"cannot read config: {exc}") from None
        for key, value in parse_config_text(text).items():
            if key in model:
                model[key] = value
            elif key in tr:
                tr[key] = value
            else:
                raise DataError(f"unknown config key {key!r}")
    for key in model:
        if getattr(args, key, None) is not None:
            model[key] = getattr(args, key)
    for key in tr:
        if getattr(args, key, None) is not None:
            tr[key] = getattr(args, key)
    try:
        casts = {f.name: type(f.default) for f in dataclasses.fields(TrainingConfig)}
        config = TrainingConfig(**{k: casts[k](v) for k, v in tr.items()})
        model["layers"] = int(model["layers"])
        model["hidden"] = int(model["hidden"])
        model["classes"] = int(model["classes"])
        model["bias"] = _bool(model["bias"])
        model["two_actor"] = _bool(model["two_actor"])
        if model["cell"] not in CELL_KINDS:
            raise ValueError(f"unknown cell {model['cell']!r}")
    except ValueError as exc:
        raise DataError(f"bad configuration: {exc}") from None
    return model, config


def _network_spec(model: dict, classes: int) -> NetworkSpec:
    grouping = default_part_grouping()
    input_dims = grouping.part_dims(2 if model["two_actor"] else 1)
    part_hidden = None
    if model["cell"] == "plstm":
        sizes = [int(v) for v in str(model["part_hidden"]).replace(",", " ").split()]
        if len(sizes) == 1:
            sizes = sizes * grouping.part_count
        part_hidden = tuple(sizes)
        hidden = sum(sizes)
    else:
        hidden = model["hidden"]
    return NetworkSpec(
        model["cell"], input_dims, hidden, classes, layers=model["layers"],
        part_hidden=part_hidden, bias=model["bias"],
    )


def cmd_train(args) -> int:
    model, config = _train_settings(args)
    catalog = _read_catalog(args.catalog)
    try:
        split = evaluation.make_split(catalog, args.protocol)
    except evaluation.SplitError as exc:
        raise DataError(str(exc)) from None
    classes = model["classes"] or max(e.meta.action for e in catalog)
    try:
        spec = _network_spec(model, classes)
        samples = load_samples(catalog, split.train, two_actor=model["two_actor"])
    except (ValueError, OSError) as exc:
        raise DataError(str(exc)) from None
    report = train(spec, samples, config, two_actor=model["two_actor"])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_checkpoint(report.checkpoint, out / "checkpoint.txt")
    (out / "train_report.txt").write_text(report.to_text(), encoding="utf-8")
    print(
        f"selected_epoch {report.selected_epoch} val_error {report.val_error[report.selected_epoch - 1]:.6f} "
        f"checkpoint {out / 'checkpoint.txt'}"
    )
    return EXIT_OK


def cmd_eval(args) -> int:
    try:
        ckpt = load_checkpoint(args.checkpoint)
    except FileNotFoundError:
        raise DataError(f"checkpoint not found: {args.checkpoint}") from None
    except (CheckpointError, ValueError) as exc:
        raise DataError(f"bad checkpoint: {exc}") from None
    catalog = _read_catalog(args.catalog)
    try:
        split = evaluation.make_split(catalog, args.protocol)
        result = evaluation.evaluate(ckpt, split, catalog)
    except (evaluation.SplitError, SkeletonFormatError, OSError, TrainingError) as exc:
        raise DataError(str(exc)) from None
    text = result.to_text()
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    results = gradcheck.run_gradcheck(args.seed, cases=args.cases)
    worst = 0.0
    for r in results:
        print(f"{r.cell} layers={r.layers} cases={r.cases} max_rel_error={r.max_rel_error:.3e}")
        worst = max(worst, r.max_rel_error)
    ok = worst <= gradcheck.TOLERANCE
    print(f"max_rel_error {worst:.3e} tolerance {gradcheck.TOLERANCE:.0e} {'PASS' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_CHECK


def cmd_validate(args) -> int:
    catalog = _read_catalog(args.catalog)
    bad = len(catalog.rejects)
    for name in catalog.rejects:
        print(f"reject {name}")
    for entry in catalog:
        try:
            load_sequence(entry.path)
        except (OSError, SkeletonFormatError, ValueError) as exc:
            bad += 1
            print(f"invalid {entry.sample_id} {exc}")
    if args.checkpoint:
        try:
            load_checkpoint(args.checkpoint)
        except (OSError, ValueError) as exc:
            bad += 1
            print(f"invalid checkpoint {exc}")
    print(f"valid {len(catalog) + (1 if args.checkpoint else 0) - bad} invalid {bad}")
    return EXIT_OK if bad == 0 else EXIT_DATA


# ---------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="plstm", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic catalog")
    p.add_argument("--out", required=True)
    p.add_argument("--classes", type=int, default=4)
    p.add_argument("--subjects", type=int, default=8)
    p.add_argument("--cameras", type=int, default=3)
    p.add_argument("--setups", type=int, default=17)
    p.add_argument("--frames", type=int, default=100)
    p.add_argument("--noise", type=float, default=0.01)
    p.add_argument("--distractor-rate", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("preprocess", help="filter, pick main actor, normalize")
    p.add_argument("--catalog", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--per-frame-basis", action="store_true")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("split", help="write a protocol split")
    p.add_argument("--catalog", required=True)
    p.add_argument("--protocol", required=True, choices=evaluation.PROTOCOLS)
    p.add_argument("--out")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("train", help="train on the training side of a protocol")
    p.add_argument("--catalog", required=True)
    p.add_argument("--protocol", required=True, choices=evaluation.PROTOCOLS)
    p.add_argument("--out", required=True)
    p.add_argument("--config")
    p.add_argument("--cell", choices=CELL_KINDS)
    p.add_argument("--layers", type=int)
    p.add_argument("--hidden", type=int)
    p.add_argument("--part-hidden", dest="part_hidden")
    p.add_argument("--classes", type=int)
    p.add_argument("--bias", type=_bool)
    p.add_argument("--two-actor", dest="two_actor", action="store_const", const=True)
    for f in dataclasses.fields(TrainingConfig):
        p.add_argument("--" + f.name.replace("_", "-"), dest=f.name, type=type(f.default))
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint on a protocol's test side")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--catalog", required=True)
    p.add_argument("--protocol", required=True, choices=evaluation.PROTOCOLS)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference check of all cell kinds")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--cases", type=int, default=20)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("validate", help="check sequence files (and a checkpoint)")
    p.add_argument("--catalog", required=True)
    p.add_argument("--checkpoint")
    p.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except DataError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TrainingError as exc:
        print(f"training failed: {exc}", file=sys.stderr)
        return EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
