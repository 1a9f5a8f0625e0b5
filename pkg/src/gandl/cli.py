"""Command-line entry point: ``gandl <command> [options]``.

Exit codes: 0 success, 1 usage, 2 invalid input or config, 3 runtime
failure. Diagnostics are one line on stderr starting with ``error:``.
"""

from __future__ import annotations

import argparse
import dataclasses
import datetime as _dt
import hashlib
import json
import logging
import platform
import sys
from importlib import metadata
from pathlib import Path

import numpy as np

EXIT_USAGE = 1
EXIT_INVALID = 2
EXIT_RUNTIME = 3

COMMANDS = ("synth", "train", "embed", "fit-axes", "score", "dose-response",
            "eval-controls", "eval-zeroshot", "gradcheck")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{message}\n{self.format_usage().strip()}")


def _write(path, data):
    from .screen.io import atomic_write_bytes
    atomic_write_bytes(path, data if isinstance(data, bytes) else data.encode("utf-8"))


def _sha256_file(path):
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _versions():
    out = {"python": platform.python_version(), "numpy": np.__version__}
    for dist in ("artifact", "scikit-learn", "numba"):
        try:
            out[dist] = metadata.version(dist)
        except metadata.PackageNotFoundError:
            out[dist] = None
    return out


def _provenance(out_dir, args, cfg, inputs):
    record = {
        "command": args.command,
        "argv": args.argv,
        "config_sha256": cfg.sha256(),
        "config": cfg.to_dict(),
        "seeds": cfg.seeds(),
        "inputs": {str(p): _sha256_file(p) for p in inputs if p is not None and Path(p).is_file()},
        "versions": _versions(),
        "created": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    _write(Path(out_dir) / "run.json", json.dumps(record, indent=1, sort_keys=True) + "\n")


def _path(args, cfg, name, required=True):
    value = getattr(args, name, None) or cfg.paths.get(name)
    if value is None and required:
        raise UsageError(f"--{name.replace('_', '-')} is required (or set paths.{name} in the config)")
    return Path(value) if value is not None else None


def _out(args, cfg):
    out = args.out or cfg.paths.get("out")
    if out is None:
        raise UsageError("--out is required")
    return Path(out)


def _records_and_embeddings(args, cfg):
    from .screen.io import load_manifest
    from .tables import align, read_embeddings
    manifest = _path(args, cfg, "manifest")
    emb_path = _path(args, cfg, "embeddings")
    records = load_manifest(manifest, check_images=False)
    ids, X = read_embeddings(emb_path)
    return records, align(records, ids, X), [manifest, emb_path]


def _featurizer(args, cfg, n_channels):
    """Return (function images -> embeddings, descriptor, input paths)."""
    from .evalkit import baseline_featurizer
    if args.featurizer == "baseline":
        seed, dim = cfg.eval.baseline_seed, cfg.eval.baseline_feature_dim
        return (lambda X: baseline_featurizer(X, seed, dim),
                {"kind": "baseline", "seed": seed, "feature_dim": dim}, n_channels, [])
    from .gan.checkpoint import load_checkpoint
    from .gan.estimator import critic_embeddings
    ckpt = _path(args, cfg, "checkpoint")
    state = load_checkpoint(ckpt)
    desc = {"kind": "gan", "checkpoint": str(ckpt), "step": state.step}
    return (lambda X: critic_embeddings(state, X), desc, state.config.channels, [ckpt])


# commands -----------------------------------------------------------------

def cmd_synth(args, cfg):
    from .screen.generate import generate_synthetic_screen
    out = _out(args, cfg)
    records = generate_synthetic_screen(cfg.screen, out)
    _provenance(out, args, cfg, [])
    print(f"wrote {len(records)} wells to {out / 'manifest.csv'}")


def cmd_train(args, cfg):
    from .gan.checkpoint import load_checkpoint, save_checkpoint
    from .gan.training import train
    from .screen.io import load_images, load_manifest
    out = _out(args, cfg)
    manifest = _path(args, cfg, "manifest")
    gan_cfg = cfg.gan if args.steps is None else dataclasses.replace(cfg.gan, steps=args.steps)
    records = load_manifest(manifest)
    images = load_images(manifest, records)
    state = None
    if args.resume:
        state = load_checkpoint(args.resume)
        # the step budget is a run length, not part of the model's identity
        if dataclasses.replace(state.config, steps=gan_cfg.steps) != gan_cfg:
            raise ValueError("checkpoint config differs from the run config; cannot resume")
        state.config = gan_cfg
    state, history = train(gan_cfg, images, state=state, log_every=args.log_every)
    save_checkpoint(state, out / "checkpoint.gdl")
    _write(out / "history.json", json.dumps(history, indent=1) + "\n")
    _provenance(out, args, dataclasses.replace(cfg, gan=gan_cfg), [manifest, args.resume])
    print(f"trained to step {state.step}; checkpoint {out / 'checkpoint.gdl'}")


def cmd_embed(args, cfg):
    from .evalkit import prepare_foreign_images
    from .screen.io import load_images, load_manifest
    from .tables import embeddings_csv
    out = _out(args, cfg)
    manifest = _path(args, cfg, "manifest")
    records = load_manifest(manifest)
    images = load_images(manifest, records)
    featurize, desc, channels, inputs = _featurizer(args, cfg, images.shape[1] - (args.drop_channel is not None))
    X = featurize(prepare_foreign_images(images, args.drop_channel, channels))
    _write(out / "embeddings.csv", embeddings_csv([r.well_id for r in records], X))
    _write(out / "featurizer.json", json.dumps(desc, indent=1, sort_keys=True) + "\n")
    _provenance(out, args, cfg, [manifest, *inputs])
    print(f"embedded {len(records)} wells ({X.shape[1]} features)")


def cmd_fit_axes(args, cfg):
    from . import axes
    from .screen.io import Group
    out = _out(args, cfg)
    records, X, inputs = _records_and_embeddings(args, cfg)
    if args.kind == "EFFECTIVENESS":
        keep = [i for i, r in enumerate(records) if r.is_control
                and (args.cell_line is None or r.cell_line == args.cell_line)]
        labels = [1.0 if records[i].group is Group.POS_CTRL else -1.0 for i in keep]
    else:
        lines = sorted({r.cell_line for r in records})
        positive = args.positive or (lines[-1] if lines else None)
        if len(lines) != 2:
            raise ValueError(f"CELL_LINE frames need exactly two cell lines, found {lines}")
        keep = list(range(len(records)))
        labels = [1.0 if r.cell_line == positive else -1.0 for r in records]
    if not keep:
        raise ValueError("no wells to fit the frame on")
    frame = axes.fit_frame(X[keep], np.asarray(labels), axes.FrameKind(args.kind), cfg.svm)
    on, off = axes.to_plot_coords(frame, *axes.project(frame, X))
    _write(out / "frame.json", json.dumps(frame.to_dict(), indent=1, sort_keys=True) + "\n")
    _write(out / "points.csv", axes.points_to_csv(records, np.atleast_1d(on), np.atleast_1d(off)))
    _provenance(out, args, cfg, inputs)
    print(f"fitted {args.kind} frame on {len(keep)} wells")


def _frame_and_norms(args, cfg):
    from . import axes
    records, X, inputs = _records_and_embeddings(args, cfg)
    frame_path = _path(args, cfg, "frame")
    frame = axes.PerturbationFrame.from_dict(json.loads(Path(frame_path).read_text(encoding="utf-8")))
    norms = axes.fit_normalizations(frame, X, records)
    return records, X, frame, norms, inputs + [frame_path]


def cmd_score(args, cfg):
    import csv
    import io

    from . import axes
    from .screen.io import format_conc
    out = _out(args, cfg)
    records, X, frame, norms, inputs = _frame_and_norms(args, cfg)
    on_raw, off_raw = axes.project(frame, X)
    on, off = axes.to_plot_coords(frame, on_raw, off_raw)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["well_id", "cell_line", "group", "compound", "concentration_um", "on", "off", "efficacy"])
    for i, r in enumerate(records):
        w.writerow([r.well_id, r.cell_line, r.group.value, r.compound, format_conc(r.concentration_um),
                    repr(float(on[i])), repr(float(off[i])),
                    repr(axes.efficacy_score(norms[r.cell_line], on_raw[i]))])
    _write(out / "scores.csv", buf.getvalue())
    _write(out / "normalization.json",
           json.dumps({k: dataclasses.asdict(v) for k, v in norms.items()}, indent=1, sort_keys=True) + "\n")
    _provenance(out, args, cfg, inputs)
    print(f"scored {len(records)} wells")


def cmd_dose_response(args, cfg):
    from . import axes
    out = _out(args, cfg)
    records, X, frame, norms, inputs = _frame_and_norms(args, cfg)
    curves = axes.dose_response(records, X, frame, norms)
    _write(out / "curves.csv", axes.curves_to_csv(curves))
    _write(out / "curves.json", axes.curves_to_json(curves) + "\n")
    _provenance(out, args, cfg, inputs)
    hits = sum(c.effective_at is not None for c in curves)
    print(f"{len(curves)} curves, {hits} cross the efficacy threshold")


def _write_report(out, report):
    _write(out / "report.json", report.to_json() + "\n")
    _write(out / "confusion.csv", report.confusion_csv())
    print(f"{report.task}: accuracy {report.accuracy:.4f}")


def cmd_eval_controls(args, cfg):
    from . import evalkit
    out = _out(args, cfg)
    records, X, inputs = _records_and_embeddings(args, cfg)
    desc = {"embeddings": str(inputs[1])}
    if args.task == "cell-line":
        report = evalkit.cell_line_classification(X, records, cfg.eval.split_seed, cfg.svm, desc)
    else:
        report = evalkit.controls_classification(X, records, cfg.eval.split_seed, args.cell_line,
                                                 cfg.svm, desc)
    _write_report(out, report)
    _provenance(out, args, cfg, inputs)


def cmd_eval_zeroshot(args, cfg):
    from . import evalkit
    from .screen.io import load_images, load_manifest
    out = _out(args, cfg)
    manifest = _path(args, cfg, "manifest")
    dropped = args.drop_channel if args.drop_channel is not None else cfg.eval.dropped_channel
    k = args.k_classes or cfg.eval.k_classes
    records = load_manifest(manifest)
    images = load_images(manifest, records)
    featurize, desc, channels, inputs = _featurizer(args, cfg, images.shape[1] - (dropped is not None))
    report = evalkit.zero_shot_eval(featurize, (records, images), dropped, k, cfg.eval.split_seed,
                                    channels, cfg.svm, desc)
    _write_report(out, report)
    _provenance(out, args, cfg, [manifest, *inputs])


def cmd_gradcheck(args, cfg):
    from .gradsuite import run_suite, summarize
    results = run_suite()
    worst = summarize(results)
    for name, r in worst.items():
        print(f"{name}\t{r.max_rel_error:.3e}\t{'ok' if r.passed else 'FAIL'}")
    if args.out:
        out = Path(args.out)
        _write(out / "gradcheck.json", json.dumps(
            [dataclasses.asdict(r) for r in results], indent=1) + "\n")
        _provenance(out, args, cfg, [])
    failed = [n for n, r in worst.items() if not r.passed]
    if failed:
        raise RuntimeError(f"gradient check failed for {', '.join(failed)}")


HANDLERS = {
    "synth": cmd_synth, "train": cmd_train, "embed": cmd_embed, "fit-axes": cmd_fit_axes,
    "score": cmd_score, "dose-response": cmd_dose_response, "eval-controls": cmd_eval_controls,
    "eval-zeroshot": cmd_eval_zeroshot, "gradcheck": cmd_gradcheck,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="RunConfig JSON file")
    common.add_argument("--out", help="output directory")
    common.add_argument("--threads", type=int, default=None, help="cap on native threads")
    common.add_argument("--standardize", action="store_true",
                        help="z-score features inside every SVM fit (off by default)")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="gandl", description="Adversarial self-supervised featurizer for "
                     "high-content screens: data, training, embeddings, axes and evaluations.")
    sub = parser.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    sub.add_parser("synth", parents=[common], help="render a synthetic screen")

    p = sub.add_parser("train", parents=[common], help="train the GAN on a manifest")
    p.add_argument("--manifest")
    p.add_argument("--steps", type=int)
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--log-every", type=int, default=100)

    def featurizer_opts(p):
        p.add_argument("--manifest")
        p.add_argument("--checkpoint")
        p.add_argument("--featurizer", choices=("gan", "baseline"), default="gan")
        p.add_argument("--drop-channel", type=int)

    featurizer_opts(sub.add_parser("embed", parents=[common], help="embed every well"))

    p = sub.add_parser("fit-axes", parents=[common], help="fit an On/Off perturbation frame")
    p.add_argument("--manifest")
    p.add_argument("--embeddings")
    p.add_argument("--kind", choices=("EFFECTIVENESS", "CELL_LINE"), default="EFFECTIVENESS")
    p.add_argument("--cell-line", help="restrict an EFFECTIVENESS frame to one line's controls")
    p.add_argument("--positive", help="cell line placed on the positive On side")

    for name, text in (("score", "efficacy score per well"),
                       ("dose-response", "dose-response curves per compound")):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument("--manifest")
        p.add_argument("--embeddings")
        p.add_argument("--frame")

    p = sub.add_parser("eval-controls", parents=[common], help="linear-probe accuracy")
    p.add_argument("--manifest")
    p.add_argument("--embeddings")
    p.add_argument("--task", choices=("controls", "cell-line"), default="controls")
    p.add_argument("--cell-line")

    p = sub.add_parser("eval-zeroshot", parents=[common], help="cell-type probe on a foreign screen")
    featurizer_opts(p)
    p.add_argument("--k-classes", type=int)

    sub.add_parser("gradcheck", parents=[common], help="finite-difference gradient suite")
    return parser


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    from .gan.training import TrainingDiverged
    from .runconfig import load_run_config
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(f"error: usage: {' '.join(str(exc).split())}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    args.argv = argv
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = load_run_config(args.config)
        if args.standardize:
            cfg = dataclasses.replace(cfg, svm=dataclasses.replace(cfg.svm, standardize=True))
        if args.threads is not None:
            if args.threads < 1:
                raise UsageError("--threads must be positive")
            from threadpoolctl import threadpool_limits
            threadpool_limits(limits=args.threads)
        HANDLERS[args.command](args, cfg)
    except UsageError as exc:
        print(f"error: usage: {' '.join(str(exc).split())}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, KeyError, IndexError) as exc:
        print(f"error: invalid: {' '.join(str(exc).split())}", file=sys.stderr)
        return EXIT_INVALID
    except (OSError, RuntimeError, TrainingDiverged) as exc:
        print(f"error: runtime: {' '.join(str(exc).split())}", file=sys.stderr)
        return EXIT_RUNTIME
    return 0


if __name__ == "__main__":
    sys.exit(main())
