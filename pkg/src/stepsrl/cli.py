"""Command-line entry point: ``python -m stepsrl <command>``.

Exit codes: 0 success, 1 runtime failure, 2 config or input error,
3 analysis-domain error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import config as run_config
from . import pipeline, synth
from .checkpoint import CheckpointError
from .corpus import CorpusError
from .embeddings import EmbeddingFormatError, load_vec_text, save_vec_text
from .evaluation import (AnalysisError, load_benchmark, pca_diff_vectors, phonetic_accuracy,
                         similarity_eval, word_representations, write_pca_points, write_pca_svg,
                         write_similarity_report)
from .frontend import ConfigError, WavFormatError

log = logging.getLogger("stepsrl")

EXIT_OK, EXIT_RUNTIME, EXIT_INPUT, EXIT_ANALYSIS = 0, 1, 2, 3
INPUT_ERRORS = (run_config.RunConfigError, pipeline.InputError, CorpusError, ConfigError,
                EmbeddingFormatError, WavFormatError, CheckpointError, FileNotFoundError)
LOG_LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO,
              "debug": logging.DEBUG}


def _setup_logging():
    level = os.environ.get("STEPSRL_LOG", "warn").lower()
    logging.basicConfig(level=LOG_LEVELS.get(level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    if level not in LOG_LEVELS:
        log.warning("STEPSRL_LOG=%r not recognised, using warn", level)


def _load_config(args) -> run_config.RunConfig:
    cfg = run_config.load(args.config)
    if getattr(args, "print_config", False):
        sys.stdout.write(run_config.dumps(cfg))
    return cfg


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_synth_corpus(args) -> int:
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_test"
        probe.write_bytes(b"")
        probe.unlink()
    except OSError as exc:
        raise pipeline.InputError(f"output directory not writable: {out} ({exc})") from None
    synth.generate(out, args.utterances, seed=args.seed, gender_shift=args.gender_shift,
                   dim=args.dim)
    print(f"wrote {args.utterances} utterances to {out}")
    return EXIT_OK


def cmd_prepare(args) -> int:
    cfg = _load_config(args)
    if args.print_config:
        return EXIT_OK
    prepared = pipeline.prepare(cfg)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary = {"n": prepared.n, "phones": prepared.inventory.phones,
               "vocab": len(prepared.inventory),
               "examples": {k: len(v) for k, v in prepared.examples.items()},
               "speakers": prepared.speakers}
    (out / "prepared.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n",
                                       encoding="utf-8")
    counts = ", ".join(f"{k}={len(v)}" for k, v in prepared.examples.items())
    print(f"n={prepared.n} vocab={len(prepared.inventory)} examples: {counts}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _load_config(args)
    if args.print_config:
        return EXIT_OK
    if args.epochs is not None:
        cfg.train.epochs = args.epochs
        errs = cfg.validate()
        if errs:
            raise run_config.RunConfigError(errs)

    def progress(row):
        log.info("epoch %d train_loss %.4f dev_token_acc %.4f", row["epoch"], row["train_loss"],
                 row["dev_token_acc"])

    result, meta = pipeline.run_training(cfg, workers=args.workers, progress=progress)
    out = Path(args.out or cfg.output_dir)
    paths = pipeline.write_run(out, cfg, result, meta)
    last = result.history[-1]
    print(f"trained {len(result.history)} epochs (best {result.best_epoch}), "
          f"dev token acc {last['dev_token_acc']:.4f}; wrote {', '.join(str(p) for p in paths.values())}")
    return EXIT_OK


def cmd_eval(args) -> int:
    loaded = pipeline.load_model(args.checkpoint)
    prepared = pipeline.prepare(loaded.run, loaded.inventory, loaded.n, splits=(args.split,))
    examples = prepared.examples[args.split]
    if not examples:
        raise pipeline.InputError(f"split {args.split!r} has no examples")
    out = Path(args.out or Path(args.checkpoint).parent)
    out.mkdir(parents=True, exist_ok=True)
    acc = phonetic_accuracy(loaded.params, loaded.model, examples, loaded.inventory.pad,
                            loaded.inventory.eops)
    acc["split"] = args.split
    (out / "accuracy.json").write_text(json.dumps(acc, indent=2, sort_keys=True) + "\n",
                                       encoding="utf-8")
    rows = []
    bench_files = sorted(Path(args.benchmarks).glob("*.tsv")) if args.benchmarks else []
    if not bench_files:
        log.warning("no benchmark files given: similarity report left empty")
    else:
        reps = word_representations(loaded.params, loaded.model, examples)
        for path in bench_files:
            bench = load_benchmark(path)
            try:
                res = similarity_eval(reps, bench)
            except AnalysisError as exc:
                log.warning("%s", exc)
                continue
            rows.append((bench.name, res["used_pairs"], res["rho"]))
    write_similarity_report(rows, out / "similarity_report.csv")
    print(f"{args.split}: token_acc {acc['token_acc']:.4f} seq_acc {acc['seq_acc']:.4f} "
          f"({acc['examples']} examples); reports in {out}")
    return EXIT_OK


def _representations(checkpoint_path, split):
    loaded = pipeline.load_model(checkpoint_path)
    prepared = pipeline.prepare(loaded.run, loaded.inventory, loaded.n, splits=(split,))
    return loaded, word_representations(loaded.params, loaded.model, prepared.examples[split])


def cmd_embed(args) -> int:
    loaded, reps = _representations(args.checkpoint, args.split)
    save_vec_text({w: r.vector for w, r in reps.items()}, args.out, loaded.model.d_e)
    print(f"wrote {len(reps)} word vectors to {args.out}")
    return EXIT_OK


def read_pairs(path) -> list[tuple[str, str]]:
    pairs = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.replace(",", " ").split()
        if len(parts) != 2:
            raise pipeline.InputError(f"{path}:{lineno}: expected two words per line")
        pairs.append((parts[0].lower(), parts[1].lower()))
    return pairs


def cmd_analyze(args) -> int:
    pairs = read_pairs(args.pairs)
    if args.vectors:
        table = load_vec_text(args.vectors)
        reps = {w: table.get(w) for w in table.words}
    elif args.checkpoint:
        _, reps = _representations(args.checkpoint, args.split)
    else:
        raise pipeline.InputError("analyze needs --vectors or --checkpoint")
    result = pca_diff_vectors(reps, pairs)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_pca_points(result, out / "pca_points.csv")
    if args.svg:
        write_pca_svg(result, out / "pca_plot.svg")
    print(f"projected {len(result.labels)} pairs ({len(result.skipped)} skipped) into {out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stepsrl", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth-corpus", help="write a synthetic aligned corpus")
    s.add_argument("--out", required=True)
    s.add_argument("--utterances", type=int, default=50)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--dim", type=int, default=13, help="text embedding size (match d_mfcc)")
    s.add_argument("--gender-shift", action="store_true",
                   help="relabel 'a' as 'ah' for female speakers")
    s.set_defaults(func=cmd_synth_corpus)

    for name, func, helptext in (("prepare", cmd_prepare, "validate corpus and summarise splits"),
                                 ("train", cmd_train, "train and write checkpoint + history")):
        c = sub.add_parser(name, help=helptext)
        c.add_argument("--config", required=True)
        c.add_argument("--print-config", action="store_true",
                       help="print the resolved config with defaults and exit")
        if name == "train":
            c.add_argument("--workers", type=int, default=1)
            c.add_argument("--epochs", type=int, default=None, help="override train.epochs")
            c.add_argument("--out", default=None, help="override output_dir")
        c.set_defaults(func=func)

    e = sub.add_parser("eval", help="accuracy and word-similarity reports")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--split", choices=pipeline.SPLITS, default="test")
    e.add_argument("--benchmarks", default=None, help="directory of word_a/word_b/score TSVs")
    e.add_argument("--out", default=None)
    e.set_defaults(func=cmd_eval)

    m = sub.add_parser("embed", help="export averaged word vectors as .vec text")
    m.add_argument("--checkpoint", required=True)
    m.add_argument("--split", choices=pipeline.SPLITS, default="train")
    m.add_argument("--out", required=True)
    m.set_defaults(func=cmd_embed)

    a = sub.add_parser("analyze", help="PCA of word-pair difference vectors")
    a.add_argument("--pairs", required=True)
    a.add_argument("--vectors", default=None, help=".vec file from `embed`")
    a.add_argument("--checkpoint", default=None)
    a.add_argument("--split", choices=pipeline.SPLITS, default="train")
    a.add_argument("--out", default=".")
    a.add_argument("--svg", action="store_true")
    a.set_defaults(func=cmd_analyze)
    return p


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    if getattr(args, "workers", 1) < 1:
        print("error: --workers must be >= 1", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.func(args)
    except INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except AnalysisError as exc:
        print(f"analysis error: {exc}", file=sys.stderr)
        return EXIT_ANALYSIS
    except Exception as exc:  # noqa: BLE001 - top-level reporter
        log.debug("traceback", exc_info=True)
        print(f"failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
