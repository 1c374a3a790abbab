"""Desk-scale experiments on the synthetic corpus.

Each function builds its own corpus under a work directory, trains, and
returns a plain dict of measurements. The scripts in ``scripts/`` and the
acceptance tests both call these.
"""
from __future__ import annotations

import time
from pathlib import Path

import numpy as np

from . import synth
from .config import RunConfig, from_dict
from .frontend import MfccConfig
from .model import init_params
from .pipeline import INIT_STREAM, model_config, prepare, run_training
from .tensor import Tensor
from .training import evaluate_examples


def synthetic_corpus(workdir, utterances: int, seed: int = 0, d_mfcc: int = 13,
                     gender_shift: bool = False) -> Path:
    root = Path(workdir) / f"synth_u{utterances}_s{seed}_d{d_mfcc}{'_g' if gender_shift else ''}"
    if not (root / "manifest.tsv").exists():
        synth.generate(root, utterances, seed=seed, dim=d_mfcc, gender_shift=gender_shift)
    return root


def synthetic_config(corpus: Path, **overrides) -> RunConfig:
    train_over = overrides.pop("train", {})
    mfcc_over = overrides.pop("mfcc", {})
    raw = {"corpus": str(corpus), "embeddings": str(Path(corpus) / "embeddings.vec"),
           "mfcc": mfcc_over, "train": train_over, **overrides}
    raw.setdefault("d_w", mfcc_over.get("d_mfcc", MfccConfig().d_mfcc))
    return from_dict(raw)


def _params_of(result):
    return {k: Tensor(v) for k, v in result.params.items()}


def overfit(workdir, epochs: int = 200, l2_penalty: float | None = None, seed: int = 0,
            progress=None) -> dict:
    """H=64, d_e=50 on 50 synthetic utterances; accuracy on the training split."""
    corpus = synthetic_corpus(workdir, 50, seed=0)
    train_over = {"epochs": epochs, "early_stopping": False}
    if l2_penalty is not None:
        train_over["l2_penalty"] = l2_penalty
    cfg = synthetic_config(corpus, hidden=64, d=50, d_e=50, dev_fraction=0.0, seed=seed,
                           train=train_over)
    start = time.perf_counter()
    prepared = prepare(cfg)
    result, _ = run_training(cfg, progress=progress, prepared=prepared)
    mcfg = model_config(cfg, prepared.inventory)
    metrics = evaluate_examples(_params_of(result), mcfg, prepared.examples["train"],
                                prepared.inventory.pad, prepared.inventory.eops, greedy=False)
    return {"token_acc": metrics["token_acc"], "examples": len(prepared.examples["train"]),
            "epochs": len(result.history), "l2_penalty": cfg.train.l2_penalty,
            "seconds": time.perf_counter() - start,
            "loss_curve": [round(r["train_loss"], 4) for r in result.history]}


def chance_level(workdir, seed: int = 0, min_tokens: int = 1000) -> dict:
    """Untrained model accuracy on the synthetic test split against 1/V."""
    utterances = 50
    while True:
        corpus = synthetic_corpus(workdir, utterances, seed=seed)
        cfg = synthetic_config(corpus, hidden=64, d=50, d_e=50, seed=seed)
        prepared = prepare(cfg, splits=("test",))
        tokens = sum(int((e.phones != prepared.inventory.pad).sum())
                     for e in prepared.examples["test"])
        if tokens >= min_tokens:
            break
        utterances *= 2
    mcfg = model_config(cfg, prepared.inventory)
    params = init_params(mcfg, np.random.default_rng([seed, INIT_STREAM]))
    metrics = evaluate_examples(params, mcfg, prepared.examples["test"], prepared.inventory.pad,
                                prepared.inventory.eops, greedy=False)
    return {"token_acc": metrics["token_acc"], "chance": 1.0 / len(prepared.inventory),
            "vocab": len(prepared.inventory), "tokens": tokens}


# Both arms share everything but aux_mode; score is the best dev epoch.
AUX_SETUP = dict(hidden=64, d=50, d_e=50, m=1, dev_fraction=0.2,
                 train={"epochs": 100, "batch_size": 20, "early_stopping": False})


def aux_effect(workdir, seeds=range(5), utterances: int = 100, setup: dict | None = None,
               progress=None) -> dict:
    """Paired aux_mode=G vs none runs on the gender-shifted corpus, one pair per seed."""
    setup = dict(setup or AUX_SETUP)
    corpus = synthetic_corpus(workdir, utterances, seed=0, gender_shift=True)
    rows = []
    start = time.perf_counter()
    for seed in seeds:
        accs = {}
        for mode in ("none", "G"):
            cfg = synthetic_config(corpus, aux_mode=mode, seed=seed, **_copy(setup))
            result, _ = run_training(cfg)
            accs[mode] = max(r["dev_token_acc"] for r in result.history)
        rows.append({"seed": seed, "none": accs["none"], "G": accs["G"]})
        if progress:
            progress(rows[-1])
    wins = sum(r["G"] > r["none"] for r in rows)
    return {"rows": rows, "wins": wins, "runs": len(rows), "seconds": time.perf_counter() - start}


def _copy(setup: dict) -> dict:
    return {k: (dict(v) if isinstance(v, dict) else v) for k, v in setup.items()}


def determinism(workdir, config_overrides: dict | None = None) -> dict:
    """Train the same config twice in separate output dirs and compare artifacts."""
    from .pipeline import write_run
    from .training import read_history

    corpus = synthetic_corpus(workdir, 20, seed=0, d_mfcc=3)
    overrides = config_overrides or dict(mfcc={"d_mfcc": 3}, hidden=4, d=6, d_e=6, m=1,
                                         train={"epochs": 3, "batch_size": 16})
    outputs = []
    for run in ("a", "b"):
        cfg = synthetic_config(corpus, **_copy(overrides))
        result, meta = run_training(cfg, workers=1)
        outputs.append(write_run(Path(workdir) / f"determinism_{run}", cfg, result, meta))
    a, b = outputs
    ckpt_same = a["checkpoint"].read_bytes() == b["checkpoint"].read_bytes()
    hist_a, hist_b = read_history(a["history"]), read_history(b["history"])
    strip = [[{k: v for k, v in r.items() if k != "seconds"} for r in h] for h in (hist_a, hist_b)]
    return {"checkpoint_identical": ckpt_same, "history_identical_except_seconds": strip[0] == strip[1],
            "history_bytes_identical": a["history"].read_bytes() == b["history"].read_bytes(),
            "epochs": len(hist_a)}



def full_scale(corpus, embeddings, workdir, modes=("none", "DG"), seed: int = 0,
               overrides: dict | None = None, progress=None) -> dict:
    """Word2Vec-scale runs on a TIMIT-layout corpus; test token accuracy per aux mode."""
    from .pipeline import write_run

    base = dict(d_e=300, d_w=50, mfcc={"d_mfcc": 50}, seed=seed)
    base.update(overrides or {})
    results = {}
    for mode in modes:
        raw = {"corpus": str(corpus), "embeddings": str(embeddings), "aux_mode": mode, **_copy(base)}
        cfg = from_dict(raw)
        prepared = prepare(cfg)
        result, meta = run_training(cfg, progress=progress, prepared=prepared)
        write_run(Path(workdir) / f"full_{mode}", cfg, result, meta)
        mcfg = model_config(cfg, prepared.inventory)
        metrics = evaluate_examples(_params_of(result), mcfg, prepared.examples["test"],
                                    prepared.inventory.pad, prepared.inventory.eops, greedy=False)
        results[mode] = metrics["token_acc"]
    return results
