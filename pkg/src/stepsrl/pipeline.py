"""Corpus -> examples -> model plumbing shared by the CLI and the experiment scripts."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import checkpoint
from .config import RunConfig
from .corpus import (PhonemeInventory, aux_dim, build_examples, choose_n, hold_out_dev,
                     load_corpus, split_train_test, word_features)
from .embeddings import load_vec_text
from .model import ModelConfig, init_params, param_shapes
from .tensor import Tensor
from .training import TrainResult, train, write_history

log = logging.getLogger(__name__)

# named RNG substreams derived from the run seed
INIT_STREAM, DEV_STREAM = 0, 4
SPLITS = ("train", "dev", "test")


class InputError(ValueError):
    """Missing or incompatible input file."""


@dataclass
class Prepared:
    inventory: PhonemeInventory
    n: int
    examples: dict          # split name -> list[TrainingExample]
    speakers: dict          # split name -> sorted speaker ids


def split_records(cfg: RunConfig, records):
    split_path = cfg.split
    if split_path is None and (Path(cfg.corpus) / "split.tsv").exists():
        split_path = str(Path(cfg.corpus) / "split.tsv")
    if split_path is None:
        log.warning("no split file: every speaker goes to train, test split is empty")
        train_recs, test_recs = list(records), []
    else:
        if not Path(split_path).exists():
            raise InputError(f"split file not found: {split_path}")
        train_recs, test_recs = split_train_test(records, split_path)
    train_recs, dev_recs = hold_out_dev(train_recs, cfg.dev_fraction, [cfg.seed, DEV_STREAM])
    return {"train": train_recs, "dev": dev_recs, "test": test_recs}


def load_embeddings(cfg: RunConfig):
    path = Path(cfg.embeddings)
    if not path.exists():
        raise InputError(f"embedding file not found: {path}")
    table = load_vec_text(path)
    if table.dim != cfg.d_w:
        raise InputError(f"{path}: embedding dim {table.dim} != d_w {cfg.d_w}")
    return table


def prepare(cfg: RunConfig, inventory: PhonemeInventory | None = None, n: int | None = None,
            splits=SPLITS) -> Prepared:
    """Load the corpus and build examples for the requested splits.

    The inventory spans every phone in the corpus; n comes from the training
    split unless fixed by the config or by a checkpoint.
    """
    if not Path(cfg.corpus).is_dir():
        raise InputError(f"corpus directory not found: {cfg.corpus}")
    table = load_embeddings(cfg)
    records = load_corpus(cfg.corpus)
    parts = split_records(cfg, records)
    inventory = inventory or PhonemeInventory.from_records(records)
    wanted = set(splits) | ({"train"} if n is None and cfg.n is None else set())
    feats = {name: word_features(parts[name], cfg.mfcc) for name in SPLITS if name in wanted}
    if n is None:
        n = cfg.n or choose_n(mat.shape[0] for mats in feats["train"].values() for mat in mats)
    examples = {name: build_examples(parts[name], cfg.m, inventory, table, cfg.aux_mode,
                                     cfg.mfcc, n=n, features=feats[name])
                for name in splits}
    speakers = {name: sorted({r.speaker_id for r in parts[name]}) for name in SPLITS}
    return Prepared(inventory, n, examples, speakers)


def model_config(cfg: RunConfig, inventory: PhonemeInventory) -> ModelConfig:
    return ModelConfig(d_mfcc=cfg.mfcc.d_mfcc, d_w=cfg.d_w, hidden=cfg.hidden, d=cfg.d,
                       d_e=cfg.d_e, vocab=len(inventory), d_a=aux_dim(cfg.aux_mode),
                       sops=inventory.sops, normalize_attention=cfg.normalize_attention)


def run_training(cfg: RunConfig, workers: int = 1, progress=None,
                 prepared: Prepared | None = None) -> tuple[TrainResult, dict]:
    prepared = prepared or prepare(cfg)
    mcfg = model_config(cfg, prepared.inventory)
    params = init_params(mcfg, np.random.default_rng([cfg.seed, INIT_STREAM]))
    tcfg = cfg.train_config(workers=workers)
    result = train(prepared.examples["train"], prepared.examples["dev"], mcfg, tcfg, params,
                   prepared.inventory.pad, prepared.inventory.eops, progress=progress)
    meta = {"run": cfg.to_dict(), "model": mcfg.to_dict(), "phones": prepared.inventory.phones,
            "n": prepared.n, "best_epoch": result.best_epoch}
    return result, meta


def write_run(out_dir, cfg: RunConfig, result: TrainResult, meta: dict) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"checkpoint": out / "checkpoint.step", "history": out / "history.csv",
             "config": out / "resolved_config.json"}
    checkpoint.save(paths["checkpoint"], result.params, meta)
    write_history(result.history, paths["history"])
    paths["config"].write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n",
                               encoding="utf-8")
    return paths


@dataclass
class LoadedModel:
    run: RunConfig
    model: ModelConfig
    inventory: PhonemeInventory
    n: int
    params: dict


def shape_diff(expected: dict, found: dict) -> list[str]:
    lines = []
    for name in sorted(set(expected) | set(found)):
        e, f = expected.get(name), found.get(name)
        if e != f:
            lines.append(f"  {name}: expected {e if e is not None else 'absent'}, "
                         f"found {f if f is not None else 'absent'}")
    return lines


def load_model(path, cfg_override: RunConfig | None = None) -> LoadedModel:
    """Read a checkpoint and check every tensor shape against its stored config."""
    from .config import from_dict

    tensors, meta = checkpoint.load(path)
    if not meta or not {"run", "model", "phones", "n"} <= set(meta):
        raise checkpoint.CheckpointError(f"{path}: checkpoint carries no run config")
    run = cfg_override or from_dict(meta["run"])
    inventory = PhonemeInventory(meta["phones"])
    mcfg = model_config(run, inventory)
    expected = {k: tuple(v) for k, v in param_shapes(mcfg).items()}
    found = {k: tuple(v.shape) for k, v in tensors.items()}
    diff = shape_diff(expected, found)
    if diff:
        raise InputError("checkpoint does not match config:\n" + "\n".join(diff))
    params = {k: Tensor(tensors[k], name=k) for k in expected}
    return LoadedModel(run, mcfg, inventory, int(meta["n"]), params)
