"""Run configuration: one JSON file drives every command."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .corpus import AUX_MODES, MAX_N
from .frontend import MfccConfig
from .training import TrainConfig


class RunConfigError(ValueError):
    """All validation problems of a config, reported together."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("invalid config:\n  " + "\n  ".join(self.errors))


@dataclass
class RunConfig:
    corpus: str = ""
    split: str | None = None          # defaults to <corpus>/split.tsv when present
    embeddings: str = ""
    output_dir: str = "runs/default"
    d_w: int = 13
    d_e: int = 50
    d: int = 50
    hidden: int = 64
    n: int | None = None              # None: 99th percentile of training word lengths
    m: int = 3
    aux_mode: str = "none"
    normalize_attention: bool = False
    dev_fraction: float = 0.1
    seed: int = 0
    mfcc: MfccConfig = field(default_factory=MfccConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    def validate(self) -> list[str]:
        errs = []
        if not self.corpus:
            errs.append("corpus: required")
        if not self.embeddings:
            errs.append("embeddings: required")
        for name in ("d_w", "d_e", "d", "hidden", "m"):
            value = getattr(self, name)
            if not isinstance(value, int) or isinstance(value, bool) or value < 1:
                errs.append(f"{name}: must be a positive integer, got {value!r}")
        if self.n is not None and (not isinstance(self.n, int) or not 1 <= self.n <= MAX_N):
            errs.append(f"n: must be null or an integer in [1, {MAX_N}], got {self.n!r}")
        if self.aux_mode not in AUX_MODES:
            errs.append(f"aux_mode: must be one of {list(AUX_MODES)}, got {self.aux_mode!r}")
        if not 0 <= self.dev_fraction < 1:
            errs.append(f"dev_fraction: must lie in [0, 1), got {self.dev_fraction}")
        if not isinstance(self.seed, int) or self.seed < 0:
            errs.append(f"seed: must be a non-negative integer, got {self.seed!r}")
        if self.d_w != self.mfcc.d_mfcc:
            errs.append(f"d_w ({self.d_w}) must equal mfcc.d_mfcc ({self.mfcc.d_mfcc})")
        errs += [f"mfcc.{e}" if not e.startswith("mfcc") else e for e in self.mfcc.validate()]
        errs += self.train.validate()
        return errs

    def to_dict(self) -> dict:
        out = asdict(self)
        out["train"].pop("seed", None)   # driven by the top-level seed
        return out

    def train_config(self, **overrides) -> TrainConfig:
        values = {**asdict(self.train), "seed": self.seed, **overrides}
        return TrainConfig(**values)


def _section(cls, raw, prefix: str, errs: list[str], skip=()):
    if not isinstance(raw, dict):
        errs.append(f"{prefix}: must be an object")
        return cls()
    names = {f.name for f in fields(cls)} - set(skip)
    for key in sorted(set(raw) - names):
        errs.append(f"{prefix}.{key}: unknown key")
    kwargs = {k: v for k, v in raw.items() if k in names}
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        errs.append(f"{prefix}: {exc}")
        return cls()


def from_dict(raw: dict, base_dir: Path | None = None) -> RunConfig:
    """Build and validate a config; relative paths resolve against ``base_dir``."""
    errs: list[str] = []
    if not isinstance(raw, dict):
        raise RunConfigError(["config root must be a JSON object"])
    top = {f.name for f in fields(RunConfig)}
    for key in sorted(set(raw) - top):
        errs.append(f"{key}: unknown key")
    kwargs = {k: v for k, v in raw.items() if k in top and k not in ("mfcc", "train")}
    kwargs["mfcc"] = _section(MfccConfig, raw.get("mfcc", {}), "mfcc", errs)
    kwargs["train"] = _section(TrainConfig, raw.get("train", {}), "train", errs, skip=("seed",))
    if "d_w" not in raw and "mfcc" in raw and "d_mfcc" in raw["mfcc"]:
        kwargs["d_w"] = raw["mfcc"]["d_mfcc"]
    cfg = RunConfig(**kwargs)
    if base_dir is not None:
        for name in ("corpus", "split", "embeddings", "output_dir"):
            value = getattr(cfg, name)
            if value and not Path(value).is_absolute():
                setattr(cfg, name, str((base_dir / value).resolve()))
    errs += cfg.validate()
    if errs:
        raise RunConfigError(errs)
    return cfg


def load(path) -> RunConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise RunConfigError([f"config file not found: {path}"]) from None
    except json.JSONDecodeError as exc:
        raise RunConfigError([f"{path}: not valid JSON ({exc})"]) from None
    return from_dict(raw, path.resolve().parent)


def dumps(cfg: RunConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n"
