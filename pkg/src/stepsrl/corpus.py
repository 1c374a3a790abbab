"""Aligned speech corpus ingestion and training-example construction.

Corpus layout::

    root/manifest.tsv      utterance_id  wav_path  speaker_id  gender  dialect
    root/<id>.words        word start_sample end_sample   (one per line)
    root/<id>.phones       word_index  phone phone ...    (one per line)

``wav_path`` is relative to ``root`` unless absolute.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .embeddings import EmbeddingTable, lookup
from .frontend import MfccConfig, mfcc, pad_to_n, read_wav, silence_vector

log = logging.getLogger(__name__)

SEQ_LEN = 50
SPECIALS = ("[SOPS]", "[SEP]", "[PAD]", "[EOPS]")
AUX_MODES = ("none", "D", "G", "DG")
N_DIALECTS = 8
GENDERS = ("M", "F")
MAX_N = 128


class CorpusError(ValueError):
    pass


class PhonemeInventory:
    """Corpus phones (sorted) followed by the four special tokens."""

    def __init__(self, phones):
        self.phones = sorted(set(phones))
        self.symbols = self.phones + list(SPECIALS)
        self._ids = {s: i for i, s in enumerate(self.symbols)}
        p = len(self.phones)
        self.sops, self.sep, self.pad, self.eops = p, p + 1, p + 2, p + 3

    @classmethod
    def from_records(cls, records) -> PhonemeInventory:
        return cls(p for r in records for w in r.words for p in w.phones)

    def __len__(self):
        return len(self.symbols)

    def __eq__(self, other):
        return isinstance(other, PhonemeInventory) and self.symbols == other.symbols

    def id(self, symbol: str) -> int:
        try:
            return self._ids[symbol]
        except KeyError:
            raise CorpusError(f"phone {symbol!r} not in inventory") from None

    def is_special(self, token: int) -> bool:
        return token >= len(self.phones)

    def encode(self, phones, k: int = SEQ_LEN) -> np.ndarray:
        """SOPS p1 SEP p2 ... pj EOPS PAD...; phones that would overflow ``k`` are dropped."""
        max_phones = (k - 1) // 2
        phones = list(phones)
        if len(phones) > max_phones:
            log.warning("phone sequence of %d truncated to %d", len(phones), max_phones)
            phones = phones[:max_phones]
        seq = [self.sops]
        for j, p in enumerate(phones):
            if j:
                seq.append(self.sep)
            seq.append(self.id(p))
        seq.append(self.eops)
        seq.extend([self.pad] * (k - len(seq)))
        return np.array(seq, dtype=np.int64)

    def decode(self, ids) -> list[str]:
        """Phones up to the first EOPS, specials stripped."""
        out = []
        for t in ids:
            t = int(t)
            if t == self.eops:
                break
            if not self.is_special(t):
                out.append(self.symbols[t])
        return out

    def to_json(self) -> str:
        return json.dumps({"phones": self.phones})

    @classmethod
    def from_json(cls, text: str) -> PhonemeInventory:
        return cls(json.loads(text)["phones"])


@dataclass
class WordAlignment:
    word: str
    start: int
    end: int
    phones: list[str]


@dataclass
class UtteranceRecord:
    utt_id: str
    wav_path: Path
    speaker_id: str
    gender: str
    dialect: int
    words: list[WordAlignment] = field(default_factory=list)


@dataclass
class TrainingExample:
    target: np.ndarray      # n x d_mfcc
    left: np.ndarray        # m x n x d_mfcc
    right: np.ndarray       # m x n x d_mfcc
    text: np.ndarray        # (2m+1) x d_w
    aux: np.ndarray         # d_a
    phones: np.ndarray      # k token ids
    word: str = ""
    utt_id: str = ""
    speaker_id: str = ""


# ---------------------------------------------------------------------------
# loading
# ---------------------------------------------------------------------------

def _read_words(path: Path, utt_id: str):
    words = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            if len(parts) != 3:
                raise CorpusError(f"{path}:{lineno}: expected 'word start end'")
            try:
                start, end = int(parts[1]), int(parts[2])
            except ValueError:
                raise CorpusError(f"{path}:{lineno}: non-integer sample bound") from None
            words.append(WordAlignment(parts[0], start, end, []))
    return words


def _read_phones(path: Path, words):
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts:
                continue
            try:
                idx = int(parts[0])
            except ValueError:
                raise CorpusError(f"{path}:{lineno}: word index must be an integer") from None
            if not 0 <= idx < len(words):
                raise CorpusError(f"{path}:{lineno}: word index {idx} out of range")
            words[idx].phones.extend(parts[1:])


def _validate(rec: UtteranceRecord):
    prev_end = 0
    for i, w in enumerate(rec.words):
        if w.start < 0 or w.end <= w.start:
            raise CorpusError(f"utterance {rec.utt_id}: word {i} ({w.word}) has empty or negative span")
        if w.start < prev_end:
            raise CorpusError(f"utterance {rec.utt_id}: word {i} ({w.word}) overlaps the previous word")
        if not w.phones:
            raise CorpusError(f"utterance {rec.utt_id}: word {i} ({w.word}) has no phones")
        prev_end = w.end


def load_corpus(root) -> list[UtteranceRecord]:
    root = Path(root)
    manifest = root / "manifest.tsv"
    if not manifest.exists():
        raise CorpusError(f"missing manifest: {manifest}")
    records = []
    with open(manifest, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip("\r\n").split("\t")
            if parts == [""] or parts[0] == "utterance_id":
                continue
            where = f"{manifest}:{lineno}"
            if len(parts) != 5:
                raise CorpusError(f"{where}: expected 5 tab-separated columns, got {len(parts)}")
            utt_id, wav, speaker, gender, dialect = parts
            if gender not in GENDERS:
                raise CorpusError(f"{where}: gender must be M or F, got {gender!r}")
            if not dialect.isdigit() or not 1 <= int(dialect) <= N_DIALECTS:
                raise CorpusError(f"{where}: dialect must be 1..8, got {dialect!r}")
            wav_path = Path(wav) if Path(wav).is_absolute() else root / wav
            if not wav_path.exists():
                raise CorpusError(f"{where}: missing audio {wav_path}")
            words_path, phones_path = root / f"{utt_id}.words", root / f"{utt_id}.phones"
            for p in (words_path, phones_path):
                if not p.exists():
                    raise CorpusError(f"{where}: missing alignment file {p}")
            words = _read_words(words_path, utt_id)
            _read_phones(phones_path, words)
            rec = UtteranceRecord(utt_id, wav_path, speaker, gender, int(dialect), words)
            _validate(rec)
            records.append(rec)
    return records


# ---------------------------------------------------------------------------
# features and examples
# ---------------------------------------------------------------------------

def word_features(records, config: MfccConfig) -> dict[str, list[np.ndarray]]:
    """Unpadded MFCC matrix for every word, keyed by utterance id."""
    feats = {}
    for rec in records:
        samples = read_wav(rec.wav_path).samples
        mats = []
        for w in rec.words:
            if w.end > samples.size:
                raise CorpusError(f"utterance {rec.utt_id}: word {w.word} ends past the audio")
            mats.append(mfcc(samples[w.start:w.end], config).astype(np.float32))
        feats[rec.utt_id] = mats
    return feats


def choose_n(frame_lengths) -> int:
    """99th-percentile word length in frames, capped at 128."""
    lengths = np.asarray(list(frame_lengths))
    if lengths.size == 0:
        return 1
    return int(min(MAX_N, max(1, math.ceil(np.percentile(lengths, 99)))))


def aux_vector(gender: str, dialect: int, mode: str) -> np.ndarray:
    """Dialect one-hot (8) then gender one-hot (2, M first), per ``mode``."""
    if mode not in AUX_MODES:
        raise CorpusError(f"aux_mode must be one of {AUX_MODES}, got {mode!r}")
    parts = []
    if "D" in mode:
        d = np.zeros(N_DIALECTS, dtype=np.float32)
        d[dialect - 1] = 1.0
        parts.append(d)
    if "G" in mode:
        g = np.zeros(len(GENDERS), dtype=np.float32)
        g[GENDERS.index(gender)] = 1.0
        parts.append(g)
    return np.concatenate(parts) if parts else np.zeros(0, dtype=np.float32)


def aux_dim(mode: str) -> int:
    return {"none": 0, "D": N_DIALECTS, "G": 2, "DG": N_DIALECTS + 2}[mode]


def build_examples(records, m: int, inventory: PhonemeInventory, embeddings: EmbeddingTable,
                   aux_mode: str, config: MfccConfig, n: int | None = None,
                   features: dict | None = None) -> list[TrainingExample]:
    """One example per word occurrence; context stops at utterance edges.

    Missing context slots get silence segments and zero text rows. Words are
    lowercased before embedding lookup.
    """
    if m < 1:
        raise CorpusError(f"context window m must be >= 1, got {m}")
    if embeddings.dim != config.d_mfcc:
        raise CorpusError(f"embedding dim {embeddings.dim} != d_mfcc {config.d_mfcc}")
    if features is None:
        features = word_features(records, config)
    if n is None:
        n = choose_n(mat.shape[0] for mats in features.values() for mat in mats)
    silence = np.tile(silence_vector(config).astype(np.float32), (n, 1))
    zero_text = np.zeros(embeddings.dim, dtype=np.float32)

    examples = []
    for rec in records:
        segs = [pad_to_n(mat, n, config).frames.astype(np.float32) for mat in features[rec.utt_id]]
        texts = [np.asarray(lookup(embeddings, w.word.lower()), dtype=np.float32) for w in rec.words]
        aux = aux_vector(rec.gender, rec.dialect, aux_mode)
        count = len(rec.words)

        def seg(j):
            return segs[j] if 0 <= j < count else silence

        def txt(j):
            return texts[j] if 0 <= j < count else zero_text

        for t, w in enumerate(rec.words):
            left = np.stack([seg(j) for j in range(t - m, t)])
            right = np.stack([seg(j) for j in range(t + 1, t + 1 + m)])
            text = np.stack([txt(j) for j in range(t - m, t + m + 1)])
            examples.append(TrainingExample(
                target=segs[t], left=left, right=right, text=text, aux=aux.copy(),
                phones=inventory.encode(w.phones), word=w.word.lower(),
                utt_id=rec.utt_id, speaker_id=rec.speaker_id))
    return examples


# ---------------------------------------------------------------------------
# splits
# ---------------------------------------------------------------------------

def read_split(path) -> dict[str, str]:
    """Speaker partition file: ``<train|test>\\t<speaker_id>`` per line."""
    assignment: dict[str, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if len(parts) != 2 or parts[0] not in ("train", "test"):
                raise CorpusError(f"{path}:{lineno}: expected '<train|test> <speaker_id>'")
            part, speaker = parts
            if assignment.get(speaker, part) != part:
                raise CorpusError(f"{path}:{lineno}: speaker {speaker} listed in both partitions")
            assignment[speaker] = part
    return assignment


def split_train_test(records, split_spec):
    """Partition by speaker. Unlisted speakers go to train with a warning."""
    assignment = split_spec if isinstance(split_spec, dict) else read_split(split_spec)
    train, test, unlisted = [], [], set()
    for rec in records:
        part = assignment.get(rec.speaker_id)
        if part is None:
            unlisted.add(rec.speaker_id)
            part = "train"
        (train if part == "train" else test).append(rec)
    if unlisted:
        log.warning("speakers not in split file assigned to train: %s", ", ".join(sorted(unlisted)))
    return train, test


def hold_out_dev(records, fraction: float, seed: int):
    """Move whole speakers into a dev set, stratified by gender.

    Each gender contributes ``round(fraction * speakers)`` speakers, at least one
    when it has two or more.
    """
    by_gender: dict[str, list[str]] = {}
    for rec in records:
        spk = by_gender.setdefault(rec.gender, [])
        if rec.speaker_id not in spk:
            spk.append(rec.speaker_id)
    rng = np.random.default_rng(seed)
    dev_speakers = set()
    for gender in GENDERS:
        speakers = sorted(by_gender.get(gender, []))
        if len(speakers) < 2 or fraction <= 0:
            continue
        count = min(len(speakers) - 1, max(1, round(fraction * len(speakers))))
        picked = rng.choice(len(speakers), size=count, replace=False)
        dev_speakers.update(speakers[i] for i in picked)
    train = [r for r in records if r.speaker_id not in dev_speakers]
    dev = [r for r in records if r.speaker_id in dev_speakers]
    return train, dev
