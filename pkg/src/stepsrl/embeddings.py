"""Pretrained word vectors in the plain-text ``.vec`` format."""
from __future__ import annotations

import hashlib
import logging
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)


class EmbeddingFormatError(ValueError):
    pass


class EmbeddingTable:
    """Immutable word -> vector map with deterministic out-of-vocabulary vectors."""

    def __init__(self, dim: int, entries: dict[str, np.ndarray] | None = None):
        self.dim = int(dim)
        self._words: list[str] = []
        rows = []
        self._index: dict[str, int] = {}
        for word, vec in (entries or {}).items():
            vec = np.asarray(vec, dtype=np.float32)
            if vec.shape != (self.dim,):
                raise EmbeddingFormatError(f"vector for {word!r} has shape {vec.shape}, expected ({self.dim},)")
            self._index[word] = len(rows)
            self._words.append(word)
            rows.append(vec)
        self._matrix = np.stack(rows) if rows else np.zeros((0, self.dim), dtype=np.float32)
        self._matrix.setflags(write=False)
        norms = np.linalg.norm(self._matrix.astype(np.float64), axis=1)
        self.mean_norm = float(norms.mean()) if norms.size else 0.0

    def __len__(self):
        return len(self._words)

    def __contains__(self, word):
        return word in self._index

    @property
    def words(self) -> list[str]:
        return list(self._words)

    @property
    def matrix(self) -> np.ndarray:
        return self._matrix

    def get(self, word: str) -> np.ndarray | None:
        i = self._index.get(word)
        return None if i is None else self._matrix[i]

    def oov_vector(self, word: str) -> np.ndarray:
        """Pseudo-random vector seeded by the word, scaled to the table's mean norm."""
        seed = int.from_bytes(hashlib.sha256(word.encode("utf-8")).digest()[:8], "little")
        v = np.random.default_rng(seed).standard_normal(self.dim)
        norm = np.linalg.norm(v)
        if norm == 0 or self.mean_norm == 0:
            return np.zeros(self.dim, dtype=np.float32)
        return (v * (self.mean_norm / norm)).astype(np.float32)


def lookup(table: EmbeddingTable, word: str) -> np.ndarray:
    vec = table.get(word)
    if vec is None:
        return table.oov_vector(word)
    return vec


def _parse_floats(parts, path, lineno):
    try:
        return np.array([float(p) for p in parts], dtype=np.float32)
    except ValueError:
        raise EmbeddingFormatError(f"{path}:{lineno}: non-numeric vector component") from None


def load_vec_text(path) -> EmbeddingTable:
    """Read ``[count dim]`` header (optional) then ``word v1 ... vd`` lines."""
    path = Path(path)
    entries: dict[str, np.ndarray] = {}
    dim = None
    with open(path, encoding="utf-8", newline=None) as fh:
        for lineno, line in enumerate(fh, start=1):
            parts = line.rstrip("\r\n").rstrip().split(" ")
            if parts == [""]:
                continue
            if lineno == 1 and len(parts) == 2 and all(p.isdigit() for p in parts):
                dim = int(parts[1])
                continue
            word, values = parts[0], parts[1:]
            if dim is None:
                dim = len(values)
                if dim == 0:
                    raise EmbeddingFormatError(f"{path}:{lineno}: word without vector")
            if len(values) != dim:
                raise EmbeddingFormatError(
                    f"{path}:{lineno}: expected {dim} values, found {len(values)}")
            if word in entries:
                log.warning("%s:%d: duplicate word %r ignored", path, lineno, word)
                continue
            entries[word] = _parse_floats(values, path, lineno)
    return EmbeddingTable(dim or 0, entries)


def save_vec_text(table_or_entries, path, dim: int | None = None) -> None:
    """Write a header line then one row per word; ``repr`` keeps float32 exact on reload."""
    if isinstance(table_or_entries, EmbeddingTable):
        items = [(w, table_or_entries.get(w)) for w in table_or_entries.words]
        dim = table_or_entries.dim
    else:
        items = list(table_or_entries.items())
        if dim is None:
            dim = len(items[0][1]) if items else 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(f"{len(items)} {dim}\n")
        for word, vec in items:
            vals = " ".join(repr(float(v)) for v in np.asarray(vec, dtype=np.float32))
            fh.write(f"{word} {vals}\n")
