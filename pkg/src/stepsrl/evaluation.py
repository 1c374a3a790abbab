"""Phonetic accuracy, word-similarity correlation and difference-vector PCA."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import tensor as T
from .model import ModelConfig, collate, encode
from .training import evaluate_examples

log = logging.getLogger(__name__)


class AnalysisError(ValueError):
    """Not enough usable data for a statistic."""


@dataclass
class WordRepresentation:
    word: str
    vector: np.ndarray
    occurrence_count: int


@dataclass
class SimilarityBenchmark:
    name: str
    pairs: list[tuple[str, str, float]]


# ---------------------------------------------------------------------------
# phonetic accuracy
# ---------------------------------------------------------------------------

def phonetic_accuracy(params, cfg: ModelConfig, examples, pad: int, eops: int,
                      batch_size: int = 100) -> dict:
    metrics = evaluate_examples(params, cfg, examples, pad, eops, batch_size)
    return {"token_acc": metrics["token_acc"], "seq_acc": metrics["seq_acc"],
            "loss": metrics["loss"], "examples": len(examples)}


def word_representations(params, cfg: ModelConfig, examples, batch_size: int = 100
                         ) -> dict[str, WordRepresentation]:
    """Mean latent vector over every occurrence of each word."""
    sums: dict[str, np.ndarray] = {}
    counts: dict[str, int] = {}
    with T.no_grad():
        for lo in range(0, len(examples), batch_size):
            chunk = examples[lo:lo + batch_size]
            z = encode(params, cfg, collate(chunk, dtype=params["fuse.w1"].dtype)).z_new.data
            for ex, vec in zip(chunk, z.astype(np.float64)):
                sums[ex.word] = sums.get(ex.word, 0.0) + vec
                counts[ex.word] = counts.get(ex.word, 0) + 1
    return {w: WordRepresentation(w, (sums[w] / counts[w]).astype(np.float32), counts[w])
            for w in sorted(sums)}


# ---------------------------------------------------------------------------
# similarity
# ---------------------------------------------------------------------------

def cosine(u, v) -> float:
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        log.warning("cosine of a zero vector defined as 0")
        return 0.0
    return float(np.clip(u @ v / (nu * nv), -1.0, 1.0))


def average_ranks(x) -> np.ndarray:
    """1-based ranks; tied values share the mean of their positions."""
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(x.size)
    sorted_x = x[order]
    i = 0
    while i < x.size:
        j = i
        while j + 1 < x.size and sorted_x[j + 1] == sorted_x[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman_rho(x, y) -> float:
    """Pearson correlation of average ranks."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("spearman_rho needs two 1-D score vectors of equal length")
    if x.size < 2:
        raise AnalysisError("spearman_rho needs at least two observations")
    rx, ry = average_ranks(x), average_ranks(y)
    rx -= rx.mean()
    ry -= ry.mean()
    denom = math.sqrt(float(rx @ rx) * float(ry @ ry))
    if denom == 0:
        raise AnalysisError("spearman_rho is undefined for a constant score vector")
    return float(rx @ ry / denom)


def load_benchmark(path) -> SimilarityBenchmark:
    """TSV of ``word_a word_b score``; words lowercased, unordered duplicates dropped."""
    path = Path(path)
    pairs, seen = [], set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            parts = line.rstrip("\r\n").split("\t")
            if parts == [""] or line.startswith("#"):
                continue
            if len(parts) < 3:
                raise ValueError(f"{path}:{lineno}: expected word_a<TAB>word_b<TAB>score")
            try:
                score = float(parts[2])
            except ValueError:
                if lineno == 1:
                    continue  # header
                raise ValueError(f"{path}:{lineno}: score is not a number") from None
            if not math.isfinite(score):
                raise ValueError(f"{path}:{lineno}: score must be finite")
            a, b = parts[0].strip().lower(), parts[1].strip().lower()
            key = frozenset((a, b))
            if key in seen:
                continue
            seen.add(key)
            pairs.append((a, b, score))
    return SimilarityBenchmark(path.stem, pairs)


def _vectors(representations) -> dict[str, np.ndarray]:
    return {w: (r.vector if isinstance(r, WordRepresentation) else np.asarray(r))
            for w, r in representations.items()}


def similarity_eval(representations, benchmark: SimilarityBenchmark) -> dict:
    vecs = _vectors(representations)
    used = [(a, b, s) for a, b, s in benchmark.pairs if a in vecs and b in vecs]
    skipped = len(benchmark.pairs) - len(used)
    if len(used) < 2:
        raise AnalysisError(f"{benchmark.name}: {len(used)} usable pairs, need at least 2 "
                            f"({skipped} skipped)")
    model_scores = [cosine(vecs[a], vecs[b]) for a, b, _ in used]
    human = [s for _, _, s in used]
    return {"rho": spearman_rho(model_scores, human), "used_pairs": len(used),
            "skipped_pairs": skipped}


# ---------------------------------------------------------------------------
# PCA
# ---------------------------------------------------------------------------

def jacobi_eigh(a: np.ndarray, tol: float = 1e-14, max_sweeps: int = 100):
    """Cyclic Jacobi rotations for a symmetric matrix; eigenvalues descending."""
    a = np.array(a, dtype=np.float64)
    size = a.shape[0]
    vecs = np.eye(size)
    scale = max(np.abs(a).max(), 1e-300)
    for _ in range(max_sweeps):
        off = np.sqrt(np.sum(np.triu(a, 1) ** 2))
        if off <= tol * scale:
            break
        for p in range(size - 1):
            for q in range(p + 1, size):
                if abs(a[p, q]) <= 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * a[p, q])
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                ap, aq = a[:, p].copy(), a[:, q].copy()
                a[:, p], a[:, q] = c * ap - s * aq, s * ap + c * aq
                rp, rq = a[p, :].copy(), a[q, :].copy()
                a[p, :], a[q, :] = c * rp - s * rq, s * rp + c * rq
                vp, vq = vecs[:, p].copy(), vecs[:, q].copy()
                vecs[:, p], vecs[:, q] = c * vp - s * vq, s * vp + c * vq
    vals = np.diag(a).copy()
    order = np.argsort(-vals, kind="mergesort")
    return vals[order], vecs[:, order]


@dataclass
class PcaResult:
    labels: list[str]
    coords: np.ndarray          # pairs x 2
    components: np.ndarray      # 2 x dim
    explained_variance: np.ndarray
    total_variance: float
    skipped: list[tuple[str, str]]


def pca_diff_vectors(representations, word_pairs, components: int = 2) -> PcaResult:
    """Project vec(a) - vec(b) for each pair onto the top principal components.

    Eigenvectors come from the pairs x pairs Gram matrix of the centred
    differences, which shares its non-zero spectrum with the covariance.
    Each component is signed so its largest-magnitude entry is positive.
    """
    vecs = _vectors(representations)
    usable, skipped = [], []
    for a, b in word_pairs:
        if a in vecs and b in vecs:
            usable.append((a, b))
        else:
            log.warning("pair (%s, %s) skipped: missing representation", a, b)
            skipped.append((a, b))
    if len(usable) < 2:
        raise AnalysisError(f"PCA needs at least 2 usable pairs, got {len(usable)}")
    diffs = np.stack([np.asarray(vecs[a], np.float64) - np.asarray(vecs[b], np.float64)
                      for a, b in usable])
    centred = diffs - diffs.mean(axis=0)
    dof = len(usable) - 1
    gram = centred @ centred.T
    vals, u = jacobi_eigh(gram)
    dim = centred.shape[1]
    comps = np.zeros((components, dim))
    variance = np.zeros(components)
    for j in range(min(components, len(vals))):
        lam = max(vals[j], 0.0)
        direction = centred.T @ u[:, j]
        norm = np.linalg.norm(direction)
        if lam <= 1e-12 * max(vals[0], 1e-300) or norm == 0:
            continue
        direction /= norm
        if direction[np.argmax(np.abs(direction))] < 0:
            direction = -direction
        comps[j] = direction
        variance[j] = lam / dof
    coords = centred @ comps.T
    labels = [f"{a}->{b}" for a, b in usable]
    total = float(np.sum(centred ** 2) / dof)
    return PcaResult(labels, coords, comps, variance, total, skipped)


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

def write_similarity_report(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["benchmark", "n_pairs", "rho"])
        for name, n_pairs, rho in rows:
            w.writerow([name, n_pairs, f"{rho:.6f}"])


def write_pca_points(result: PcaResult, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["pair_label", "x", "y"])
        for label, (x, y) in zip(result.labels, result.coords[:, :2]):
            w.writerow([label, f"{x:.6f}", f"{y:.6f}"])
        if result.skipped:
            fh.write("# skipped: " + "; ".join(f"{a},{b}" for a, b in result.skipped) + "\n")


def write_pca_svg(result: PcaResult, path, size: int = 480) -> None:
    """Scatter of labelled arrows from the origin."""
    pts = result.coords[:, :2]
    extent = float(np.abs(pts).max()) or 1.0
    half = size / 2
    scale = (half - 60) / extent

    def xy(p):
        return half + p[0] * scale, half - p[1] * scale

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
           f'viewBox="0 0 {size} {size}">',
           '<defs><marker id="tip" markerWidth="8" markerHeight="8" refX="6" refY="3" orient="auto">'
           '<path d="M0,0 L6,3 L0,6 z" fill="#333"/></marker></defs>',
           f'<line x1="0" y1="{half}" x2="{size}" y2="{half}" stroke="#ccc"/>',
           f'<line x1="{half}" y1="0" x2="{half}" y2="{size}" stroke="#ccc"/>']
    for label, p in zip(result.labels, pts):
        x, y = xy(p)
        out.append(f'<line x1="{half}" y1="{half}" x2="{x:.2f}" y2="{y:.2f}" stroke="#333" '
                   f'marker-end="url(#tip)"/>')
        out.append(f'<text x="{x + 4:.2f}" y="{y - 4:.2f}" font-size="12" '
                   f'font-family="sans-serif">{label}</text>')
    out.append("</svg>")
    Path(path).write_text("\n".join(out) + "\n", encoding="utf-8")
