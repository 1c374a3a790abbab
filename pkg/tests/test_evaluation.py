import itertools
import logging

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import spearmanr

from stepsrl.evaluation import (AnalysisError, SimilarityBenchmark, WordRepresentation, cosine,
                                jacobi_eigh, load_benchmark, pca_diff_vectors, similarity_eval,
                                spearman_rho, write_pca_points, write_pca_svg,
                                write_similarity_report)


def brute_force_ranks(x):
    """Average rank by enumeration: 1 + #smaller + (#equal - 1) / 2."""
    return [1 + sum(v < xi for v in x) + (sum(v == xi for v in x) - 1) / 2 for xi in x]


def brute_force_spearman(x, y):
    rx, ry = brute_force_ranks(x), brute_force_ranks(y)
    mx, my = sum(rx) / len(rx), sum(ry) / len(ry)
    num = sum((a - mx) * (b - my) for a, b in zip(rx, ry))
    den = (sum((a - mx) ** 2 for a in rx) * sum((b - my) ** 2 for b in ry)) ** 0.5
    return num / den


def test_cosine_basics():
    assert cosine([1, 0], [0, 1]) == 0
    assert cosine([2, 0], [1, 0]) == 1
    assert cosine([1, 1], [-1, -1]) == pytest.approx(-1)


def test_cosine_zero_vector_warns(caplog):
    with caplog.at_level(logging.WARNING):
        assert cosine([0, 0], [1, 0]) == 0.0
    assert "zero" in caplog.text


def test_cosine_matches_formula():
    rng = np.random.default_rng(0)
    for _ in range(20):
        u, v = rng.standard_normal(10), rng.standard_normal(10)
        assert cosine(u, v) == pytest.approx(u @ v / np.linalg.norm(u) / np.linalg.norm(v), abs=1e-6)


def test_spearman_basic_cases():
    assert spearman_rho([1, 2, 3, 4], [10, 20, 30, 40]) == pytest.approx(1.0)
    assert spearman_rho([1, 2, 3, 4], [4, 3, 2, 1]) == pytest.approx(-1.0)


def test_spearman_tied_fixture():
    x, y = [1, 2, 2, 3], [1, 3, 2, 4]
    assert spearman_rho(x, y) == pytest.approx(brute_force_spearman(x, y), abs=1e-12)


@pytest.mark.parametrize("seed", range(50))
def test_spearman_matches_brute_force_with_ties(seed):
    rng = np.random.default_rng(seed)
    size = int(rng.integers(5, 30))
    x = rng.integers(0, 6, size).astype(float)          # heavy ties
    y = rng.standard_normal(size).round(1)
    if len(set(x)) < 2 or len(set(y)) < 2:
        pytest.skip("constant draw")
    want = brute_force_spearman(list(x), list(y))
    assert spearman_rho(x, y) == pytest.approx(want, abs=1e-12)
    assert spearman_rho(x, y) == pytest.approx(spearmanr(x, y).statistic, abs=1e-12)


def test_spearman_constant_input_is_error():
    with pytest.raises(AnalysisError):
        spearman_rho([1, 1, 1], [1, 2, 3])
    with pytest.raises(AnalysisError):
        spearman_rho([1], [2])


@settings(max_examples=40, deadline=None)
@given(st.lists(st.tuples(st.integers(-100, 100), st.integers(-100, 100)), min_size=3, max_size=20))
def test_spearman_monotone_invariance(pairs):
    x = np.array([p[0] for p in pairs], dtype=float)
    y = np.array([p[1] for p in pairs], dtype=float)
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        return
    base = spearman_rho(x, y)
    assert spearman_rho(np.exp(x / 50), y ** 3) == pytest.approx(base, abs=1e-9)


def benchmark(pairs):
    return SimilarityBenchmark("b", pairs)


def test_similarity_constructed_to_perfect_order():
    angles = np.linspace(0.1, 1.5, 6)
    reps = {"base": np.array([1.0, 0.0])}
    pairs = []
    for i, a in enumerate(angles):
        reps[f"w{i}"] = np.array([np.cos(a), np.sin(a)])
        pairs.append(("base", f"w{i}", 10.0 - i))   # larger angle -> lower human score
    res = similarity_eval(reps, benchmark(pairs))
    assert res["rho"] == pytest.approx(1.0) and res["used_pairs"] == 6


def test_similarity_scale_invariance_and_skips():
    rng = np.random.default_rng(2)
    reps = {w: rng.standard_normal(5) for w in "abcdef"}
    pairs = [(a, b, float(rng.uniform(0, 10))) for a, b in itertools.combinations("abcdef", 2)]
    pairs.append(("a", "zzz", 1.0))
    res = similarity_eval(reps, benchmark(pairs))
    scaled = similarity_eval({w: 3.5 * v for w, v in reps.items()}, benchmark(pairs))
    assert res["rho"] == pytest.approx(scaled["rho"], abs=1e-12)
    assert res["skipped_pairs"] == 1 and res["used_pairs"] == 15


def test_similarity_no_overlap_is_error():
    with pytest.raises(AnalysisError, match="2 skipped"):
        similarity_eval({"a": np.ones(2)}, benchmark([("x", "y", 1.0), ("p", "q", 2.0)]))


def test_word_representation_vectors_are_accepted():
    reps = {"a": WordRepresentation("a", np.array([1.0, 0.0]), 2),
            "b": WordRepresentation("b", np.array([0.0, 1.0]), 1),
            "c": WordRepresentation("c", np.array([1.0, 1.0]), 1)}
    res = similarity_eval(reps, benchmark([("a", "b", 0.0), ("a", "c", 5.0), ("b", "c", 4.0)]))
    assert res["used_pairs"] == 3


def test_load_benchmark(tmp_path):
    path = tmp_path / "simlex.tsv"
    path.write_text("word1\tword2\tscore\nOld\tNew\t1.5\nnew\told\t2.0\ncat\tdog\t7\n")
    b = load_benchmark(path)
    assert b.name == "simlex" and b.pairs == [("old", "new", 1.5), ("cat", "dog", 7.0)]


def test_load_benchmark_bad_score(tmp_path):
    path = tmp_path / "b.tsv"
    path.write_text("a\tb\t1\nc\td\tx\n")
    with pytest.raises(ValueError, match=":2:"):
        load_benchmark(path)


def test_jacobi_matches_dense_solver():
    rng = np.random.default_rng(5)
    a = rng.standard_normal((8, 8))
    a = a + a.T
    vals, vecs = jacobi_eigh(a)
    np.testing.assert_allclose(vals, np.sort(np.linalg.eigvalsh(a))[::-1], atol=1e-10)
    np.testing.assert_allclose(a @ vecs, vecs * vals, atol=1e-9)


def pca_oracle(diffs):
    centred = diffs - diffs.mean(axis=0)
    cov = centred.T @ centred / (len(diffs) - 1)
    vals = np.linalg.eigh(cov)[0][::-1]
    return vals, float(np.trace(cov))


@pytest.mark.parametrize("seed", range(5))
def test_pca_explained_variance_matches_eigh(seed):
    rng = np.random.default_rng(seed)
    words = [f"w{i}" for i in range(24)]
    reps = {w: rng.standard_normal(10) * np.linspace(3, 0.2, 10) for w in words}
    pairs = [(words[2 * i], words[2 * i + 1]) for i in range(12)]
    res = pca_diff_vectors(reps, pairs)
    diffs = np.stack([reps[a] - reps[b] for a, b in pairs])
    vals, total = pca_oracle(diffs)
    np.testing.assert_allclose(res.explained_variance, vals[:2], atol=1e-6)
    assert res.total_variance == pytest.approx(total, abs=1e-6)
    for j in range(2):
        comp = res.components[j]
        assert comp[np.argmax(np.abs(comp))] > 0


def test_pca_axis_aligned_is_isometry():
    pts = np.array([[3.0, 0.0], [-3.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
    reps = {f"a{i}": p for i, p in enumerate(pts)} | {f"b{i}": np.zeros(2) for i in range(4)}
    res = pca_diff_vectors(reps, [(f"a{i}", f"b{i}") for i in range(4)])
    np.testing.assert_allclose(np.abs(res.coords), np.abs(pts), atol=1e-12)


def test_pca_collinear_second_component_vanishes():
    reps = {f"a{i}": np.array([i, 2.0 * i, -i]) for i in range(5)} | {"o": np.zeros(3)}
    res = pca_diff_vectors(reps, [(f"a{i}", "o") for i in range(5)])
    assert res.explained_variance[1] == pytest.approx(0.0, abs=1e-10)
    assert res.explained_variance[0] > 0


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(3, 8))
def test_pca_projection_contracts(seed, count):
    rng = np.random.default_rng(seed)
    reps = {f"w{i}": rng.standard_normal(6) for i in range(2 * count)}
    pairs = [(f"w{2 * i}", f"w{2 * i + 1}") for i in range(count)]
    res = pca_diff_vectors(reps, pairs)
    diffs = np.stack([reps[a] - reps[b] for a, b in pairs])
    for i, j in itertools.combinations(range(count), 2):
        assert np.linalg.norm(res.coords[i] - res.coords[j]) <= np.linalg.norm(diffs[i] - diffs[j]) + 1e-9


def test_pca_single_pair_is_error_and_missing_pairs_skipped(caplog):
    reps = {"a": np.ones(3), "b": np.zeros(3), "c": np.arange(3.0), "d": -np.ones(3)}
    with pytest.raises(AnalysisError):
        pca_diff_vectors(reps, [("a", "b"), ("a", "missing")])
    with caplog.at_level(logging.WARNING):
        res = pca_diff_vectors(reps, [("a", "b"), ("c", "d"), ("x", "b")])
    assert res.skipped == [("x", "b")] and "skipped" in caplog.text


def test_report_writers(tmp_path):
    reps = {"street": np.array([1.0, 0.0, 0.5]), "streets": np.array([1.2, 0.1, 0.4]),
            "come": np.array([0.0, 1.0, 0.2]), "comes": np.array([0.3, 1.1, 0.0])}
    res = pca_diff_vectors(reps, [("street", "streets"), ("come", "comes"), ("go", "goes")])
    write_pca_points(res, tmp_path / "p.csv")
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines[0] == "pair_label,x,y" and len(lines) == 4 and lines[-1] == "# skipped: go,goes"
    write_pca_svg(res, tmp_path / "p.svg")
    svg = (tmp_path / "p.svg").read_text()
    assert svg.startswith("<svg") and "street-&gt;streets" not in svg and "street->streets" in svg
    write_similarity_report([("simlex", 136, 0.25521)], tmp_path / "s.csv")
    assert (tmp_path / "s.csv").read_text() == "benchmark,n_pairs,rho\nsimlex,136,0.255210\n"
