import logging

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stepsrl.embeddings import (EmbeddingFormatError, EmbeddingTable, load_vec_text, lookup,
                                save_vec_text)


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_two_words_without_header(tmp_path):
    table = load_vec_text(write(tmp_path / "e.vec", "cat 1 2 3\ndog 4 5 6\n"))
    assert table.dim == 3 and len(table) == 2
    np.testing.assert_array_equal(table.get("dog"), [4, 5, 6])


def test_header_sets_dim(tmp_path):
    rows = "\n".join(f"w{i} " + " ".join(["0.5"] * 50) for i in range(1000))
    table = load_vec_text(write(tmp_path / "e.vec", "1000 50\n" + rows + "\n"))
    assert table.dim == 50 and len(table) == 1000


def test_short_row_reports_line(tmp_path):
    rows = ["a " + " ".join(["1"] * 50), "b " + " ".join(["1"] * 49)]
    with pytest.raises(EmbeddingFormatError, match=r":3: expected 50 values, found 49"):
        load_vec_text(write(tmp_path / "e.vec", "2 50\n" + "\n".join(rows) + "\n"))


def test_non_numeric_component(tmp_path):
    with pytest.raises(EmbeddingFormatError, match=":1:"):
        load_vec_text(write(tmp_path / "e.vec", "cat 1 x 3\n"))


def test_duplicate_keeps_first(tmp_path, caplog):
    with caplog.at_level(logging.WARNING):
        table = load_vec_text(write(tmp_path / "e.vec", "cat 1 1\ncat 2 2\n"))
    np.testing.assert_array_equal(table.get("cat"), [1, 1])
    assert "duplicate" in caplog.text


def test_crlf_lines(tmp_path):
    path = tmp_path / "e.vec"
    path.write_bytes(b"cat 1 2\r\ndog 3 4\r\n")
    assert load_vec_text(path).words == ["cat", "dog"]


def test_known_word_lookup():
    table = EmbeddingTable(2, {"a": [1.0, 2.0]})
    np.testing.assert_array_equal(lookup(table, "a"), [1.0, 2.0])


def test_oov_is_deterministic_and_norm_matched():
    rng = np.random.default_rng(0)
    table = EmbeddingTable(50, {f"w{i}": rng.standard_normal(50) * (1 + i % 3) for i in range(40)})
    a, b = lookup(table, "unseen"), lookup(table, "unseen")
    assert a.tobytes() == b.tobytes()
    assert abs(np.linalg.norm(a) / table.mean_norm - 1) < 0.1
    assert not np.array_equal(lookup(table, "other"), a)


def test_table_is_read_only():
    table = EmbeddingTable(2, {"a": [1.0, 2.0]})
    with pytest.raises(ValueError):
        table.matrix[0, 0] = 5.0


@settings(max_examples=30, deadline=None)
@given(st.lists(st.lists(st.floats(-1e6, 1e6, width=32), min_size=4, max_size=4),
                min_size=1, max_size=6))
def test_save_load_roundtrip_is_bit_exact(tmp_path_factory, rows):
    path = tmp_path_factory.mktemp("vec") / "r.vec"
    entries = {f"w{i}": np.array(r, dtype=np.float32) for i, r in enumerate(rows)}
    save_vec_text(entries, path, 4)
    back = load_vec_text(path)
    for w, v in entries.items():
        assert back.get(w).tobytes() == v.tobytes()
