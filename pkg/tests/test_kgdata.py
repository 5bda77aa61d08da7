"""Dataset parsing, reverse augmentation, CSR index, degree buckets."""

import numpy as np
import pytest

from gath.errors import DataError
from gath.kgdata import (
    DENSE,
    MODERATE,
    SPARSE,
    KnowledgeGraph,
    Triple,
    Vocab,
    augment_reverse,
    bucket_degrees,
    build_index,
    parse_triples,
    save_vocab,
    triples_to_arrays,
)
from gath.synthetic import build_kg, toy_kg, write_toy_dataset


def write_split(path, rows):
    with open(path, "w", encoding="utf-8") as fh:
        for h, r, t in rows:
            fh.write(f"{h}\t{r}\t{t}\n")


# ---------------------------------------------------------------- parsing


def test_first_insertion_assigns_zero_ids(tmp_path):
    p = tmp_path / "train.txt"
    p.write_text("A\tr1\tB\n", encoding="utf-8")
    vocab = Vocab()
    triples = parse_triples(p, vocab)
    assert triples == [Triple(0, 0, 1)]
    assert vocab.num_entities == 2
    assert vocab.num_relations_raw == 1


def test_malformed_line_reports_path_and_number(tmp_path):
    p = tmp_path / "train.txt"
    p.write_text("A\tr\tB\nBADLINE\n", encoding="utf-8")
    with pytest.raises(DataError) as exc:
        parse_triples(p, Vocab())
    assert "train.txt" in str(exc.value)
    assert exc.value.line_number == 2


def test_crlf_lines_parse_cleanly(tmp_path):
    p = tmp_path / "train.txt"
    p.write_bytes(b"A\tr\tB\r\nB\tr\tA\r\n")
    triples = parse_triples(p, Vocab())
    assert len(triples) == 2


# --------------------------------------------------------------- reverses


def test_augment_empty():
    assert augment_reverse([], 0) == []


def test_augment_single_triple():
    assert augment_reverse([Triple(0, 0, 1)], 1) == [
        Triple(0, 0, 1),
        Triple(1, 1, 0),
    ]


def test_augment_refuses_already_augmented_input():
    with pytest.raises(DataError):
        augment_reverse([Triple(0, 5, 1)], 3)


def test_vocab_finalize_appends_reverse_names():
    v = Vocab()
    v.relation_id("likes", create=True)
    v.relation_id("knows", create=True)
    v.finalize()
    assert v.num_relations_raw == 2
    assert v.num_relations_aug == 4
    assert v.relation_id("likes_reverse") == 2
    assert v.relation_id("knows_reverse") == 3


def test_reserved_suffix_collision_is_rejected():
    v = Vocab()
    v.relation_id("r", create=True)
    v.relation_id("r_reverse", create=True)
    with pytest.raises(DataError):
        v.finalize()


# -------------------------------------------------------------- CSR index


def test_index_offsets_small_example():
    idx = build_index([Triple(0, 0, 1), Triple(0, 1, 2)], 3)
    assert idx.offsets.tolist() == [0, 2, 2, 2]


def test_index_offsets_trailing_entity():
    idx = build_index([Triple(1, 1, 0)], 2)
    assert idx.offsets.tolist() == [0, 0, 1]


def test_index_neighbors_match_bruteforce_grouping():
    """Random graph: CSR groups equal a brute-force filter of the list."""
    rng = np.random.default_rng(42)
    n, m = 40, 1000
    triples = [
        Triple(int(h), int(r), int(t))
        for h, r, t in zip(
            rng.integers(0, n, m), rng.integers(0, 6, m), rng.integers(0, n, m)
        )
    ]
    idx = build_index(triples, n)
    for e in range(n):
        want = [(tr.rel, tr.tail) for tr in triples if tr.head == e]
        rels, tails = idx.neighbors(e)
        assert list(zip(rels.tolist(), tails.tolist())) == want


def test_index_rejects_out_of_range_ids():
    with pytest.raises(DataError):
        build_index([Triple(5, 0, 1)], 3)
    with pytest.raises(DataError):
        build_index([Triple(0, 7, 1)], 3, num_relations=2)


def test_triples_to_arrays_round_trip():
    triples = [Triple(0, 1, 2), Triple(2, 0, 1)]
    h, r, t = triples_to_arrays(triples)
    assert h.tolist() == [0, 2] and r.tolist() == [1, 0] and t.tolist() == [2, 1]


# ---------------------------------------------------------------- buckets


def bucket_fixture(train_rows):
    return build_kg(train_rows, [("x0", "rel0", "x1")], [("x0", "rel0", "x1")])


def test_node_in_fifty_triples_is_sparse():
    rows = [("hub", "rel0", f"x{i}") for i in range(50)]
    kg = bucket_fixture(rows)
    b = bucket_degrees(kg)
    hub = kg.vocab.entity_id("hub")
    assert b.node_degree[hub] == 50
    assert b.node_bucket[hub] == SPARSE


def test_relation_in_five_hundred_triples_is_moderate():
    # boundary inclusive: (200, 500] is Moderate
    rows = [(f"a{i}", "busy", f"b{i}") for i in range(500)]
    kg = bucket_fixture(rows)
    b = bucket_degrees(kg)
    rid = kg.vocab.relation_id("busy")
    assert b.relation_degree[rid] == 500
    assert b.relation_bucket[rid] == MODERATE


def test_dense_thresholds():
    rows = [("hub", "busy", f"x{i}") for i in range(1001)]
    kg = bucket_fixture(rows)
    b = bucket_degrees(kg)
    assert b.node_bucket[kg.vocab.entity_id("hub")] == DENSE
    assert b.relation_bucket[kg.vocab.relation_id("busy")] == DENSE


def test_toy_graph_is_all_sparse(toy50):
    b = bucket_degrees(toy50)
    assert set(b.node_bucket) == {SPARSE}
    assert set(b.relation_bucket) == {SPARSE}


def test_degrees_count_raw_train_only(toy50):
    """Head+tail occurrences over the raw train split, no reverse doubling."""
    b = bucket_degrees(toy50)
    counts = np.zeros(toy50.num_entities, dtype=int)
    for tr in toy50.train:
        counts[tr.head] += 1
        counts[tr.tail] += 1
    assert np.array_equal(b.node_degree, counts)


# ------------------------------------------------------------ load / save


def test_load_requires_all_three_splits(tmp_path):
    write_split(tmp_path / "train.txt", [("A", "r", "B")])
    write_split(tmp_path / "valid.txt", [("A", "r", "B")])
    with pytest.raises(DataError):
        KnowledgeGraph.load(tmp_path)


def test_dataset_directory_round_trip(tmp_path):
    kg0 = toy_kg(12, 2, 40, seed=5)
    write_toy_dataset(tmp_path / "ds", 12, 2, 40, seed=5)
    kg1 = KnowledgeGraph.load(tmp_path / "ds")
    assert kg1.num_entities == kg0.num_entities
    assert kg1.num_relations_aug == kg0.num_relations_aug
    assert len(kg1.train) == len(kg0.train)
    assert len(kg1.train_aug) == 2 * len(kg1.train)


def test_save_vocab_writes_tsv(tmp_path):
    kg = toy_kg(6, 2, 12, seed=1)
    save_vocab(kg.vocab, tmp_path)
    lines = (tmp_path / "entities.tsv").read_text().strip().split("\n")
    assert len(lines) == 6
    first_id, first_name = lines[0].split("\t")
    assert first_id == "0"
    assert kg.vocab.entity_id(first_name) == 0
    rel_lines = (tmp_path / "relations.tsv").read_text().strip().split("\n")
    assert len(rel_lines) == kg.num_relations_aug


def test_unseen_test_names_extend_the_vocab(tmp_path):
    """Names first seen in valid/test are appended, not rejected."""
    d = tmp_path / "ds"
    d.mkdir()
    write_split(d / "train.txt", [("A", "r", "B")])
    write_split(d / "valid.txt", [("A", "r", "B")])
    write_split(d / "test.txt", [("A", "newrel", "NEW")])
    kg = KnowledgeGraph.load(d)
    assert kg.num_entities == 3
    assert kg.num_relations_raw == 2
    assert kg.vocab.entity_id("NEW") == 2
