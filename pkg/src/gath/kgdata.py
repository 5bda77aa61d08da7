"""Triple-file loading, vocabularies, reverse augmentation, and indexing.

Datasets follow the usual layout: a directory holding train.txt,
valid.txt, test.txt with one head<TAB>relation<TAB>tail triple per line.
Relation ids place all raw relations first; the reverse of raw relation r
is r + raw_relation_count and is named with a "_reverse" suffix.
"""

import os
from typing import List, NamedTuple

import numpy as np

from .errors import DataError

REVERSE_SUFFIX = "_reverse"

SPARSE, MODERATE, DENSE = "Sparse", "Moderate", "Dense"


class Triple(NamedTuple):
    head: int
    rel: int
    tail: int


class Vocab:
    """Bijective name<->id maps for entities and relations.

    Relations are appended while parsing; finalize() then materializes the
    reverse relations, after which the relation set is frozen.
    """

    def __init__(self):
        self.entity_names: List[str] = []
        self.relation_names: List[str] = []
        self._ent_ids = {}
        self._rel_ids = {}
        self._raw_rel_count = None

    @property
    def num_entities(self):
        return len(self.entity_names)

    @property
    def num_relations_raw(self):
        if self._raw_rel_count is not None:
            return self._raw_rel_count
        return len(self.relation_names)

    @property
    def num_relations_aug(self):
        if self._raw_rel_count is None:
            raise DataError("vocab not finalized; reverse relations missing")
        return len(self.relation_names)

    @property
    def finalized(self):
        return self._raw_rel_count is not None

    def entity_id(self, name, create=False):
        eid = self._ent_ids.get(name)
        if eid is None:
            if not create:
                raise DataError(f"unknown entity {name!r}")
            eid = len(self.entity_names)
            self.entity_names.append(name)
            self._ent_ids[name] = eid
        return eid

    def relation_id(self, name, create=False):
        rid = self._rel_ids.get(name)
        if rid is None:
            if not create:
                raise DataError(f"unknown relation {name!r}")
            if self._raw_rel_count is not None:
                raise DataError(
                    f"new relation {name!r} after reverse augmentation"
                )
            rid = len(self.relation_names)
            self.relation_names.append(name)
            self._rel_ids[name] = rid
        return rid

    def finalize(self):
        """Append a reverse relation for every raw relation and freeze."""
        if self._raw_rel_count is not None:
            raise DataError("vocab already finalized")
        for name in self.relation_names:
            if name.endswith(REVERSE_SUFFIX):
                raise DataError(
                    f"relation name {name!r} ends with reserved suffix "
                    f"{REVERSE_SUFFIX!r}"
                )
        self._raw_rel_count = len(self.relation_names)
        for name in list(self.relation_names):
            rev = name + REVERSE_SUFFIX
            self._rel_ids[rev] = len(self.relation_names)
            self.relation_names.append(rev)


def parse_triples(path, vocab):
    """Parse one tab-separated triple file, growing the vocab in order."""
    triples = []
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read triple file: {exc}", path=path) from exc
    with fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            parts = line.split("\t")
            if len(parts) != 3:
                raise DataError(
                    f"expected 3 tab-separated fields, got {len(parts)}",
                    path=path,
                    line_number=lineno,
                )
            h, r, t = parts
            triples.append(
                Triple(
                    vocab.entity_id(h, create=True),
                    vocab.relation_id(r, create=True),
                    vocab.entity_id(t, create=True),
                )
            )
    return triples


def augment_reverse(train, raw_rel_count):
    """Append (t, r + raw_rel_count, h) for every (h, r, t)."""
    for tr in train:
        if tr.rel >= raw_rel_count:
            raise DataError(
                f"relation id {tr.rel} >= raw count {raw_rel_count}; "
                "input looks already augmented"
            )
    return list(train) + [
        Triple(tr.tail, tr.rel + raw_rel_count, tr.head) for tr in train
    ]


class KnowledgeGraph:
    def __init__(self, vocab, train, valid, test):
        self.vocab = vocab
        self.train = train
        self.valid = valid
        self.test = test
        self.train_aug = augment_reverse(train, vocab.num_relations_raw)

    @property
    def num_entities(self):
        return self.vocab.num_entities

    @property
    def num_relations_raw(self):
        return self.vocab.num_relations_raw

    @property
    def num_relations_aug(self):
        return self.vocab.num_relations_aug

    def split(self, name):
        try:
            return {"train": self.train, "valid": self.valid, "test": self.test}[
                name
            ]
        except KeyError:
            raise DataError(f"unknown split {name!r}") from None

    @classmethod
    def load(cls, directory):
        """Load train/valid/test from a dataset directory."""
        vocab = Vocab()
        splits = []
        for fname in ("train.txt", "valid.txt", "test.txt"):
            path = os.path.join(directory, fname)
            if not os.path.isfile(path):
                raise DataError("missing split file", path=path)
            splits.append(parse_triples(path, vocab))
        vocab.finalize()
        return cls(vocab, *splits)


def triples_to_arrays(triples):
    """Pack a triple list into three int64 arrays (heads, rels, tails)."""
    if not triples:
        z = np.zeros(0, dtype=np.int64)
        return z, z.copy(), z.copy()
    arr = np.asarray(triples, dtype=np.int64)
    return (
        np.ascontiguousarray(arr[:, 0]),
        np.ascontiguousarray(arr[:, 1]),
        np.ascontiguousarray(arr[:, 2]),
    )


class NeighborhoodIndex:
    """CSR grouping of train_aug edges by head entity.

    heads/rels/tails are parallel per-edge arrays, grouped so that edges
    with head i occupy [offsets[i], offsets[i+1]), preserving input order
    within each group.
    """

    def __init__(self, offsets, heads, rels, tails):
        self.offsets = offsets
        self.heads = heads
        self.rels = rels
        self.tails = tails

    @property
    def num_edges(self):
        return len(self.heads)

    def neighbors(self, entity):
        lo, hi = self.offsets[entity], self.offsets[entity + 1]
        return self.rels[lo:hi], self.tails[lo:hi]


def build_index(train_aug, num_entities, num_relations=None):
    heads, rels, tails = triples_to_arrays(train_aug)
    if len(heads) and (heads.min() < 0 or heads.max() >= num_entities):
        raise DataError("head entity id out of range")
    if len(tails) and (tails.min() < 0 or tails.max() >= num_entities):
        raise DataError("tail entity id out of range")
    if num_relations is not None and len(rels) and (
        rels.min() < 0 or rels.max() >= num_relations
    ):
        raise DataError("relation id out of range")
    order = np.argsort(heads, kind="stable")
    counts = np.bincount(heads, minlength=num_entities)
    offsets = np.zeros(num_entities + 1, dtype=np.int64)
    np.cumsum(counts, out=offsets[1:])
    return NeighborhoodIndex(
        offsets,
        np.ascontiguousarray(heads[order]),
        np.ascontiguousarray(rels[order]),
        np.ascontiguousarray(tails[order]),
    )


class DegreeBuckets:
    """Sparse/Moderate/Dense labels per entity and per raw relation."""

    def __init__(self, node_degree, node_bucket, relation_degree, relation_bucket):
        self.node_degree = node_degree
        self.node_bucket = node_bucket
        self.relation_degree = relation_degree
        self.relation_bucket = relation_bucket


def _bucketize(degrees, lo, hi):
    return [
        SPARSE if d <= lo else (MODERATE if d <= hi else DENSE) for d in degrees
    ]


def bucket_degrees(kg):
    """Degree buckets over the raw train split only.

    Node degree counts head and tail occurrences; relation degree counts
    train triples using the raw relation. Boundaries are inclusive on the
    upper end: nodes [0,100] / (100,1000] / >1000, relations [0,200] /
    (200,500] / >500.
    """
    heads, rels, tails = triples_to_arrays(kg.train)
    node_degree = np.bincount(heads, minlength=kg.num_entities) + np.bincount(
        tails, minlength=kg.num_entities
    )
    relation_degree = np.bincount(rels, minlength=kg.num_relations_raw)
    return DegreeBuckets(
        node_degree,
        _bucketize(node_degree, 100, 1000),
        relation_degree,
        _bucketize(relation_degree, 200, 500),
    )


def save_vocab(vocab, directory):
    """Write entities.tsv and relations.tsv as id<TAB>name."""
    os.makedirs(directory, exist_ok=True)
    for fname, names in (
        ("entities.tsv", vocab.entity_names),
        ("relations.tsv", vocab.relation_names),
    ):
        with open(os.path.join(directory, fname), "w", encoding="utf-8") as fh:
            for i, name in enumerate(names):
                fh.write(f"{i}\t{name}\n")
