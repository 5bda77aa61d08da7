"""Filtered-ranking link prediction and degree-bucketed reporting.

Every split triple (h, r, t) is scored in both directions: (h, r, ?)
with gold t and (t, r_reverse, ?) with gold h. Before ranking the gold,
every other known-true tail for the query is pushed below all finite
scores, so competing correct answers never penalize the gold.
"""

import json

import numpy as np

from .decoder import score_all_tails
from .encoder import encode
from .errors import DataError
from .kgdata import DENSE, MODERATE, SPARSE, augment_reverse, build_index
from .ndiff import Tensor, gather_rows

HITS_LEVELS = (1, 3, 10)


class FilterSet:
    """(head, relation) -> sorted array of all true tails, every split."""

    def __init__(self, kg):
        raw = kg.num_relations_raw
        by_query = {}
        for split in (kg.train, kg.valid, kg.test):
            for tr in augment_reverse(split, raw):
                by_query.setdefault((tr.head, tr.rel), []).append(tr.tail)
        self._tails = {
            key: np.unique(np.asarray(ts, dtype=np.int64))
            for key, ts in by_query.items()
        }

    def tails(self, head, rel):
        return self._tails.get((head, rel), _EMPTY)


_EMPTY = np.zeros(0, dtype=np.int64)


def filtered_rank(scores, gold, filter_tails):
    """1-based filtered rank of the gold entity, pessimistic on ties.

    Known-true competitor tails are dropped below every finite score;
    the gold itself is never filtered. Rank counts entities scoring
    greater than or equal to the gold, so equal-scored competitors land
    ahead of it.
    """
    if isinstance(scores, Tensor):
        scores = scores.data
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 1:
        raise DataError(f"scores must be 1-D, got shape {scores.shape}")
    if not 0 <= gold < len(scores):
        raise DataError(f"gold id {gold} out of range [0, {len(scores)})")
    filter_tails = np.asarray(filter_tails, dtype=np.int64)
    if len(filter_tails):
        if filter_tails.min() < 0 or filter_tails.max() >= len(scores):
            raise DataError("filter tail id out of range")
        filter_tails = filter_tails[filter_tails != gold]
    work = scores.copy()
    work[filter_tails] = -np.inf
    return int(np.count_nonzero(work >= work[gold]))


def metrics_from_ranks(ranks):
    ranks = np.asarray(ranks, dtype=np.float64)
    out = {
        "mrr": float(np.mean(1.0 / ranks)),
        "mr": float(np.mean(ranks)),
    }
    for k in HITS_LEVELS:
        out[f"hits{k}"] = float(np.mean(ranks <= k))
    return out


class RankingReport:
    """Per-query filtered ranks plus aggregate metrics.

    Parallel arrays over queries: ranks (1-based), gold entity, query
    head entity, and the raw (un-reversed) relation id.
    """

    def __init__(self, ranks, golds, heads, raw_rels):
        self.ranks = np.asarray(ranks, dtype=np.int64)
        self.golds = np.asarray(golds, dtype=np.int64)
        self.heads = np.asarray(heads, dtype=np.int64)
        self.raw_rels = np.asarray(raw_rels, dtype=np.int64)
        m = metrics_from_ranks(self.ranks)
        self.mrr = m["mrr"]
        self.mr = m["mr"]
        self.hits = {k: m[f"hits{k}"] for k in HITS_LEVELS}

    @property
    def num_queries(self):
        return len(self.ranks)

    def metrics(self):
        out = {"mrr": self.mrr, "mr": self.mr}
        for k in HITS_LEVELS:
            out[f"hits{k}"] = self.hits[k]
        return out


def default_scorer(model, H, query_heads, query_rels):
    """Score query batches with the convolutional decoder in eval mode."""
    rng = np.random.default_rng(0)
    h_emb = gather_rows(H, query_heads)
    r_emb = gather_rows(model.decoder.R_dec, query_rels)
    scores = score_all_tails(
        h_emb, r_emb, H, model.decoder, model.dec_cfg, False, rng
    )
    return scores.data


def evaluate(kg, model, split, index=None, batch_size=128, scorer=None):
    """Filtered both-direction ranking over one split.

    Message passing always uses train_aug neighborhoods; the encoder runs
    once in eval mode (dropout off, running batch-norm statistics).
    """
    triples = kg.split(split)
    raw = kg.num_relations_raw
    if index is None:
        index = build_index(kg.train_aug, kg.num_entities, kg.num_relations_aug)
    if scorer is None:
        scorer = default_scorer
    if model.mode == "decoder_only":
        H = model.H0
    else:
        H = encode(model, index, False, np.random.default_rng(0))
    filters = FilterSet(kg)

    heads_f, rels_f, golds_f = [], [], []
    heads_b, rels_b, golds_b = [], [], []
    for tr in triples:
        heads_f.append(tr.head)
        rels_f.append(tr.rel)
        golds_f.append(tr.tail)
        heads_b.append(tr.tail)
        rels_b.append(tr.rel + raw)
        golds_b.append(tr.head)
    qh = np.asarray(heads_f + heads_b, dtype=np.int64)
    qr = np.asarray(rels_f + rels_b, dtype=np.int64)
    golds = np.asarray(golds_f + golds_b, dtype=np.int64)
    raw_rels = np.concatenate(
        [np.asarray(rels_f, dtype=np.int64), np.asarray(rels_f, dtype=np.int64)]
    ) if triples else np.zeros(0, dtype=np.int64)

    ranks = np.zeros(len(qh), dtype=np.int64)
    for start in range(0, len(qh), batch_size):
        sl = slice(start, start + batch_size)
        scores = scorer(model, H, qh[sl], qr[sl])
        for row in range(scores.shape[0]):
            i = start + row
            ranks[i] = filtered_rank(
                scores[row], golds[i], filters.tails(qh[i], qr[i])
            )
    return RankingReport(ranks, golds, qh, raw_rels)


BUCKET_ORDER = (SPARSE, MODERATE, DENSE)


def bucket_report(report, buckets):
    """Per-bucket MRR/Hits@10 rows; empty buckets are omitted.

    Three groupings are emitted: by the gold entity's node bucket, by the
    query head's node bucket, and by the raw relation's bucket.
    """
    tables = (
        ("nodes_by_gold", [buckets.node_bucket[g] for g in report.golds]),
        ("nodes_by_head", [buckets.node_bucket[h] for h in report.heads]),
        ("relations", [buckets.relation_bucket[r] for r in report.raw_rels]),
    )
    rows = []
    for table, labels in tables:
        labels = np.asarray(labels)
        for bucket in BUCKET_ORDER:
            mask = labels == bucket
            count = int(np.count_nonzero(mask))
            if count == 0:
                continue
            m = metrics_from_ranks(report.ranks[mask])
            rows.append(
                {
                    "table": table,
                    "bucket": bucket,
                    "count": count,
                    "mrr": m["mrr"],
                    "hits10": m["hits10"],
                }
            )
    return rows


def report_to_csv(report, bucket_rows=None):
    lines = ["metric,value"]
    for key, value in report.metrics().items():
        lines.append(f"{key},{value!r}")
    lines.append(f"queries,{report.num_queries}")
    if bucket_rows:
        lines.append("")
        lines.append("table,bucket,count,mrr,hits10")
        for row in bucket_rows:
            lines.append(
                f"{row['table']},{row['bucket']},{row['count']},"
                f"{row['mrr']!r},{row['hits10']!r}"
            )
    return "\n".join(lines) + "\n"


def report_to_json(report, bucket_rows=None):
    doc = {
        "metrics": report.metrics(),
        "num_queries": report.num_queries,
        "ranks": report.ranks.tolist(),
        "golds": report.golds.tolist(),
        "heads": report.heads.tolist(),
        "raw_rels": report.raw_rels.tolist(),
    }
    if bucket_rows is not None:
        doc["buckets"] = bucket_rows
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"
