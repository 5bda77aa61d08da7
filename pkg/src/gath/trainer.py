"""Training: 1-vs-all BCE over (h, r) query groups, AdamW, checkpoints.

Batches are unique (head, relation) queries from the reverse-augmented
train split; each is scored against every entity with multi-hot labels
marking all true tails. The optimizer skips parameters whose gradient is
absent, so ablation modes never touch unused parameters.
"""

import hashlib
import json
import struct
import time
from collections import OrderedDict

import numpy as np

from . import config as config_mod
from .decoder import predict_prob, score_all_tails
from .encoder import encode
from .errors import CheckpointError, ConfigError, NumericError
from .kgdata import build_index, triples_to_arrays
from .ndiff import Tape, binary_cross_entropy_mean, gather_rows
from .ndiff.serialize import array_from_bytes, array_to_bytes

ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


def lr_at_epoch(epoch, lr0=0.01, decay=0.985):
    """Epoch-e learning rate: lr0 * decay^e."""
    if epoch < 0:
        raise ConfigError(f"epoch must be >= 0, got {epoch}")
    return lr0 * decay**epoch


class QueryGroups:
    """Unique (h, r) queries over train_aug with their true-tail lists."""

    def __init__(self, train_aug, num_relations_aug):
        heads, rels, tails = triples_to_arrays(train_aug)
        key = heads * np.int64(num_relations_aug) + rels
        order = np.argsort(key, kind="stable")
        key_sorted = key[order]
        boundary = np.ones(len(key_sorted), dtype=bool)
        boundary[1:] = key_sorted[1:] != key_sorted[:-1]
        starts = np.flatnonzero(boundary)
        self.heads = heads[order][starts]
        self.rels = rels[order][starts]
        self.tail_offsets = np.append(starts, len(key_sorted)).astype(np.int64)
        self.tail_ids = tails[order]

    @property
    def num_queries(self):
        return len(self.heads)

    def labels(self, query_idx, num_entities, smoothing=0.0):
        """Multi-hot [B, |E|] label matrix for the given query rows."""
        query_idx = np.asarray(query_idx, dtype=np.int64)
        out = np.zeros((len(query_idx), num_entities), dtype=np.float64)
        for row, q in enumerate(query_idx):
            lo, hi = self.tail_offsets[q], self.tail_offsets[q + 1]
            out[row, self.tail_ids[lo:hi]] = 1.0
        if smoothing > 0.0:
            out = (1.0 - smoothing) * out + smoothing / num_entities
        return out


def bce_loss(probs, labels):
    """Mean binary cross-entropy over all B*|E| terms."""
    if not np.all(np.isfinite(probs.data)):
        raise NumericError("non-finite probabilities in loss")
    return binary_cross_entropy_mean(probs, labels)


class AdamW:
    """Adam with decoupled weight decay and bias correction.

    Parameters whose .grad is None are skipped entirely: no moment
    update, no step advance, no decay.
    """

    def __init__(
        self,
        named_params,
        weight_decay=1e-4,
        beta1=ADAM_BETA1,
        beta2=ADAM_BETA2,
        eps=ADAM_EPS,
    ):
        self.params = OrderedDict(named_params)
        self.weight_decay = weight_decay
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.state = OrderedDict(
            (
                name,
                {
                    "m": np.zeros(p.shape, dtype=np.float64),
                    "v": np.zeros(p.shape, dtype=np.float64),
                    "t": 0,
                },
            )
            for name, p in self.params.items()
        )

    def step(self, lr):
        for name, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            st = self.state[name]
            st["t"] += 1
            st["m"] = self.beta1 * st["m"] + (1.0 - self.beta1) * g
            st["v"] = self.beta2 * st["v"] + (1.0 - self.beta2) * (g * g)
            m_hat = st["m"] / (1.0 - self.beta1 ** st["t"])
            v_hat = st["v"] / (1.0 - self.beta2 ** st["t"])
            p.data -= lr * self.weight_decay * p.data
            p.data -= lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def zero_grad(self):
        for p in self.params.values():
            p.grad = None


def batch_loss(
    model,
    index,
    groups,
    query_idx,
    train_mode,
    rng,
    update_stats=None,
    smoothing=0.0,
):
    """Forward pass for one query batch; returns the scalar loss tensor."""
    if model.mode == "decoder_only":
        H = model.H0
    else:
        H = encode(model, index, train_mode, rng, update_stats=update_stats)
    qh = groups.heads[query_idx]
    qr = groups.rels[query_idx]
    h_emb = gather_rows(H, qh)
    r_emb = gather_rows(model.decoder.R_dec, qr)
    scores = score_all_tails(
        h_emb,
        r_emb,
        H,
        model.decoder,
        model.dec_cfg,
        train_mode,
        rng,
        update_stats=update_stats,
    )
    probs = predict_prob(scores)
    labels = groups.labels(query_idx, model.num_entities, smoothing)
    return bce_loss(probs, labels)


def train_epoch(
    model, index, groups, optimizer, lr, batch_size, rng, epoch=0, smoothing=0.0
):
    """One pass over shuffled query groups; returns mean batch loss."""
    perm = rng.permutation(groups.num_queries)
    losses = []
    for start in range(0, len(perm), batch_size):
        batch = perm[start : start + batch_size]
        optimizer.zero_grad()
        with Tape() as tape:
            loss = batch_loss(
                model, index, groups, batch, True, rng, smoothing=smoothing
            )
            value = loss.item()
            if not np.isfinite(value):
                raise NumericError(
                    f"non-finite loss {value} at epoch {epoch}, "
                    f"batch {start // batch_size}"
                )
            tape.backward(loss)
        optimizer.step(lr)
        losses.append(value)
    optimizer.zero_grad()
    return float(np.mean(losses)) if losses else 0.0


def train(model, kg, run_cfg, log=print, checkpoint_path=None):
    """Full training loop; returns (optimizer, final mean loss, rng)."""
    tcfg = run_cfg.train
    index = build_index(
        kg.train_aug, kg.num_entities, kg.num_relations_aug
    )
    groups = QueryGroups(kg.train_aug, kg.num_relations_aug)
    optimizer = AdamW(
        model.named_parameters(), weight_decay=tcfg.weight_decay
    )
    rng = np.random.default_rng(tcfg.seed)
    log(
        f"mode={tcfg.mode} seed={tcfg.seed} entities={kg.num_entities} "
        f"relations_aug={kg.num_relations_aug} queries={groups.num_queries} "
        f"epochs={tcfg.epochs}"
    )
    last = 0.0
    best_mrr, stale = -1.0, 0
    completed = 0
    for epoch in range(tcfg.epochs):
        lr = lr_at_epoch(epoch, tcfg.lr0, tcfg.lr_decay)
        t0 = time.perf_counter()
        last = train_epoch(
            model,
            index,
            groups,
            optimizer,
            lr,
            tcfg.batch_size,
            rng,
            epoch,
            smoothing=tcfg.label_smoothing,
        )
        wall = time.perf_counter() - t0
        completed = epoch + 1
        log(f"epoch={epoch} lr={lr:.6g} loss={last:.6f} wall={wall:.3f}")
        if checkpoint_path and tcfg.checkpoint_every > 0:
            if completed % tcfg.checkpoint_every == 0:
                checkpoint_save(
                    checkpoint_path, model, optimizer, run_cfg, completed, rng
                )
        if tcfg.patience > 0 and kg.valid:
            from .evaluator import evaluate

            mrr = evaluate(kg, model, "valid", index=index).mrr
            log(f"epoch={epoch} valid_mrr={mrr:.6f}")
            if mrr > best_mrr:
                best_mrr, stale = mrr, 0
            else:
                stale += 1
                if stale >= tcfg.patience:
                    log(f"early_stop=1 epoch={epoch} best_mrr={best_mrr:.6f}")
                    break
    if checkpoint_path:
        checkpoint_save(
            checkpoint_path, model, optimizer, run_cfg, completed, rng
        )
    return optimizer, last, rng


CKPT_MAGIC = b"GATHCKP1"
CKPT_VERSION = 1


def _named_arrays(model, optimizer):
    out = OrderedDict()
    for name, p in model.named_parameters().items():
        out[f"param.{name}"] = p.data
    for name, buf in model.named_buffers().items():
        out[f"buffer.{name}"] = buf
    if optimizer is not None:
        for name, st in optimizer.state.items():
            out[f"opt.m.{name}"] = st["m"]
            out[f"opt.v.{name}"] = st["v"]
            out[f"opt.t.{name}"] = np.asarray(st["t"], dtype=np.int64)
    return out


def checkpoint_save(path, model, optimizer, run_cfg, epoch, rng=None):
    cfg_json = config_mod.config_json(run_cfg).encode("utf-8")
    digest = bytes.fromhex(config_mod.config_hash(run_cfg))
    rng_state = rng.bit_generator.state if rng is not None else {}
    rng_json = json.dumps(rng_state, sort_keys=True).encode("utf-8")
    blobs = _named_arrays(model, optimizer)
    parts = [
        CKPT_MAGIC,
        struct.pack("<B", CKPT_VERSION),
        digest,
        struct.pack("<I", len(cfg_json)),
        cfg_json,
        struct.pack("<QQQ", epoch, model.num_entities, model.num_relations_aug),
        struct.pack("<I", len(rng_json)),
        rng_json,
        struct.pack("<I", len(blobs)),
    ]
    for name, arr in blobs.items():
        nb = name.encode("utf-8")
        parts.append(struct.pack("<H", len(nb)))
        parts.append(nb)
        parts.append(array_to_bytes(arr))
    with open(path, "wb") as fh:
        fh.write(b"".join(parts))


class CheckpointData:
    def __init__(self, cfg, epoch, num_entities, num_relations_aug, rng_state, arrays):
        self.cfg = cfg
        self.epoch = epoch
        self.num_entities = num_entities
        self.num_relations_aug = num_relations_aug
        self.rng_state = rng_state
        self.arrays = arrays


def checkpoint_read(path):
    """Parse a checkpoint file into config + named arrays."""
    try:
        with open(path, "rb") as fh:
            buf = fh.read()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint: {exc}") from exc
    try:
        if buf[:8] != CKPT_MAGIC:
            raise CheckpointError("bad checkpoint magic")
        (version,) = struct.unpack_from("<B", buf, 8)
        if version != CKPT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {version}")
        digest = buf[9:41]
        (cfg_len,) = struct.unpack_from("<I", buf, 41)
        pos = 45
        cfg_json = buf[pos : pos + cfg_len]
        if len(cfg_json) != cfg_len:
            raise CheckpointError("truncated checkpoint (config)")
        pos += cfg_len
        if hashlib.sha256(cfg_json).digest() != digest:
            raise CheckpointError("checkpoint config hash does not match payload")
        epoch, num_e, num_r = struct.unpack_from("<QQQ", buf, pos)
        pos += 24
        (rng_len,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        rng_json = buf[pos : pos + rng_len]
        pos += rng_len
        (count,) = struct.unpack_from("<I", buf, pos)
        pos += 4
        arrays = OrderedDict()
        for _ in range(count):
            (nlen,) = struct.unpack_from("<H", buf, pos)
            pos += 2
            name = buf[pos : pos + nlen].decode("utf-8")
            pos += nlen
            arr, pos = array_from_bytes(buf, pos)
            arrays[name] = arr
        if pos != len(buf):
            raise CheckpointError("trailing bytes after checkpoint payload")
    except (struct.error, IndexError) as exc:
        raise CheckpointError("truncated or corrupt checkpoint") from exc
    cfg = config_mod.from_dict(json.loads(cfg_json.decode("utf-8")))
    rng_state = json.loads(rng_json.decode("utf-8")) if rng_len else {}
    return CheckpointData(cfg, epoch, num_e, num_r, rng_state, arrays)


def checkpoint_load(path, model, optimizer=None, run_cfg=None):
    """Restore model (and optionally optimizer) state from a checkpoint.

    If run_cfg is given its hash must match the stored config exactly;
    a mismatch is refused with both hashes reported.
    """
    data = checkpoint_read(path)
    if run_cfg is not None:
        want = config_mod.config_hash(run_cfg)
        have = config_mod.config_hash(data.cfg)
        if want != have:
            raise ConfigError(
                f"config hash mismatch: run {want} vs checkpoint {have}"
            )
    for name, p in model.named_parameters().items():
        key = f"param.{name}"
        if key not in data.arrays:
            raise CheckpointError(f"checkpoint missing tensor {key}")
        arr = data.arrays[key]
        if arr.shape != p.shape:
            raise CheckpointError(
                f"checkpoint tensor {key} shape {arr.shape} != {p.shape}"
            )
        p.data = arr.astype(np.float64)
    buffers = model.named_buffers()
    for name in buffers:
        key = f"buffer.{name}"
        if key in data.arrays:
            buffers[name][...] = data.arrays[key]
    if optimizer is not None:
        for name in optimizer.state:
            for tag in ("m", "v"):
                key = f"opt.{tag}.{name}"
                if key not in data.arrays:
                    raise CheckpointError(f"checkpoint missing tensor {key}")
                optimizer.state[name][tag] = data.arrays[key].astype(np.float64)
            tkey = f"opt.t.{name}"
            if tkey not in data.arrays:
                raise CheckpointError(f"checkpoint missing tensor {tkey}")
            optimizer.state[name]["t"] = int(data.arrays[tkey].item())
    rng = np.random.default_rng()
    if data.rng_state:
        rng.bit_generator.state = data.rng_state
    return data.epoch, rng


def model_from_checkpoint(path):
    """Rebuild a model purely from a checkpoint's embedded config."""
    from .model import GathModel

    data = checkpoint_read(path)
    model = GathModel(
        data.num_entities,
        data.num_relations_aug,
        data.cfg.encoder,
        data.cfg.decoder,
        data.cfg.train.mode,
        data.cfg.train.seed,
    )
    checkpoint_load(path, model)
    return model, data
