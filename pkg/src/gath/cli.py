"""Command-line surface: train, eval, check-grad, params, prepare.

One JSON config file drives everything; every config key is also
reachable as a dotted flag (e.g. --train.lr0 0.02) that overrides the
file. Exit codes: 0 success, 2 config error, 3 data error, 4 numeric
error.
"""

import argparse
import dataclasses
import logging
import os
import sys

import numpy as np

from . import config as config_mod
from .config import RunConfig, apply_override, load_config, validate
from .errors import (
    CheckpointError,
    ConfigError,
    DataError,
    GathError,
    NumericError,
)
from .evaluator import bucket_report, evaluate, report_to_csv, report_to_json
from .kgdata import KnowledgeGraph, bucket_degrees, build_index, save_vocab
from .model import GathModel, census, relation_feature_claim
from .ndiff import finite_diff_check
from .synthetic import toy_kg, write_toy_dataset
from .trainer import QueryGroups, batch_loss, model_from_checkpoint, train

log = logging.getLogger("gath")

_SHORTHAND = {
    "dataset": "dataset",
    "out": "out",
    "device": "device",
    "seed": "train.seed",
    "mode": "train.mode",
    "epochs": "train.epochs",
}


def _dotted_keys():
    keys = []
    for f in dataclasses.fields(RunConfig):
        if f.name in config_mod._SECTIONS:
            for g in dataclasses.fields(config_mod._SECTIONS[f.name]):
                keys.append(f"{f.name}.{g.name}")
        else:
            keys.append(f.name)
    return keys


def _add_config_flags(sp):
    sp.add_argument("--config", metavar="PATH", help="JSON config file")
    sp.add_argument("--dataset", metavar="DIR")
    sp.add_argument("--out", metavar="DIR")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--mode", choices=config_mod.MODES)
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--device")
    for key in _dotted_keys():
        if key in ("dataset", "out", "device"):
            continue
        sp.add_argument(f"--{key}", dest=f"set_{key.replace('.', '__')}", metavar="V")


def _resolve_config(args, base=None):
    cfg = base if base is not None else RunConfig()
    if args.config:
        cfg = load_config(args.config)
    for key in _dotted_keys():
        attr = f"set_{key.replace('.', '__')}"
        value = getattr(args, attr, None)
        if value is not None:
            apply_override(cfg, key, value)
    for flag, key in _SHORTHAND.items():
        value = getattr(args, flag, None)
        if value is not None:
            apply_override(cfg, key, str(value))
    return validate(cfg)


def build_parser():
    p = argparse.ArgumentParser(
        prog="gath",
        description="Graph-attention knowledge-graph completion toolkit.",
    )
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("train", help="train a model and write checkpoints")
    _add_config_flags(sp)

    sp = sub.add_parser("eval", help="evaluate a checkpoint on a split")
    _add_config_flags(sp)
    sp.add_argument("--checkpoint", metavar="PATH", required=True)
    sp.add_argument(
        "--split", choices=("train", "valid", "test"), default="test"
    )

    sp = sub.add_parser(
        "check-grad",
        help="verify analytic gradients against central differences "
        "(defaults to a small built-in toy config)",
    )
    _add_config_flags(sp)
    sp.add_argument("--step", type=float, default=1e-5)
    sp.add_argument("--tolerance", type=float, default=1e-4)

    sp = sub.add_parser("params", help="parameter counts and the nD+2DF claim")
    _add_config_flags(sp)

    sp = sub.add_parser("prepare", help="generate a toy dataset or export vocab")
    _add_config_flags(sp)
    sp.add_argument("--entities", type=int, default=50)
    sp.add_argument("--relations", type=int, default=5)
    sp.add_argument("--triples", type=int, default=300)
    return p


def _load_dataset(cfg):
    if not cfg.dataset:
        raise ConfigError("no dataset directory configured (--dataset)")
    return KnowledgeGraph.load(cfg.dataset)


def _build_model(cfg, kg):
    return GathModel(
        kg.num_entities,
        kg.num_relations_aug,
        cfg.encoder,
        cfg.decoder,
        cfg.train.mode,
        cfg.train.seed,
    )


def cmd_train(cfg):
    kg = _load_dataset(cfg)
    os.makedirs(cfg.out, exist_ok=True)
    ckpt = os.path.join(cfg.out, "model.ckpt")
    log_path = os.path.join(cfg.out, "train.log")
    model = _build_model(cfg, kg)
    with open(log_path, "w", encoding="utf-8") as log_fh:

        def emit(line):
            print(line)
            log_fh.write(line + "\n")
            log_fh.flush()

        train(model, kg, cfg, log=emit, checkpoint_path=ckpt)
        if kg.valid:
            report = evaluate(kg, model, "valid")
            for key, value in report.metrics().items():
                emit(f"valid_{key}={value:.6f}")
    with open(os.path.join(cfg.out, "config.json"), "w", encoding="utf-8") as fh:
        fh.write(config_mod.config_json(cfg) + "\n")
    print(f"checkpoint={ckpt}")
    return 0


def cmd_eval(checkpoint, split, dataset_override=None, out_override=None):
    model, data = model_from_checkpoint(checkpoint)
    dataset = dataset_override or data.cfg.dataset
    if not dataset:
        raise ConfigError("checkpoint has no dataset path; pass --dataset")
    kg = KnowledgeGraph.load(dataset)
    if kg.num_entities != model.num_entities:
        raise DataError(
            f"dataset has {kg.num_entities} entities but checkpoint "
            f"was trained with {model.num_entities}"
        )
    report = evaluate(kg, model, split)
    buckets = bucket_degrees(kg)
    rows = bucket_report(report, buckets)
    for key, value in report.metrics().items():
        print(f"{key}={value:.6f}")
    print(f"queries={report.num_queries}")
    for row in rows:
        print(
            f"bucket table={row['table']} bucket={row['bucket']} "
            f"count={row['count']} mrr={row['mrr']:.6f} "
            f"hits10={row['hits10']:.6f}"
        )
    out_dir = out_override or data.cfg.out or "."
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, f"report_{split}.csv")
    json_path = os.path.join(out_dir, f"report_{split}.json")
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(report_to_csv(report, rows))
    with open(json_path, "w", encoding="utf-8", newline="") as fh:
        fh.write(report_to_json(report, rows))
    print(f"report_csv={csv_path}")
    print(f"report_json={json_path}")
    return 0


def check_grad_default_config():
    """Desk-sized dims so the full finite-difference sweep stays fast."""
    cfg = RunConfig()
    cfg.encoder.dim = 8
    cfg.encoder.d_k = 4
    cfg.encoder.d_v = 4
    cfg.decoder.d_w = 2
    cfg.decoder.d_h = 4
    cfg.decoder.channels = 4
    cfg.train.seed = 13
    return cfg


def run_grad_check(cfg, kg=None, step=1e-5):
    """Finite-difference check of the full training loss on a toy graph."""
    if kg is None:
        if cfg.dataset:
            kg = KnowledgeGraph.load(cfg.dataset)
        else:
            kg = toy_kg(8, 3, 16, seed=cfg.train.seed)
    model = _build_model(cfg, kg)
    index = build_index(kg.train_aug, kg.num_entities, kg.num_relations_aug)
    groups = QueryGroups(kg.train_aug, kg.num_relations_aug)
    all_idx = np.arange(groups.num_queries)
    named = model.named_parameters()

    def f():
        rng = np.random.default_rng(1234)
        return batch_loss(
            model, index, groups, all_idx, True, rng, update_stats=False
        )

    return finite_diff_check(
        f, named.values(), step=step, names=list(named.keys())
    )


def cmd_check_grad(cfg, step, tolerance):
    result = run_grad_check(cfg, step=step)
    for name, err in result.per_leaf:
        print(f"grad {name} rel_err={err:.3e}")
    print(f"max_rel_err={float(result):.3e} tolerance={tolerance:.1e}")
    if float(result) < tolerance:
        print("gradient_check=pass")
        return 0
    print("gradient_check=fail")
    raise NumericError(
        f"gradient check failed: max rel err {float(result):.3e} "
        f">= {tolerance:.1e}"
    )


def cmd_params(cfg):
    n = cfg.num_relations
    num_entities = cfg.num_entities
    if cfg.dataset:
        kg = _load_dataset(cfg)
        n = kg.num_relations_raw
        num_entities = kg.num_entities
    if n <= 0:
        raise ConfigError(
            "params needs --num_relations (raw relation count) or --dataset"
        )
    D = cfg.encoder.dim
    F = cfg.encoder.d_k
    shared, per_rel = relation_feature_claim(n, D, F)
    print(f"relations_raw={n} dim={D} proj_dim={F}")
    print(f"relation_features_shared={shared}")
    print(f"relation_features_per_relation_matrices={per_rel}")
    print(f"reduction_factor={per_rel / shared:.2f}")
    if num_entities > 0:
        model = GathModel(
            num_entities,
            2 * n,
            cfg.encoder,
            cfg.decoder,
            cfg.train.mode,
            cfg.train.seed,
        )
        total = 0
        per_layer = {}
        for name, shape, count in census(model):
            total += count
            if name.startswith("enc."):
                layer = name.split(".")[1]
                per_layer[layer] = per_layer.get(layer, 0) + count
            print(f"param name={name} shape={'x'.join(map(str, shape)) or '1'} count={count}")
        for layer, count in per_layer.items():
            print(f"layer={layer} parameters={count}")
        print(f"total_parameters={total}")
        M = cfg.encoder.heads
        rel_census = 2 * n * D + 2 * M * D * F
        print(f"relation_census_per_layer={rel_census}")
    return 0


def cmd_prepare(cfg, entities, relations, triples):
    if cfg.dataset:
        kg = _load_dataset(cfg)
        out = cfg.out or cfg.dataset
        os.makedirs(out, exist_ok=True)
        save_vocab(kg.vocab, out)
        print(f"entities={kg.num_entities}")
        print(f"relations_raw={kg.num_relations_raw}")
        print(
            f"triples train={len(kg.train)} valid={len(kg.valid)} "
            f"test={len(kg.test)}"
        )
        print(f"vocab_dir={out}")
        return 0
    out = cfg.out
    write_toy_dataset(
        out,
        num_entities=entities,
        num_relations=relations,
        num_triples=triples,
        seed=cfg.train.seed,
    )
    print(f"dataset_dir={out}")
    return 0


def main(argv=None):
    level = os.environ.get("GATH_LOG", "INFO").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "check-grad":
            cfg = _resolve_config(args, base=check_grad_default_config())
            return cmd_check_grad(cfg, args.step, args.tolerance)
        if args.command == "eval":
            return cmd_eval(
                args.checkpoint,
                args.split,
                dataset_override=args.dataset,
                out_override=args.out,
            )
        cfg = _resolve_config(args)
        if args.command == "train":
            return cmd_train(cfg)
        if args.command == "params":
            return cmd_params(cfg)
        if args.command == "prepare":
            return cmd_prepare(cfg, args.entities, args.relations, args.triples)
        raise ConfigError(f"unknown command {args.command!r}")
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return 2
    except (DataError, CheckpointError) as exc:
        log.error("data error: %s", exc)
        return 3
    except NumericError as exc:
        log.error("numeric error: %s", exc)
        return 4
    except GathError as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
