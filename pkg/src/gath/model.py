"""Model parameters: entity table, encoder layers, decoder, and census.

All learnable tensors are float64 leaves initialized from a zero-mean
Gaussian with std 0.02, except the per-entity residual gates beta, which
start at 1.0. Allocation order is fixed so a seeded generator reproduces
the same model bit-for-bit.
"""

from collections import OrderedDict

import numpy as np

from .errors import ConfigError
from .ndiff import BatchNormState, Tensor

INIT_STD = 0.02


class EncoderLayerParams:
    """One encoder layer: per-head attention projections plus shared pieces.

    Relation features per layer are one table R (|R_aug| x D) plus the
    shared joint projections W_rq/W_rk per head — never a projection
    matrix per relation.
    """

    def __init__(self, num_entities, num_relations_aug, cfg, rng, joint_only):
        D, d_k, d_v, M = cfg.dim, cfg.d_k, cfg.d_v, cfg.heads

        def gauss(*shape):
            return Tensor(rng.normal(0.0, INIT_STD, shape), requires_grad=True)

        self.W_hq = [gauss(D, d_k) for _ in range(M)]
        self.W_hk = [gauss(D, d_k) for _ in range(M)]
        self.a_h = [gauss(d_k, 1) for _ in range(M)]
        self.R = gauss(num_relations_aug, D)
        self.W_rq = [gauss(D, d_k) for _ in range(M)]
        self.W_rk = [gauss(D, d_k) for _ in range(M)]
        self.a_r = [gauss(d_k, 1) for _ in range(M)]
        self.W_v = [gauss(D, d_v) for _ in range(M)]
        branches = M * d_v if joint_only else 2 * M * d_v
        self.W_o = gauss(branches, D)
        # Identity plus noise: the beta self-loop must carry entity
        # identity from step 0, or the layer drowns it in attention
        # output before the learning-rate schedule decays.
        self.W_h = Tensor(
            np.eye(D) + rng.normal(0.0, INIT_STD, (D, D)), requires_grad=True
        )
        self.beta = Tensor(np.ones(num_entities), requires_grad=True)
        self.bn = BatchNormState(D) if cfg.batch_norm else None

    def named_parameters(self, prefix):
        out = OrderedDict()
        for m in range(len(self.W_hq)):
            out[f"{prefix}.W_hq.{m}"] = self.W_hq[m]
            out[f"{prefix}.W_hk.{m}"] = self.W_hk[m]
            out[f"{prefix}.a_h.{m}"] = self.a_h[m]
        out[f"{prefix}.R"] = self.R
        for m in range(len(self.W_rq)):
            out[f"{prefix}.W_rq.{m}"] = self.W_rq[m]
            out[f"{prefix}.W_rk.{m}"] = self.W_rk[m]
            out[f"{prefix}.a_r.{m}"] = self.a_r[m]
        for m in range(len(self.W_v)):
            out[f"{prefix}.W_v.{m}"] = self.W_v[m]
        out[f"{prefix}.W_o"] = self.W_o
        out[f"{prefix}.W_h"] = self.W_h
        out[f"{prefix}.beta"] = self.beta
        return out


class DecoderParams:
    """Convolutional scorer parameters over (h, r, h*r) stacks."""

    def __init__(self, num_entities, num_relations_aug, enc_cfg, dec_cfg, rng):
        D = enc_cfg.dim

        def gauss(*shape):
            return Tensor(rng.normal(0.0, INIT_STD, shape), requires_grad=True)

        self.R_dec = gauss(num_relations_aug, D)
        self.omega = gauss(dec_cfg.channels, 1, dec_cfg.kernel_h, dec_cfg.kernel_w)
        self.W_fc = gauss(dec_cfg.flat_dim, D)
        self.bias = gauss(num_entities) if dec_cfg.entity_bias else None
        self.bn = BatchNormState(D) if dec_cfg.batch_norm else None

    def named_parameters(self, prefix="dec"):
        out = OrderedDict()
        out[f"{prefix}.R_dec"] = self.R_dec
        out[f"{prefix}.omega"] = self.omega
        out[f"{prefix}.W_fc"] = self.W_fc
        if self.bias is not None:
            out[f"{prefix}.bias"] = self.bias
        return out


class GathModel:
    """All learnable state for one run.

    mode selects what exists and what runs:
      full         — both attention networks feed the aggregation.
      joint_only   — entity-specific parameters are still allocated (so
                     the ablation can be tested for invariance) but the
                     compute path never reads them; W_o shrinks.
      decoder_only — no encoder layers at all; the decoder scores the
                     learnable entity table directly.
    """

    def __init__(self, num_entities, num_relations_aug, enc_cfg, dec_cfg, mode, seed):
        if mode not in ("full", "joint_only", "decoder_only"):
            raise ConfigError(f"unknown mode {mode!r}")
        if num_entities <= 0 or num_relations_aug <= 0:
            raise ConfigError("model needs positive entity/relation counts")
        if num_relations_aug % 2 != 0:
            raise ConfigError("relation count must include reverses (even)")
        self.num_entities = num_entities
        self.num_relations_aug = num_relations_aug
        self.enc_cfg = enc_cfg
        self.dec_cfg = dec_cfg
        self.mode = mode
        self.seed = seed
        rng = np.random.default_rng(seed)
        self.H0 = Tensor(
            rng.normal(0.0, INIT_STD, (num_entities, enc_cfg.dim)),
            requires_grad=True,
        )
        self.layers = []
        if mode != "decoder_only":
            self.layers = [
                EncoderLayerParams(
                    num_entities,
                    num_relations_aug,
                    enc_cfg,
                    rng,
                    joint_only=(mode == "joint_only"),
                )
                for _ in range(enc_cfg.layers)
            ]
        self.decoder = DecoderParams(
            num_entities, num_relations_aug, enc_cfg, dec_cfg, rng
        )

    def named_parameters(self):
        out = OrderedDict()
        out["H0"] = self.H0
        for l, layer in enumerate(self.layers):
            out.update(layer.named_parameters(f"enc.{l}"))
        out.update(self.decoder.named_parameters())
        return out

    def named_buffers(self):
        out = OrderedDict()
        for l, layer in enumerate(self.layers):
            if layer.bn is not None:
                out[f"enc.{l}.bn.mean"] = layer.bn.mean
                out[f"enc.{l}.bn.var"] = layer.bn.var
        if self.decoder.bn is not None:
            out["dec.bn.mean"] = self.decoder.bn.mean
            out["dec.bn.var"] = self.decoder.bn.var
        return out

    def zero_grad(self):
        for p in self.named_parameters().values():
            p.grad = None

    def parameter_count(self):
        return sum(p.size for p in self.named_parameters().values())


def census(model):
    """(name, shape, count) rows in parameter order."""
    return [
        (name, p.shape, p.size) for name, p in model.named_parameters().items()
    ]


def relation_feature_claim(num_raw_relations, dim, proj_dim):
    """Closed-form relation-parameter comparison.

    Shared-projection scheme: n·D + 2·D·F (one embedding per relation
    plus two projections shared by all relations). Per-relation-matrix
    scheme: 2·n·D·F (a query and a key matrix for every relation).
    """
    n, D, F = num_raw_relations, dim, proj_dim
    return n * D + 2 * D * F, 2 * n * D * F
