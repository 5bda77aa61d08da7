"""L-layer graph-attention encoder.

Each layer scores every train_aug edge (i, r, j) with two attention
networks — entity-specific (relation-blind) and entity-relation joint —
normalizes each over the head's neighborhood, aggregates value-projected
tail embeddings per head and per network, concatenates, projects, and
adds a beta-gated self-loop before the nonlinearity.
"""

import numpy as np

from .errors import NumericError, ShapeError
from .ndiff import (
    add,
    batch_norm_1d,
    concat_last_dim,
    dropout,
    gather_rows,
    hadamard,
    leaky_rectifier,
    matmul,
    reshape,
    segment_softmax,
    segment_sum_rows,
    sigmoid,
    tanh,
)

_ACTIVATIONS = {"tanh": tanh, "sigmoid": sigmoid}


def apply_activation(x, name, slope=0.2):
    if name == "leaky_rectifier":
        return leaky_rectifier(x, slope)
    try:
        return _ACTIVATIONS[name](x)
    except KeyError:
        raise ShapeError(f"unknown activation {name!r}") from None


def _edge_scores(q_edge, k_edge, a, slope):
    """f(q ⊙ k): Hadamard then the d_k -> 1 feed-forward, per edge."""
    s = matmul(hadamard(q_edge, k_edge), a)
    s = leaky_rectifier(s, slope)
    return reshape(s, (-1,))


def entity_attention(H, index, W_hq, W_hk, a_h, slope=0.2):
    """Relation-blind attention weights for one head, per edge.

    Queries/keys are projections of head and tail entity embeddings;
    weights are softmax-normalized within each head entity's
    neighborhood.
    """
    Q = matmul(H, W_hq)
    K = matmul(H, W_hk)
    q_edge = gather_rows(Q, index.heads)
    k_edge = gather_rows(K, index.tails)
    scores = _edge_scores(q_edge, k_edge, a_h, slope)
    return segment_softmax(scores, index.offsets)


def joint_attention(H, index, R, W_rq, W_rk, a_r, slope=0.2):
    """Entity-relation joint attention weights for one head, per edge.

    Entity embeddings are gated elementwise by the edge's relation
    embedding before the shared query/key projections, so relation
    features stay at one embedding per relation plus two shared
    matrices.
    """
    if index.num_edges and index.rels.max() >= R.shape[0]:
        raise ShapeError(
            f"relation id {int(index.rels.max())} outside table of "
            f"{R.shape[0]} relations"
        )
    r_edge = gather_rows(R, index.rels)
    h_i = gather_rows(H, index.heads)
    h_j = gather_rows(H, index.tails)
    q_edge = matmul(hadamard(h_i, r_edge), W_rq)
    k_edge = matmul(hadamard(h_j, r_edge), W_rk)
    scores = _edge_scores(q_edge, k_edge, a_r, slope)
    return segment_softmax(scores, index.offsets)


def aggregate_heads(H, index, alphas, W_v_list, W_o):
    """Weighted neighbor sums per head/network, concatenated, projected.

    alphas is a list of (per-edge weight vector, head-index m) pairs in
    concatenation order; each uses value projection W_v_list[m]. Entities
    with no neighbors get zero rows before the W_o projection.
    """
    values = [matmul(H, W_v) for W_v in W_v_list]
    parts = []
    for alpha, m in alphas:
        v_edge = gather_rows(values[m], index.tails)
        weighted = hadamard(reshape(alpha, (-1, 1)), v_edge)
        parts.append(segment_sum_rows(weighted, index.offsets))
    return matmul(concat_last_dim(parts), W_o)


def layer_forward(
    H,
    index,
    params,
    cfg,
    train_mode,
    rng,
    layer_idx=0,
    entity_specific=True,
    update_stats=None,
):
    """One encoder layer: attention, aggregation, beta residual, sigma.

    Input dropout regularizes the copy of H feeding attention and
    aggregation; the beta self-loop reads the undropped input so the
    identity path through the network stays intact.
    """
    H_att = dropout(H, cfg.dropout_input, train_mode, rng)
    alphas = []
    for m in range(cfg.heads):
        if entity_specific:
            alphas.append(
                (
                    entity_attention(
                        H_att,
                        index,
                        params.W_hq[m],
                        params.W_hk[m],
                        params.a_h[m],
                        cfg.attention_slope,
                    ),
                    m,
                )
            )
        alphas.append(
            (
                joint_attention(
                    H_att,
                    index,
                    params.R,
                    params.W_rq[m],
                    params.W_rk[m],
                    params.a_r[m],
                    cfg.attention_slope,
                ),
                m,
            )
        )
    agg = aggregate_heads(H_att, index, alphas, params.W_v, params.W_o)
    agg = dropout(agg, cfg.dropout_output, train_mode, rng)
    self_loop = hadamard(reshape(params.beta, (-1, 1)), matmul(H, params.W_h))
    pre = add(agg, self_loop)
    if params.bn is not None:
        # Normalizing ahead of the squashing nonlinearity keeps rows from
        # collectively railing at +-1, which would erase entity identity.
        pre = batch_norm_1d(pre, params.bn, train_mode, update_stats=update_stats)
    out = apply_activation(pre, cfg.activation)
    if not np.all(np.isfinite(out.data)):
        raise NumericError(f"non-finite activations in encoder layer {layer_idx}")
    return out


def encode(model, index, train_mode, rng, update_stats=None):
    """Run all encoder layers; decoder_only models return H0 directly."""
    H = model.H0
    for l, params in enumerate(model.layers):
        H = layer_forward(
            H,
            index,
            params,
            model.enc_cfg,
            train_mode,
            rng,
            layer_idx=l,
            entity_specific=(model.mode == "full"),
            update_stats=update_stats,
        )
    return H
