"""Convolutional decoder: scores every entity as tail for (h, r) queries.

The three D-dimensional rows h, r, h*r are each reshaped to d_w x d_h and
stacked vertically into one single-channel (3*d_w) x d_h image, convolved
(valid padding, stride 1), flattened, projected back to D, passed through
the nonlinearity, and dotted with every entity embedding.
"""

import numpy as np

from .encoder import apply_activation
from .errors import NumericError, ShapeError
from .ndiff import (
    add,
    batch_norm_1d,
    conv2d,
    dropout,
    hadamard,
    matmul,
    reshape,
    sigmoid,
    stack_rows,
    transpose,
)


def score_all_tails(
    h_emb, r_emb, H_all, params, cfg, train_mode, rng, update_stats=None
):
    """Raw scores g for a batch of queries against all entities.

    h_emb/r_emb are [B, D] (a single query may pass [D]); returns [B, |E|].
    """
    if h_emb.data.ndim == 1:
        h_emb = reshape(h_emb, (1, -1))
    if r_emb.data.ndim == 1:
        r_emb = reshape(r_emb, (1, -1))
    B, D = h_emb.shape
    if r_emb.shape != (B, D):
        raise ShapeError(f"query shapes {h_emb.shape} vs {r_emb.shape}")
    if D != cfg.d_w * cfg.d_h:
        raise ShapeError(
            f"embedding dim {D} does not reshape to {cfg.d_w}x{cfg.d_h}"
        )
    stacked = stack_rows([h_emb, r_emb, hadamard(h_emb, r_emb)])
    image = reshape(stacked, (B, 1, 3 * cfg.d_w, cfg.d_h))
    fmap = conv2d(image, params.omega)
    flat = reshape(fmap, (B, -1))
    flat = dropout(flat, cfg.dropout, train_mode, rng)
    hidden = matmul(flat, params.W_fc)
    if params.bn is not None:
        hidden = batch_norm_1d(
            hidden, params.bn, train_mode, update_stats=update_stats
        )
    hidden = apply_activation(hidden, cfg.activation)
    scores = matmul(hidden, transpose(H_all))
    if params.bias is not None:
        scores = add(scores, reshape(params.bias, (1, -1)))
    if not np.all(np.isfinite(scores.data)):
        raise NumericError("non-finite decoder scores")
    return scores


def predict_prob(scores):
    """Per-tail probabilities: elementwise sigmoid of raw scores."""
    return sigmoid(scores)
