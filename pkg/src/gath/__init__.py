"""GATH: graph-attention knowledge-graph completion.

An encoder built from an entity-specific attention network and an
entity-relation joint attention network, a convolutional decoder, and a
filtered-ranking evaluator, all running on a small reverse-mode autodiff
engine over float64 numpy arrays.
"""

__version__ = "0.1.0"
