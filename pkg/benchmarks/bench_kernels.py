"""Benchmark the numba kernel backend against the pure-numpy fallback.

Runs every hot kernel on graph-shaped and decoder-shaped workloads, checks
that the two backends agree numerically, and prints a timing table.

    python3 benchmarks/bench_kernels.py
    python3 benchmarks/bench_kernels.py --edges 500000 --nodes 40000 --repeats 9
"""

import argparse
import time

import numpy as np

from gath.kernels import get_backend


def build_segments(rng, num_edges, num_nodes):
    """Sorted edge->node assignment plus the offsets partition it implies."""
    seg = np.sort(rng.integers(0, num_nodes, size=num_edges))
    offsets = np.zeros(num_nodes + 1, dtype=np.int64)
    np.add.at(offsets, seg + 1, 1)
    np.cumsum(offsets, out=offsets)
    return offsets


def make_cases(args):
    rng = np.random.default_rng(args.seed)
    e, s, d = args.edges, args.nodes, args.dim
    offsets = build_segments(rng, e, s)
    scores = rng.normal(size=e)
    soft = None  # filled lazily for the vjp case
    edge_rows = rng.normal(size=(e, d))
    ids = rng.integers(0, s, size=e)

    b, c = args.batch, args.channels
    img = rng.normal(size=(b, 1, 30, 20))
    ker = rng.normal(size=(c, 1, 3, 3))
    gy = rng.normal(size=(b, c, 28, 18))

    grad = rng.normal(size=e)

    cases = [
        ("segment_sum", "segment_sum", (scores, offsets)),
        ("segment_softmax_fwd", "segment_softmax_fwd", (scores, offsets)),
        ("segment_sum_rows", "segment_sum_rows", (edge_rows, offsets)),
        ("scatter_add_rows", "scatter_add_rows", (ids, edge_rows, s)),
        ("conv2d_fwd", "conv2d_fwd", (img, ker)),
        ("conv2d_grad_kernels", "conv2d_grad_kernels", (img, gy)),
        ("conv2d_grad_input", "conv2d_grad_input", (ker, gy)),
    ]
    # softmax vjp needs the forward output as an input
    ref = get_backend("numpy").segment_softmax_fwd(scores, offsets)
    cases.insert(2, ("segment_softmax_vjp", "segment_softmax_vjp", (ref, grad, offsets)))
    return cases


def time_call(fn, fn_args, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*fn_args)
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--edges", type=int, default=200_000)
    ap.add_argument("--nodes", type=int, default=15_000)
    ap.add_argument("--dim", type=int, default=100)
    ap.add_argument("--batch", type=int, default=128)
    ap.add_argument("--channels", type=int, default=32)
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    np_be = get_backend("numpy")
    try:
        nb_be = get_backend("numba")
    except ImportError:
        print("numba backend not importable; nothing to compare")
        return 1

    cases = make_cases(args)

    # warm the JIT so compile time does not pollute the numbers
    for _, fn_name, fn_args in cases:
        getattr(nb_be, fn_name)(*fn_args)

    print(
        f"edges={args.edges} nodes={args.nodes} dim={args.dim} "
        f"batch={args.batch} channels={args.channels} repeats={args.repeats}"
    )
    header = f"{'kernel':<22} {'numpy':>10} {'numba':>10} {'speedup':>8}  {'max|diff|':>10}"
    print(header)
    print("-" * len(header))

    worst = 0.0
    for name, fn_name, fn_args in cases:
        out_np = getattr(np_be, fn_name)(*fn_args)
        out_nb = getattr(nb_be, fn_name)(*fn_args)
        if not np.allclose(out_np, out_nb, rtol=1e-10, atol=1e-10):
            raise SystemExit(f"backend mismatch on {name}")
        diff = float(np.max(np.abs(out_np - out_nb))) if out_np.size else 0.0
        worst = max(worst, diff)

        t_np = time_call(getattr(np_be, fn_name), fn_args, args.repeats)
        t_nb = time_call(getattr(nb_be, fn_name), fn_args, args.repeats)
        print(
            f"{name:<22} {t_np * 1e3:>8.2f}ms {t_nb * 1e3:>8.2f}ms "
            f"{t_np / t_nb:>7.2f}x  {diff:>10.2e}"
        )

    print(f"\nall kernels agree across backends (worst |diff| {worst:.2e})")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
