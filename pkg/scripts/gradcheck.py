"""Finite-difference check of the full model in float64 on random small graphs.

    python3 scripts/gradcheck.py --samples-per-param 20
"""

import argparse
import sys
import time

import numpy as np

from fragxsite import autodiff as ad
from fragxsite.featurize import FEATURE_DIM, GraphSample
from fragxsite.gradcheck import max_relative_error
from fragxsite.model import FragXsiteDTI, InteractionSample, ModelConfig


def random_sample(rng, n_frag, n_pock, label):
    def graph():
        n = int(rng.integers(1, 6))
        edges = [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < 0.5]
        return GraphSample(rng.random((n, FEATURE_DIM)), np.array(edges, dtype=np.int64).reshape(-1, 2))
    return InteractionSample([graph() for _ in range(n_frag)], [graph() for _ in range(n_pock)], label)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--samples-per-param", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--tol", type=float, default=1e-4)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    cfg = ModelConfig(hidden=8, dim=8, heads=2, latents=4, max_fragments=4, max_pockets=4, dropout=0.0)
    model = FragXsiteDTI(cfg).astype(np.float64).eval()
    batch = [random_sample(rng, 2, 2, 1), random_sample(rng, 3, 1, 0)]
    y = np.array([1.0, 0.0])
    loss = lambda: ad.bce_with_logits(model.forward_logits(batch)[0], y)

    t0 = time.perf_counter()
    worst_name, worst = "", 0.0
    for name, p in model.named_parameters():
        err = max_relative_error(loss, [p], samples_per_param=args.samples_per_param, floor=1e-5)
        if err > worst:
            worst_name, worst = name, err
    print(f"max relative error {worst:.2e} ({worst_name}) in {time.perf_counter() - t0:.1f}s")
    sys.exit(0 if worst < args.tol else 1)


if __name__ == "__main__":
    main()
