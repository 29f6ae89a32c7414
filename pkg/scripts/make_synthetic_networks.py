#!/usr/bin/env python3
"""Generate the bundled synthetic directed-network dataset.

Writes ``data/synthetic_networks.csv``: two samples of daily-interaction
style networks encoded as flattened 0/1 adjacency matrices, one row per
observation (``label,cell,cell,...`` after a ``nodes=K`` header line).

Each sample draws with replacement from a small pool of distinct
networks, so the dataset contains genuinely repeated observations — the
situation the package exists for.  The two pools share most of their
structure but sample 2 is drawn from a slightly denser regime, so the
two-sample test has something to find.  The generator is deterministic;
re-running it reproduces the committed file byte for byte.
"""

from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np

N_NODES = 10
POOL_SIZE = 18
N_SAMPLE1 = 60
N_SAMPLE2 = 60
SEED = 7


def random_directed_network(rng: np.random.Generator, density: float) -> np.ndarray:
    adj = (rng.random((N_NODES, N_NODES)) < density).astype(np.int64)
    np.fill_diagonal(adj, 0)
    return adj


def build_pool(rng: np.random.Generator, density: float) -> list[np.ndarray]:
    pool = []
    seen = set()
    while len(pool) < POOL_SIZE:
        net = random_directed_network(rng, density)
        key = net.tobytes()
        if key not in seen:
            seen.add(key)
            pool.append(net)
    return pool


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument(
        "--output",
        default=Path(__file__).resolve().parent.parent / "data" / "synthetic_networks.csv",
        type=Path,
    )
    args = parser.parse_args()

    rng = np.random.default_rng(SEED)
    pool1 = build_pool(rng, density=0.10)
    pool2 = build_pool(rng, density=0.16)

    lines = [f"nodes={N_NODES}"]
    for label, pool, count in ((1, pool1, N_SAMPLE1), (2, pool2, N_SAMPLE2)):
        picks = rng.integers(0, len(pool), size=count)
        for idx in picks:
            cells = ",".join(str(int(x)) for x in pool[idx].ravel())
            lines.append(f"{label},{cells}")

    args.output.parent.mkdir(parents=True, exist_ok=True)
    args.output.write_text("\n".join(lines) + "\n", encoding="utf-8")

    n_rows = N_SAMPLE1 + N_SAMPLE2
    distinct = len({line.split(",", 1)[1] for line in lines[1:]})
    print(f"wrote {args.output}: {n_rows} networks on {N_NODES} nodes, "
          f"{distinct} distinct adjacency matrices")


if __name__ == "__main__":
    main()
