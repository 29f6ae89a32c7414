#!/usr/bin/env python3
"""Run the built-in ranking power scenarios and collect one CSV per run.

Each scenario S1..S8 is run in its balanced and unbalanced variant.  With
the default 1000 replicates this takes a while; use ``--replicates 300``
for a quick pass (binomial standard error ~0.03).

Usage:
    python3 scripts/run_power_study.py --outdir results/power --replicates 300
"""

from __future__ import annotations

import argparse
import json
from pathlib import Path

from edgecount.simulate import BUILTIN_SCENARIOS, built_in_scenario, run_scenario


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--outdir", type=Path, default=Path("results/power"))
    parser.add_argument("--replicates", type=int, default=1000)
    parser.add_argument("--seed", type=int, default=20260815)
    parser.add_argument("--scenarios", nargs="*", default=list(BUILTIN_SCENARIOS))
    args = parser.parse_args()

    args.outdir.mkdir(parents=True, exist_ok=True)
    for name in args.scenarios:
        for unbalanced in (False, True):
            tag = f"{name}{'_unbalanced' if unbalanced else '_balanced'}"
            config = built_in_scenario(
                name, unbalanced=unbalanced,
                replicates=args.replicates, seed=args.seed,
            )
            result = run_scenario(config)
            csv_path = args.outdir / f"{tag}.csv"
            csv_path.write_text(result.to_csv_text(), encoding="utf-8")
            json_path = args.outdir / f"{tag}.json"
            with open(json_path, "w", encoding="utf-8") as fh:
                json.dump(result.to_json_dict(), fh, indent=2, sort_keys=True)
                fh.write("\n")
            top = sorted(result.power.items(), key=lambda kv: -kv[1])[:3]
            summary = ", ".join(f"{k}={v:.3f}" for k, v in top)
            print(f"{tag}: n=({config.n1},{config.n2})  best: {summary}")


if __name__ == "__main__":
    main()
