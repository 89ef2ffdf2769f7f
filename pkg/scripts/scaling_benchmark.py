#!/usr/bin/env python3
"""Wall time per step for packings of increasing size.

The contact neighbor search and the peridynamic force assembly are both
O(nodes); the per-step cost should track the node count.
"""

import argparse
from pathlib import Path

from grainpd import experiments, presets


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="scaling.csv")
    ap.add_argument("--steps", type=int, default=2000)
    args = ap.parse_args()

    doc = presets.compression()
    rows = experiments.scaling_benchmark(doc, n_steps=args.steps)
    lines = ["particles,nodes,seconds_per_step"]
    for count, nodes, per_step in rows:
        lines.append(f"{count},{nodes},{per_step!r}")
        print(f"{count:4d} particles  {nodes:6d} nodes  "
              f"{per_step * 1e6:8.1f} us/step")
    Path(args.out).write_text("\n".join(lines) + "\n")


if __name__ == "__main__":
    main()
