#!/usr/bin/env python3
"""Two-particle restitution vs center-damping parameter (M1/M1, R = 1 mm).

Writes a CSV table of (eps_bar_n, C_R) for the damping sweep; compare with
the reference values {1: 1, 0.95: 0.946, 0.9: 0.893, 0.85: 0.845, 0.8: 0.796}.
"""

import argparse
from pathlib import Path

from grainpd import experiments, presets


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="cor_table.csv")
    ap.add_argument("--eps", default="1.0,0.95,0.9,0.85,0.8")
    ap.add_argument("--t-final", type=float, default=0.04)
    args = ap.parse_args()

    doc = presets.two_particle(t_final=args.t_final)
    eps = [float(tok) for tok in args.eps.split(",")]
    rows = experiments.calibrate_cor(doc, eps)
    lines = ["eps_bar_n,cor"] + [f"{e!r},{c!r}" for e, c in rows]
    Path(args.out).write_text("\n".join(lines) + "\n")
    for e, c in rows:
        print(f"eps_bar_n={e:g}  C_R={c:.4f}")


if __name__ == "__main__":
    main()
