#!/usr/bin/env python3
"""Restitution for mixed material pairs and for decreasing mesh size.

Mixed cases pair a rigid bottom particle with a falling top particle of a
different material; the mesh study repeats the M1/M1 drop at finer
discretizations with proportionally smaller horizons.
"""

import argparse
from pathlib import Path

from grainpd import experiments, presets
from grainpd.engine import cor_from_records


def run(label, **kw):
    doc = presets.two_particle(**kw)
    _, rec = experiments.run_config(doc, write_outputs=False)
    cor = cor_from_records(rec)
    print(f"{label}: C_R = {cor:.4f}")
    return label, cor


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="cor_mixed_mesh.csv")
    ap.add_argument("--skip-m2", action="store_true",
                    help="skip the dt = 0.02 us M2/M2 runs")
    args = ap.parse_args()

    rows = []
    rows.append(run("M2_M1_eps0.95", mat_bottom="M2", mat_top="M1",
                    eps_bar_n=0.95, dt=1e-7))
    rows.append(run("M2_M1_eps1.0", mat_bottom="M2", mat_top="M1",
                    eps_bar_n=1.0, dt=1e-7))
    if not args.skip_m2:
        rows.append(run("M2_M2_eps0.95", mat_bottom="M2", mat_top="M2",
                        eps_bar_n=0.95, dt=2e-8))
        rows.append(run("M2_M2_eps1.0", mat_bottom="M2", mat_top="M2",
                        eps_bar_n=1.0, dt=2e-8))
    rows.append(run("mesh_h0.0805", nominal_h=0.0805e-3, horizon=0.375e-3,
                    dt=1e-7, eps_bar_n=0.95))
    rows.append(run("mesh_h0.062", nominal_h=0.062e-3, horizon=0.3e-3,
                    dt=1e-7, eps_bar_n=0.95))

    lines = ["case,cor"] + [f"{name},{cor!r}" for name, cor in rows]
    Path(args.out).write_text("\n".join(lines) + "\n")


if __name__ == "__main__":
    main()
