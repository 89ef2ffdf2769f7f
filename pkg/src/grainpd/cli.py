"""Command-line front end.

Subcommands: ``run`` a config, ``mesh`` a shape to the text mesh format,
``calibrate-cor`` for damping sweeps, ``compress`` for the two-phase
compression test, and ``postprocess`` for derived CSVs.

Exit codes: 0 success, 2 configuration error, 3 numerical instability,
4 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INSTABILITY = 3
EXIT_IO = 4


def _add_common(p, with_out=True):
    p.add_argument("--config", required=True, help="path to a YAML config")
    if with_out:
        p.add_argument("--out", default=None, help="output directory override")
    p.add_argument("--threads", type=int, default=None,
                   help="numba thread count")
    p.add_argument("--seed", type=int, default=None, help="seed override")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="grainpd",
        description="granular media simulation with breakable peridynamic particles")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run one simulation config")
    _add_common(p)
    p.add_argument("--dry-run", action="store_true",
                   help="validate and print derived parameters, do not step")

    p = sub.add_parser("mesh", help="triangulate a shape into a mesh file")
    p.add_argument("--kind", required=True,
                   choices=["disk", "hexagon", "concave", "rectangle"])
    p.add_argument("--radius", type=float, default=0.0)
    p.add_argument("--center", type=float, nargs=2, default=(0.0, 0.0))
    p.add_argument("--axis", type=float, nargs=2, default=(1.0, 0.0))
    p.add_argument("--rotation", type=float, default=0.0)
    p.add_argument("--neck", type=float, default=0.0)
    p.add_argument("--corners", type=float, nargs=4, default=None,
                   metavar=("X0", "Y0", "X1", "Y1"))
    p.add_argument("--target-h", type=float, required=True)
    p.add_argument("--out", required=True, help="mesh file to write")

    p = sub.add_parser("calibrate-cor",
                       help="run a two-particle drop per damping value")
    _add_common(p, with_out=False)
    p.add_argument("--eps", required=True,
                   help="comma-separated eps_bar_n values, e.g. 1.0,0.95,0.9")
    p.add_argument("--out", required=True, help="CSV table to write")

    p = sub.add_parser("compress", help="two-phase compression test")
    _add_common(p)
    p.add_argument("--nx", type=int, default=None)
    p.add_argument("--ny", type=int, default=None)
    p.add_argument("--count", type=int, default=None)
    p.add_argument("--wall-speed", type=float, default=None)

    p = sub.add_parser("postprocess", help="derive CSVs from a time series")
    p.add_argument("--records", required=True, help="timeseries.csv path")
    p.add_argument("--task", required=True,
                   choices=["cor", "reaction", "fz-count"])
    p.add_argument("--window", type=float, default=0.0,
                   help="smoothing window in seconds (reaction)")
    p.add_argument("--wall", default=None, help="wall name (reaction)")
    p.add_argument("--out", required=True)
    return parser


def _set_threads(n):
    if n is None:
        return
    import numba

    numba.set_num_threads(max(1, int(n)))


def _apply_overrides(doc, args):
    if getattr(args, "seed", None) is not None:
        doc = replace(doc, seed=int(args.seed))
    return doc


def _cmd_run(args) -> int:
    from . import experiments, io
    from .engine import Simulation

    doc = _apply_overrides(io.load_config(args.config), args)
    if args.dry_run:
        scene = io.build_scene(doc)
        sim = Simulation(scene)
        print(f"nodes: {sim.n_nodes}")
        print(f"h: {sim.global_h!r}")
        print(f"r_c: {sim.r_c!r}")
        for name, mat in doc.materials.items():
            print(f"s0[{name}]: {mat.s0!r}")
        for a in range(sim.n_bodies):
            for b in range(a + 1, sim.n_bodies):
                print(f"k_n[{scene.bodies[a].name},{scene.bodies[b].name}]: "
                      f"{float(sim.kn_pair[a, b])!r}")
                print(f"beta_bar[{scene.bodies[a].name},{scene.bodies[b].name}]: "
                      f"{float(sim.bbar_pair[a, b])!r}")
        print(f"steps: {scene.n_steps}")
        return EXIT_OK
    experiments.run_config(doc, args.out)
    return EXIT_OK


def _cmd_mesh(args) -> int:
    from .geometry import ShapeSpec, generate_shape, triangulate, write_mesh_file

    kwargs = dict(kind=args.kind, center=tuple(args.center),
                  radius=args.radius, axis=tuple(args.axis),
                  rotation=args.rotation, neck=args.neck)
    if args.corners is not None:
        x0, y0, x1, y1 = args.corners
        kwargs["corners"] = ((x0, y0), (x1, y1))
    spec = ShapeSpec(**kwargs)
    mesh = triangulate(generate_shape(spec, args.target_h), args.target_h)
    write_mesh_file(mesh, args.out)
    print(f"wrote {len(mesh.nodes)} nodes, {len(mesh.triangles)} triangles "
          f"to {args.out}")
    return EXIT_OK


def _cmd_calibrate_cor(args) -> int:
    from . import experiments, io

    doc = _apply_overrides(io.load_config(args.config), args)
    eps_values = [float(tok) for tok in args.eps.split(",") if tok.strip()]
    if not eps_values:
        raise io.ConfigError("--eps must list at least one value")
    rows = experiments.calibrate_cor(doc, eps_values)
    lines = ["eps_bar_n,cor"] + [f"{eps!r},{cor!r}" for eps, cor in rows]
    Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    for eps, cor in rows:
        print(f"eps_bar_n={eps:g}  C_R={cor:.4f}")
    return EXIT_OK


def _cmd_compress(args) -> int:
    from . import experiments, io

    doc = _apply_overrides(io.load_config(args.config), args)
    exp = dict(doc.experiment)
    for key, val in (("nx", args.nx), ("ny", args.ny), ("count", args.count),
                     ("wall_speed", args.wall_speed)):
        if val is not None:
            exp[key] = val
    doc = replace(doc, experiment=exp)
    experiments.run_compression(doc, args.out)
    return EXIT_OK


def _cmd_postprocess(args) -> int:
    from . import io
    from .engine import cor_from_records, reaction_force

    records = io.read_timeseries(args.records)

    def require(column):
        if column not in records:
            raise io.ConfigError(f"records are missing column {column!r}")

    if args.task == "cor":
        require("gap")
        cor = cor_from_records(records)
        Path(args.out).write_text(f"cor\n{cor!r}\n", encoding="utf-8")
        print(f"C_R={cor:.4f}")
    elif args.task == "reaction":
        wall = args.wall or (records.meta.get("walls") or [None])[0]
        if wall is None:
            raise io.ConfigError("records are missing a wall; pass --wall")
        require(f"rf_{wall}")
        t, series = reaction_force(records, wall, args.window)
        lines = ["t,reaction"] + [f"{float(ti)!r},{float(ri)!r}"
                                  for ti, ri in zip(t, series)]
        Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    else:
        require("fz_total")
        t = records["t"]
        fz = records["fz_total"]
        lines = ["t,fz_total"] + [f"{float(ti)!r},{int(fi)}"
                                  for ti, fi in zip(t, fz)]
        Path(args.out).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return EXIT_OK


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    args = build_parser().parse_args(argv)
    _set_threads(getattr(args, "threads", None))

    from .contact import ContactError
    from .engine import EngineError, InstabilityError, NoContactError
    from .geometry import MeshError, ShapeError
    from .io import ConfigError
    from .peridynamics import BondGraphError, MaterialError

    handlers = {
        "run": _cmd_run,
        "mesh": _cmd_mesh,
        "calibrate-cor": _cmd_calibrate_cor,
        "compress": _cmd_compress,
        "postprocess": _cmd_postprocess,
    }
    try:
        return handlers[args.command](args)
    except (ConfigError, EngineError, ShapeError, MeshError, ContactError,
            MaterialError, BondGraphError, NoContactError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except InstabilityError as err:
        print(f"instability: {err}", file=sys.stderr)
        return EXIT_INSTABILITY
    except OSError as err:
        print(f"i/o error: {err}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
