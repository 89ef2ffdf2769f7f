"""Experiment drivers: config runs, CoR sweeps, compression, scaling.

These sit between the CLI and the engine so scripts and tests can run the
same protocols programmatically.
"""

from __future__ import annotations

import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io as gio
from .engine import (Records, RunSettings, Scene, Simulation, cor_from_records,
                     generate_packing)
from .io import BodySpec, ConfigDocument


def run_config(doc: ConfigDocument, out_dir=None,
               write_outputs: bool = True) -> tuple[Simulation, Records]:
    """Build and run one config; optionally write timeseries/snapshot files."""
    scene = gio.build_scene(doc)
    sim = Simulation(scene)
    if write_outputs:
        settings = gio.run_settings(doc, out_dir)
        records = sim.run(settings)
        base = Path(out_dir) if out_dir is not None else Path(doc.output.dir)
        gio.write_timeseries(records, base / "timeseries.csv")
        gio.write_snapshot(sim, base / "final_snapshot.csv")
        gio.save_checkpoint(sim, base / "checkpoint.npz")
    else:
        records = sim.run(RunSettings(sample_every=doc.output.sample_every))
    return sim, records


def with_eps_bar(doc: ConfigDocument, eps_bar_n: float) -> ConfigDocument:
    return replace(doc, contact=replace(doc.contact, eps_bar_n=eps_bar_n))


def calibrate_cor(doc: ConfigDocument, eps_values) -> list[tuple[float, float]]:
    """Run the two-particle drop once per damping value; rows sorted by
    eps_bar_n descending."""
    rows = []
    for eps in eps_values:
        _, records = run_config(with_eps_bar(doc, float(eps)),
                                write_outputs=False)
        rows.append((float(eps), cor_from_records(records)))
    rows.sort(key=lambda r: -r[0])
    return rows


# ----------------------------------------------------------------------
# compression


_COMPRESSION_KEYS = {"kind", "nx", "ny", "count", "r0", "hex_fraction",
                     "jitter", "settle_t", "compress_t", "wall_speed",
                     "top_wall_y", "wall_clearance"}


def _compression_params(doc: ConfigDocument) -> dict:
    exp = doc.experiment
    if exp.get("kind") != "compression":
        raise gio.ConfigError("experiment.kind must be 'compression'")
    unknown = set(exp) - _COMPRESSION_KEYS
    if unknown:
        raise gio.ConfigError(f"unknown experiment key(s) {sorted(unknown)}")
    if doc.mesh_h is None:
        raise gio.ConfigError("compression requires scene.mesh_h")
    return {
        "nx": int(exp.get("nx", 5)),
        "ny": int(exp.get("ny", 5)),
        "count": exp.get("count"),
        "r0": float(exp.get("r0", 1e-3)),
        "hex_fraction": float(exp.get("hex_fraction", 0.5)),
        "jitter": float(exp.get("jitter", 0.1)),
        "settle_t": float(exp.get("settle_t", 0.02)),
        "compress_t": float(exp.get("compress_t", 0.03)),
        "wall_speed": float(exp.get("wall_speed", 0.05)),
        "top_wall_y": exp.get("top_wall_y"),
        "wall_clearance": exp.get("wall_clearance"),
    }


def compression_bodies(doc: ConfigDocument, top_wall_y: float | None = None,
                       wall_speed: float = 0.0) -> tuple[BodySpec, ...]:
    """Packing plus box walls for one compression phase.

    With ``top_wall_y`` unset the top wall is parked above the packing
    (settle phase); otherwise it sits at that height and moves down at
    ``wall_speed``.
    """
    p = _compression_params(doc)
    material = next(iter(doc.materials))
    horizon = doc.materials[material].horizon
    r_c_est = 0.95 * doc.mesh_h
    r_max = p["r0"] * (1.0 + p["jitter"])
    pitch = 2.0 * r_max * 1.12 + r_c_est
    width = p["nx"] * pitch
    height = p["ny"] * pitch
    box = (0.0, 0.0, width, height)
    specs = generate_packing(box, p["nx"], p["ny"], p["r0"], r_c_est,
                             doc.seed, hex_fraction=p["hex_fraction"],
                             count=p["count"], jitter=p["jitter"])
    th = horizon
    y_top = height + 2.0 * p["r0"] if top_wall_y is None else float(top_wall_y)
    side_top = max(y_top, height) + th
    # side walls clear the bottom wall by > R_c so wall nodes never touch
    y_side = 1.05 * r_c_est
    bodies = [
        BodySpec(name="wall_bottom", material=material, fixed=True,
                 shape={"kind": "rectangle",
                        "corners": ((-th, -th), (width + th, 0.0))}),
        BodySpec(name="wall_left", material=material, fixed=True,
                 shape={"kind": "rectangle",
                        "corners": ((-th, y_side), (0.0, side_top))}),
        BodySpec(name="wall_right", material=material, fixed=True,
                 shape={"kind": "rectangle",
                        "corners": ((width, y_side), (width + th, side_top))}),
        BodySpec(name="wall_top", material=material, fixed=True,
                 velocity=(0.0, -wall_speed) if wall_speed else None,
                 shape={"kind": "rectangle",
                        "corners": ((y_side, y_top),
                                    (width - y_side, y_top + th))}),
    ]
    for i, spec in enumerate(specs):
        bodies.append(BodySpec(
            name=f"p{i:03d}", material=material,
            shape={"kind": spec.kind, "center": tuple(spec.center),
                   "radius": spec.radius, "rotation": spec.rotation}))
    return tuple(bodies)


def adopt_state(dst: Simulation, src: Simulation, names) -> None:
    """Copy u, v, and bond flags for ``names`` from one sim to another.

    The destination continues at the source's step count; rigid-body
    motion laws restart from the destination's reference positions.
    """
    for name in names:
        a = src.scene.body_index(name)
        b = dst.scene.body_index(name)
        sa, sb = src.body_slice(a), dst.body_slice(b)
        if sa.stop - sa.start != sb.stop - sb.start:
            raise gio.ConfigError(f"body {name!r} changed size between phases")
        dst.u[sb] = src.u[sa]
        dst.v[sb] = src.v[sa]
        ba0, ba1 = src.indptr[sa.start], src.indptr[sa.stop]
        bb0, bb1 = dst.indptr[sb.start], dst.indptr[sb.stop]
        if ba1 - ba0 != bb1 - bb0:
            raise gio.ConfigError(f"body {name!r} changed bonds between phases")
        dst.intact[bb0:bb1] = src.intact[ba0:ba1]
    dst.step_count = src.step_count
    dst.rigid_ref_step[:] = src.step_count
    dst.broken_total = src.broken_total
    dst._step_mark = dst.step_count
    dst.z[:] = dst.x0 + dst.u
    dst._refresh_ext()


def run_compression(doc: ConfigDocument, out_dir=None):
    """Two-phase compression: settle under gravity, then drive the top wall.

    Returns (settle records, compression records, final simulation).  The
    top wall's compression-phase height defaults to the settled bed top
    plus a small clearance.
    """
    p = _compression_params(doc)
    out = Path(out_dir) if out_dir is not None else Path(doc.output.dir)

    settle_doc = replace(doc, bodies=compression_bodies(doc),
                         t_final=p["settle_t"])
    scene1 = gio.build_scene(settle_doc)
    sim1 = Simulation(scene1)
    rec1 = sim1.run(gio.run_settings(settle_doc, out / "settle"))
    gio.write_timeseries(rec1, out / "settle" / "timeseries.csv")
    gio.write_snapshot(sim1, out / "settle" / "final_snapshot.csv")
    gio.save_checkpoint(sim1, out / "settle" / "checkpoint.npz")

    particles = [b.name for b in scene1.bodies if b.kind == "particle"]
    free = np.concatenate([sim1.z[sim1.body_slice(scene1.body_index(n))]
                           for n in particles])
    bed_top = float(free[:, 1].max())
    if p["top_wall_y"] is not None:
        top_y = float(p["top_wall_y"])
    else:
        clearance = (float(p["wall_clearance"]) if p["wall_clearance"]
                     is not None else 1.2 * sim1.r_c)
        top_y = bed_top + clearance

    press_doc = replace(doc, bodies=compression_bodies(
        doc, top_wall_y=top_y, wall_speed=p["wall_speed"]),
        t_final=p["settle_t"] + p["compress_t"])
    scene2 = gio.build_scene(press_doc)
    sim2 = Simulation(scene2)
    adopt_state(sim2, sim1, particles)
    rec2 = sim2.run(gio.run_settings(press_doc, out / "compress"))
    gio.write_timeseries(rec2, out / "compress" / "timeseries.csv")
    gio.write_snapshot(sim2, out / "compress" / "final_snapshot.csv")
    gio.save_checkpoint(sim2, out / "compress" / "checkpoint.npz")
    return rec1, rec2, sim2


# ----------------------------------------------------------------------
# scaling


def scaling_benchmark(doc: ConfigDocument, counts=(25, 51, 96),
                      grids=((5, 5), (8, 7), (10, 10)), n_steps: int = 2000,
                      warmup: int = 50):
    """Wall time per step for packings of increasing size.

    Returns rows (particle count, node count, seconds per step), measured
    after a short warmup on the settled-phase scene.
    """
    rows = []
    for count, (nx, ny) in zip(counts, grids):
        d = replace(doc, experiment=dict(doc.experiment, nx=nx, ny=ny,
                                         count=count))
        scene = gio.build_scene(replace(d, bodies=compression_bodies(d)))
        sim = Simulation(scene)
        sim.advance(warmup)
        t0 = time.perf_counter()
        sim.advance(n_steps)
        dt_wall = time.perf_counter() - t0
        rows.append((count, sim.n_nodes, dt_wall / n_steps))
    return rows
