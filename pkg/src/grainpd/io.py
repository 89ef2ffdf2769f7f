"""Configuration files, scene construction, CSV writers, checkpoints.

Configs are YAML documents with the sections ``scene``, ``materials``,
``contact``, ``integrator``, ``output``, ``experiment``, and ``seed``.
All quantities are SI base units (m, kg, s, Pa, J/m^2).  Unknown keys are
rejected with the full key path so typos fail loudly.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace

import numpy as np
import yaml

from .contact import ContactConfig, ContactError
from .engine import Body, RunSettings, Scene, Simulation
from .geometry import MeshError, ShapeError, ShapeSpec, read_mesh_file, to_meshless, shape_to_cloud
from .peridynamics import MaterialError, MaterialModel


class ConfigError(ValueError):
    """Invalid configuration document; message names the offending key."""


@dataclass(frozen=True)
class BodySpec:
    name: str
    material: str
    shape: dict | None = None
    mesh_file: str | None = None
    fixed: bool = False
    kind: str | None = None       # derived from shape when omitted
    velocity: tuple[float, float] | None = None
    v0: tuple[float, float] = (0.0, 0.0)
    mesh_h: float | None = None


@dataclass(frozen=True)
class OutputSpec:
    dir: str = "out"
    every_n: int = 0
    sample_every: int = 100
    checkpoint_every: int = 0


@dataclass(frozen=True)
class ConfigDocument:
    bodies: tuple[BodySpec, ...]
    materials: dict[str, MaterialModel]
    contact: ContactConfig
    dt: float
    t_final: float
    gravity: tuple[float, float] = (0.0, 0.0)
    mesh_h: float | None = None
    output: OutputSpec = field(default_factory=OutputSpec)
    experiment: dict = field(default_factory=dict)
    seed: int = 0


_SCENE_KEYS = {"gravity", "mesh_h", "bodies"}
_BODY_KEYS = {"name", "shape", "material", "fixed", "velocity", "v0",
              "mesh_h", "mesh_file", "kind"}
_SHAPE_KEYS = {"kind", "center", "radius", "axis", "rotation", "neck", "corners"}
_MATERIAL_KEYS = {"rho", "kappa", "shear", "gc", "horizon"}
_CONTACT_KEYS = {"radius", "spring_modulus", "friction_mu", "friction_enabled",
                 "damping_model", "eps_bar_n", "c_bar", "eps_n", "c",
                 "rebuild_every"}
_INTEGRATOR_KEYS = {"dt", "t_final"}
_OUTPUT_KEYS = {"dir", "every_n", "sample_every", "checkpoint_every"}
_TOP_KEYS = {"scene", "materials", "contact", "integrator", "output",
             "experiment", "seed"}


def _check_keys(mapping: dict, allowed: set, path: str):
    if not isinstance(mapping, dict):
        raise ConfigError(f"{path} must be a mapping")
    for key in mapping:
        if key not in allowed:
            raise ConfigError(f"unknown key {path}.{key}")


def _need(mapping: dict, key: str, path: str):
    if key not in mapping:
        raise ConfigError(f"missing required key {path}.{key}")
    return mapping[key]


def _pair(value, path: str) -> tuple[float, float]:
    try:
        x, y = value
        return (float(x), float(y))
    except (TypeError, ValueError) as err:
        raise ConfigError(f"{path} must be a [x, y] pair") from err


def parse_config(text: str) -> ConfigDocument:
    """Parse and fully validate a YAML config document."""
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as err:
        raise ConfigError(f"malformed YAML: {err}") from err
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping at the top level")
    _check_keys(raw, _TOP_KEYS, "config")

    materials = {}
    for name, spec in _need(raw, "materials", "config").items():
        _check_keys(spec, _MATERIAL_KEYS, f"materials.{name}")
        try:
            materials[name] = MaterialModel(
                rho=float(_need(spec, "rho", f"materials.{name}")),
                kappa=float(_need(spec, "kappa", f"materials.{name}")),
                shear=float(_need(spec, "shear", f"materials.{name}")),
                gc=float(_need(spec, "gc", f"materials.{name}")),
                horizon=float(_need(spec, "horizon", f"materials.{name}")))
        except MaterialError as err:
            raise ConfigError(f"materials.{name}: {err}") from err

    scene = _need(raw, "scene", "config")
    _check_keys(scene, _SCENE_KEYS, "scene")
    gravity = _pair(scene.get("gravity", (0.0, 0.0)), "scene.gravity")
    mesh_h = scene.get("mesh_h")
    bodies = []
    body_list = scene.get("bodies", [])
    if not isinstance(body_list, list):
        raise ConfigError("scene.bodies must be a list")
    for i, b in enumerate(body_list):
        path = f"scene.bodies[{i}]"
        _check_keys(b, _BODY_KEYS, path)
        name = b.get("name", f"body{i}")
        mat = _need(b, "material", path)
        if mat not in materials:
            raise ConfigError(f"{path}.material references undefined material {mat!r}")
        shape = b.get("shape")
        mesh_file = b.get("mesh_file")
        if (shape is None) == (mesh_file is None):
            raise ConfigError(f"{path} needs exactly one of shape or mesh_file")
        if shape is not None:
            _check_keys(shape, _SHAPE_KEYS, f"{path}.shape")
            _need(shape, "kind", f"{path}.shape")
        fixed = bool(b.get("fixed", False))
        velocity = b.get("velocity")
        if velocity is not None:
            velocity = _pair(velocity, f"{path}.velocity")
            if not fixed:
                raise ConfigError(
                    f"{path}.velocity (prescribed motion) requires fixed: true")
        bodies.append(BodySpec(
            name=name, material=mat, shape=shape, mesh_file=mesh_file,
            fixed=fixed, kind=b.get("kind"), velocity=velocity,
            v0=_pair(b.get("v0", (0.0, 0.0)), f"{path}.v0"),
            mesh_h=b.get("mesh_h")))
    names = [b.name for b in bodies]
    if len(set(names)) != len(names):
        raise ConfigError("scene.bodies names must be unique")

    integ = _need(raw, "integrator", "config")
    _check_keys(integ, _INTEGRATOR_KEYS, "integrator")
    dt = float(_need(integ, "dt", "integrator"))
    t_final = float(_need(integ, "t_final", "integrator"))
    if dt <= 0.0:
        raise ConfigError("integrator.dt must be positive")
    if t_final < dt:
        raise ConfigError("integrator.t_final must be at least integrator.dt")

    con = raw.get("contact", {})
    _check_keys(con, _CONTACT_KEYS, "contact")
    try:
        contact = ContactConfig(
            damping_model=con.get("damping_model", "center"),
            eps_bar_n=float(con.get("eps_bar_n", 1.0)),
            c_bar=float(con.get("c_bar", 100.0)),
            eps_n=float(con.get("eps_n", 1.0)),
            c=float(con.get("c", 100.0)),
            friction_enabled=bool(con.get("friction_enabled", False)),
            friction_mu=float(con.get("friction_mu", 0.0)),
            r_c=con.get("radius"),
            k_n=con.get("spring_modulus"),
            rebuild_every=int(con.get("rebuild_every", 1)))
    except ContactError as err:
        raise ConfigError(f"contact: {err}") from err

    out = raw.get("output", {})
    _check_keys(out, _OUTPUT_KEYS, "output")
    output = OutputSpec(
        dir=str(out.get("dir", "out")),
        every_n=int(out.get("every_n", 0)),
        sample_every=int(out.get("sample_every", 100)),
        checkpoint_every=int(out.get("checkpoint_every", 0)))
    if output.sample_every < 1:
        raise ConfigError("output.sample_every must be >= 1")
    for key in ("every_n", "checkpoint_every"):
        val = getattr(output, key)
        if val < 0:
            raise ConfigError(f"output.{key} must be >= 0")
        if val and val % output.sample_every:
            raise ConfigError(
                f"output.{key} must be a multiple of output.sample_every")

    experiment = raw.get("experiment", {})
    if not isinstance(experiment, dict):
        raise ConfigError("experiment must be a mapping")

    return ConfigDocument(
        bodies=tuple(bodies), materials=materials, contact=contact,
        dt=dt, t_final=t_final, gravity=gravity, mesh_h=mesh_h,
        output=output, experiment=dict(experiment),
        seed=int(raw.get("seed", 0)))


def serialize_config(doc: ConfigDocument) -> str:
    """Render a document back to YAML (parse -> serialize round-trips)."""
    body_entries = []
    for b in doc.bodies:
        entry: dict = {"name": b.name, "material": b.material}
        if b.shape is not None:
            entry["shape"] = dict(b.shape)
        if b.mesh_file is not None:
            entry["mesh_file"] = b.mesh_file
        if b.fixed:
            entry["fixed"] = True
        if b.kind is not None:
            entry["kind"] = b.kind
        if b.velocity is not None:
            entry["velocity"] = list(b.velocity)
        if b.v0 != (0.0, 0.0):
            entry["v0"] = list(b.v0)
        if b.mesh_h is not None:
            entry["mesh_h"] = b.mesh_h
        body_entries.append(entry)
    raw = {
        "seed": doc.seed,
        "scene": {"gravity": list(doc.gravity), "bodies": body_entries},
        "materials": {
            name: {"rho": m.rho, "kappa": m.kappa, "shear": m.shear,
                   "gc": m.gc, "horizon": m.horizon}
            for name, m in doc.materials.items()},
        "contact": {
            "damping_model": doc.contact.damping_model,
            "eps_bar_n": doc.contact.eps_bar_n,
            "c_bar": doc.contact.c_bar,
            "eps_n": doc.contact.eps_n,
            "c": doc.contact.c,
            "friction_enabled": doc.contact.friction_enabled,
            "friction_mu": doc.contact.friction_mu,
            "rebuild_every": doc.contact.rebuild_every,
        },
        "integrator": {"dt": doc.dt, "t_final": doc.t_final},
        "output": {"dir": doc.output.dir, "every_n": doc.output.every_n,
                   "sample_every": doc.output.sample_every,
                   "checkpoint_every": doc.output.checkpoint_every},
        "experiment": doc.experiment,
    }
    if doc.mesh_h is not None:
        raw["scene"]["mesh_h"] = doc.mesh_h
    if doc.contact.r_c is not None:
        raw["contact"]["radius"] = doc.contact.r_c
    if doc.contact.k_n is not None:
        raw["contact"]["spring_modulus"] = doc.contact.k_n
    return yaml.safe_dump(raw, sort_keys=False)


def load_config(path) -> ConfigDocument:
    with open(path, "r", encoding="utf-8") as f:
        return parse_config(f.read())


def build_scene(doc: ConfigDocument) -> Scene:
    """Mesh every body and assemble the runnable scene."""
    if not doc.bodies:
        raise ConfigError("scene.bodies is empty (generated-scene experiments "
                          "must go through their dedicated command)")
    bodies = []
    for spec in doc.bodies:
        material = doc.materials[spec.material]
        target = spec.mesh_h or doc.mesh_h
        if spec.mesh_file is not None:
            cloud = to_meshless(read_mesh_file(spec.mesh_file))
            kind = spec.kind or "particle"
        else:
            if target is None:
                raise ConfigError(
                    f"body {spec.name!r} needs mesh_h (or scene.mesh_h)")
            try:
                shape = ShapeSpec(**{k: _tupled(v) for k, v in spec.shape.items()})
            except (ShapeError, TypeError) as err:
                raise ConfigError(f"body {spec.name!r} shape: {err}") from err
            try:
                cloud = shape_to_cloud(shape, float(target))
            except (ShapeError, MeshError) as err:
                raise ConfigError(f"body {spec.name!r}: {err}") from err
            kind = spec.kind or ("wall" if shape.kind == "rectangle" else "particle")
        bodies.append(Body(
            name=spec.name, cloud=cloud, material=material, kind=kind,
            fixed=spec.fixed or kind == "wall",
            prescribed_velocity=spec.velocity, v0=spec.v0))

    track_gap = None
    kind = doc.experiment.get("kind")
    if kind in ("two_particle", "two_particle_wall"):
        particles = [b.name for b in bodies if b.kind == "particle"]
        if len(particles) < 2:
            raise ConfigError(f"experiment {kind} needs two particles")
        track_gap = (particles[0], particles[1])

    return Scene(bodies=bodies, contact=doc.contact, gravity=doc.gravity,
                 dt=doc.dt, t_final=doc.t_final, seed=doc.seed,
                 track_gap=track_gap)


def _tupled(value):
    if isinstance(value, list):
        return tuple(_tupled(v) for v in value)
    return value


def run_settings(doc: ConfigDocument, out_dir=None) -> RunSettings:
    """Run settings with file sinks rooted at ``out_dir`` (or output.dir)."""
    from pathlib import Path

    base = Path(out_dir) if out_dir is not None else Path(doc.output.dir)
    base.mkdir(parents=True, exist_ok=True)

    def snapshot_sink(sim: Simulation):
        write_snapshot(sim, base / f"snapshot_{sim.step_count:09d}.csv")

    def checkpoint_sink(sim: Simulation):
        save_checkpoint(sim, base / "checkpoint.npz")

    return RunSettings(
        sample_every=doc.output.sample_every,
        snapshot_every=doc.output.every_n,
        checkpoint_every=doc.output.checkpoint_every,
        snapshot_sink=snapshot_sink if doc.output.every_n else None,
        checkpoint_sink=checkpoint_sink if doc.output.checkpoint_every else None)


# ----------------------------------------------------------------------
# CSV writers


def write_snapshot(sim: Simulation, path) -> None:
    """Per-node CSV snapshot, sorted by (body, id), full float precision."""
    damage = sim.damage_all()
    lines = ["id,body,x,y,ux,uy,vx,vy,Z,fixed,volume"]
    for b, body in enumerate(sim.scene.bodies):
        lo, hi = int(sim.body_start[b]), int(sim.body_start[b + 1])
        fixed = 1 if body.fixed else 0
        for i in range(lo, hi):
            vals = (sim.x0[i, 0], sim.x0[i, 1], sim.u[i, 0], sim.u[i, 1],
                    sim.v[i, 0], sim.v[i, 1], damage[i])
            nums = ",".join(repr(float(v)) for v in vals)
            lines.append(f"{i - lo},{body.name},{nums},{fixed},{float(sim.vol[i])!r}")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


def read_snapshot(path) -> dict[str, np.ndarray]:
    """Read a snapshot back into column arrays (floats bitwise-identical)."""
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().strip().split(",")
        rows = [line.strip().split(",") for line in f if line.strip()]
    cols: dict[str, list] = {name: [] for name in header}
    for row in rows:
        for name, val in zip(header, row):
            cols[name].append(val)
    out = {}
    for name, vals in cols.items():
        if name == "body":
            out[name] = np.array(vals)
        elif name in ("id", "fixed"):
            out[name] = np.array([int(v) for v in vals])
        else:
            out[name] = np.array([float(v) for v in vals])
    return out


def write_timeseries(records, path) -> None:
    """Time-series CSV with t first; full float precision."""
    names = ["t"] + [k for k in records.columns if k != "t"]
    arrays = [records.columns[k] for k in names]
    lines = [",".join(names)]
    for i in range(len(arrays[0])):
        lines.append(",".join(
            repr(float(a[i])) if np.issubdtype(np.asarray(a).dtype, np.floating)
            else str(a[i]) for a in arrays))
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")
        f.write("# meta " + json.dumps({k: v for k, v in records.meta.items()}) + "\n")


def read_timeseries(path):
    """Read a time-series CSV written by :func:`write_timeseries`."""
    from .engine import Records

    meta = {}
    with open(path, "r", encoding="utf-8") as f:
        header = f.readline().strip().split(",")
        rows = []
        for line in f:
            line = line.strip()
            if not line:
                continue
            if line.startswith("# meta "):
                meta = json.loads(line[len("# meta "):])
                continue
            rows.append([float(v) for v in line.split(",")])
    data = np.asarray(rows) if rows else np.zeros((0, len(header)))
    return Records(columns={name: data[:, i] for i, name in enumerate(header)},
                   meta=meta)


# ----------------------------------------------------------------------
# checkpoints


def save_checkpoint(sim: Simulation, path) -> None:
    """Binary checkpoint; round-trips bitwise."""
    np.savez(path, **sim.checkpoint_state())


def load_checkpoint(sim: Simulation, path) -> None:
    with np.load(path) as data:
        sim.restore_state({k: data[k] for k in data.files})
