"""Canned experiment configurations.

Builders return fully validated :class:`~grainpd.io.ConfigDocument` objects
by rendering a raw dict through the normal config parser, so presets and
hand-written YAML files take the same path.

Material sets (SI units):

========  =========  ==========  =========  ======
name      rho        kappa       shear      gc
========  =========  ==========  =========  ======
M1        1200       2.16e7      1.296e7    50
M2        1200       2.0e9       1.2e9      500
========  =========  ==========  =========  ======
"""

from __future__ import annotations

import math

import yaml

from .io import ConfigDocument, parse_config

MATERIALS = {
    "M1": {"rho": 1200.0, "kappa": 2.16e7, "shear": 1.296e7, "gc": 50.0},
    "M2": {"rho": 1200.0, "kappa": 2.0e9, "shear": 1.2e9, "gc": 500.0},
}

# Triangulator targets calibrated so the measured minimum node distance of
# an R = 1 mm disk lands on the nominal mesh size (within ~1%).
MESH_TARGETS = {
    0.1423e-3: 0.193884e-3,
    0.0805e-3: 0.102638e-3,
    0.062e-3: 0.079825e-3,
}


def mesh_target(nominal_h: float) -> float:
    """Triangulator target producing roughly the nominal minimum distance."""
    for nom, target in MESH_TARGETS.items():
        if abs(nominal_h - nom) < 1e-9:
            return target
    return nominal_h / 0.75


def _materials_section(entries: dict[str, float], horizon: float) -> dict:
    out = {}
    for name in entries:
        out[name] = dict(MATERIALS[name], horizon=horizon)
    return out


def two_particle(mat_bottom: str = "M1", mat_top: str = "M1",
                 r_bottom: float = 1e-3, r_top: float = 1e-3,
                 h0: float = 1e-3, v0: float = 0.0,
                 eps_bar_n: float = 1.0, horizon: float = 0.6e-3,
                 nominal_h: float = 0.1423e-3, dt: float = 2e-7,
                 t_final: float = 0.04, sample_every: int = 50,
                 seed: int = 0) -> ConfigDocument:
    """Drop test: fixed rigid bottom disk, top disk falling from gap ``h0``.

    ``v0`` adds an initial downward speed for impact-fracture runs.
    """
    raw = {
        "seed": seed,
        "scene": {
            "gravity": [0.0, -10.0],
            "mesh_h": mesh_target(nominal_h),
            "bodies": [
                {"name": "bottom", "material": mat_bottom, "fixed": True,
                 "shape": {"kind": "disk", "center": [0.0, 0.0],
                           "radius": r_bottom}},
                {"name": "top", "material": mat_top,
                 "shape": {"kind": "disk",
                           "center": [0.0, r_bottom + r_top + h0],
                           "radius": r_top},
                 "v0": [0.0, -v0]},
            ],
        },
        "materials": _materials_section({mat_bottom: 1, mat_top: 1}, horizon),
        "contact": {"damping_model": "center", "eps_bar_n": eps_bar_n,
                    "c_bar": 100.0},
        "integrator": {"dt": dt, "t_final": t_final},
        "output": {"sample_every": sample_every},
        "experiment": {"kind": "two_particle"},
    }
    return parse_config(yaml.safe_dump(raw))


def two_particle_wall(mat_wall: str = "M1", mat_bottom: str = "M1",
                      mat_top: str = "M1", r_bottom: float = 1e-3,
                      r_top: float = 2e-3, h0: float = 1e-3,
                      wall_gap: float = 2e-4, v0: float = 5.0,
                      eps_bar_n: float = 0.95, horizon: float = 0.6e-3,
                      nominal_h: float = 0.1423e-3, dt: float = 1e-7,
                      t_final: float = 1e-3, sample_every: int = 50,
                      seed: int = 0) -> ConfigDocument:
    """Two falling particles above a fixed wall; the top one starts at -v0."""
    half_w = 2.0 * (r_bottom + r_top)
    raw = {
        "seed": seed,
        "scene": {
            "gravity": [0.0, -10.0],
            "mesh_h": mesh_target(nominal_h),
            "bodies": [
                {"name": "bottom", "material": mat_bottom,
                 "shape": {"kind": "disk", "center": [0.0, r_bottom],
                           "radius": r_bottom}},
                {"name": "top", "material": mat_top,
                 "shape": {"kind": "disk",
                           "center": [0.0, 2.0 * r_bottom + h0 + r_top],
                           "radius": r_top},
                 "v0": [0.0, -v0]},
                {"name": "wall", "material": mat_wall, "fixed": True,
                 "shape": {"kind": "rectangle",
                           "corners": [[-half_w, -wall_gap - horizon],
                                       [half_w, -wall_gap]]}},
            ],
        },
        "materials": _materials_section(
            {mat_wall: 1, mat_bottom: 1, mat_top: 1}, horizon),
        "contact": {"damping_model": "center", "eps_bar_n": eps_bar_n,
                    "c_bar": 100.0},
        "integrator": {"dt": dt, "t_final": t_final},
        "output": {"sample_every": sample_every},
        "experiment": {"kind": "two_particle_wall"},
    }
    return parse_config(yaml.safe_dump(raw))


def compression(nx: int = 5, ny: int = 5, count: int | None = None,
                r0: float = 1e-3, hex_fraction: float = 0.5,
                jitter: float = 0.1, material: str = "M1",
                horizon: float = 0.6e-3, mesh_h: float = 0.32e-3,
                eps_bar_n: float = 0.8, dt: float = 1e-7,
                settle_t: float = 0.02, compress_t: float = 0.03,
                wall_speed: float = 0.05, top_wall_y: float | None = None,
                wall_clearance: float | None = None,
                sample_every: int = 200, seed: int = 7) -> ConfigDocument:
    """Base document for the two-phase compression test.

    ``scene.bodies`` is left empty: the ``compress`` command generates the
    packing and walls from the ``experiment`` parameters.
    """
    experiment = {
        "kind": "compression", "nx": nx, "ny": ny, "r0": r0,
        "hex_fraction": hex_fraction, "jitter": jitter,
        "settle_t": settle_t, "compress_t": compress_t,
        "wall_speed": wall_speed,
    }
    if count is not None:
        experiment["count"] = count
    if top_wall_y is not None:
        experiment["top_wall_y"] = top_wall_y
    if wall_clearance is not None:
        experiment["wall_clearance"] = wall_clearance
    raw = {
        "seed": seed,
        "scene": {"gravity": [0.0, -10.0], "mesh_h": mesh_h, "bodies": []},
        "materials": _materials_section({material: 1}, horizon),
        "contact": {"damping_model": "center", "eps_bar_n": eps_bar_n,
                    "c_bar": 100.0},
        "integrator": {"dt": dt, "t_final": settle_t + compress_t},
        "output": {"sample_every": sample_every},
        "experiment": experiment,
    }
    return parse_config(yaml.safe_dump(raw))
