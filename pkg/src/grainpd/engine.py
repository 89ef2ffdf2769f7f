"""Scene assembly, explicit time integration, observers, and packings.

The integrator is the velocity-staggered (leapfrog) form of the central
difference scheme: a = F/rho + g, v^{n+1/2} = v^{n-1/2} + dt a,
u^{n+1} = u^n + dt v^{n+1/2}, bootstrapped with v^{1/2} = v0 + (dt/2) a0.
Forces that need velocities (damping, friction) see v^{n-1/2}.  Fixed
bodies follow their prescribed-velocity law and never feel forces; their
force slots still accumulate contact forces for reaction observers.

After each displacement update the bond-breakage check runs, so dilation
and forces of the next step use the flags settled at the end of this one.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import _kernels
from .contact import ContactConfig, dashpot_viscosity, effective_bulk_modulus, spring_modulus
from .geometry import MeshlessCloud
from .peridynamics import BondGraph, MaterialModel, build_bond_graph

logger = logging.getLogger(__name__)


class EngineError(ValueError):
    """Inconsistent scene configuration."""


class InstabilityError(RuntimeError):
    """The integration produced non-finite or runaway displacements."""

    def __init__(self, message: str, step: int):
        super().__init__(f"{message} (at step {step})")
        self.step = step


class NoContactError(RuntimeError):
    """A two-particle record contains no contact event."""


@dataclass
class Body:
    """A particle or wall: meshless cloud, material, and motion flags.

    ``kind`` is ``particle`` or ``wall``; walls are always fixed and take
    the node-wise center-damping treatment.  ``fixed`` bodies are rigid:
    no bonds, no integration, optional constant ``prescribed_velocity``.
    ``v0`` is the initial velocity of a deformable body.
    """

    name: str
    cloud: MeshlessCloud
    material: MaterialModel
    kind: str = "particle"
    fixed: bool = False
    prescribed_velocity: tuple[float, float] | None = None
    v0: tuple[float, float] = (0.0, 0.0)
    bonds: BondGraph | None = None

    def __post_init__(self):
        if self.kind not in ("particle", "wall"):
            raise EngineError(f"body kind must be particle or wall, got {self.kind!r}")
        if self.kind == "wall" and not self.fixed:
            raise EngineError(f"wall {self.name!r} must be fixed")
        if self.prescribed_velocity is not None and not self.fixed:
            raise EngineError(
                f"prescribed motion on body {self.name!r} requires fixed=True")

    @property
    def volume(self) -> float:
        return self.cloud.total_volume

    @property
    def mass(self) -> float:
        return self.material.rho * self.cloud.total_volume

    def centroid(self) -> np.ndarray:
        return self.cloud.volumes @ self.cloud.nodes / self.cloud.total_volume


@dataclass
class Scene:
    """Bodies plus global physics and integration parameters."""

    bodies: list[Body]
    contact: ContactConfig = field(default_factory=ContactConfig)
    gravity: tuple[float, float] = (0.0, 0.0)
    dt: float = 1e-7
    t_final: float = 1e-3
    seed: int = 0
    track_gap: tuple[str, str] | None = None
    external_force: Callable | None = None

    def validate(self) -> "Scene":
        if not self.bodies:
            raise EngineError("scene needs at least one body")
        if not self.dt > 0.0:
            raise EngineError(f"dt must be positive, got {self.dt}")
        if self.t_final < self.dt:
            raise EngineError("t_final must be at least one time step")
        names = [b.name for b in self.bodies]
        if len(set(names)) != len(names):
            raise EngineError(f"duplicate body names in {names}")
        if self.track_gap is not None:
            for name in self.track_gap:
                if name not in names:
                    raise EngineError(f"track_gap references unknown body {name!r}")
        return self

    def body_index(self, name: str) -> int:
        for i, b in enumerate(self.bodies):
            if b.name == name:
                return i
        raise KeyError(name)

    @property
    def n_steps(self) -> int:
        return int(round(self.t_final / self.dt))


@dataclass
class RunSettings:
    """Observer and output cadences, in steps."""

    sample_every: int = 100
    snapshot_every: int = 0
    checkpoint_every: int = 0
    snapshot_sink: Callable | None = None
    checkpoint_sink: Callable | None = None


@dataclass
class Records:
    """Sampled time series plus run metadata."""

    columns: dict[str, np.ndarray]
    meta: dict

    def __getitem__(self, key: str) -> np.ndarray:
        return self.columns[key]

    def __contains__(self, key: str) -> bool:
        return key in self.columns


class StepState:
    """Read-only view of the per-node state at the current step."""

    def __init__(self, sim: "Simulation"):
        self._sim = sim

    @property
    def step(self) -> int:
        return self._sim.step_count

    @property
    def t(self) -> float:
        return self._sim.step_count * self._sim.scene.dt

    @property
    def u(self) -> np.ndarray:
        return self._sim.u

    @property
    def v(self) -> np.ndarray:
        return self._sim.v

    @property
    def z(self) -> np.ndarray:
        return self._sim.z

    @property
    def force(self) -> np.ndarray:
        return self._sim.force


_DAMPING_MODE = {"off": 0, "center": 1, "node": 2}


def _empty_bonds(n: int, horizon: float) -> BondGraph:
    return BondGraph(
        indptr=np.zeros(n + 1, dtype=np.int64),
        neighbors=np.zeros(0, dtype=np.int32),
        ref_length=np.zeros(0),
        influence_w=np.zeros(0),
        intact=np.zeros(0, dtype=np.uint8),
        weighted_volume=np.ones(n),
        horizon=horizon,
    )


class Simulation:
    """Flattened, runnable instance of a :class:`Scene`."""

    def __init__(self, scene: Scene):
        self.scene = scene.validate()
        bodies = scene.bodies
        self.n_bodies = len(bodies)

        for b in bodies:
            if b.bonds is None and not b.fixed and b.cloud.n_nodes > 1:
                b.bonds = build_bond_graph(b.cloud, b.material.horizon)

        counts = [b.cloud.n_nodes for b in bodies]
        self.body_start = np.zeros(self.n_bodies + 1, dtype=np.int64)
        np.cumsum(counts, out=self.body_start[1:])
        n = int(self.body_start[-1])
        self.n_nodes = n

        self.x0 = np.concatenate([b.cloud.nodes for b in bodies]).astype(np.float64)
        self.vol = np.concatenate([b.cloud.volumes for b in bodies]).astype(np.float64)
        self.body = np.repeat(np.arange(self.n_bodies, dtype=np.int32), counts)
        self.rho_n = np.concatenate(
            [np.full(c, b.material.rho) for c, b in zip(counts, bodies)])
        self.massn = self.rho_n * self.vol

        self.is_rigid = np.array([1 if b.fixed else 0 for b in bodies], dtype=np.uint8)
        self.is_wall = np.array([1 if b.kind == "wall" else 0 for b in bodies],
                                dtype=np.uint8)
        self.presc_v = np.zeros((self.n_bodies, 2))
        for k, b in enumerate(bodies):
            if b.prescribed_velocity is not None:
                self.presc_v[k] = b.prescribed_velocity
        self.rigid_uref = np.zeros((self.n_bodies, 2))
        self.rigid_ref_step = np.zeros(self.n_bodies, dtype=np.int64)
        self.body_mass = np.array([b.mass for b in bodies])
        self.body_vol = np.array([b.volume for b in bodies])

        # global CSR bond graph
        indptrs, nbrs, r0s, jws, intacts = [], [], [], [], []
        mx = np.ones(n)
        for k, b in enumerate(bodies):
            g = b.bonds if b.bonds is not None else _empty_bonds(
                counts[k], b.material.horizon)
            b_lo = self.body_start[k]
            indptrs.append(np.diff(g.indptr))
            nbrs.append(g.neighbors.astype(np.int64) + b_lo)
            r0s.append(g.ref_length)
            jws.append(g.influence_w)
            intacts.append(g.intact)
            mx[b_lo:b_lo + counts[k]] = g.weighted_volume
        self.indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.concatenate(indptrs), out=self.indptr[1:])
        self.nbr = np.concatenate(nbrs).astype(np.int32)
        self.r0 = np.concatenate(r0s)
        self.jw = np.concatenate(jws)
        self.r0jw = self.r0 * self.jw
        self.intact = np.concatenate(intacts)
        self.ext = np.zeros(len(self.nbr))
        self.theta = np.zeros(n)
        self.mx = mx

        self.dcoef = np.zeros(n)
        self.acoef = np.zeros(n)
        self.bcoef = np.zeros(n)
        self.s0_node = np.zeros(n)
        for k, b in enumerate(bodies):
            lo, hi = self.body_start[k], self.body_start[k + 1]
            self.s0_node[lo:hi] = b.material.s0 if b.material.gc > 0 else np.inf
            if not b.fixed and self.indptr[hi] > self.indptr[lo]:
                self.dcoef[lo:hi] = 3.0 / mx[lo:hi]
                self.acoef[lo:hi] = (3.0 * b.material.kappa
                                     - 5.0 * b.material.shear) / mx[lo:hi]
                self.bcoef[lo:hi] = 15.0 * b.material.shear / mx[lo:hi]

        # contact radius and pair tables
        cfg = scene.contact
        hs = [b.cloud.h for b in bodies if b.cloud.n_nodes > 1]
        if cfg.r_c is not None:
            self.r_c = float(cfg.r_c)
        elif hs:
            self.r_c = 0.95 * min(hs)
        else:
            raise EngineError("contact radius cannot be derived; set contact.r_c")
        self.global_h = min(hs) if hs else self.r_c / 0.95

        B = self.n_bodies
        self.kn_pair = np.zeros((B, B))
        self.an_pair = np.zeros((B, B))
        self.bbar_pair = np.zeros((B, B))
        self.cfact_pair = np.zeros((B, B))
        self.kn_self = np.zeros(B)
        for a in range(B):
            ma = bodies[a].material
            self.kn_self[a] = spring_modulus(ma.kappa, ma.horizon)
            for b in range(B):
                mb = bodies[b].material
                k_eff = effective_bulk_modulus(ma.kappa, mb.kappa)
                eps_pair = min(ma.horizon, mb.horizon)
                self.kn_pair[a, b] = (cfg.k_n if cfg.k_n is not None
                                      else spring_modulus(k_eff, eps_pair))
                self.an_pair[a, b] = dashpot_viscosity(
                    cfg.c, cfg.eps_n, k_eff, self.r_c, 1.0)
                self.cfact_pair[a, b] = dashpot_viscosity(
                    cfg.c_bar, cfg.eps_bar_n, k_eff, self.r_c, 1.0)
                m_eq = 2.0 * self.body_mass[a] * self.body_mass[b] / (
                    self.body_mass[a] + self.body_mass[b])
                self.bbar_pair[a, b] = dashpot_viscosity(
                    cfg.c_bar, cfg.eps_bar_n, k_eff, self.r_c, m_eq)

        # kinematic state
        self.u = np.zeros((n, 2))
        self.v = np.zeros((n, 2))
        for k, b in enumerate(bodies):
            lo, hi = self.body_start[k], self.body_start[k + 1]
            if b.fixed:
                self.v[lo:hi] = self.presc_v[k]
            else:
                self.v[lo:hi] = b.v0
        self.z = self.x0 + self.u
        self.force = np.zeros((n, 2))
        self.step_count = 0
        self.broken_total = 0
        self._impulse_mark = np.zeros((self.n_bodies, 2))
        self._step_mark = 0

        # scratch buffers
        self.grid = _kernels.GridBuffers(n)
        self.pair_flag = np.zeros(B * B, dtype=np.uint8)
        self.fbar = np.zeros((B, 2))
        self.seen_stamp = np.full(B, -1, dtype=np.int64)
        self.cent_z = np.zeros((B, 2))
        self.cent_v = np.zeros((B, 2))
        self.rigid_trel = np.zeros(B)
        self.wall_impulse = np.zeros((B, 2))
        self.err = np.zeros(4, dtype=np.int64)

        diam = np.ptp(self.x0, axis=0)
        self.u_bound = 100.0 * max(float(diam.max()), self.r_c, 1e-6)

        self._warn_dt()
        self._refresh_ext()

    # ------------------------------------------------------------------

    def _warn_dt(self):
        worst = np.inf
        for b in self.scene.bodies:
            m = b.material
            worst = min(worst, math.sqrt(
                m.rho * math.pi * m.horizon ** 5
                / (18.0 * m.kappa * self.global_h ** 2)))
        if self.scene.dt > 0.1 * worst:
            logger.warning(
                "dt=%.3g exceeds 0.1*sqrt(rho pi eps^5/(18 kappa h^2))=%.3g; "
                "contact springs may be marginally resolved", self.scene.dt,
                0.1 * worst)

    def _refresh_ext(self):
        _kernels.bond_pass(self.z, self.indptr, self.nbr, self.r0, self.intact,
                           self.s0_node, self.ext, False, self.err)
        self._check_errors()

    def _check_errors(self):
        if self.err[_kernels.ERR_SINGULAR_BOND]:
            raise InstabilityError("bonded nodes coincide", self.step_count)
        if self.err[_kernels.ERR_SINGULAR_CONTACT]:
            raise InstabilityError("contact nodes coincide", self.step_count)
        if self.err[_kernels.ERR_SINGULAR_CENTROID]:
            raise InstabilityError("body centroids coincide", self.step_count)

    def _check_state(self):
        if not np.isfinite(self.u).all():
            raise InstabilityError("non-finite displacement", self.step_count)
        if np.abs(self.u).max() > self.u_bound:
            raise InstabilityError(
                f"displacement exceeds bound {self.u_bound:.3g} m", self.step_count)

    @property
    def state(self) -> StepState:
        return StepState(self)

    @property
    def damping_mode(self) -> int:
        return _DAMPING_MODE[self.scene.contact.damping_model]

    def body_slice(self, index: int) -> slice:
        return slice(int(self.body_start[index]), int(self.body_start[index + 1]))

    # ------------------------------------------------------------------

    def advance(self, n_steps: int):
        """Advance the simulation by ``n_steps`` using the compiled loop."""
        if self.scene.external_force is not None:
            for _ in range(n_steps):
                self.step()
            return
        cfg = self.scene.contact
        g = self.scene.gravity
        newly = _kernels.advance_chunk(
            n_steps, self.step_count, cfg.rebuild_every,
            self.u, self.v, self.z, self.x0, self.force, self.vol, self.rho_n,
            self.massn, self.body, self.body_start, self.is_rigid, self.is_wall,
            self.presc_v, self.rigid_uref, self.rigid_ref_step,
            self.indptr, self.nbr, self.r0, self.jw, self.r0jw, self.intact,
            self.ext, self.theta, self.dcoef, self.acoef, self.bcoef,
            self.s0_node, self.r_c, self.kn_pair, self.kn_self, self.an_pair,
            self.bbar_pair, self.cfact_pair,
            cfg.friction_mu, cfg.friction_enabled, self.damping_mode,
            self.grid.cell_x, self.grid.cell_y, self.grid.bucket_count,
            self.grid.bucket_start, self.grid.order,
            self.pair_flag, self.fbar, self.seen_stamp, self.cent_z,
            self.cent_v, self.rigid_trel, self.body_mass, self.body_vol,
            self.wall_impulse, g[0], g[1], self.scene.dt, self.err)
        self.broken_total += int(newly)
        self.step_count += n_steps
        self._check_errors()
        self._check_state()

    def step(self):
        """Advance one step with the per-step path (supports external forces)."""
        cfg = self.scene.contact
        g = self.scene.gravity
        step = self.step_count
        if (step % cfg.rebuild_every) == 0:
            _kernels.grid_build(self.z, self.r_c, self.grid.cell_x,
                                self.grid.cell_y, self.grid.bucket_count,
                                self.grid.bucket_start, self.grid.order)
        self.force[:] = 0.0
        self.pair_flag[:] = 0
        _kernels.pd_dilation(self.indptr, self.nbr, self.r0jw, self.intact,
                             self.ext, self.vol, self.dcoef, self.theta)
        _kernels.pd_force(self.z, self.indptr, self.nbr, self.r0, self.jw,
                          self.intact, self.ext, self.vol, self.theta,
                          self.acoef, self.bcoef, self.force)
        _kernels.contact_gather(
            self.z, self.v, self.vol, self.rho_n, self.body, self.n_bodies,
            self.grid.cell_x, self.grid.cell_y, self.grid.bucket_start,
            self.grid.order, self.r_c, self.kn_pair, self.an_pair,
            cfg.friction_mu, cfg.friction_enabled, self.damping_mode == 2,
            self.indptr, self.nbr, self.intact, self.kn_self,
            self.force, self.pair_flag, self.err)
        if self.damping_mode == 1:
            _kernels.body_centroids(self.z, self.v, self.massn, self.body_start,
                                    self.cent_z, self.cent_v)
            self.fbar[:] = 0.0
            _kernels.center_damping_particles(
                self.cent_z, self.cent_v, self.body_vol, self.is_wall,
                self.is_rigid, self.pair_flag, self.bbar_pair, self.fbar,
                self.err)
            _kernels.center_damping_walls(
                self.z, self.v, self.vol, self.massn, self.body,
                self.body_start, self.is_wall, self.is_rigid, self.cent_z,
                self.cent_v, self.body_mass, self.body_vol, self.cfact_pair,
                self.grid.cell_x, self.grid.cell_y, self.grid.bucket_start,
                self.grid.order, self.r_c, self.seen_stamp, self.fbar,
                self.err)
            _kernels.apply_body_force(self.force, self.fbar, self.body,
                                      self.is_rigid)
        if self.scene.external_force is not None:
            extra = self.scene.external_force(self)
            if extra is not None:
                self.force += extra
        dt = self.scene.dt
        _kernels.accumulate_wall_impulse(self.force, self.vol, self.body_start,
                                         self.is_wall, dt, self.wall_impulse)
        dt_v = 0.5 * dt if step == 0 else dt
        self.rigid_trel[:] = (step + 1 - self.rigid_ref_step) * dt
        _kernels.integrate(self.u, self.v, self.z, self.x0, self.force,
                           self.rho_n, self.body, self.is_rigid, self.presc_v,
                           self.rigid_uref, self.rigid_trel, g[0], g[1], dt,
                           dt_v)
        self.broken_total += int(_kernels.bond_pass(
            self.z, self.indptr, self.nbr, self.r0, self.intact, self.s0_node,
            self.ext, True, self.err))
        self.step_count += 1
        self._check_errors()
        self._check_state()

    # ------------------------------------------------------------------

    def gap(self, name_a: str, name_b: str) -> float:
        """Minimum cross-body node distance between two bodies."""
        a = self.scene.body_index(name_a)
        b = self.scene.body_index(name_b)
        return float(_kernels.min_cross_distance(
            self.z, self.body_start[a], self.body_start[a + 1],
            self.body_start[b], self.body_start[b + 1]))

    def energies(self) -> dict[str, float]:
        """Kinetic, gravitational, and cross-body contact spring energies."""
        ke = 0.5 * float(np.sum(self.massn * np.sum(self.v ** 2, axis=1)))
        g = np.asarray(self.scene.gravity)
        pe = -float(np.sum(self.massn * (self.z @ g)))
        _kernels.grid_build(self.z, self.r_c, self.grid.cell_x,
                            self.grid.cell_y, self.grid.bucket_count,
                            self.grid.bucket_start, self.grid.order)
        ia, ja, da = _kernels.collect_cross_pairs(
            self.z, self.body, self.r_c, self.grid.cell_x, self.grid.cell_y,
            self.grid.bucket_start, self.grid.order)
        delta = da - self.r_c
        kn = self.kn_pair[self.body[ia], self.body[ja]]
        esp = 0.5 * float(np.sum(kn * delta ** 2 * self.vol[ia] * self.vol[ja]))
        return {"ke": ke, "pe": pe, "esp": esp}

    def momentum(self) -> np.ndarray:
        """Linear momentum of all deformable bodies."""
        free = self.is_rigid[self.body] == 0
        return (self.massn[free, None] * self.v[free]).sum(axis=0)

    def force_with_gravity(self) -> np.ndarray:
        """Aggregate force density including gravity (rho g per node).

        The integrator applies gravity as an acceleration; this view adds
        it back for observers that want the full right-hand side.
        """
        return self.force + self.rho_n[:, None] * np.asarray(self.scene.gravity)

    def damage(self, index: int) -> np.ndarray:
        """Damage field Z for one body (zeros for rigid bodies)."""
        lo, hi = int(self.body_start[index]), int(self.body_start[index + 1])
        z_out = np.zeros(self.n_nodes)
        inv_s0 = np.where(np.isfinite(self.s0_node) & (self.s0_node > 0),
                          1.0 / self.s0_node, 0.0)
        _kernels.damage_max(self.u, self.indptr, self.nbr, self.r0, inv_s0, z_out)
        return z_out[lo:hi]

    def damage_all(self) -> np.ndarray:
        z_out = np.zeros(self.n_nodes)
        inv_s0 = np.where(np.isfinite(self.s0_node) & (self.s0_node > 0),
                          1.0 / self.s0_node, 0.0)
        _kernels.damage_max(self.u, self.indptr, self.nbr, self.r0, inv_s0, z_out)
        return z_out

    def fz_counts(self) -> np.ndarray:
        """Per-body number of fracture-zone nodes (damage >= 1)."""
        z = self.damage_all()
        out = np.zeros(self.n_bodies, dtype=np.int64)
        for b in range(self.n_bodies):
            lo, hi = int(self.body_start[b]), int(self.body_start[b + 1])
            out[b] = int(np.sum(z[lo:hi] >= 1.0))
        return out

    def wall_reaction(self, index: int) -> np.ndarray:
        """Total contact force on a wall body (force density times volume)."""
        lo, hi = int(self.body_start[index]), int(self.body_start[index + 1])
        return (self.force[lo:hi] * self.vol[lo:hi, None]).sum(axis=0)

    def wall_face_length(self, index: int) -> float:
        b = self.scene.bodies[index]
        span = np.ptp(b.cloud.nodes, axis=0)
        return float(span.max())

    # ------------------------------------------------------------------

    def checkpoint_state(self) -> dict:
        """Arrays that fully determine the continuation of the run."""
        return {
            "step": np.int64(self.step_count),
            "u": self.u.copy(),
            "v": self.v.copy(),
            "intact": self.intact.copy(),
            "broken_total": np.int64(self.broken_total),
            "rigid_uref": self.rigid_uref.copy(),
            "rigid_ref_step": self.rigid_ref_step.copy(),
            "wall_impulse": self.wall_impulse.copy(),
            "seed": np.int64(self.scene.seed),
        }

    def restore_state(self, data: dict):
        if len(data["u"]) != self.n_nodes or len(data["intact"]) != len(self.intact):
            raise EngineError("checkpoint does not match this scene")
        self.step_count = int(data["step"])
        self.u[:] = data["u"]
        self.v[:] = data["v"]
        self.intact[:] = data["intact"]
        self.broken_total = int(data["broken_total"])
        self.rigid_uref[:] = data["rigid_uref"]
        self.rigid_ref_step[:] = data["rigid_ref_step"]
        if "wall_impulse" in data:
            self.wall_impulse[:] = data["wall_impulse"]
        self._impulse_mark[:] = self.wall_impulse
        self._step_mark = self.step_count
        self.z[:] = self.x0 + self.u
        self._refresh_ext()

    # ------------------------------------------------------------------

    def _sample(self, columns: dict, detail: bool):
        t = self.step_count * self.scene.dt
        columns.setdefault("t", []).append(t)
        en = self.energies()
        columns.setdefault("ke", []).append(en["ke"])
        columns.setdefault("pe", []).append(en["pe"])
        columns.setdefault("esp", []).append(en["esp"])
        columns.setdefault("broken_bonds", []).append(self.broken_total)
        p = self.momentum()
        columns.setdefault("px", []).append(p[0])
        columns.setdefault("py", []).append(p[1])
        fz = self.fz_counts()
        columns.setdefault("fz_total", []).append(int(fz.sum()))
        window = (self.step_count - self._step_mark) * self.scene.dt
        for b, body in enumerate(self.scene.bodies):
            if body.kind == "wall":
                r = self.wall_reaction(b)
                area = self.wall_face_length(b)  # times unit thickness
                columns.setdefault(f"rf_{body.name}", []).append(r[1] / area)
                # exact mean reaction since the previous sample (resolves
                # impulsive contacts that point sampling would miss)
                if window > 0.0:
                    avg = (self.wall_impulse[b] - self._impulse_mark[b]) / window
                else:
                    avg = r
                columns.setdefault(f"rfavg_{body.name}", []).append(avg[1] / area)
            elif not body.fixed:
                columns.setdefault(f"fz_{body.name}", []).append(int(fz[b]))
        self._impulse_mark[:] = self.wall_impulse
        self._step_mark = self.step_count
        if self.scene.track_gap is not None:
            columns.setdefault("gap", []).append(
                self.gap(*self.scene.track_gap))
        if detail:
            _kernels.body_centroids(self.z, self.v, self.massn,
                                    self.body_start, self.cent_z, self.cent_v)
            for b, body in enumerate(self.scene.bodies):
                columns.setdefault(f"cx_{body.name}", []).append(self.cent_z[b, 0])
                columns.setdefault(f"cy_{body.name}", []).append(self.cent_z[b, 1])
                columns.setdefault(f"cvx_{body.name}", []).append(self.cent_v[b, 0])
                columns.setdefault(f"cvy_{body.name}", []).append(self.cent_v[b, 1])

    def run(self, settings: RunSettings | None = None) -> Records:
        """Run from the current step to t_final, sampling observers."""
        st = settings or RunSettings()
        if st.sample_every < 1:
            raise EngineError("sample_every must be >= 1")
        total = self.scene.n_steps
        detail = self.n_bodies <= 8
        columns: dict[str, list] = {}
        if self.step_count == 0:
            self._sample(columns, detail)
            self._emit(st)
        while self.step_count < total:
            k = min(st.sample_every, total - self.step_count)
            self.advance(k)
            self._sample(columns, detail)
            self._emit(st)
        cols = {k: np.asarray(v) for k, v in columns.items()}
        meta = {
            "r_c": self.r_c,
            "dt": self.scene.dt,
            "sample_every": st.sample_every,
            "h": self.global_h,
            "bodies": [b.name for b in self.scene.bodies],
            "walls": [b.name for b in self.scene.bodies if b.kind == "wall"],
        }
        return Records(columns=cols, meta=meta)

    def _emit(self, st: RunSettings):
        if (st.snapshot_sink is not None and st.snapshot_every > 0
                and self.step_count % st.snapshot_every == 0):
            st.snapshot_sink(self)
        if (st.checkpoint_sink is not None and st.checkpoint_every > 0
                and self.step_count % st.checkpoint_every == 0):
            st.checkpoint_sink(self)


# ----------------------------------------------------------------------
# derived observers


def cor_from_records(records: Records) -> float:
    """Coefficient of restitution sqrt(H1/H0) from a two-particle gap series.

    H0 is the initial gap; the first contact is the first sampled gap below
    the contact radius; H1 is the largest gap seen after that contact ends.
    """
    if "gap" not in records:
        raise NoContactError("records carry no gap column")
    gap = records["gap"]
    r_c = records.meta["r_c"]
    h0 = float(gap[0])
    active = gap < r_c
    if not active.any():
        raise NoContactError("no contact within the simulated time")
    first = int(np.argmax(active))
    after = np.flatnonzero(~active[first:])
    if after.size == 0:
        raise NoContactError("first contact never ends within the simulated time")
    end = first + int(after[0])
    h1 = float(gap[end:].max())
    return math.sqrt(h1 / h0)


def smooth_series(t: np.ndarray, y: np.ndarray, window: float) -> np.ndarray:
    """Centered moving average over ``window`` seconds (raw if window <= 0)."""
    if window <= 0.0:
        return np.asarray(y, dtype=float).copy()
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    out = np.empty_like(y)
    half = window / 2.0
    lo = np.searchsorted(t, t - half, side="left")
    hi = np.searchsorted(t, t + half, side="right")
    csum = np.concatenate([[0.0], np.cumsum(y)])
    out = (csum[hi] - csum[lo]) / np.maximum(hi - lo, 1)
    return out


def reaction_force(records: Records, wall: str, window: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Per-area vertical reaction on ``wall``, smoothed over ``window`` seconds."""
    key = f"rf_{wall}"
    if key not in records:
        raise KeyError(f"records carry no reaction column {key!r}")
    t = records["t"]
    return t, smooth_series(t, records[key], window)


# ----------------------------------------------------------------------
# packing generation


def generate_packing(box: tuple[float, float, float, float], nx: int, ny: int,
                     r0: float, r_c: float, seed: int,
                     hex_fraction: float = 0.5, count: int | None = None,
                     jitter: float = 0.1,
                     pitch_factor: float = 1.12) -> list:
    """Grid packing of disks/hexagons with radius jitter and x perturbation.

    Radii follow R = r0 (1 + U(-jitter, jitter)); each particle is a disk
    or a hexagon (probability ``hex_fraction``), randomly rotated, and
    perturbed in x by less than half the free slack, so that every initial
    particle-particle and particle-box gap stays at least ``r_c``.
    Deterministic for a fixed seed.
    """
    from .geometry import ShapeSpec

    x0, y0, x1, y1 = box
    r_max = r0 * (1.0 + jitter)
    pitch = 2.0 * r_max * pitch_factor + r_c
    slack = pitch - 2.0 * r_max - r_c
    pert = 0.4 * slack
    margin_x = r_max + r_c + pert  # box edge to edge-column centers
    margin_y = r_max + r_c
    need_w = 2.0 * margin_x + (nx - 1) * pitch
    need_h = margin_y + (ny - 1) * pitch + r_max + r_c
    if need_w > (x1 - x0) + 1e-12 or need_h > (y1 - y0) + 1e-12:
        raise EngineError(
            f"box {box} too small for a {nx}x{ny} grid of radius {r_max} "
            f"particles (needs {need_w:.4g} x {need_h:.4g})")
    rng = np.random.default_rng(seed)
    n_total = nx * ny if count is None else count
    if n_total > nx * ny:
        raise EngineError("count exceeds grid capacity")
    specs = []
    for idx in range(n_total):
        row, col = divmod(idx, nx)
        radius = r0 * (1.0 + rng.uniform(-jitter, jitter))
        kind = "hexagon" if rng.uniform() < hex_fraction else "disk"
        rotation = rng.uniform(0.0, 2.0 * math.pi)
        dx = rng.uniform(-pert, pert)
        cx = x0 + margin_x + col * pitch + dx
        cy = y0 + margin_y + row * pitch
        specs.append(ShapeSpec(kind=kind, center=(cx, cy), radius=radius,
                               rotation=rotation))
    return specs


def packing_box(nx: int, ny: int, r0: float, r_c: float,
                jitter: float = 0.1, pitch_factor: float = 1.12,
                headroom: float = 0.0) -> tuple[float, float, float, float]:
    """Smallest box accepted by :func:`generate_packing` for this grid."""
    r_max = r0 * (1.0 + jitter)
    pitch = 2.0 * r_max * pitch_factor + r_c
    pert = 0.4 * (pitch - 2.0 * r_max - r_c)
    width = 2.0 * (r_max + r_c + pert) + (nx - 1) * pitch
    height = (r_max + r_c) + (ny - 1) * pitch + r_max + r_c + headroom
    return (0.0, 0.0, width, height)
