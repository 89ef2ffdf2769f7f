"""State-based peridynamic constitutive model with bond breakage.

Each deformable body carries a bond graph: for every node, the list of
same-body neighbors strictly inside the horizon, the reference bond
lengths, influence weights J(r/eps) = 1 - r/eps, per-bond intact flags,
and the weighted volume

    m_i = sum_j r_ij^2 J(r_ij/eps) V_j .

Forces follow the linear peridynamic solid force state: with dilation

    theta_i = (3/m_i) sum_j h_ij r_ij (|z_j - z_i| - r_ij) J_ij V_j

the directed force state is

    T_i(j) = h_ij J_ij [ r theta_i (3k - 5G)/m_i + e_ij 15G/m_i ] dir_ij

(e_ij the bond extension, dir_ij the current unit bond vector) and the
internal force density is F_i = sum_j (T_i(j) - T_j(i)) V_j.  A bond
breaks, irreversibly and symmetrically, when its stretch exceeds the
critical stretch s0 derived from the critical energy release rate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .geometry import MeshlessCloud


class MaterialError(ValueError):
    """Inconsistent material parameters."""


class BondGraphError(ValueError):
    """A bond graph cannot be built (e.g. horizon smaller than mesh size)."""


class SingularBondError(FloatingPointError):
    """Two bonded nodes coincide in the current configuration."""


def influence(a):
    """Influence function J(a) = 1 - a on [0, 1], zero beyond."""
    a = np.asarray(a, dtype=float)
    return np.where((a >= 0.0) & (a <= 1.0), 1.0 - a, 0.0)


def critical_stretch(gc: float, kappa: float, shear: float, horizon: float) -> float:
    """Critical bond stretch s0 from the critical energy release rate.

    s0 = sqrt( Gc / ((3 mu + (3/4)^4 [kappa - 5 mu/3]) eps) ) with mu the
    shear modulus.
    """
    denom = (3.0 * shear + (0.75 ** 4) * (kappa - 5.0 * shear / 3.0)) * horizon
    if denom <= 0.0:
        raise MaterialError(f"non-positive critical-stretch denominator {denom}")
    if gc < 0.0:
        raise MaterialError(f"critical energy release rate must be >= 0, got {gc}")
    return float(np.sqrt(gc / denom))


@dataclass(frozen=True)
class MaterialModel:
    """Material constants: density, bulk/shear moduli, Gc, and horizon."""

    rho: float      # kg/m^3
    kappa: float    # Pa
    shear: float    # Pa
    gc: float       # J/m^2
    horizon: float  # m

    def __post_init__(self):
        for name in ("rho", "kappa", "shear", "horizon"):
            if not getattr(self, name) > 0.0:
                raise MaterialError(f"{name} must be positive, got {getattr(self, name)}")
        if self.gc < 0.0:
            raise MaterialError(f"gc must be >= 0, got {self.gc}")

    @property
    def s0(self) -> float:
        return critical_stretch(self.gc, self.kappa, self.shear, self.horizon)


@dataclass
class BondGraph:
    """CSR intra-body neighbor lists with bond state.

    ``indptr``/``neighbors`` store, for node i, the directed bonds to all
    same-body nodes strictly closer than the horizon.  Both directions of
    every bond are stored; flags are kept symmetric by construction (the
    break criterion is computed from symmetric quantities).
    """

    indptr: np.ndarray       # int64, (N+1,)
    neighbors: np.ndarray    # int32, (nb,)
    ref_length: np.ndarray   # float64, (nb,)
    influence_w: np.ndarray  # float64, (nb,): J(r/eps)
    intact: np.ndarray       # uint8, (nb,)
    weighted_volume: np.ndarray  # float64, (N,): m_i
    horizon: float

    @property
    def n_nodes(self) -> int:
        return len(self.indptr) - 1

    @property
    def n_bonds(self) -> int:
        """Number of undirected bonds."""
        return len(self.neighbors) // 2

    def broken_count(self) -> int:
        return int(np.sum(self.intact == 0)) // 2

    def bond_index(self, i: int, j: int) -> int:
        """Directed-edge index of bond i -> j."""
        lo, hi = self.indptr[i], self.indptr[i + 1]
        for k in range(lo, hi):
            if self.neighbors[k] == j:
                return int(k)
        raise KeyError(f"no bond {i} -> {j}")


def build_bond_graph(cloud: MeshlessCloud, epsilon: float) -> BondGraph:
    """Connect every node to all same-body nodes strictly within ``epsilon``.

    Raises :class:`BondGraphError` if any node ends up with an empty
    neighborhood (horizon too small for the discretization).
    """
    if not epsilon > cloud.h:
        raise BondGraphError(
            f"horizon {epsilon} must exceed the mesh size {cloud.h}")
    nodes = cloud.nodes
    n = len(nodes)
    pairs = cKDTree(nodes).query_pairs(epsilon, output_type="ndarray")
    if pairs.size:
        d = np.hypot(*(nodes[pairs[:, 0]] - nodes[pairs[:, 1]]).T)
        strict = d < epsilon
        pairs, d = pairs[strict], d[strict]
    else:
        d = np.empty(0)

    src = np.concatenate([pairs[:, 0], pairs[:, 1]])
    dst = np.concatenate([pairs[:, 1], pairs[:, 0]])
    dd = np.concatenate([d, d])
    order = np.lexsort((dst, src))
    src, dst, dd = src[order], dst[order], dd[order]

    counts = np.bincount(src, minlength=n)
    if np.any(counts == 0):
        bad = int(np.argmin(counts))
        raise BondGraphError(
            f"node {bad} has no neighbors within horizon {epsilon}")
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])

    jw = influence(dd / epsilon)
    mx = np.zeros(n)
    np.add.at(mx, src, dd * dd * jw * cloud.volumes[dst])
    if np.any(mx <= 0.0):
        raise BondGraphError("weighted volume must be positive at every node")

    return BondGraph(
        indptr=indptr,
        neighbors=dst.astype(np.int32),
        ref_length=dd,
        influence_w=jw,
        intact=np.ones(len(dst), dtype=np.uint8),
        weighted_volume=mx,
        horizon=float(epsilon),
    )


def _bond_geometry(graph: BondGraph, z: np.ndarray):
    """Per directed bond: current length and unit vector; raises on zero length."""
    i = np.repeat(np.arange(graph.n_nodes), np.diff(graph.indptr))
    j = graph.neighbors
    dz = z[j] - z[i]
    dist = np.hypot(dz[:, 0], dz[:, 1])
    if np.any(dist == 0.0):
        k = int(np.argmin(dist))
        raise SingularBondError(
            f"nodes {i[k]} and {j[k]} coincide in the current configuration")
    return i, j, dist, dz / dist[:, None]


def dilation(graph: BondGraph, volumes: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Per-node nonlocal dilation theta over intact bonds."""
    i, j, dist, _ = _bond_geometry(graph, z)
    ext = dist - graph.ref_length
    contrib = graph.intact * graph.ref_length * ext * graph.influence_w * volumes[j]
    theta = np.zeros(graph.n_nodes)
    np.add.at(theta, i, contrib)
    return 3.0 * theta / graph.weighted_volume


def force_state(graph: BondGraph, material: MaterialModel, volumes: np.ndarray,
                z: np.ndarray, i: int, j: int,
                theta_i: float | None = None) -> np.ndarray:
    """Directed force state T_i(j) for a single bond (testing/diagnostics)."""
    if theta_i is None:
        theta_i = float(dilation(graph, volumes, z)[i])
    k = graph.bond_index(i, j)
    dz = z[j] - z[i]
    dist = float(np.hypot(dz[0], dz[1]))
    if dist == 0.0:
        raise SingularBondError(f"nodes {i} and {j} coincide")
    r = graph.ref_length[k]
    m = graph.weighted_volume[i]
    a = (3.0 * material.kappa - 5.0 * material.shear) / m
    b = 15.0 * material.shear / m
    scalar = graph.intact[k] * graph.influence_w[k] * (r * theta_i * a + (dist - r) * b)
    return scalar * dz / dist


def assemble_internal_force(graph: BondGraph, material: MaterialModel,
                            volumes: np.ndarray, z: np.ndarray,
                            theta: np.ndarray | None = None) -> np.ndarray:
    """Internal force density F_i = sum_j (T_i(j) - T_j(i)) V_j over intact bonds."""
    if theta is None:
        theta = dilation(graph, volumes, z)
    i, j, dist, direction = _bond_geometry(graph, z)
    ext = dist - graph.ref_length
    a = (3.0 * material.kappa - 5.0 * material.shear) / graph.weighted_volume
    b = 15.0 * material.shear / graph.weighted_volume
    scalar = graph.intact * graph.influence_w * (
        graph.ref_length * (theta[i] * a[i] + theta[j] * a[j])
        + ext * (b[i] + b[j]))
    force = np.zeros((graph.n_nodes, 2))
    np.add.at(force, i, (scalar * volumes[j])[:, None] * direction)
    return force


def update_bonds(graph: BondGraph, z: np.ndarray, s0: float) -> int:
    """Break every intact bond whose stretch exceeds ``s0``; returns new breaks.

    Breakage is irreversible and symmetric (both directed copies flip in
    the same pass because the stretch is symmetric in i and j).
    """
    i, j, dist, _ = _bond_geometry(graph, z)
    stretch = (dist - graph.ref_length) / graph.ref_length
    breaking = (graph.intact == 1) & (stretch > s0)
    graph.intact[breaking] = 0
    return int(np.sum(breaking & (j > i)))


def damage_field(graph: BondGraph, x0: np.ndarray, u: np.ndarray,
                 s0: float) -> np.ndarray:
    """Damage Z_i = max_j |u_j - u_i| / (|x_j - x_i| s0) over the reference
    neighborhood (broken bonds included)."""
    i = np.repeat(np.arange(graph.n_nodes), np.diff(graph.indptr))
    j = graph.neighbors
    du = np.hypot(*(u[j] - u[i]).T)
    val = du / (graph.ref_length * s0)
    z = np.zeros(graph.n_nodes)
    np.maximum.at(z, i, val)
    return z


def fracture_zone(damage: np.ndarray) -> np.ndarray:
    """Indices of nodes in the fracture zone, i.e. with damage >= 1."""
    return np.flatnonzero(np.asarray(damage) >= 1.0)
