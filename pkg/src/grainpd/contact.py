"""Inter-body node-pair contact: normal spring, Coulomb friction, damping.

Two nodes of different bodies interact when their current distance drops
below the contact radius R_c = 0.95 h (h the global minimum mesh size).
The normal force density on x from x' is a one-sided linear spring,

    F_n = K_n delta V' e_n,   delta = |z - z'| - R_c < 0,

with K_n = 18 kappa_eff / (pi eps^5).  Friction acts in the contact
tangent plane with Coulomb's law; damping is either a node-pair dashpot
or a dashpot between the particle centers, with viscosities calibrated
from a restitution-style parameter (eps_n = 1 switches damping off).

The functions here are the per-pair reference implementations; the hot
loop in the engine reproduces them inside compiled kernels and is tested
against them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .peridynamics import MaterialModel


class ContactError(ValueError):
    """Invalid contact configuration or singular pair geometry."""


DAMPING_MODELS = ("center", "node", "off")


@dataclass(frozen=True)
class ContactConfig:
    """Contact law parameters.

    ``r_c`` and ``k_n`` override the derived values when set; otherwise
    R_c = 0.95 h and K_n comes from the pair's effective bulk modulus.
    ``eps_bar_n``/``c_bar`` parameterize center damping, ``eps_n``/``c``
    node damping.  ``rebuild_every`` lets the engine reuse the contact
    neighbor search for that many steps.
    """

    damping_model: str = "center"
    eps_bar_n: float = 1.0
    c_bar: float = 100.0
    eps_n: float = 1.0
    c: float = 100.0
    friction_enabled: bool = False
    friction_mu: float = 0.0
    r_c: float | None = None
    k_n: float | None = None
    rebuild_every: int = 1

    def __post_init__(self):
        if self.damping_model not in DAMPING_MODELS:
            raise ContactError(f"damping_model must be one of {DAMPING_MODELS}")
        for name in ("eps_bar_n", "eps_n"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ContactError(f"{name} must be in (0, 1], got {v}")
        for name in ("c_bar", "c"):
            if not getattr(self, name) > 0.0:
                raise ContactError(f"{name} must be positive")
        if self.friction_mu < 0.0:
            raise ContactError("friction_mu must be >= 0")
        if self.r_c is not None and not self.r_c > 0.0:
            raise ContactError("contact radius override must be positive")
        if self.k_n is not None and not self.k_n > 0.0:
            raise ContactError("spring modulus override must be positive")
        if self.rebuild_every < 1:
            raise ContactError("rebuild_every must be >= 1")


def effective_bulk_modulus(kappa_1: float, kappa_2: float) -> float:
    """Harmonic-mean effective bulk modulus of a contacting pair."""
    return 2.0 * kappa_1 * kappa_2 / (kappa_1 + kappa_2)


def spring_modulus(kappa_eff: float, horizon: float) -> float:
    """Contact spring modulus K_n = 18 kappa_eff / (pi eps^5)."""
    return 18.0 * kappa_eff / (math.pi * horizon ** 5)


def derive_contact_params(mat_a: MaterialModel, mat_b: MaterialModel,
                          h: float) -> tuple[float, float, float]:
    """(R_c, K_n, kappa_eff) for a body pair at global mesh size ``h``.

    The pair horizon is the smaller of the two bodies' horizons (they are
    equal in every calibrated setup).
    """
    if not h > 0.0:
        raise ContactError(f"mesh size must be positive, got {h}")
    r_c = 0.95 * h
    kappa_eff = effective_bulk_modulus(mat_a.kappa, mat_b.kappa)
    k_n = spring_modulus(kappa_eff, min(mat_a.horizon, mat_b.horizon))
    return r_c, k_n, kappa_eff


def equivalent_mass(m_a: float, m_b: float) -> float:
    """Harmonic mean 2 m_a m_b / (m_a + m_b) of two masses."""
    return 2.0 * m_a * m_b / (m_a + m_b)


def dashpot_viscosity(c: float, eps: float, kappa_eff: float, r_c: float,
                      m_eq: float) -> float:
    """Dashpot viscosity -2 C log(eps) sqrt(kappa_eff R_c m_eq / (pi^2 + log(eps)^2)).

    Exactly zero for eps = 1.
    """
    if not 0.0 < eps <= 1.0:
        raise ContactError(f"damping parameter must be in (0, 1], got {eps}")
    if eps == 1.0:
        return 0.0
    log_e = math.log(eps)
    return -2.0 * c * log_e * math.sqrt(
        kappa_eff * r_c * m_eq / (math.pi ** 2 + log_e ** 2))


def normal_force(z: np.ndarray, z_other: np.ndarray, k_n: float,
                 vol_other: float, r_c: float) -> np.ndarray:
    """Normal contact force density on the node at ``z`` from ``z_other``."""
    dz = z_other - z
    dist = float(np.hypot(dz[0], dz[1]))
    if dist >= r_c:
        return np.zeros(2)
    if dist == 0.0:
        raise ContactError("coincident contact nodes")
    delta = dist - r_c
    return k_n * delta * vol_other * dz / dist


def friction_force(z: np.ndarray, z_other: np.ndarray, v: np.ndarray,
                   v_other: np.ndarray, f_n: np.ndarray,
                   mu: float) -> np.ndarray:
    """Coulomb friction force density on the node at ``z``.

    The tangent direction is the relative velocity unit vector projected
    onto the contact tangent plane (not renormalized); zero relative
    velocity gives zero friction.
    """
    dv = v_other - v
    speed = float(np.hypot(dv[0], dv[1]))
    if speed == 0.0 or mu == 0.0:
        return np.zeros(2)
    dz = z_other - z
    dist = float(np.hypot(dz[0], dz[1]))
    if dist == 0.0:
        raise ContactError("coincident contact nodes")
    e_n = dz / dist
    e_t = dv / speed - (dv @ e_n / speed) * e_n
    return -mu * float(np.hypot(f_n[0], f_n[1])) * e_t


def damping_node(z: np.ndarray, z_other: np.ndarray, v: np.ndarray,
                 v_other: np.ndarray, vol: float, vol_other: float,
                 rho: float, rho_other: float, kappa_eff: float,
                 r_c: float, c: float, eps_n: float) -> np.ndarray:
    """Node-pair dashpot force density on the node at ``z``.

    Active only while the pair is penetrating (delta < 0) and approaching
    (delta_dot < 0).
    """
    dz = z_other - z
    dist = float(np.hypot(dz[0], dz[1]))
    if dist == 0.0:
        raise ContactError("coincident contact nodes")
    if dist >= r_c:
        return np.zeros(2)
    e_n = dz / dist
    delta_dot = float((v_other - v) @ e_n)
    if delta_dot >= 0.0:
        return np.zeros(2)
    m_eq = equivalent_mass(rho * vol, rho_other * vol_other)
    beta = dashpot_viscosity(c, eps_n, kappa_eff, r_c, m_eq)
    return (beta * delta_dot / vol) * e_n


def damping_center(z_c: np.ndarray, z_c_other: np.ndarray, v_c: np.ndarray,
                   v_c_other: np.ndarray, mass: float, mass_other: float,
                   volume: float, dist_bodies: float, kappa_eff: float,
                   r_c: float, c_bar: float, eps_bar_n: float) -> np.ndarray:
    """Center-dashpot force density applied to every node of the first body.

    ``dist_bodies`` is the minimum cross-body node distance (the discrete
    stand-in for the domain distance); the dashpot acts for the whole time
    it stays below R_c, resisting both approach and separation.  The
    full-cycle form is what reproduces the two-particle restitution
    calibration table.
    """
    if dist_bodies >= r_c:
        return np.zeros(2)
    dz = z_c_other - z_c
    dist = float(np.hypot(dz[0], dz[1]))
    if dist == 0.0:
        raise ContactError("coincident body centroids")
    e = dz / dist
    delta_dot = float((v_c_other - v_c) @ e)
    m_eq = equivalent_mass(mass, mass_other)
    beta = dashpot_viscosity(c_bar, eps_bar_n, kappa_eff, r_c, m_eq)
    return (beta * delta_dot / volume) * e


def find_contact_pairs(positions: np.ndarray, body_of: np.ndarray,
                       r_c: float) -> np.ndarray:
    """All cross-body node pairs strictly within ``r_c``.

    Returns a structured array with fields (body_a, node_a, body_b, node_b,
    dist), each unordered pair listed once with body_a < body_b, sorted by
    (body_a, node_a, body_b, node_b).  Uses the same spatial hash grid as
    the engine's hot loop.
    """
    from . import _kernels

    positions = np.ascontiguousarray(positions, dtype=np.float64)
    body_of = np.ascontiguousarray(body_of, dtype=np.int32)
    if not r_c > 0.0:
        raise ContactError("contact radius must be positive")
    grid = _kernels.GridBuffers(len(positions))
    _kernels.grid_build(positions, r_c, grid.cell_x, grid.cell_y,
                        grid.bucket_count, grid.bucket_start, grid.order)
    ia, ja, da = _kernels.collect_cross_pairs(
        positions, body_of, r_c, grid.cell_x, grid.cell_y,
        grid.bucket_start, grid.order)
    pairs = np.empty(len(ia), dtype=[("body_a", np.int32), ("node_a", np.int32),
                                     ("body_b", np.int32), ("node_b", np.int32),
                                     ("dist", np.float64)])
    pairs["body_a"] = body_of[ia]
    pairs["node_a"] = ia
    pairs["body_b"] = body_of[ja]
    pairs["node_b"] = ja
    pairs["dist"] = da
    pairs.sort(order=["body_a", "node_a", "body_b", "node_b"])
    return pairs


def brute_force_pairs(positions: np.ndarray, body_of: np.ndarray,
                      r_c: float) -> np.ndarray:
    """O(n^2) oracle for :func:`find_contact_pairs` (same layout and order)."""
    positions = np.asarray(positions, dtype=float)
    body_of = np.asarray(body_of)
    rows = []
    n = len(positions)
    chunk = max(1, int(2e6) // max(n, 1))
    for lo in range(0, n, chunk):
        hi = min(n, lo + chunk)
        dx = positions[lo:hi, None, 0] - positions[None, :, 0]
        dy = positions[lo:hi, None, 1] - positions[None, :, 1]
        d = np.sqrt(dx * dx + dy * dy)
        ii, jj = np.nonzero((d < r_c) & (body_of[lo:hi, None] < body_of[None, :]))
        rows.append((ii + lo, jj, d[ii, jj]))
    ia = np.concatenate([r[0] for r in rows]).astype(np.int64)
    ja = np.concatenate([r[1] for r in rows]).astype(np.int64)
    da = np.concatenate([r[2] for r in rows])
    pairs = np.empty(len(ia), dtype=[("body_a", np.int32), ("node_a", np.int32),
                                     ("body_b", np.int32), ("node_b", np.int32),
                                     ("dist", np.float64)])
    pairs["body_a"] = body_of[ia]
    pairs["node_a"] = ia
    pairs["body_b"] = body_of[ja]
    pairs["node_b"] = ja
    pairs["dist"] = da
    pairs.sort(order=["body_a", "node_a", "body_b", "node_b"])
    return pairs
