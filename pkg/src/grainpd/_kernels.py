"""Compiled kernels for the simulation hot loop.

All force accumulation is gather-form: each output slot is written by
exactly one loop index, and its inner summation runs in a fixed order
(CSR order for bonds, cell-scan order for contact).  Results are therefore
bitwise reproducible for any thread count.

Rigid bodies carry no bonds (their CSR ranges are empty) and are moved by
a prescribed-velocity law instead of the leapfrog update; their force
slots still accumulate contact forces so wall reactions can be observed.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit, prange

# error flag slots written by kernels (same-value races are benign)
ERR_SINGULAR_BOND = 0
ERR_SINGULAR_CONTACT = 1
ERR_SINGULAR_CENTROID = 2

_H1 = np.int64(73856093)
_H2 = np.int64(19349663)


class GridBuffers:
    """Preallocated spatial-hash buffers for one node set."""

    def __init__(self, n_nodes: int):
        n_buckets = 1
        while n_buckets < 2 * max(n_nodes, 1):
            n_buckets *= 2
        self.cell_x = np.zeros(n_nodes, dtype=np.int64)
        self.cell_y = np.zeros(n_nodes, dtype=np.int64)
        self.bucket_count = np.zeros(n_buckets + 1, dtype=np.int64)
        self.bucket_start = np.zeros(n_buckets + 1, dtype=np.int64)
        self.order = np.zeros(n_nodes, dtype=np.int64)


@njit(cache=True)
def grid_build(z, cell, cell_x, cell_y, bucket_count, bucket_start, order):
    n = z.shape[0]
    n_buckets = bucket_count.shape[0] - 1
    mask = np.int64(n_buckets - 1)
    for b in range(n_buckets + 1):
        bucket_count[b] = 0
    inv = 1.0 / cell
    for i in range(n):
        ix = np.int64(math.floor(z[i, 0] * inv))
        iy = np.int64(math.floor(z[i, 1] * inv))
        cell_x[i] = ix
        cell_y[i] = iy
        b = ((ix * _H1) ^ (iy * _H2)) & mask
        bucket_count[b] += 1
    s = np.int64(0)
    for b in range(n_buckets):
        bucket_start[b] = s
        s += bucket_count[b]
    bucket_start[n_buckets] = s
    for b in range(n_buckets):
        bucket_count[b] = bucket_start[b]
    for i in range(n):
        b = ((cell_x[i] * _H1) ^ (cell_y[i] * _H2)) & mask
        order[bucket_count[b]] = i
        bucket_count[b] += 1


@njit(cache=True, parallel=True)
def bond_pass(z, indptr, nbr, r0, intact, s0_node, ext, do_break, err):
    """Refresh per-bond extensions; optionally break over-stretched bonds.

    Returns the number of newly broken (undirected) bonds.  Both directed
    copies of a bond evaluate the same stretch bitwise, so flags stay
    symmetric without coordination.
    """
    n = indptr.shape[0] - 1
    newly = 0
    for i in prange(n):
        local = 0
        for k in range(indptr[i], indptr[i + 1]):
            j = nbr[k]
            dx = z[j, 0] - z[i, 0]
            dy = z[j, 1] - z[i, 1]
            dist = math.sqrt(dx * dx + dy * dy)
            if dist == 0.0:
                err[ERR_SINGULAR_BOND] = 1
            e = dist - r0[k]
            ext[k] = e
            if do_break and intact[k] == 1 and e > s0_node[i] * r0[k]:
                intact[k] = 0
                if j > i:
                    local += 1
        newly += local
    return newly


@njit(cache=True, parallel=True)
def pd_dilation(indptr, nbr, r0jw, intact, ext, vol, dcoef, theta):
    """theta_i = (3/m_i) sum_j h r J ext V_j; dcoef holds 3/m_i (0 if no bonds)."""
    n = indptr.shape[0] - 1
    for i in prange(n):
        acc = 0.0
        for k in range(indptr[i], indptr[i + 1]):
            if intact[k] == 1:
                acc += r0jw[k] * ext[k] * vol[nbr[k]]
        theta[i] = dcoef[i] * acc


@njit(cache=True, parallel=True)
def pd_force(z, indptr, nbr, r0, jw, intact, ext, vol, theta, acoef, bcoef, force):
    """force_i += sum_j (T_i(j) - T_j(i)) V_j with the combined scalar form."""
    n = indptr.shape[0] - 1
    for i in prange(n):
        fx = 0.0
        fy = 0.0
        ti = theta[i]
        ai = acoef[i]
        bi = bcoef[i]
        for k in range(indptr[i], indptr[i + 1]):
            if intact[k] == 0:
                continue
            j = nbr[k]
            dist = r0[k] + ext[k]
            if dist == 0.0:
                continue  # flagged by bond_pass
            s = jw[k] * (r0[k] * (ti * ai + theta[j] * acoef[j])
                         + ext[k] * (bi + bcoef[j])) * vol[j]
            inv = s / dist
            fx += inv * (z[j, 0] - z[i, 0])
            fy += inv * (z[j, 1] - z[i, 1])
        force[i, 0] += fx
        force[i, 1] += fy


@njit(cache=True, parallel=True)
def contact_gather(z, v, vol, rho_n, body, n_bodies,
                   cell_x, cell_y, bucket_start, order,
                   r_c, kn_pair, an_pair, mu, friction_on, node_damping_on,
                   indptr, nbr, intact, kn_self,
                   force, pair_flag, err):
    """Per-node gather of normal, friction, node-damping and self-contact forces.

    Also raises pair_flag[bi, bj] for every body pair with at least one
    node pair inside the contact radius (feeds center damping gating).
    """
    n = z.shape[0]
    n_buckets = bucket_start.shape[0] - 1
    mask = np.int64(n_buckets - 1)
    rc2 = r_c * r_c
    for i in prange(n):
        bi = body[i]
        fx = 0.0
        fy = 0.0
        for ox in range(-1, 2):
            cx = cell_x[i] + ox
            for oy in range(-1, 2):
                cy = cell_y[i] + oy
                b = ((cx * _H1) ^ (cy * _H2)) & mask
                for slot in range(bucket_start[b], bucket_start[b + 1]):
                    j = order[slot]
                    if cell_x[j] != cx or cell_y[j] != cy:
                        continue  # hash collision: j lives in another cell
                    bj = body[j]
                    if bj == bi:
                        continue
                    dx = z[j, 0] - z[i, 0]
                    dy = z[j, 1] - z[i, 1]
                    d2 = dx * dx + dy * dy
                    if d2 >= rc2:
                        continue
                    dist = math.sqrt(d2)
                    if dist == 0.0:
                        err[ERR_SINGULAR_CONTACT] = 1
                        continue
                    pair_flag[bi * n_bodies + bj] = 1
                    enx = dx / dist
                    eny = dy / dist
                    delta = dist - r_c
                    fn = kn_pair[bi, bj] * delta * vol[j]
                    fx += fn * enx
                    fy += fn * eny
                    if friction_on and fn != 0.0:
                        dvx = v[j, 0] - v[i, 0]
                        dvy = v[j, 1] - v[i, 1]
                        speed = math.sqrt(dvx * dvx + dvy * dvy)
                        if speed > 0.0:
                            rnx = dvx / speed
                            rny = dvy / speed
                            dot = rnx * enx + rny * eny
                            etx = rnx - dot * enx
                            ety = rny - dot * eny
                            fmag = mu * abs(fn)
                            fx -= fmag * etx
                            fy -= fmag * ety
                    if node_damping_on:
                        dvx = v[j, 0] - v[i, 0]
                        dvy = v[j, 1] - v[i, 1]
                        ddot = dvx * enx + dvy * eny
                        if ddot < 0.0:
                            mi = rho_n[i] * vol[i]
                            mj = rho_n[j] * vol[j]
                            meq = 2.0 * mi * mj / (mi + mj)
                            beta = an_pair[bi, bj] * math.sqrt(meq)
                            s = beta * ddot / vol[i]
                            fx += s * enx
                            fy += s * eny
        # self-penetration guard: broken bonds of the same body repel
        for k in range(indptr[i], indptr[i + 1]):
            if intact[k] == 1:
                continue
            j = nbr[k]
            dx = z[j, 0] - z[i, 0]
            dy = z[j, 1] - z[i, 1]
            d2 = dx * dx + dy * dy
            if d2 >= rc2:
                continue
            dist = math.sqrt(d2)
            if dist == 0.0:
                err[ERR_SINGULAR_CONTACT] = 1
                continue
            delta = dist - r_c
            fn = kn_self[bi] * delta * vol[j]
            fx += fn * dx / dist
            fy += fn * dy / dist
        force[i, 0] += fx
        force[i, 1] += fy


@njit(cache=True)
def body_centroids(z, v, massn, body_start, cent_z, cent_v):
    n_bodies = body_start.shape[0] - 1
    for b in range(n_bodies):
        mzx = 0.0
        mzy = 0.0
        mvx = 0.0
        mvy = 0.0
        m = 0.0
        for i in range(body_start[b], body_start[b + 1]):
            mi = massn[i]
            m += mi
            mzx += mi * z[i, 0]
            mzy += mi * z[i, 1]
            mvx += mi * v[i, 0]
            mvy += mi * v[i, 1]
        cent_z[b, 0] = mzx / m
        cent_z[b, 1] = mzy / m
        cent_v[b, 0] = mvx / m
        cent_v[b, 1] = mvy / m


@njit(cache=True)
def center_damping_particles(cent_z, cent_v, body_vol, is_wall, is_rigid,
                             pair_flag, bbar_pair, fbar, err):
    """Dashpot between particle centers, per contacting body pair.

    The dashpot acts for the whole time the bodies stay within the contact
    radius, resisting both approach and separation (this full-cycle form is
    what reproduces the two-particle restitution calibration).  Each body
    receives its own force density (divided by its own volume); walls are
    excluded here (see the wall-node pass) and rigid particles never move,
    so applying to them is skipped.
    """
    n_bodies = cent_z.shape[0]
    for a in range(n_bodies):
        if is_wall[a] == 1 or is_rigid[a] == 1:
            continue
        fx = 0.0
        fy = 0.0
        for b in range(n_bodies):
            if b == a or is_wall[b] == 1:
                continue
            if pair_flag[a * n_bodies + b] == 0 and pair_flag[b * n_bodies + a] == 0:
                continue
            dx = cent_z[b, 0] - cent_z[a, 0]
            dy = cent_z[b, 1] - cent_z[a, 1]
            dist = math.sqrt(dx * dx + dy * dy)
            if dist == 0.0:
                err[ERR_SINGULAR_CENTROID] = 1
                continue
            ex = dx / dist
            ey = dy / dist
            ddot = (cent_v[b, 0] - cent_v[a, 0]) * ex + (cent_v[b, 1] - cent_v[a, 1]) * ey
            s = bbar_pair[a, b] * ddot / body_vol[a]
            fx += s * ex
            fy += s * ey
        fbar[a, 0] += fx
        fbar[a, 1] += fy


@njit(cache=True)
def center_damping_walls(z, v, vol, massn, body, body_start, is_wall, is_rigid,
                         cent_z, cent_v, body_mass, body_vol, cfact_pair,
                         cell_x, cell_y, bucket_start, order, r_c,
                         seen_stamp, fbar, err):
    """Particle-wall damping: each wall node acts as an opposing point particle.

    A wall node within R_c of any node of particle A applies one center
    dashpot against A (gated on centroid approach), with the equivalent
    mass built from A's total mass and the wall node's own mass.
    """
    n_bodies = body_start.shape[0] - 1
    n_buckets = bucket_start.shape[0] - 1
    mask = np.int64(n_buckets - 1)
    rc2 = r_c * r_c
    for w in range(n_bodies):
        if is_wall[w] == 0:
            continue
        for jj in range(body_start[w], body_start[w + 1]):
            for a in range(n_bodies):
                seen_stamp[a] = -1
            for ox in range(-1, 2):
                cx = cell_x[jj] + ox
                for oy in range(-1, 2):
                    cy = cell_y[jj] + oy
                    b = ((cx * _H1) ^ (cy * _H2)) & mask
                    for slot in range(bucket_start[b], bucket_start[b + 1]):
                        i = order[slot]
                        if cell_x[i] != cx or cell_y[i] != cy:
                            continue
                        a = body[i]
                        if a == w or is_wall[a] == 1 or is_rigid[a] == 1:
                            continue
                        if seen_stamp[a] == jj:
                            continue
                        dx = z[jj, 0] - z[i, 0]
                        dy = z[jj, 1] - z[i, 1]
                        if dx * dx + dy * dy >= rc2:
                            continue
                        seen_stamp[a] = jj
                        ex = z[jj, 0] - cent_z[a, 0]
                        ey = z[jj, 1] - cent_z[a, 1]
                        dist = math.sqrt(ex * ex + ey * ey)
                        if dist == 0.0:
                            err[ERR_SINGULAR_CENTROID] = 1
                            continue
                        ex /= dist
                        ey /= dist
                        ddot = (v[jj, 0] - cent_v[a, 0]) * ex + (v[jj, 1] - cent_v[a, 1]) * ey
                        mw = massn[jj]
                        meq = 2.0 * body_mass[a] * mw / (body_mass[a] + mw)
                        beta = cfact_pair[a, w] * math.sqrt(meq)
                        s = beta * ddot / body_vol[a]
                        fbar[a, 0] += s * ex
                        fbar[a, 1] += s * ey


@njit(cache=True, parallel=True)
def apply_body_force(force, fbar, body, is_rigid):
    n = force.shape[0]
    for i in prange(n):
        b = body[i]
        if is_rigid[b] == 0:
            force[i, 0] += fbar[b, 0]
            force[i, 1] += fbar[b, 1]


@njit(cache=True)
def accumulate_wall_impulse(force, vol, body_start, is_wall, dt, impulse):
    """impulse[b] += dt * sum(force * vol) over each wall body's nodes."""
    n_bodies = body_start.shape[0] - 1
    for b in range(n_bodies):
        if is_wall[b] == 0:
            continue
        fx = 0.0
        fy = 0.0
        for i in range(body_start[b], body_start[b + 1]):
            fx += force[i, 0] * vol[i]
            fy += force[i, 1] * vol[i]
        impulse[b, 0] += dt * fx
        impulse[b, 1] += dt * fy


@njit(cache=True, parallel=True)
def integrate(u, v, z, x0, force, rho_n, body, is_rigid, presc_v,
              rigid_uref, rigid_trel, gx, gy, dt, dt_v):
    """Leapfrog update; rigid nodes follow u = u_ref + v_prescribed * t_rel."""
    n = u.shape[0]
    for i in prange(n):
        b = body[i]
        if is_rigid[b] == 1:
            v[i, 0] = presc_v[b, 0]
            v[i, 1] = presc_v[b, 1]
            u[i, 0] = rigid_uref[b, 0] + presc_v[b, 0] * rigid_trel[b]
            u[i, 1] = rigid_uref[b, 1] + presc_v[b, 1] * rigid_trel[b]
        else:
            inv_rho = 1.0 / rho_n[i]
            ax = force[i, 0] * inv_rho + gx
            ay = force[i, 1] * inv_rho + gy
            v[i, 0] += dt_v * ax
            v[i, 1] += dt_v * ay
            u[i, 0] += dt * v[i, 0]
            u[i, 1] += dt * v[i, 1]
        z[i, 0] = x0[i, 0] + u[i, 0]
        z[i, 1] = x0[i, 1] + u[i, 1]


@njit(cache=True, parallel=True)
def damage_max(u, indptr, nbr, r0, inv_s0_node, z_out):
    """Damage Z_i = max over reference neighbors of |u_j - u_i|/(r_ij s0)."""
    n = indptr.shape[0] - 1
    for i in prange(n):
        zi = 0.0
        for k in range(indptr[i], indptr[i + 1]):
            j = nbr[k]
            dux = u[j, 0] - u[i, 0]
            duy = u[j, 1] - u[i, 1]
            val = math.sqrt(dux * dux + duy * duy) / r0[k] * inv_s0_node[i]
            if val > zi:
                zi = val
        z_out[i] = zi


@njit(cache=True)
def collect_cross_pairs(z, body, r_c, cell_x, cell_y, bucket_start, order):
    """All cross-body pairs within r_c, emitted once with body[i] < body[j]."""
    n = z.shape[0]
    n_buckets = bucket_start.shape[0] - 1
    mask = np.int64(n_buckets - 1)
    rc2 = r_c * r_c
    count = 0
    for _pass in range(2):
        if _pass == 1:
            out_i = np.empty(count, dtype=np.int64)
            out_j = np.empty(count, dtype=np.int64)
            out_d = np.empty(count, dtype=np.float64)
            count = 0
        for i in range(n):
            bi = body[i]
            for ox in range(-1, 2):
                cx = cell_x[i] + ox
                for oy in range(-1, 2):
                    cy = cell_y[i] + oy
                    b = ((cx * _H1) ^ (cy * _H2)) & mask
                    for slot in range(bucket_start[b], bucket_start[b + 1]):
                        j = order[slot]
                        if cell_x[j] != cx or cell_y[j] != cy:
                            continue
                        if body[j] <= bi:
                            continue
                        dx = z[j, 0] - z[i, 0]
                        dy = z[j, 1] - z[i, 1]
                        d2 = dx * dx + dy * dy
                        if d2 >= rc2:
                            continue
                        if _pass == 1:
                            out_i[count] = i
                            out_j[count] = j
                            out_d[count] = math.sqrt(d2)
                        count += 1
    return out_i, out_j, out_d


@njit(cache=True)
def min_cross_distance(z, a_start, a_end, b_start, b_end):
    """Minimum node distance between two contiguous node ranges."""
    best = np.inf
    for i in range(a_start, a_end):
        for j in range(b_start, b_end):
            dx = z[j, 0] - z[i, 0]
            dy = z[j, 1] - z[i, 1]
            d2 = dx * dx + dy * dy
            if d2 < best:
                best = d2
    return math.sqrt(best)


@njit(cache=True)
def advance_chunk(n_steps, step0, rebuild_every,
                  u, v, z, x0, force, vol, rho_n, massn,
                  body, body_start, is_rigid, is_wall, presc_v,
                  rigid_uref, rigid_ref_step,
                  indptr, nbr, r0, jw, r0jw, intact, ext, theta,
                  dcoef, acoef, bcoef, s0_node,
                  r_c, kn_pair, kn_self, an_pair, bbar_pair, cfact_pair,
                  mu, friction_on, damping_mode,
                  cell_x, cell_y, bucket_count, bucket_start, order,
                  pair_flag, fbar, seen_stamp, cent_z, cent_v, rigid_trel,
                  body_mass, body_vol, wall_impulse, gx, gy, dt, err):
    """Advance ``n_steps`` leapfrog steps starting at global step ``step0``.

    damping_mode: 0 = off, 1 = center, 2 = node.  Returns the number of
    bonds newly broken during the chunk.
    """
    n_bodies = body_start.shape[0] - 1
    newly_broken = 0
    for s in range(n_steps):
        step = step0 + s
        if (step % rebuild_every) == 0:
            grid_build(z, r_c, cell_x, cell_y, bucket_count, bucket_start, order)
        force[:] = 0.0
        for p in range(n_bodies * n_bodies):
            pair_flag[p] = 0
        pd_dilation(indptr, nbr, r0jw, intact, ext, vol, dcoef, theta)
        pd_force(z, indptr, nbr, r0, jw, intact, ext, vol, theta, acoef, bcoef, force)
        contact_gather(z, v, vol, rho_n, body, n_bodies,
                       cell_x, cell_y, bucket_start, order,
                       r_c, kn_pair, an_pair, mu, friction_on,
                       damping_mode == 2,
                       indptr, nbr, intact, kn_self, force, pair_flag, err)
        if damping_mode == 1:
            body_centroids(z, v, massn, body_start, cent_z, cent_v)
            fbar[:] = 0.0
            center_damping_particles(cent_z, cent_v, body_vol, is_wall, is_rigid,
                                     pair_flag, bbar_pair, fbar, err)
            center_damping_walls(z, v, vol, massn, body, body_start, is_wall,
                                 is_rigid, cent_z, cent_v, body_mass, body_vol,
                                 cfact_pair, cell_x, cell_y, bucket_start, order,
                                 r_c, seen_stamp, fbar, err)
            apply_body_force(force, fbar, body, is_rigid)
        accumulate_wall_impulse(force, vol, body_start, is_wall, dt,
                                wall_impulse)
        dt_v = 0.5 * dt if step == 0 else dt
        for b in range(n_bodies):
            rigid_trel[b] = (step + 1 - rigid_ref_step[b]) * dt
        integrate(u, v, z, x0, force, rho_n, body, is_rigid, presc_v,
                  rigid_uref, rigid_trel, gx, gy, dt, dt_v)
        newly_broken += bond_pass(z, indptr, nbr, r0, intact, s0_node, ext,
                                  True, err)
    return newly_broken
