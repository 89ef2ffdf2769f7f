"""Acceptance criteria.

One test (or a small set of sub-tests) per criterion, each printing a
PASS/FAIL line with the measured numbers.  Run with::

    pytest tests/test_acceptance.py -v -s

These replay the full reference experiments and take tens of minutes on
one core.  Shared runs are cached in module-scoped fixtures.
"""

import math
import sys

import numpy as np
import pytest

from grainpd import experiments, presets
from grainpd.contact import ContactConfig, brute_force_pairs, find_contact_pairs
from grainpd.engine import (Body, RunSettings, Scene, Simulation,
                            cor_from_records, smooth_series)
from grainpd.geometry import MeshlessCloud, ShapeSpec, mesh_size, shape_to_cloud
from grainpd.peridynamics import (MaterialModel, assemble_internal_force,
                                  build_bond_graph, dilation)

M1 = MaterialModel(rho=1200.0, kappa=2.16e7, shear=1.296e7, gc=50.0,
                   horizon=0.6e-3)


def report(criterion, ok, detail):
    line = f"ACCEPTANCE {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(line)
    print(line, file=sys.stderr)
    return ok


def run_cor(**kw):
    doc = presets.two_particle(**kw)
    sim, rec = experiments.run_config(doc, write_outputs=False)
    return sim, rec, cor_from_records(rec)


# ----------------------------------------------------------------------
# criterion 1: CoR vs damping table


@pytest.fixture(scope="module")
def cor_damping_table():
    rows = {}
    for eps in (1.0, 0.95, 0.9, 0.85, 0.8):
        sim, rec, cor = run_cor(eps_bar_n=eps, dt=2e-7, t_final=0.04)
        rows[eps] = (cor, rec.meta["h"])
    return rows


EXPECTED_C1 = {1.0: 1.0, 0.95: 0.946, 0.9: 0.893, 0.85: 0.845, 0.8: 0.796}


def test_criterion1_cor_damping_values(cor_damping_table):
    fails = []
    for eps, expected in EXPECTED_C1.items():
        cor, h = cor_damping_table[eps]
        if abs(cor - expected) > 0.03:
            fails.append((eps, cor))
    detail = "  ".join(f"eps={e:g}:C_R={c[0]:.4f}(exp {EXPECTED_C1[e]})"
                       for e, c in sorted(cor_damping_table.items(),
                                          reverse=True))
    ok = report("1 (CoR table values, tol 0.03)", not fails, detail)
    assert ok, fails


def test_criterion1_mesh_size_near_nominal(cor_damping_table):
    h = cor_damping_table[0.95][1]
    ok = report("1 (mesh size ~0.1423mm)", abs(h - 0.1423e-3) < 0.01e-3,
                f"h={h * 1e3:.4f}mm")
    assert ok


def test_criterion1_monotone_rank_order(cor_damping_table):
    cors = [cor_damping_table[e][0] for e in (1.0, 0.95, 0.9, 0.85, 0.8)]
    ok = all(a > b for a, b in zip(cors, cors[1:]))
    report("1 (monotonicity in eps_bar)", ok,
           " > ".join(f"{c:.4f}" for c in cors))
    assert ok


# ----------------------------------------------------------------------
# criterion 2: mixed-material cases


@pytest.fixture(scope="module")
def mixed_cases():
    out = {}
    _, _, out["t9"] = run_cor(mat_bottom="M2", mat_top="M1", eps_bar_n=0.95,
                              dt=1e-7, t_final=0.04)
    _, _, out["t9e"] = run_cor(mat_bottom="M2", mat_top="M1", eps_bar_n=1.0,
                               dt=1e-7, t_final=0.04)
    _, _, out["t7"] = run_cor(mat_bottom="M2", mat_top="M2", eps_bar_n=0.95,
                              dt=2e-8, t_final=0.04)
    _, _, out["t7e"] = run_cor(mat_bottom="M2", mat_top="M2", eps_bar_n=1.0,
                               dt=2e-8, t_final=0.04)
    return out


def test_criterion2_m2_m1(mixed_cases):
    cor = mixed_cases["t9"]
    ok = report("2 (M2/M1 at 0.95 -> 0.925 +/- 0.05)",
                abs(cor - 0.925) <= 0.05, f"C_R={cor:.4f}")
    assert ok


def test_criterion2_elastic_variants(mixed_cases):
    ok = True
    for key in ("t9e", "t7e"):
        ok = ok and abs(mixed_cases[key] - 1.0) <= 0.02
    report("2 (elastic variants -> 1 +/- 0.02)", ok,
           f"M2/M1:{mixed_cases['t9e']:.4f} M2/M2:{mixed_cases['t7e']:.4f}")
    assert ok


def test_criterion2_m2_m2(mixed_cases):
    # Known-red: M1 and M2 share Poisson ratio and density, so the model
    # is scale-identical between them and yields C_R(M2/M2) = C_R(M1/M1);
    # the expected 0.744 cannot follow from the equations as written.
    cor = mixed_cases["t7"]
    ok = report("2 (M2/M2 at 0.95 -> 0.744 +/- 0.05; see notes)",
                abs(cor - 0.744) <= 0.05, f"C_R={cor:.4f}")
    assert ok


def test_criterion2_ordering(mixed_cases, cor_damping_table):
    # Known-red for the same reason: C_R(M2/M2) tracks C_R(M1/M1).
    m2m2 = mixed_cases["t7"]
    m2m1 = mixed_cases["t9"]
    m1m1 = cor_damping_table[0.95][0]
    ok = m2m2 < m2m1 < m1m1
    report("2 (ordering M2/M2 < M2/M1 < M1/M1)", ok,
           f"{m2m2:.4f} < {m2m1:.4f} < {m1m1:.4f}")
    assert ok


# ----------------------------------------------------------------------
# criterion 3: mesh effect


@pytest.fixture(scope="module")
def mesh_effect(cor_damping_table):
    rows = {0.1423e-3: cor_damping_table[0.95][0]}
    _, _, rows[0.0805e-3] = run_cor(nominal_h=0.0805e-3, horizon=0.375e-3,
                                    dt=1e-7, eps_bar_n=0.95, t_final=0.04)
    _, _, rows[0.062e-3] = run_cor(nominal_h=0.062e-3, horizon=0.3e-3,
                                   dt=1e-7, eps_bar_n=0.95, t_final=0.04)
    return rows


EXPECTED_C3 = {0.1423e-3: 0.946, 0.0805e-3: 0.962, 0.062e-3: 0.968}


def test_criterion3_values(mesh_effect):
    fails = [h for h, exp in EXPECTED_C3.items()
             if abs(mesh_effect[h] - exp) > 0.03]
    detail = "  ".join(f"h={h * 1e3:.4f}:C_R={mesh_effect[h]:.4f}"
                       f"(exp {EXPECTED_C3[h]})" for h in sorted(EXPECTED_C3,
                                                                 reverse=True))
    ok = report("3 (mesh-effect values, tol 0.03)", not fails, detail)
    assert ok, fails


def test_criterion3_rank_order(mesh_effect):
    cors = [mesh_effect[h] for h in (0.1423e-3, 0.0805e-3, 0.062e-3)]
    ok = cors[0] < cors[1] < cors[2]
    report("3 (C_R strictly increases as h decreases)", ok,
           " < ".join(f"{c:.4f}" for c in cors))
    assert ok


# ----------------------------------------------------------------------
# criterion 4: impact fracture


@pytest.fixture(scope="module")
def impact_fracture():
    out = {}
    for v0 in (2.0, 4.0, 5.0):
        doc = presets.two_particle(eps_bar_n=0.95, v0=v0, dt=2e-7,
                                   t_final=1e-3)
        sim, _ = experiments.run_config(doc, write_outputs=False)
        out[v0] = int(sim.fz_counts().sum())
    return out


def test_criterion4_fracture_zone_nonempty_and_monotone(impact_fracture):
    sizes = [impact_fracture[v] for v in (2.0, 4.0, 5.0)]
    ok = all(s > 0 for s in sizes) and sizes[0] <= sizes[1] <= sizes[2]
    report("4 (impact fracture |FZ| > 0, non-decreasing in v0)", ok,
           f"|FZ|={sizes} for v0=(2,4,5) m/s")
    assert ok


# ----------------------------------------------------------------------
# criterion 5: asymmetric-strength fracture


def test_criterion5_only_weak_particle_breaks():
    # The damage measure uses raw displacement differences, so the slow
    # rigid spin the top particle picks up from the crush eventually
    # pushes its Z past 1; the criterion's two statements are evaluated
    # together at the moment the fracture manifests (as in the reference
    # damage-at-impact plots), plus a whole-run broken-bond check.
    doc = presets.two_particle_wall(mat_wall="M2", mat_bottom="M1",
                                    mat_top="M2", v0=5.0, dt=1e-7,
                                    t_final=1e-3, sample_every=200)
    sim, rec = experiments.run_config(doc, write_outputs=False)
    fz_bottom = rec["fz_bottom"].astype(int)
    fz_top = rec["fz_top"].astype(int)
    assert fz_bottom[-1] > 0 or fz_bottom.max() > 0
    i0 = int(np.argmax(fz_bottom > 0))
    names = [b.name for b in sim.scene.bodies]
    top = names.index("top")
    lo, hi = sim.indptr[sim.body_start[top]], sim.indptr[sim.body_start[top + 1]]
    top_broken = int(np.sum(sim.intact[lo:hi] == 0)) // 2
    bottom = names.index("bottom")
    blo = sim.indptr[sim.body_start[bottom]]
    bhi = sim.indptr[sim.body_start[bottom + 1]]
    bottom_broken = int(np.sum(sim.intact[blo:bhi] == 0)) // 2
    ok = (fz_bottom[i0] > 0 and fz_top[i0] == 0 and bottom_broken > 0
          and top_broken == 0)
    report("5 (M1 bottom breaks, M2 top intact)", ok,
           f"at t={rec['t'][i0] * 1e6:.0f}us: |FZ|bottom={fz_bottom[i0]} "
           f"|FZ|top={fz_top[i0]}; broken bottom={bottom_broken} "
           f"top={top_broken}")
    assert ok


# ----------------------------------------------------------------------
# criterion 6: conservation properties


def test_criterion6_momentum_and_energy():
    target = presets.mesh_target(0.1423e-3)
    a = Body(name="a", material=M1, v0=(0.05, 0.0),
             cloud=shape_to_cloud(ShapeSpec(kind="disk", center=(0.0, 0.0),
                                            radius=1e-3), target))
    b = Body(name="b", material=M1, v0=(-0.05, 0.0),
             cloud=shape_to_cloud(ShapeSpec(kind="disk", center=(2.3e-3, 0.0),
                                            radius=1e-3), target))
    scene = Scene(bodies=[a, b], gravity=(0.0, 0.0),
                  contact=ContactConfig(damping_model="off"), dt=2e-7,
                  t_final=6e-3, track_gap=("a", "b"))
    sim = Simulation(scene)
    p0 = sim.momentum()
    scale = float(np.sum(sim.massn * np.hypot(sim.v[:, 0], sim.v[:, 1])))
    rec = sim.run(RunSettings(sample_every=100))
    p_drift = max(np.abs(rec["px"] - p0[0]).max(),
                  np.abs(rec["py"] - p0[1]).max())
    contact = rec["gap"] < rec.meta["r_c"]
    total = rec["ke"] + rec["esp"]
    e_drift = abs(total[-1] - total[0]) / total[0]
    ok = (p_drift <= 1e-8 * scale and contact.any() and not contact[-1]
          and e_drift < 0.02 and sim.broken_total == 0)
    report("6 (momentum 1e-8, energy <2% through impact)", ok,
           f"p_drift={p_drift / scale:.2e} rel, e_drift={e_drift:.4f}")
    assert ok


def test_criterion6_rigid_translation_and_dilation():
    cloud = shape_to_cloud(ShapeSpec(kind="disk", radius=1e-3),
                           presets.mesh_target(0.1423e-3))
    graph = build_bond_graph(cloud, M1.horizon)
    f_trans = assemble_internal_force(graph, M1, cloud.volumes,
                                      cloud.nodes + np.array([0.7e-3, -0.4e-3]))
    f_ref = assemble_internal_force(graph, M1, cloud.volumes,
                                    (1.0 + 1e-3) * cloud.nodes)
    trans_rel = np.abs(f_trans).max() / np.abs(f_ref).max()
    s = 2.0 ** -10
    theta = dilation(graph, cloud.volumes, (1.0 + s) * cloud.nodes)
    theta_err = np.abs(theta / (3.0 * s) - 1.0).max()
    ok = trans_rel < 1e-10 and theta_err <= 1e-12
    report("6 (translation force ~0, theta = 3s to 1e-12)", ok,
           f"translation rel={trans_rel:.2e}, theta rel err={theta_err:.2e}")
    assert ok


# ----------------------------------------------------------------------
# criterion 7: spatial index vs brute force


def test_criterion7_oracle_equivalence():
    rng = np.random.default_rng(20260810)
    sizes = [10000, 10000] + list((10 ** rng.uniform(1.0, 4.0, size=98)).astype(int))
    bad = 0
    for trial, n in enumerate(sizes):
        n = max(int(n), 4)
        pos = rng.uniform(0.0, 1.0, size=(n, 2))
        body = (rng.uniform(size=n) < 0.5).astype(np.int32)
        r_c = float(rng.uniform(0.5, 2.0)) / math.sqrt(n)
        fast = find_contact_pairs(pos, body, r_c)
        slow = brute_force_pairs(pos, body, r_c)
        if not np.array_equal(fast, slow):
            bad += 1
        dx = pos[:, None, 0] - pos[None, :, 0]
        dy = pos[:, None, 1] - pos[None, :, 1]
        d = np.sqrt(dx * dx + dy * dy)
        np.fill_diagonal(d, np.inf)
        if mesh_size(pos) != d.min():
            bad += 1
        del d, dx, dy
    ok = bad == 0
    report("7 (index vs brute force, 100 trials)", ok,
           f"{len(sizes)} trials, max n=10000, mismatches={bad}")
    assert ok


# ----------------------------------------------------------------------
# criterion 8: central-difference exactness and order


def test_criterion8_constant_gravity_exact():
    cloud = MeshlessCloud(nodes=np.array([[0.0, 0.0]]),
                          volumes=np.array([1.0]), h=1.0)
    body = Body(name="p", cloud=cloud,
                material=MaterialModel(rho=1.0, kappa=1.0, shear=0.4,
                                       gc=1.0, horizon=1.0))
    scene = Scene(bodies=[body], gravity=(0.0, -10.0),
                  contact=ContactConfig(r_c=1.0), dt=1e-3, t_final=1.0)
    sim = Simulation(scene)
    sim.advance(731)
    t = 731 * 1e-3
    err = abs(sim.u[0, 1] - (-0.5 * 10.0 * t * t)) / (0.5 * 10.0 * t * t)
    ok = err < 1e-12
    report("8 (constant-gravity trajectory exact)", ok, f"rel err={err:.2e}")
    assert ok


def test_criterion8_oscillator_second_order():
    def period_error(dt):
        cloud = MeshlessCloud(nodes=np.array([[0.0, 0.0]]),
                              volumes=np.array([1.0]), h=1.0)
        body = Body(name="p", cloud=cloud, v0=(1.0, 0.0),
                    material=MaterialModel(rho=1.0, kappa=1.0, shear=0.4,
                                           gc=1.0, horizon=1.0))
        scene = Scene(bodies=[body], gravity=(0.0, 0.0),
                      contact=ContactConfig(r_c=1.0), dt=dt, t_final=1.0,
                      external_force=lambda s: -s.u)
        sim = Simulation(scene)
        us, ts = [], []
        for _ in range(int(50.0 / dt)):
            sim.step()
            us.append(sim.u[0, 0])
            ts.append(sim.step_count * dt)
        us, ts = np.asarray(us), np.asarray(ts)
        idx = np.flatnonzero(np.diff(np.sign(us)) != 0)
        cross = [ts[i] - us[i] * (ts[i + 1] - ts[i]) / (us[i + 1] - us[i])
                 for i in idx]
        period = 2.0 * (cross[-1] - cross[0]) / (len(cross) - 1)
        return abs(period - 2.0 * math.pi)

    ratio = period_error(0.2) / period_error(0.1)
    ok = 3.5 <= ratio <= 4.5
    report("8 (oscillator period error ~4x per dt halving)", ok,
           f"ratio={ratio:.3f}")
    assert ok


# ----------------------------------------------------------------------
# criterion 9: desk-scale compression


@pytest.fixture(scope="module")
def compression_run(tmp_path_factory):
    doc = presets.compression()
    out = tmp_path_factory.mktemp("compression")
    rec1, rec2, sim = experiments.run_compression(doc, out)
    return rec1, rec2, sim


def test_criterion9_reaction_curve_shape(compression_run):
    rec1, rec2, sim = compression_run
    total_bonds = len(sim.nbr) // 2
    t = rec2["t"]
    raw = -rec2["rfavg_wall_top"]
    r = smooth_series(t, raw, 1e-3)
    broken = rec2["broken_bonds"]
    r_max = r.max()
    i_peak = int(np.argmax(r))

    # (a) near-zero reaction before engagement
    engaged = r > 0.05 * r_max
    assert engaged.any()
    i_eng = int(np.argmax(engaged))
    pre_ok = i_eng > 0 and np.abs(r[:i_eng]).max() <= 0.05 * r_max

    # (b) monotonically rising elastic ramp (smoothed, small dips allowed)
    ramp = r[i_eng:i_peak + 1]
    ramp_ok = len(ramp) >= 3 and np.all(np.diff(ramp) >= -0.03 * r_max)

    # (c) force drop or plateau once breakage passes 1% of bonds
    frac = broken / total_bonds
    crossed = frac > 0.01
    star_ok = crossed.any()
    if star_ok:
        i_star = int(np.argmax(crossed))
        ramp_slope = (r[i_peak] - r[i_eng]) / max(t[i_peak] - t[i_eng], 1e-12)
        tail = r[i_star:]
        t_tail = t[i_star:]
        if len(tail) >= 3:
            post_slope = np.polyfit(t_tail, tail, 1)[0]
        else:
            post_slope = ramp_slope
        drop_ok = (post_slope <= 0.5 * ramp_slope
                   or tail.min() <= 0.9 * r[i_star:].max())
    else:
        drop_ok = False

    ok = pre_ok and ramp_ok and star_ok and drop_ok
    report("9 (compression reaction curve shape)", ok,
           f"pre={pre_ok} ramp={ramp_ok} broke1%={star_ok} drop={drop_ok} "
           f"broken_end={int(broken[-1])}/{total_bonds}")
    assert ok


def test_criterion9_broken_bonds_monotone(compression_run):
    _, rec2, _ = compression_run
    ok = bool(np.all(np.diff(rec2["broken_bonds"]) >= 0))
    report("9 (broken-bond count non-decreasing)", ok, "")
    assert ok


# ----------------------------------------------------------------------
# criterion 10: near-linear scaling


def test_criterion10_scaling():
    doc = presets.compression()
    rows = experiments.scaling_benchmark(doc, counts=(25, 51, 96),
                                         grids=((5, 5), (8, 7), (10, 10)),
                                         n_steps=1500, warmup=100)
    ok = True
    detail = []
    for (c0, n0, t0), (c1, n1, t1) in zip(rows, rows[1:]):
        node_ratio = n1 / n0
        time_ratio = t1 / t0
        ok = ok and 0.5 * node_ratio <= time_ratio <= 2.0 * node_ratio
        detail.append(f"{c0}->{c1}p: nodes x{node_ratio:.2f}, "
                      f"time x{time_ratio:.2f}")
    report("10 (wall time within 2x of linear in nodes)", ok,
           "; ".join(detail))
    assert ok
