"""Acceptance criteria, one test per criterion, each at its stated tolerance."""

import math
import time

import numpy as np
import pytest

from tvdecopt import harness
from tvdecopt.baselines import d_subgd
from tvdecopt.hard_instance import sc_params
from tvdecopt.network import certify_chi, project_consensus_complement, make_network, rotating_star
from tvdecopt.problem import (check_lipschitz, check_oracle_validity, eval_p, eval_Q,
                              l1_distance_instance, random_pairs)
from tvdecopt.solver import iterate, inner_residual, make_schedule, solve_convex
from tvdecopt.span_oracle import communication_floor, envelope, simulate


@pytest.fixture(scope="module")
def sc_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("acc") / "hard_sc.csv"
    cfg = harness.RunConfig.from_mapping(dict(method="optimal", instance="hard_sc", M=1, r=0.1,
                                              chi=6, eps=1e-2, probes=20, seed=0, out=str(out)))
    t0 = time.perf_counter()
    rec = harness.run(cfg)
    return cfg, rec, time.perf_counter() - t0


def test_criterion_1_saddle_equivalence(acceptance):
    # n = 2, d = 1, f_i = |x - c_i|, r = 1; n * min p is 2 * 0.53 (minimizer 0.4)
    c = np.array([1.3, 0.4])
    expected = 1.06
    r = 1.0
    r_x, r_yz = 2 * r / 3, 3 / r
    t0 = time.perf_counter()
    grid = np.round(np.linspace(-3.0, 3.0, 6001), 12)
    t_grid = grid  # z = (t, -t) spans the consensus complement
    t_ext = np.array([t_grid[0], t_grid[-1]])  # Q is affine in t: the grid max sits at an end
    best, arg = np.inf, None
    x2 = grid[None, :]
    for start in range(0, grid.size, 500):
        x1 = grid[start:start + 500, None]
        F = np.abs(x1 - c[0]) + np.abs(x2 - c[1]) + 0.5 * r_x * (x1 ** 2 + x2 ** 2)
        # max over y of -<y,x> - (r_yz/2)||y + z||^2 is <z,x> + ||x||^2 / (2 r_yz)
        inner = F + (x1 ** 2 + x2 ** 2) / (2 * r_yz)
        V = inner + np.maximum(t_ext[0] * (x1 - x2), t_ext[1] * (x1 - x2))
        i = np.unravel_index(np.argmin(V), V.shape)
        if V[i] < best:
            best, arg = float(V[i]), (float(x1[i[0], 0]), float(x2[0, i[1]]))
    elapsed = time.perf_counter() - t0
    # cross-check the closed forms against the library saddle function at the argmin
    inst = l1_distance_instance(c[:, None], r=r)
    X = np.array(arg)[:, None]
    vals = []
    for t in t_ext:
        Z = np.array([[t], [-t]])
        Y = -X / r_yz - Z
        vals.append(eval_Q(inst, X, Y, Z, r_x, r_yz))
    err = abs(best - expected)
    ok = err <= 5e-3 and abs(max(vals) - best) <= 1e-12 and elapsed < 10
    acceptance(1, ok, f"min-max Q = {best:.6f}, n*min p = {expected}, |diff| = {err:.2e}, "
                      f"argmin x = {arg}, {elapsed:.1f}s")
    assert ok


def test_criterion_2_network_certification(acceptance):
    t0 = time.perf_counter()
    details, ok = [], True
    for n in (3, 6, 12):
        net = rotating_star(n)
        rep = certify_chi(net, rounds=n // 3, trials=100)
        kern = max(max(np.abs(net.gossip(k) @ np.ones(n)).max(), np.abs(net.gossip(k).T @ np.ones(n)).max())
                   for k in range(n // 3))
        ok &= abs(rep.chi - n) <= 1e-8 and kern <= 1e-12
        details.append(f"n={n}: chi={rep.chi:.10g} |W1|={kern:.1e}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 1
    acceptance(2, ok, "; ".join(details) + f", {elapsed:.2f}s")
    assert ok


def test_criterion_3_solver_accuracy(sc_run, acceptance):
    cfg, rec, elapsed = sc_run
    inst, _ = harness.build_problem(cfg)
    params = sc_params(inst)
    x_o = rec.meta["x_o"]
    gap = eval_p(inst, x_o) - (-params.a ** 2 / (18 * params.r * params.d))
    ok = gap <= 1e-2 and len(rec) == rec.schedule.K and elapsed < 120
    acceptance(3, ok, f"n={inst.n} d={inst.d} K={rec.schedule.K} T={rec.schedule.T} "
                      f"gap={gap:.3e} (<= 1e-2), {elapsed:.1f}s")
    assert ok


def test_criterion_4_duality_gap_certificate(sc_run, acceptance):
    _, rec, _ = sc_run
    cert = rec.certificate
    labels = set(cert.labels)
    ok = (cert.passed and {"origin", "saddle"} <= labels
          and sum(l.startswith("random") for l in labels) == 20)
    violations = int(np.sum(cert.margins < 0))
    acceptance(4, ok, f"{len(cert.labels)} probes, {violations} violations, "
                      f"worst margin {cert.worst_margin:.3e}")
    assert ok


SWEEP = dict(method="optimal", instance="hard_sc", M=1, r=0.1, chi=3, eps=1e-2,
             solver_chi="tight", probes=20)


def test_criterion_5a_rate_in_K(tmp_path, acceptance):
    t0 = time.perf_counter()
    cfg = harness.RunConfig.from_mapping(dict(SWEEP, T=2000))
    Ks = [50, 100, 200, 400]
    rows = harness.sweep(cfg, "K", Ks, out_dir=tmp_path / "K")
    gaps = [r["final_gap"] for r in rows]
    slope = harness.loglog_slope(Ks, gaps)
    elapsed = time.perf_counter() - t0
    ok = -2.4 <= slope <= -1.6
    acceptance("5a", ok, f"slope vs K = {slope:.3f} in [-2.4, -1.6], gaps={['%.2e' % g for g in gaps]}, "
                         f"{elapsed:.0f}s")
    assert ok


def test_criterion_5b_rate_in_T(tmp_path, acceptance):
    t0 = time.perf_counter()
    cfg = harness.RunConfig.from_mapping(dict(SWEEP, K=2000))
    Ts = [10, 40, 160]
    rows = harness.sweep(cfg, "T", Ts, out_dir=tmp_path / "T")
    gaps = np.array([r["final_gap"] for r in rows])
    slope = harness.loglog_slope(Ts, gaps)
    elapsed = time.perf_counter() - t0
    # diagnostic only: subtract the T-independent part estimated at 4x the largest T
    far = harness.run(cfg.replace(T=640, out=str(tmp_path / "T" / "T_640.csv"))).final_gap
    corrected = harness.loglog_slope(Ts, np.maximum(gaps - far, 1e-300))
    ok = -1.3 <= slope <= -0.7
    acceptance("5b", ok, f"slope vs T = {slope:.3f} in [-1.3, -0.7], gaps={['%.2e' % g for g in gaps]}, "
                         f"(diagnostic: slope after removing the T=640 level {far:.2e} is "
                         f"{corrected:.3f}), {elapsed:.0f}s")
    assert ok


def test_criterion_6_lower_bound_witness(acceptance):
    t0 = time.perf_counter()
    ok, details = True, []
    for n, d in [(3, 3), (6, 5), (9, 7), (12, 9)]:
        trace = simulate(n, d)
        floor = communication_floor(n, d)
        inside = all(np.all(np.array(s.j) <= envelope(n, s.k)) for s in trace.states if s.k < floor)
        early = any(max(s.j) >= d for s in trace.states if s.k < floor)
        ok &= inside and not early and not trace.envelope_violations
        details.append(f"({n},{d}) reached at {trace.reached_at} >= {floor:g}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 1
    acceptance(6, ok, "; ".join(details) + f", {elapsed:.2f}s")
    assert ok


def test_criterion_7_baseline_dominance(sc_run, acceptance):
    cfg, rec, _ = sc_run
    inst, net = harness.build_problem(cfg)
    t0 = time.perf_counter()
    _, base = d_subgd(inst, net, rounds=rec.schedule.K)
    elapsed = time.perf_counter() - t0
    ratio = base.final_gap / rec.final_gap
    ok = ratio >= 3 and base.comms[-1] == rec.comms[-1] and elapsed < 120
    acceptance(7, ok, f"D-SubGD gap {base.final_gap:.3e} vs {rec.final_gap:.3e} at {rec.comms[-1]} "
                      f"communications, ratio {ratio:.1f} (>= 3), {elapsed:.1f}s")
    assert ok


def test_criterion_8_convex_reduction(acceptance):
    t0 = time.perf_counter()
    inst = l1_distance_instance(np.zeros((3, 1)), r=0.0, R=1.0)
    x_o, rec = solve_convex(inst, rotating_star(3), 0.05)
    value = eval_p(inst, x_o)
    elapsed = time.perf_counter() - t0
    ok = value - 0.0 <= 0.05 and elapsed < 60
    acceptance(8, ok, f"fbar(x_o) = {value:.3e} (<= 0.05), K={rec.schedule.K} T={rec.schedule.T}, "
                      f"{elapsed:.1f}s")
    assert ok


def test_criterion_9_structural_invariants(acceptance):
    t0 = time.perf_counter()
    worst = dict(validity=np.inf, lipschitz=np.inf, z=0.0, residual=0.0, lam=np.inf, pw=0.0)
    for seed in range(20):
        rng = np.random.default_rng(seed)
        n = int(rng.choice([3, 6, 9]))
        d = int(rng.integers(1, 5))
        r = float(rng.uniform(0.05, 2.0))
        inst = l1_distance_instance(rng.uniform(-1, 1, (n, d)), r=r)
        net = make_network(str(rng.choice(["rotating_star", "ring", "random", "complete"])), n, seed=seed)
        for o in inst.oracles:
            pairs = random_pairs(rng, d, 20, -2, 2)
            worst["validity"] = min(worst["validity"], check_oracle_validity(o, pairs).worst_margin)
            worst["lipschitz"] = min(worst["lipschitz"], check_lipschitz(o, inst.M, pairs).worst_margin)
        sched = make_schedule(r, net.chi, K=int(rng.integers(5, 40)), T=int(rng.integers(1, 8)))
        worst["lam"] = min(worst["lam"], float(sched.lam[1:].min()))

        def hook(k, t, x_old, g, x_new, x_k, y, eta, beta, tau):
            worst["residual"] = max(worst["residual"], inner_residual(x_old, g, x_new, x_k, y, eta, beta, tau))

        for st in iterate(inst, net, sched, on_inner_step=hook):
            for Z in (st.z, st.z_bar, st.z_under):
                worst["z"] = max(worst["z"], float(np.abs(Z.sum(axis=0)).max()) / max(1.0, np.linalg.norm(Z)))
            W = net.gossip(st.k - 1)
            P = project_consensus_complement
            worst["pw"] = max(worst["pw"], float(np.linalg.norm(P(W @ st.x) - W @ P(st.x))))
    elapsed = time.perf_counter() - t0
    ok = (worst["validity"] >= -1e-9 and worst["lipschitz"] >= -1e-9 and worst["z"] <= 1e-8
          and worst["residual"] <= 1e-12 and worst["lam"] >= 0 and worst["pw"] <= 1e-10 and elapsed < 60)
    acceptance(9, ok, ", ".join(f"{k}={v:.2e}" for k, v in worst.items()) + f", 20 seeds, {elapsed:.1f}s")
    assert ok
