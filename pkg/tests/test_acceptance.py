"""Acceptance criteria, one test and one printed PASS/FAIL line each."""
import math
import time

import numpy as np
import pytest

from predcomp.bounds import ErrorBoundModel, epsilon_eval, eta_eval
from predcomp.dynamics import iterate_approx, iterate_exact, scalar_plant
from predcomp.experiments.report import emit_report
from predcomp.experiments.runner import run_scenario, sweep_tau_max
from predcomp.experiments.scenario import resolve_scenario
from predcomp.experiments.suite import run_suite
from predcomp.mpc import MpcConfig, OcpProblem, project_inputs, stage_cost
from predcomp.dynamics import double_integrator


@pytest.fixture
def verdict(capsys):
    def emit(num, name, ok, detail):
        with capsys.disabled():
            print(f"\n[acceptance {num}] {'PASS' if ok else 'FAIL'} {name}: {detail}")
        assert ok, detail
    return emit


@pytest.fixture(scope="module")
def suite():
    t0 = time.perf_counter()
    res = run_suite(seed=0, count=100, replays=20, nominal=10)
    return res, time.perf_counter() - t0


@pytest.fixture(scope="module")
def sweep():
    t0 = time.perf_counter()
    records, rows = sweep_tau_max(resolve_scenario("orbit"), range(7))
    return records, rows, time.perf_counter() - t0


def test_1_prediction_consistency(suite, verdict):
    res, elapsed = suite
    gens = {r.scenario.generator for r in res.records}
    bad = res.consistency_failures + res.not_ok
    violations = sum(len(r.consistency.violations) for r in res.records if r.consistency)
    ok = res.runs == 100 and not bad and violations == 0 and gens == {"static", "mpc"} and elapsed < 60
    verdict(1, "prediction consistency", ok,
            f"{res.runs} runs, generators {sorted(gens)}, {violations} violations, {elapsed:.1f}s")


def test_2_measurement_error_bound(suite, verdict):
    res, _ = suite
    recs = [r for r in res.records if r.bound is not None]
    worst = max(r.bound.v_observed / r.bound.v_bound for r in recs if r.bound.v_bound > 0)
    ok = len(recs) == 100 and all(r.bound.satisfied for r in recs)
    verdict(2, "|v|_inf <= eps + eta", ok, f"{sum(r.bound.satisfied for r in recs)}/100 satisfied, "
                                          f"max observed/bound {worst:.3f}")


def test_3_replay_equivalence(suite, verdict):
    res, _ = suite
    ok = res.replay_checked == 20 and not res.replay_failures
    verdict(3, "bitwise replay of delayed loop", ok,
            f"{res.replay_checked - len(res.replay_failures)}/{res.replay_checked} identical")


def test_4_nominal_exactness(suite, verdict):
    res, _ = suite
    ok = res.nominal_checked == 10 and not res.nominal_failures and res.nominal_max_v <= 1e-12
    verdict(4, "exact predictor without disturbance", ok,
            f"{res.nominal_checked} runs, max |v| = {res.nominal_max_v:.3g}")


def _oracle_scalar(x0, w, k, substeps=1000):
    """RK4 on xdot = x with a fine grid; ``w`` is added after each sampling period."""
    h = 0.1 / substeps
    x = x0
    for j in range(k):
        for _ in range(substeps):
            k1 = x
            k2 = x + 0.5 * h * k1
            k3 = x + 0.5 * h * k2
            k4 = x + h * k3
            x = x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        x = x + w[j]
    return x


def test_5_epsilon_eta_soundness(verdict):
    # xdot = x, Euler with h = 0.1: per-step exponent L = 0.1 and, for |x0| <= 1
    # over k <= 10 steps, K = max|x''| / 2 = e / 2
    model = scalar_plant(1.0, 0.1, "euler")
    bm = ErrorBoundModel(L=0.1, K=math.e / 2, h=0.1, p=1)
    rng = np.random.default_rng(8)
    worst_eps = worst_eta = 0.0
    ok = True
    for x0 in (1.0, -1.0, 0.5):
        for k in range(1, 11):
            truth = _oracle_scalar(x0, np.zeros(k), k)
            pred = iterate_approx(model, 0, [x0], np.zeros((k, 1)), k).states[-1, 0]
            err = abs(pred - truth)
            ok &= err <= epsilon_eval(bm, k, 0.0)
            worst_eps = max(worst_eps, err / epsilon_eval(bm, k, 0.0))
    for trial in range(5):
        for k in range(1, 11):
            w = np.full(k, 0.1) if trial == 0 else rng.uniform(-0.1, 0.1, k)
            dev = abs(_oracle_scalar(1.0, w, k) - _oracle_scalar(1.0, np.zeros(k), k))
            sim = iterate_exact(model, 0, [1.0], np.zeros((k, 1)), w[:, None], k).states[-1, 0] \
                - iterate_exact(model, 0, [1.0], np.zeros((k, 1)), np.zeros((k, 1)), k).states[-1, 0]
            ok &= dev <= eta_eval(bm, k, 0.1) and abs(sim) <= eta_eval(bm, k, 0.1)
            ok &= abs(abs(sim) - dev) <= 1e-12
            worst_eta = max(worst_eta, dev / eta_eval(bm, k, 0.1))
    verdict(5, "eps/eta soundness on xdot = x", bool(ok),
            f"max err/eps = {worst_eps:.3f}, max dev/eta = {worst_eta:.3f} (k = 1..10)")


def test_6_deviation_grows_linearly(sweep, verdict):
    records, rows, elapsed = sweep
    d = np.array([r.max_deviation for r in rows])
    inversions = [(i, (d[i] - d[i + 1]) / d[i]) for i in range(6) if d[i + 1] < d[i]]
    monotone = len(inversions) == 0 or (len(inversions) == 1 and inversions[0][1] <= 0.05)
    tau = np.arange(7.0)
    slope, icpt = np.polyfit(tau, d, 1)
    r2 = 1 - np.sum((d - (slope * tau + icpt)) ** 2) / np.sum((d - d.mean()) ** 2)
    shared = len({r.w_hash for r in records}) == 1
    ok = (all(r.ok for r in records) and monotone and slope >= 0 and r2 >= 0.85
          and shared and elapsed < 120)
    verdict(6, "max deviation vs tau_max", ok,
            f"dev {np.round(d, 3).tolist()}, slope {slope:.3f}, R^2 {r2:.3f}, "
            f"inversions {len(inversions)}, {elapsed:.1f}s")


def test_7_tau_inf_accounting(sweep, verdict):
    records, rows, _ = sweep
    pairs = [(r.scenario.tau_max, r.delay.tau_inf) for r in records if r.delay]
    ok = len(pairs) == 7 and all(ti == t + 2 for t, ti in pairs)
    verdict(7, "tau_inf = tau_max + 2", ok, f"(tau_max, tau_inf) = {pairs}")


def test_8_mpc_solver(sweep, verdict):
    model = double_integrator(0.1)
    prob = OcpProblem(MpcConfig(state_bound=900.0), model)
    rng = np.random.default_rng(2718)
    worst = 0.0
    for _ in range(20):
        x0 = np.array([6.0, 0.0, 0.0, 10.0]) + rng.uniform(-2, 2, 4)
        U = project_inputs(rng.uniform(-10, 10, (10, 2)), 100.0)
        _, g = prob.value_and_grad(x0, U)
        fd = np.empty_like(U)
        for idx in np.ndindex(U.shape):
            h = 1e-6 * max(1.0, abs(U[idx]))
            Up, Um = U.copy(), U.copy()
            Up[idx] += h
            Um[idx] -= h
            fd[idx] = (prob.value(x0, Up) - prob.value(x0, Um)) / (2 * h)
        worst = max(worst, float(np.linalg.norm(g - fd) / np.linalg.norm(fd)))
    records, _, _ = sweep
    emitted = np.concatenate([r.packet.sequence for rec in records for r in rec.send_log])
    feasible = bool(np.all(emitted[:, 0] ** 2 + emitted[:, 1] ** 2 <= 100.0))
    l0, l1 = stage_cost([6, 0, 0, 10]), stage_cost([7, 0, 0, 0])
    costs = l0 == 0.0 and abs(l1 - 16905.0) <= 1e-12 * 16905.0
    ok = worst <= 1e-5 and feasible and costs
    verdict(8, "MPC gradient, projection, stage cost", ok,
            f"max rel grad err {worst:.2e}, {len(emitted)} emitted controls feasible={feasible}, "
            f"l(6,0,0,10)={l0}, l(7,0,0,0)={l1}")


def test_9_determinism(sweep, tmp_path, verdict):
    records, rows, _ = sweep
    first = records[2]
    again = run_scenario(first.scenario)
    emit_report([first], tmp_path / "a", [rows[2]])
    emit_report([again], tmp_path / "b", [rows[2].of(again)])
    same = {name: (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
            for name in ("runs.csv", "sweep.csv", "bounds.csv")}
    verdict(9, "byte-identical CSV output", all(same.values()), str(same))
