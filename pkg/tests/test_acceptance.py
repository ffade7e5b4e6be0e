"""End-to-end acceptance checks, one printed PASS/FAIL line per criterion.

Run with ``pytest tests/test_acceptance.py -v``.  Statistical criteria use
fixed master seeds, so reruns print the same numbers.
"""
import math

import numpy as np
import pytest

from llp.conditions import lemma_lb_check, lemma_sa_check, model1_check
from llp.experiments import (
    BENCHMARK_LOAD_BALANCING as LB,
    ExperimentConfig,
    cost_curve,
    discounted_cost,
    lyapunov_probe,
    q_learning_setting,
    run_ensemble,
)
from llp.models import Action, LoadBalancing, ServerAllocation, drift, free_jump_law, jump_law
from llp.process import Coin, Environment, FixedAction, QLearning, Trajectory, World, llp_step, run_trajectory
from llp.renewal import cycle_stats, lag1_autocorrelation, project, record_times, replay_record

FUZZ_CASES = 1000
D_R = drift(free_jump_law(LB, Action.RED))
D_G = drift(free_jump_law(LB, Action.GREEN))


@pytest.fixture
def report(capsys):
    def emit(criterion: str, ok: bool, detail: str) -> bool:
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] {criterion}: {detail}")
        return ok

    return emit


def pooled(values):
    values = np.asarray(values, dtype=float)
    return values.mean(axis=0), values.std(axis=0, ddof=1) / math.sqrt(len(values))


@pytest.fixture(scope="module")
def setting_ensembles():
    """Setting (i)-(iv) ensembles on the boundary world, 500 x 10^4 steps each."""
    out = {}
    for name in ("i", "ii", "iii", "iv"):
        metrics = ("escaped",) if name == "i" else ()
        cfg = ExperimentConfig(World(LB), q_learning_setting(name), horizon=10_000, n_trajectories=500, master_seed=505, metrics=metrics, probe_radius=0, probe_burn_in=100)
        out[name] = run_ensemble(cfg)
    return out


def test_c01_condition_certification(report):
    rep = model1_check(LB)
    lemma = lemma_lb_check(LB)
    q0_exact = (0.3 / 3.15) / (0.575 / 1.95)  # alpha0 / rho from the closed-form drifts
    ok_window = rep.q_window is not None and abs(rep.q_window.q0 - q0_exact) < 1e-9 and abs(rep.q_window.q1 - 1.0) < 1e-9
    ok_thresh = abs(lemma["mu_tilde > threshold"].lhs - 7.8) < 1e-9 and abs(lemma["mu2 < bound"].rhs - 0.40320512820512820) < 1e-9
    ok = rep.all_hold and ok_window and lemma.all_pass and len(lemma.inequalities) == 6 and ok_thresh
    report(
        "C1 condition certification",
        ok,
        f"all_hold={rep.all_hold} q_window=({rep.q_window.q0:.9f}, {rep.q_window.q1:.9f}) "
        f"lemma={lemma.all_pass} threshold={lemma['mu_tilde > threshold'].lhs:.9f} bound={lemma['mu2 < bound'].rhs:.9f}",
    )
    assert ok


def test_c02_discrepancy_witness(report):
    witness = ServerAllocation(1.0, 1.2, 7.0)
    lemma = lemma_sa_check(witness)
    rep = model1_check(witness)
    gap = rep.inequalities[-1]
    ok_witness = lemma.all_pass and not rep.cond_parameter5 and abs(gap.lhs - 1 / 6) < 1e-9 and abs(gap.rhs - (0.8 / 3.2 / math.sqrt(2) - 1 / 6)) < 1e-9
    other = ServerAllocation(1.0, 1.05, 22.0)
    rep2 = model1_check(other)
    rho = 0.95 / 3.05 / math.sqrt(2)
    q0, q1 = (0.05 / 1.05) / rho, (1 / 1.05 + rho - 1) / rho
    ok_other = lemma_sa_check(other).all_pass and rep2.all_hold and abs(rep2.q_window.q0 - q0) < 1e-9 and abs(rep2.q_window.q1 - q1) < 1e-9
    ok = ok_witness and ok_other
    report(
        "C2 sufficient-vs-direct discrepancy",
        ok,
        f"SA(1,1.2,7): lemma={lemma.all_pass} direct={rep.cond_parameter5} (1-a1={gap.lhs:.6f} vs rho-a0={gap.rhs:.6f}); "
        f"SA(1,1.05,22): q_window=({rep2.q_window.q0:.9f}, {rep2.q_window.q1:.9f})",
    )
    assert ok


def test_c03_limiting_drift(report):
    h, n = 20_000, 500
    targets = {
        "coin(0.3)": (Coin(0.3), (0.3 * D_R.x1 + 0.7 * D_G.x1, 0.3 * D_R.x2 + 0.7 * D_G.x2)),
        "fixed red": (FixedAction(Action.RED), tuple(D_R)),
        "fixed green": (FixedAction(Action.GREEN), tuple(D_G)),
    }
    parts, ok = [], True
    for label, (agent, target) in targets.items():
        res = run_ensemble(ExperimentConfig(World(LB, free=True), agent, horizon=h, n_trajectories=n, master_seed=303))
        mean, se = pooled([np.array(s.final_state) / h for s in res.summaries])
        z = np.abs(mean - np.array(target)) / se
        ok &= bool((z <= 3).all())
        parts.append(f"{label} L=({mean[0]:.6f}, {mean[1]:.6f}) target=({target[0]:.6f}, {target[1]:.6f}) z=({z[0]:.2f}, {z[1]:.2f})")
    report("C3 limiting drift", ok, "; ".join(parts))
    assert abs(targets["coin(0.3)"][1][0] - 0.483333) < 1e-6 and abs(targets["coin(0.3)"][1][1] - 0.055128) < 1e-6
    assert ok


def test_c04_alpha_bounds(report):
    cfg = ExperimentConfig(World(LB, free=True), q_learning_setting("i"), horizon=10_000, n_trajectories=200, master_seed=404, metrics=("alpha",))
    res = run_ensemble(cfg)
    alpha, se = pooled([s.alpha for s in res.summaries])
    rho = D_R.x1
    lo, hi = 0.5 * rho, 1 - 0.5 * rho
    ok = lo - 4 * se <= alpha <= hi + 4 * se
    report("C4 red-frequency bounds", ok, f"alpha={alpha:.4f} se={se:.4f} bounds=[{lo:.6f}, {hi:.6f}]")
    assert ok


def test_c05_transience(report, setting_ensembles):
    res = setting_ensembles["i"]
    flags = [s.escaped for s in res.summaries]
    escape = float(np.mean(flags))
    finals = np.array([sum(s.final_state) for s in res.summaries])
    small = float(np.mean(finals < 0.25 * 10_000))
    ok = escape >= 0.30 and small <= 0.05
    report("C5 transience", ok, f"escape fraction={escape:.3f} (>= 0.30), fraction |X_H| < H/4={small:.3f} (<= 0.05)")
    assert ok


def test_c06_growth_rate(report, setting_ensembles):
    target = 1.05 / 1.95
    incs = {k: r.mean_increment(5000, 10_000) for k, r in setting_ensembles.items()}
    ok_rate = all(abs(v - target) <= 0.03 for v in incs.values())
    worst = 0.0
    names = list(setting_ensembles)
    for i, a in enumerate(names):
        for b in names[i + 1 :]:
            ra, rb = setting_ensembles[a], setting_ensembles[b]
            diff = abs(ra.mean[-1] - rb.mean[-1]) / math.hypot(ra.se[-1], rb.se[-1])
            worst = max(worst, diff)
    ok = ok_rate and worst <= 3.0
    detail = ", ".join(f"({k})={v:.4f}" for k, v in incs.items())
    report("C6 L1 growth rate", ok, f"increments {detail} target={target:.6f}+-0.03; max pairwise final-mean gap={worst:.2f} SE")
    assert ok


def test_c07_cost_blowup_vs_boundedness(report):
    grid = [0.9, 0.95, 0.99]
    cfg = ExperimentConfig(World(LB), q_learning_setting("i"), horizon=10_000, n_trajectories=100, master_seed=707)
    curve = cost_curve(cfg, grid)
    scaled = [(1 - g) * j for g, j in zip(grid, curve.mean)]
    spread_q = max(scaled) / min(scaled)
    blowup = curve.mean[-1] / curve.ref_mean[0]
    spread_g = max(curve.ref_mean) / min(curve.ref_mean)
    ok = spread_q <= 2 and blowup >= 5 and spread_g <= 2
    report(
        "C7 cost blow-up vs boundedness",
        ok,
        f"(1-g)J={['%.4f' % s for s in scaled]} spread={spread_q:.3f} (<= 2); J_0.99/Jg_0.9={blowup:.1f} (>= 5); "
        f"Jg={['%.4f' % j for j in curve.ref_mean]} spread={spread_g:.3f} (<= 2)",
    )
    assert ok


def test_c08_green_stability(report):
    cfg = ExperimentConfig(World(LB), FixedAction(Action.GREEN), horizon=10_000, n_trajectories=200, master_seed=808)
    res = run_ensemble(cfg)
    q3 = res.mean[5000:7500].mean()
    q4 = res.mean[7500:10_001].mean()
    ratio = q4 / q3
    lyap = lyapunov_probe(LB, (0.04, 1.0), 50)
    ok = abs(ratio - 1) <= 0.2 and lyap.feasible and lyap.c > 0
    report("C8 green stability", ok, f"last/third quarter mean={q4:.2f}/{q3:.2f}={ratio:.3f} (within 1+-0.2); lyapunov c={lyap.c}, B={lyap.B}")
    assert ok


def test_c09_renewal_machinery(report):
    traj = run_trajectory(World(LB, free=True), Coin(0.5), (0, 0), 100_000, 909)
    rec = record_times(project(traj, (1.0, 0.0)), 10_000)
    stats = cycle_stats(traj, rec)
    fit = stats.tail_fit
    rho = [lag1_autocorrelation(stats.displacements[:, i]) for i in (0, 1)]
    ok = len(rec) >= 100 and fit is not None and fit.slope < 0 and fit.r_squared >= 0.9 and all(abs(r) <= 0.1 for r in rho)
    report("C9 renewal machinery", ok, f"records={len(rec)} slope={fit.slope:.4f} R2={fit.r_squared:.4f} lag1=({rho[0]:.4f}, {rho[1]:.4f})")
    assert ok


def _random_model(rng):
    if rng.random() < 0.5:
        return LoadBalancing(*rng.uniform(0.01, 20, 4), *rng.uniform(0, 1, 2))
    return ServerAllocation(*rng.uniform(0.01, 20, 3))


def _random_agent(rng):
    kind = rng.integers(3)
    if kind == 0:
        return QLearning(
            epsilon=rng.random(), gamma=rng.uniform(0.01, 1), step_size=rng.random(),
            schedule=["constant", "harmonic"][rng.integers(2)], harmonic_index=["global", "visit"][rng.integers(2)],
            cost="local_delta", q0=rng.uniform(-1, 1), greedy=["argmin", "argmax"][rng.integers(2)],
        )
    if kind == 1:
        return Coin(rng.random())
    return FixedAction(Action(int(rng.integers(2))))


def test_c10_structural_invariants(report):
    rng = np.random.default_rng(1010)
    results = {}

    bad = 0
    for _ in range(FUZZ_CASES):
        model = _random_model(rng)
        state = tuple(int(v) for v in rng.integers(0, 3, 2))
        law = jump_law(model, state, Action(int(rng.integers(2))))
        bad += abs(math.fsum(law.probs) - 1.0) > 1e-12 or min(law.probs) < 0
    results["normalization"] = bad == 0

    bad = 0
    for _ in range(FUZZ_CASES):
        world = World(_random_model(rng), free=True)
        agent = _random_agent(rng)
        x0 = tuple(int(v) for v in rng.integers(-20, 20, 2))
        shift = rng.integers(-1000, 1000, 2)
        seed = int(rng.integers(2**63))
        a = run_trajectory(world, agent, x0, 60, seed)
        b = run_trajectory(world, agent, (x0[0] + int(shift[0]), x0[1] + int(shift[1])), 60, seed)
        bad += not (np.array_equal(b.states - a.states, np.broadcast_to(shift, a.states.shape)) and np.array_equal(a.actions, b.actions))
    results["translation"] = bad == 0

    bad = 0
    for _ in range(FUZZ_CASES):
        world = World(_random_model(rng), free=bool(rng.integers(2)))
        agent = _random_agent(rng)
        env = Environment((0.0, 0.0))
        for _ in range(int(rng.integers(0, 20))):
            env.touch(tuple(int(v) for v in rng.integers(0, 4, 2)))[int(rng.integers(2))] = float(rng.normal())
        before = {k: list(v) for k, v in env.table.items()}
        state = tuple(int(v) for v in rng.integers(0, 4, 2))
        rec, env, _ = llp_step(world, agent, state, env, int(rng.integers(100)), np.random.default_rng(int(rng.integers(2**32))))
        for key, vals in env.table.items():
            old = before.get(key, list(env.default))
            bad += any(vals[a] != old[a] for a in (0, 1) if (key, a) != (rec.state, int(rec.action)))
    results["locality"] = bad == 0

    bad = 0
    for _ in range(FUZZ_CASES):
        traj = run_trajectory(World(_random_model(rng)), _random_agent(rng), tuple(int(v) for v in rng.integers(0, 5, 2)), int(rng.integers(0, 200)), int(rng.integers(2**63)))
        bad += discounted_cost(traj, 1.0) != float(traj.norms[-1] - traj.norms[0])
    results["telescoping"] = bad == 0

    bad = 0
    steps = np.array([(1, 0), (0, 1), (-1, 0), (0, -1)])
    for _ in range(FUZZ_CASES):
        n = int(rng.integers(1, 120))
        w = rng.dirichlet(np.ones(4))
        path = np.vstack([[0, 0], np.cumsum(steps[rng.choice(4, size=n, p=w)], axis=0)])
        theta = rng.uniform(0, math.pi / 2)
        traj = Trajectory((0, 0), path, np.zeros(n, np.int8), np.zeros(n), np.zeros(n, bool))
        proj = project(traj, (math.cos(theta), math.sin(theta)))
        margin = int(rng.integers(0, 20))
        certified = set(record_times(proj, margin).certified.tolist())
        bad += any((k in certified) != (k <= n - margin and replay_record(proj, k)) for k in range(n + 1))
    results["replay"] = bad == 0

    bad = 0
    for c in range(10):
        cfg = ExperimentConfig(World(_random_model(rng)), _random_agent(rng), horizon=200, n_trajectories=FUZZ_CASES // 10, master_seed=int(rng.integers(2**63)), metrics=("alpha",))
        serial = run_ensemble(cfg, threads=1)
        parallel = run_ensemble(cfg, threads=2)
        bad += sum(
            not (np.array_equal(a.norms, b.norms) and a.alpha == b.alpha and a.seed == b.seed)
            for a, b in zip(serial.summaries, parallel.summaries)
        )
        bad += not (np.array_equal(serial.mean, parallel.mean) and np.array_equal(serial.se, parallel.se))
    results["determinism"] = bad == 0

    ok = all(results.values())
    report("C10 structural invariants", ok, ", ".join(f"{k}={'ok' if v else 'FAIL'}" for k, v in results.items()) + f" ({FUZZ_CASES} cases each)")
    assert ok
