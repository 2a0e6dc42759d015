"""One check per acceptance criterion, each printing a PASS/FAIL line.

The Monte Carlo checks (7 to 10) read batches through mc_cache, which reruns
them when the simulation code changes.
"""
import math
import time

import numpy as np
import pytest

from conbandit.alt import project_gaussian, project_numeric
from conbandit.divergences import binary_kl
from conbandit.experiment import row_text
from conbandit.explorers import SAMPLERS, run_once
from conbandit.hardness import (
    characteristic_time_bounds,
    conditioning_bound,
    exploration_set,
    neighbor_distances,
    solve_oracle_allocation,
)
from conbandit.model import DegenerateBasisError, ExplorationScenario, FeasiblePolytope, RewardFamily
from conbandit.polytope import enumerate_neighbors, project_onto_polytope, solve_optimal_policy
from conbandit.scenarios import BUILTINS

import mc_cache
from instances import random_instance
from oracles import binomial_slack_bound, gaussian_bai_time, gaussian_g, simplex_grid3

G1 = RewardFamily.gaussian(1.0)
EOT = ExplorationScenario.END_OF_TIME
ANY = ExplorationScenario.ANYTIME
KL_01 = binary_kl(0.1, 0.9)
TRACKING = ("ctns", "cge", "ptns")


@pytest.fixture
def report(capsys):
    def emit(criterion, ok, detail):
        with capsys.disabled():
            print(f"\n[criterion {criterion}] {'PASS' if ok else 'FAIL'}: {detail}")
        assert ok, detail
    return emit


@pytest.fixture(scope="module")
def mc():
    return {key: mc_cache.batch(key) for key in mc_cache.BATCHES}


def test_1_optimal_policy_recovery(report):
    t0 = time.perf_counter()
    worst = {}
    for name in ("fig5", "fig8-bernoulli", "fig9-bernoulli", "fig10", "fig11", "imdb"):
        b = BUILTINS[name]
        pi = solve_optimal_policy(b.problem.instance.means, b.problem.polytope).pi
        worst[name] = (float(np.max(np.abs(pi - b.stated_policy()))), b.optimum_tol)
    secs = time.perf_counter() - t0
    ok = all(err <= tol for err, tol in worst.values()) and secs < 1.0
    report(1, ok, f"max L-inf errors {({k: f'{e:.1e}' for k, (e, _) in worst.items()})}, {secs:.2f}s")


FIG5_PUBLISHED = {
    "end_of_time": [0.09, 0.02, 0.43, 0.36, 0.03, 0.02, 0.02, 0.02],
    "anytime": [0.02, 0.01, 0.32, 0.54, 0.03, 0.03, 0.03, 0.03],
    "bai": [0.43, 0.42, 0.05, 0.03, 0.02, 0.02, 0.02, 0.02],
}


def _fig5_allocations():
    p = BUILTINS["fig5"].problem
    mu = p.instance.means
    return {
        "end_of_time": solve_oracle_allocation(mu, p.polytope, EOT, G1).w,
        "anytime": solve_oracle_allocation(mu, p.polytope, ANY, G1).w,
        "bai": solve_oracle_allocation(mu, FeasiblePolytope(8), EOT, G1).w,
    }


@pytest.mark.xfail(strict=True, reason="published Fig. 5 vectors are not maximisers; see decisions ledger")
def test_2_fig5_oracle_allocations(report):
    t0 = time.perf_counter()
    got = _fig5_allocations()
    errs = {k: float(np.max(np.abs(got[k] - np.array(v)))) for k, v in FIG5_PUBLISHED.items()}
    secs = time.perf_counter() - t0
    report(2, all(e <= 0.02 for e in errs.values()) and secs < 30,
           f"L-inf vs published {({k: round(e, 3) for k, e in errs.items()})}, {secs:.1f}s")


def test_2_fig5_projected_allocation(report):
    p = BUILTINS["fig5"].problem
    bai = solve_oracle_allocation(p.instance.means, FeasiblePolytope(8), EOT, G1).w
    proj = project_onto_polytope(bai, exploration_set(p.polytope, ANY))
    err = float(np.max(np.abs(proj - np.array([0.03, 0.02, 0.12, 0.18, 0.16, 0.16, 0.16, 0.16]))))
    report(2, err <= 0.02, f"PTnS anytime projected allocation L-inf {err:.4f}")


def test_3_closed_form_vs_numeric(report):
    rng = np.random.default_rng(2024)
    worst_val = worst_res = 0.0
    count = 0
    t0 = time.perf_counter()
    while count < 500:
        mu, poly, A, b, opt, nbrs = random_instance(rng, k_max=6, n_max=14)
        w = rng.dirichlet(np.ones(len(mu)))
        closed, numeric = [], []
        for nb in nbrs.neighbors:
            v = opt.pi - nb.vertex.pi
            lam_c, val_c, _ = project_gaussian(w, mu, opt.pi, nb.vertex.pi, 1.0)
            lam_n, val_n = project_numeric(w, mu, opt.pi, nb.vertex.pi, G1)
            closed.append(val_c)
            numeric.append(val_n)
            worst_res = max(worst_res, abs(lam_c @ v), abs(lam_n @ v))
        worst_val = max(worst_val, abs(min(closed) - min(numeric)),
                        float(np.max(np.abs(np.subtract(closed, numeric)))))
        count += 1
    secs = time.perf_counter() - t0
    report(3, worst_val <= 1e-6 and worst_res <= 1e-8 and secs < 60,
           f"500 triples: max value gap {worst_val:.1e}, max hyperplane residual {worst_res:.1e}, {secs:.1f}s")


def test_4_bai_reduction(report):
    rng = np.random.default_rng(77)
    worst = 0.0
    t0 = time.perf_counter()
    for _ in range(50):
        K = int(rng.integers(2, 7))
        mu = rng.normal(size=K)
        while np.sort(mu)[-1] - np.sort(mu)[-2] < 1e-2:
            mu = rng.normal(size=K)
        T = solve_oracle_allocation(mu, FeasiblePolytope(K), EOT, G1).characteristic_time
        worst = max(worst, abs(T / gaussian_bai_time(mu)[0] - 1.0))
    secs = time.perf_counter() - t0
    report(4, worst <= 0.01 and secs < 120, f"50 instances: max relative gap {worst:.1e}, {secs:.1f}s")


def _sandwich_instances(n=200, seed=5):
    rng = np.random.default_rng(seed)
    out = []
    while len(out) < n:
        mu, poly, *_ = random_instance(rng, k_max=6, n_max=14)
        out.append((mu, poly, solve_oracle_allocation(mu, poly, EOT, G1).characteristic_time))
    return out


@pytest.fixture(scope="module")
def sandwich_instances():
    return _sandwich_instances()


@pytest.mark.xfail(strict=True, reason="min-form upper bound fails on most instances; see decisions ledger")
def test_5_sandwich_as_stated(report, sandwich_instances):
    bad = 0
    for mu, poly, T in sandwich_instances:
        per = np.array([2.0 / d ** 2 for _, d in neighbor_distances(mu, poly)])
        lower, upper = per.min(), len(mu) * per.min()
        bad += not (lower <= T * (1 + 1e-6) and T <= upper * (1 + 1e-6))
    report(5, bad == 0, f"min-form bracket violated on {bad}/200 instances")


def test_5_sandwich_valid_form(report, sandwich_instances):
    bad = 0
    for mu, poly, T in sandwich_instances:
        lower, upper = characteristic_time_bounds(mu, poly, 1.0)
        stated_lower = min(2.0 / d ** 2 for _, d in neighbor_distances(mu, poly))
        bad += not (stated_lower <= lower <= T * (1 + 1e-6) <= upper * (1 + 2e-6))
    report(5, bad == 0, f"max-form bracket (and min-form lower) violated on {bad}/200 instances")


def test_5_conditioning_bound(report, sandwich_instances):
    checked = bad = 0
    for mu, poly, T in sandwich_instances:
        try:
            _, _, bound = conditioning_bound(mu, poly, 1.0, delta=0.1)
        except DegenerateBasisError:
            continue
        checked += 1
        for sc in (EOT, ANY):
            t_sc = T if sc is EOT else solve_oracle_allocation(mu, poly, ANY, G1).characteristic_time
            bad += bound > t_sc * KL_01 * (1 + 1e-6)
    report(5, bad == 0 and checked > 0, f"conditioning bound above T*kl on {bad} of {2 * checked} cases")


def test_6_grid_oracle(report):
    worst = 0.0
    t0 = time.perf_counter()
    n = 0
    for seed in range(6):
        rng = np.random.default_rng(300 + seed)
        A = rng.normal(size=(1, 3))
        p = rng.dirichlet(np.ones(3))
        poly = FeasiblePolytope(3, A, A @ p + 0.1)
        mu = rng.normal(size=3)
        V = enumerate_neighbors(solve_optimal_policy(mu, poly), poly).directions()
        W = simplex_grid3(0.005)
        W = W[np.all(W > 0, axis=1)]
        for sc in (EOT, ANY):
            Ws = W if sc is EOT else W[np.max(W @ np.asarray(poly.B).T - np.asarray(poly.c), axis=1) <= 1e-12]
            best = float(np.max(gaussian_g(Ws, mu, V)))
            sol = solve_oracle_allocation(mu, poly, sc, G1)
            worst = max(worst, 1.0 - sol.value / best)
            n += 1
    secs = time.perf_counter() - t0
    report(6, worst <= 0.01 and secs < 120,
           f"{n} K=3 cases: solver g at most {100 * max(worst, 0):.3f}% below grid maximum, {secs:.1f}s")


def _error_rates(rows, samplers):
    out = {}
    for s in samplers:
        done = [r for r in rows if r["sampler"] == s and not r["censored"]]
        errs = sum(1 for r in done if r["correct"] is False)
        out[s] = (errs, len(done))
    return out


@pytest.mark.parametrize("key", ["fig3-triangle", "fig8-bernoulli"])
def test_7_delta_correctness(report, mc, key):
    rows, summary = mc[key]
    rates = _error_rates(rows, SAMPLERS)
    lines, ok = [], True
    for s, (errs, n) in rates.items():
        limit = binomial_slack_bound(n, 0.1, 0.99)
        ok &= n == 500 and errs / n <= limit
        lines.append(f"{s} {errs}/{n}")
    report(7, ok, f"{key} error counts {', '.join(lines)} (limit {limit:.3f})")


@pytest.mark.parametrize("key", ["fig3-triangle", "fig3-star"])
def test_7_fig3_orderings(report, mc, key):
    m = {s: v["mean_tau"] for s, v in mc[key][1]["samplers"].items()}
    ok = m["ctns"] < m["uniform"] and m["cge"] < m["uniform"]
    report(7, ok, f"{key} mean tau ctns {m['ctns']:.0f}, cge {m['cge']:.0f}, uniform {m['uniform']:.0f}")


def test_7_fig5_ptns_slower_than_uniform(report, mc):
    m = {s: v["mean_tau"] for s, v in mc["fig5-eot"][1]["samplers"].items()}
    report(7, m["ptns"] > m["uniform"], f"fig5 end-of-time mean tau ptns {m['ptns']:.0f}, uniform {m['uniform']:.0f}")


def _tracking_rows(mc):
    for key, (rows, summary) in mc.items():
        for r in rows:
            if r["sampler"] in TRACKING:
                yield key, r


@pytest.mark.xfail(strict=True, reason="C-tracking only guarantees sqrt(t+K^2)-2K; see decisions ledger")
def test_8_tracking_floor_as_stated(report, mc):
    worst = min(_tracking_rows(mc), key=lambda kr: kr[1]["track_margin"])
    n_bad = sum(1 for _, r in _tracking_rows(mc) if r["track_margin"] < 0)
    key, r = worst
    report(8, n_bad == 0, f"N_a >= sqrt(t+K^2)-K broken on {n_bad} tracking runs; worst margin "
                          f"{r['track_margin']:.3f} ({key}, {r['sampler']}, seed {r['seed']})")


def test_8_tracking_floor_provable(report, mc):
    bad = 0
    n = 0
    for key, r in _tracking_rows(mc):
        K = len(r["counts"])
        n += 1
        bad += r["track_margin"] < -K
    report(8, bad == 0 and n > 0, f"N_a >= sqrt(t+K^2)-2K broken on {bad}/{n} tracking runs")


def test_8_anytime_targets(report, mc):
    worst = -math.inf
    n = 0
    for key, (rows, summary) in mc.items():
        if summary["exploration"] != "anytime":
            continue
        for r in rows:
            n += 1
            worst = max(worst, r["target_violation"])
    report(8, n > 0 and worst <= 1e-9, f"{n} anytime runs: max B w - c over targets {worst:.1e}")


@pytest.mark.parametrize("key", ["fig3-triangle", "fig8-bernoulli"])
def test_9_lower_bound_band(report, mc, key):
    summary = mc[key][1]
    lb = summary["reference"]["lower_bound"]
    ratios = {s: summary["samplers"][s]["mean_tau"] / lb for s in ("ctns", "cge")}
    ok = all(0.2 <= x <= 5.0 for x in ratios.values())
    report(9, ok, f"{key} mean tau / (T kl) {({s: round(x, 2) for s, x in ratios.items()})}, lower bound {lb:.0f}")


def test_10_determinism(report, mc):
    rows, summary = mc["fig3-triangle"]
    spec_name = summary["scenario"]
    problem = BUILTINS["fig3-triangle"].problem
    csv_lines = {}
    for line in (mc_cache.batch_dir("fig3-triangle") / "runs.csv").read_text().splitlines()[1:]:
        seed, sampler = line.split(",")[:2]
        csv_lines[(sampler, int(seed))] = line + "\n"
    oracle_w = np.array(summary["reference"]["oracle_allocation"])
    same = 0
    picks = [(s, seed) for s in SAMPLERS for seed in (0, 17)]
    for s, seed in picks:
        a = row_text(run_once(problem, s, seed, oracle_w=oracle_w, scenario_name=spec_name))
        b = row_text(run_once(problem, s, seed, oracle_w=oracle_w, scenario_name=spec_name))
        same += a == b == csv_lines[(s, seed)]
    report(10, same == len(picks), f"{same}/{len(picks)} reruns byte-identical to each other and to the stored CSV")
