"""Acceptance run: one check per criterion, each printing a PASS/FAIL line.

Run under pytest (lines appear in the terminal summary) or directly with
``python3 tests/test_acceptance.py``.
"""

from __future__ import annotations

import itertools
import random
import sys
import time
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).parent))

from bayesdefense.efg import parse_efg, serialize_efg  # noqa: E402
from bayesdefense.knowledge import CaseStore, KnowledgeCase, build_grid, retrieve_index  # noqa: E402
from bayesdefense.payoff import build_payoff_table, feature_value, shapley, utility_tensor  # noqa: E402
from bayesdefense.predictor import (ClfNetwork, TrainConfig, synthetic_dataset, synthetic_trace,  # noqa: E402
                                    threshold_outputs, train)
from bayesdefense.adaptation import run_loop  # noqa: E402
from bayesdefense.routing import (allocate, dp_solve, full_game_solve, greedy_expected_utility,  # noqa: E402
                                  realizations, routing_grid)
from bayesdefense.scenarios import (SCENARIOS, data_text, make_scenario, scenario_game,  # noqa: E402
                                    server1_share)
from bayesdefense.solver import enumerate_pure_equilibria, policy_string, solve  # noqa: E402
from bayesdefense.system import COO, refine_attacked  # noqa: E402

from conftest import bimatrix_game, table_system, table_utility  # noqa: E402
from oracles import bimatrix_pure_equilibria, permutation_shapley  # noqa: E402

RESULTS: list[str] = []


def record(number: int, title: str, ok: bool, detail: str) -> bool:
    RESULTS.append(f"[{'PASS' if ok else 'FAIL'}] criterion {number:2d} {title}: {detail}")
    return ok


def _valve(name: str, p: float):
    sc = make_scenario(name)
    game = scenario_game(sc.with_probs({sc.abnormal[0]: p}))
    return game, policy_string(game, solve(game).profile, 1)


# ---------------------------------------------------------------- checks

def check_tank_flip():
    t0 = time.perf_counter()
    _, low = _valve("tank-a1", 0.0)
    _, high = _valve("tank-a1", 1.0)
    dt = time.perf_counter() - t0
    ok = low == "Low-ON; High-OFF" and high == "Low-OFF; High-OFF" and dt < 5
    return record(1, "tank A1 policy flip", ok, f"p=0 {low!r}, p=1 {high!r}, {dt:.2f}s")


def check_tank_inversion():
    t0 = time.perf_counter()
    _, inv = _valve("tank-a2", 1.0)
    sc = make_scenario("tank-a2")
    count = len(enumerate_pure_equilibria(scenario_game(sc.with_probs({"indicator": 0.8}))))
    dt = time.perf_counter() - t0
    ok = inv == "Low-OFF; High-ON" and count > 1 and dt < 5
    return record(2, "tank A2 inversion", ok,
                  f"p=1 {inv!r}, {count} pure equilibria at cooperative probability 0.2, {dt:.2f}s")


def check_routing_corners():
    net = make_scenario("routing").network
    t0 = time.perf_counter()
    values = {tuple(p.values()): dp_solve(net.with_probs(p)).expected_utility
              for p in routing_grid(net, 0.05)}
    dt = time.perf_counter() - t0
    want = {(0.0, 0.0): 8, (0.0, 1.0): 8, (1.0, 0.0): 7, (1.0, 1.0): 6}
    ok = all(abs(values[k] - v) <= 1e-9 for k, v in want.items()) and len(values) == 441 and dt < 10
    got = ", ".join(f"{k}->{values[k]:g}" for k in want)
    return record(3, "routing corners", ok, f"{got}; 441-point sweep {dt:.2f}s")


def _flip(net, node, axis, other, fixed):
    grid = [round(k * 0.05, 2) for k in range(21)]
    first = None
    for p in grid:
        choice = dp_solve(net.with_probs({axis: p, other: fixed})).policy[node]
        if first is None:
            first = choice
        elif choice != first:
            return p
    return None


def check_routing_thresholds():
    net = make_scenario("routing").network
    t0 = time.perf_counter()
    n1 = _flip(net, "N1", "N2", "N4", 0.5)
    n3 = _flip(net, "N3", "N4", "N2", 0.5)
    worst, below = 0.0, 0
    for probs in routing_grid(net, 0.05):
        n = net.with_probs(probs)
        gap = dp_solve(n).expected_utility - greedy_expected_utility(n)
        if gap < -1e-9:
            below += 1
            worst = min(worst, gap)
    dt = time.perf_counter() - t0
    flips_ok = n1 is not None and n3 is not None and abs(n1 - 0.50) <= 0.05 + 1e-9 and abs(n3 - 0.35) <= 0.05 + 1e-9
    ok = flips_ok and below == 0 and dt < 30
    return record(4, "routing thresholds", ok,
                  f"N1 flips at p_N2={n1}, N3 flips at p_N4={n3}; game below greedy at {below}/441 points "
                  f"(worst {worst:.4f}); {dt:.2f}s")


def check_dp_equals_full():
    net = make_scenario("routing").network
    rng = random.Random(2024)
    t0 = time.perf_counter()
    bad = 0
    for _ in range(25):
        n = net.with_probs({"N2": rng.random(), "N4": rng.random()})
        a, b = dp_solve(n), full_game_solve(n)
        same = abs(a.expected_utility - b.expected_utility) <= 1e-9
        same &= a.policy["N1"] == b.policy["N1"] and a.policy["N3"] == b.policy["N3"]
        bad += not same
    dt = time.perf_counter() - t0
    return record(5, "DP equals full game", bad == 0 and dt < 60, f"{25 - bad}/25 points agree, {dt:.2f}s")


def check_shapley():
    rng = np.random.default_rng(6)
    t0 = time.perf_counter()
    failures = 0
    for _ in range(50):
        sizes = list(rng.integers(1, 4, rng.integers(1, 5)))
        sys_ = table_system(sizes)
        vals = list(rng.integers(-10, 11, int(np.prod(sizes))))
        u = table_utility(sys_, vals)
        phi = shapley(sys_, u).values
        eff = abs(sum(phi.values()) - (feature_value(sys_, u, sys_.ids) - feature_value(sys_, u, []))) <= 1e-9
        # dummy: append a component that never matters
        big = table_system(sizes + [2])
        dummy = shapley(big, table_utility(big, [v for v in vals for _ in range(2)])).values[big.ids[-1]]
        # symmetry: utility that ignores which component picked what
        sym_sys = table_system([2] * len(sizes))
        counts = [sum(int(a[1:]) for a in j) for j in itertools.product(*(c.actions for c in sym_sys.ordered()))]
        w = list(rng.integers(-5, 6, len(sizes) + 1))
        sym = shapley(sym_sys, table_utility(sym_sys, [w[c] for c in counts])).values
        failures += not (eff and abs(dummy) <= 1e-9 and max(sym.values()) - min(sym.values()) <= 1e-9)
    oracle_bad = 0
    for _ in range(20):
        sizes = list(rng.integers(1, 3, rng.integers(1, 6)))
        sys_ = table_system(sizes)
        u = table_utility(sys_, list(rng.integers(-10, 11, int(np.prod(sizes)))))
        got = shapley(sys_, u).values
        want = permutation_shapley(sys_.ids, utility_tensor(sys_, u))
        oracle_bad += any(abs(got[c] - want[c]) > 1e-9 for c in sys_.ids)
    dt = time.perf_counter() - t0
    ok = failures == 0 and oracle_bad == 0 and dt < 30
    return record(6, "Shapley axioms", ok,
                  f"axioms hold on {50 - failures}/50 tables, oracle agrees on {20 - oracle_bad}/20, {dt:.2f}s")


def check_payoff_condition():
    t0 = time.perf_counter()
    worst = 0.0
    checked = 0
    for name in SCENARIOS:
        sc = make_scenario(name)
        if sc.network is not None:
            net = sc.network
            for types, _ in realizations(net):
                for u in np.linspace(0, net.base_utility, 11):
                    pay = allocate(net, types, float(u))
                    normal = sum(x for n, x in zip(net.nodes, pay) if types.get(n) != "com")
                    worst = max(worst, abs(normal - u))
                    checked += 1
            continue
        att = refine_attacked(sc.attacked)
        table = build_payoff_table(att, sc.utility, attacker_payoff=sc.attacker_payoff)
        ids = att.base.ids
        for a, u0 in table.utility.items():
            if any(a[ids.index(c)] not in att.actions(c, COO) for c in att.abnormal):
                continue
            total = sum(table.get(i, COO, a) for i in att.normal)
            worst = max(worst, abs(total - u0))
            checked += 1
    dt = time.perf_counter() - t0
    ok = worst <= 1e-9 and dt < 10
    return record(7, "payoff condition", ok, f"{checked} joint actions, max error {worst:.2e}, {dt:.2f}s")


def check_solver_oracle():
    rng = np.random.default_rng(8)
    t0 = time.perf_counter()
    games = 10_000
    bad = 0
    for _ in range(games):
        p = rng.integers(-2, 3, 8).tolist()
        row, col = [p[0:2], p[2:4]], [p[4:6], p[6:8]]
        eqs = enumerate_pure_equilibria(bimatrix_game(row, col))
        got = {("TB".index(e.profile.action(1, 1)), "LR".index(e.profile.action(2, 1))) for e in eqs}
        bad += got != bimatrix_pure_equilibria(row, col)
    dt = time.perf_counter() - t0
    return record(8, "solver oracle", bad == 0 and dt < 60, f"{games - bad}/{games} games agree, {dt:.2f}s")


def check_efg_round_trip():
    t0 = time.perf_counter()
    same = []
    for name in SCENARIOS:
        golden = data_text(f"{name}.efg")
        fresh = serialize_efg(scenario_game(make_scenario(name)))
        same.append(fresh == golden and serialize_efg(parse_efg(golden)) == golden)
    dt = time.perf_counter() - t0
    return record(9, "EFG round trip", all(same) and dt < 5, f"{sum(same)}/5 scenarios identical, {dt:.2f}s")


def check_znn():
    sc = make_scenario("znn")
    params = sc.params
    t0 = time.perf_counter()
    grid = [0.0, 0.25, 0.5, 0.75, 1.0]
    share = {}
    utility = {}
    for a in grid:
        for b in grid:
            game = scenario_game(sc.with_probs({"Server2": a, "Server3": b}))
            sol = solve(game)
            share[a, b] = server1_share(game, sol.profile)
            utility[a, b] = sol.utility
    dt = time.perf_counter() - t0
    step_share = params.step / params.requests
    u_ok = abs(utility[0, 0] - 160) <= params.step
    mono = all(share[grid[i], b] <= share[grid[i + 1], b] + 1e-12 for i in range(4) for b in grid)
    mono &= all(share[a, grid[i]] <= share[a, grid[i + 1]] + 1e-12 for i in range(4) for a in grid)
    low_ok = abs(share[0, 0] - 1 / 3) <= step_share + 1e-9
    high_ok = 0.75 <= share[1, 1] <= 0.95
    ok = u_ok and mono and low_ok and high_ok and dt < 300
    return record(10, "Znn properties", ok,
                  f"U(0,0)={utility[0, 0]:.2f}, monotone={mono}, share(0,0)={share[0, 0]:.2f}, "
                  f"share(1,1)={share[1, 1]:.2f} (target 0.75-0.95), {dt:.2f}s")


def check_predictor():
    rng = np.random.default_rng(11)
    t0 = time.perf_counter()
    rule_ok = True
    for _ in range(2000):
        outs = rng.uniform(size=rng.integers(1, 6))
        th = float(rng.uniform())
        res = threshold_outputs(outs, th)
        rule_ok &= all((p, t) == ((0.0, 0) if o <= th else (o, 1)) for o, p, t in zip(outs, res.p, res.t))
    net = ClfNetwork.initialise((6, 5, 4, 2), seed=3)
    x = rng.normal(size=(10, 6))
    y = np.eye(2)[rng.integers(0, 2, 10)]
    _, gw, _ = net.loss_and_grads(x, y)
    worst = 0.0
    eps = 1e-6
    for w, g in zip(net.weights, gw):
        for idx in np.ndindex(*w.shape):
            keep = w[idx]
            w[idx] = keep + eps
            up = net.loss_and_grads(x, y)[0]
            w[idx] = keep - eps
            down = net.loss_and_grads(x, y)[0]
            w[idx] = keep
            num = (up - down) / (2 * eps)
            worst = max(worst, abs(num - g[idx]) / max(1.0, abs(num), abs(g[idx])))
    xs, ys = synthetic_dataset(1000, seed=0)
    acc = train(xs, ys, TrainConfig(seed=0)).metrics["holdout_accuracy"]
    dt = time.perf_counter() - t0
    ok = rule_ok and worst <= 1e-4 and acc >= 0.9 and dt < 120
    return record(11, "predictor", ok,
                  f"threshold rule exact={rule_ok}, gradient rel. error {worst:.1e}, held-out accuracy {acc:.3f}, {dt:.2f}s")


def check_kb():
    rng = random.Random(12)
    t0 = time.perf_counter()
    bad = 0
    for _ in range(1000):
        width = rng.randint(1, 4)
        vecs = list({tuple(round(rng.random(), 2) for _ in range(width)) for _ in range(rng.randint(1, 40))})
        store = CaseStore(tuple(KnowledgeCase(v, ("x",) * width) for v in vecs))
        q = [rng.random() for _ in range(width)]
        dists = [sum((a - b) ** 2 for a, b in zip(v, q)) for v in vecs]
        bad += retrieve_index(store, q) != dists.index(min(dists))
    kb = build_grid("tank-a1", step=0.1)
    xs, ys = synthetic_dataset(1000, seed=0)
    net = train(xs, ys, TrainConfig(seed=0))
    trace, _ = synthetic_trace(20, attack_from=10, seed=3)
    log = run_loop(trace, {1: net}, kb)
    switch = next((e.tick for prev, e in zip(log, log[1:]) if e.actions != prev.actions), None)
    dt = time.perf_counter() - t0
    ok = bad == 0 and switch is not None and abs(switch - 10) <= 1 and dt < 30
    return record(12, "KB retrieval", ok,
                  f"{1000 - bad}/1000 stores agree with the scan, enacted action switches at tick {switch} "
                  f"(attack at 10), {dt:.2f}s")


def check_swat_mini():
    text = data_text("swat-mini.efg")
    fresh = serialize_efg(scenario_game(make_scenario("swat-mini")))
    ok = "{ 20, 20 }" in text and "{ -17, 17 }" in text and fresh == text
    return record(13, "swat-mini payoffs", ok, "golden file holds terminal payoffs (20, 20) and (-17, 17)"
                  if ok else "terminal payoffs missing from the golden file")


CHECKS = [check_tank_flip, check_tank_inversion, check_routing_corners, check_routing_thresholds,
          check_dp_equals_full, check_shapley, check_payoff_condition, check_solver_oracle,
          check_efg_round_trip, check_znn, check_predictor, check_kb, check_swat_mini]


def _run(check):
    ok = check()
    print(RESULTS[-1])
    assert ok, RESULTS[-1]


def test_criterion_01_tank_a1_flip():
    _run(check_tank_flip)


def test_criterion_02_tank_a2_inversion():
    _run(check_tank_inversion)


def test_criterion_03_routing_corners():
    _run(check_routing_corners)


def test_criterion_04_routing_thresholds():
    _run(check_routing_thresholds)


def test_criterion_05_dp_equals_full_game():
    _run(check_dp_equals_full)


def test_criterion_06_shapley_axioms():
    _run(check_shapley)


def test_criterion_07_payoff_condition():
    _run(check_payoff_condition)


def test_criterion_08_solver_oracle():
    _run(check_solver_oracle)


def test_criterion_09_efg_round_trip():
    _run(check_efg_round_trip)


def test_criterion_10_znn_properties():
    _run(check_znn)


def test_criterion_11_predictor():
    _run(check_predictor)


def test_criterion_12_kb_retrieval():
    _run(check_kb)


def test_criterion_13_swat_mini():
    _run(check_swat_mini)


if __name__ == "__main__":
    passed = sum(bool(c()) for c in CHECKS)
    print("\n".join(RESULTS))
    print(f"{passed}/{len(CHECKS)} criteria pass")
    sys.exit(0 if passed == len(CHECKS) else 1)
