"""Command-line entry point: ``bayesdefense <command> ...``."""

from __future__ import annotations

import argparse
import csv
import io
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import efg, knowledge
from .adaptation import format_log, run_loop
from .game import GameError
from .payoff import PayoffError, shapley
from .predictor import (PredictorError, TrainConfig, load_network, read_dataset_csv, read_trace_csv,
                        save_network, synthetic_dataset, train)
from .routing import RoutingError, dp_solve, full_game, full_game_solve, greedy_expected_utility
from .scenarios import SCENARIOS, ScenarioError, make_scenario, scenario_game
from .solver import (DEFAULT_CAP, SolverCapError, SolverError, enumerate_pure_equilibria,
                     policy_string, solve, strategy_count)
from .system import SystemConfigError

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4
CONFIG_ERRORS = (SystemConfigError, ScenarioError, GameError, PayoffError, RoutingError,
                 PredictorError, efg.EfgError, knowledge.KnowledgeError, ValueError)


class CliError(Exception):
    pass


def _probs(items) -> dict[str, float]:
    out = {}
    for item in items or []:
        name, sep, value = item.partition("=")
        if not sep:
            raise CliError(f"--prob expects component=probability, got {item!r}")
        try:
            out[name.strip()] = float(value)
        except ValueError:
            raise CliError(f"--prob {item!r}: {value!r} is not a number") from None
    return out


def _emit(text: str, out: str | None):
    if out:
        Path(out).write_text(text, encoding="utf-8", newline="\n")
    else:
        sys.stdout.write(text)


def _scenario(args):
    sc = make_scenario(args.scenario)
    probs = _probs(getattr(args, "prob", None))
    return sc.with_probs(probs) if probs else sc


# ------------------------------------------------------------- commands

def cmd_build(args) -> int:
    game = scenario_game(_scenario(args))
    text = efg.dump_json(game) + "\n" if args.json else efg.serialize_efg(game)
    _emit(text, args.out)
    return EXIT_OK


def _describe_profile(game, profile) -> list[str]:
    return [f"  {game.player_name(pid)}: {policy_string(game, profile, pid)}" for pid in game.player_ids]


def cmd_solve(args) -> int:
    if args.file:
        game = efg.parse_efg(Path(args.file).read_text(encoding="utf-8"))
    elif args.scenario:
        game = scenario_game(_scenario(args))
    else:
        raise CliError("give an .efg file or --scenario")
    lines = []
    if strategy_count(game) <= args.cap:
        eqs = enumerate_pure_equilibria(game, cap=args.cap)
        lines.append(f"pure equilibria: {len(eqs)}")
        for k, e in enumerate(eqs, start=1):
            pay = ", ".join(format(x, ".6g") for x in e.payoffs)
            lines.append(f"[{k}] utility {e.utility:.6g}; payoffs ({pay})")
            lines.extend(_describe_profile(game, e.profile))
    else:
        lines.append(f"pure equilibria: not enumerated ({strategy_count(game)} profiles exceed the cap)")
    sol = solve(game)
    lines.append(f"selected (subgame-perfect): utility {sol.utility:.6g}")
    lines.extend(_describe_profile(game, sol.profile))
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def cmd_shapley(args) -> int:
    sc = make_scenario(args.scenario)
    if sc.attacked is None:
        raise CliError("the routing scenario allocates payoffs by equal shares, not Shapley values")
    sys_ = sc.attacked.base
    res = shapley(sys_, sc.utility)
    lines = ["component,shapley"]
    lines += [f"{sys_.component(c).name},{res.values[c]:.12g}" for c in sys_.ids]
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def cmd_train(args) -> int:
    if args.data:
        x, y = read_dataset_csv(Path(args.data).read_text(encoding="utf-8"))
    else:
        x, y = synthetic_dataset(args.samples, seed=args.seed)
    cfg = TrainConfig(learning_rate=args.lr, epochs=args.epochs, batch_size=args.batch, seed=args.seed)
    net = train(x, y, cfg)
    _emit(save_network(net), args.out)
    print(f"train accuracy {net.metrics['train_accuracy']:.4f}, "
          f"held-out accuracy {net.metrics['holdout_accuracy']:.4f}", file=sys.stderr)
    return EXIT_OK


def _executor(jobs: int):
    return ProcessPoolExecutor(jobs) if jobs and jobs > 1 else None


def cmd_kb_build(args) -> int:
    sc = _scenario(args)
    comps = args.components.split(",") if args.components else None
    ex = _executor(args.jobs)
    try:
        store = knowledge.build_grid(sc, comps, args.step, executor=ex, built=args.stamp)
    finally:
        if ex:
            ex.shutdown()
    _emit(knowledge.dumps(store), args.out)
    return EXIT_OK


def cmd_kb_query(args) -> int:
    store = knowledge.load(args.store)
    try:
        query = [float(v) for v in args.probs.split(",")]
    except ValueError:
        raise CliError(f"--probs expects comma-separated numbers, got {args.probs!r}") from None
    if len(query) != len(store.components) and store.scenario:
        # short queries name the abnormal components only, in grid order
        sc = make_scenario(store.scenario)
        ab = sc.abnormal
        if len(query) == len(ab):
            full = [0.0] * len(store.components)
            names = list(store.components)
            for a, q in zip(ab, query):
                full[names.index(a if isinstance(a, str) else sc.attacked.base.component(a).name)] = q
            query = full
    k = knowledge.retrieve_index(store, query)
    case = store.cases[k]
    lines = [f"case {k}: p_com {list(case.p_com)} distance {knowledge.squared_distance(case.p_com, query):.6g}",
             "a_star " + " ".join(f"{n}={a}" for n, a in zip(store.components, case.a_star)),
             f"system_utility {case.system_utility}"]
    if case.marker:
        lines.append(f"marker {case.marker}")
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def cmd_route(args) -> int:
    sc = make_scenario("routing")
    net = sc.network.with_probs(_probs(args.prob))
    sol = full_game_solve(net) if args.full else dp_solve(net)
    lines = [f"expected utility {sol.expected_utility:.12g}",
             "route " + " ".join(sol.route),
             "policy " + " ".join(f"{n}->{m}" for n, m in sol.policy.items()),
             f"greedy expected utility {greedy_expected_utility(net):.12g}"]
    for (node, ctx), acts in getattr(sol, "ties", {}).items():
        lines.append(f"tie at {node} (from {ctx.sender}): {' / '.join(acts)}")
    _emit("\n".join(lines) + "\n", args.out)
    return EXIT_OK


def _sweep_row(job):
    sc, names, probs = job
    row = [format(probs[n], "g") for n in names]
    try:
        if sc.network is not None:
            net = sc.network.with_probs(probs)
            sol = dp_solve(net)
            game = full_game(net)
            count = len(enumerate_pure_equilibria(game)) if strategy_count(game) <= DEFAULT_CAP else ""
            policies = [sol.policy.get(n, "") for n in net.nodes]
            return row + [format(sol.expected_utility, ".12g")] + policies + [count]
        s2 = sc.with_probs(probs)
        game = scenario_game(s2)
        sol = solve(game)
        count = len(enumerate_pure_equilibria(game)) if strategy_count(game) <= DEFAULT_CAP else ""
        policies = [policy_string(game, sol.profile, pid) for pid in game.player_ids]
        return row + [format(sol.utility, ".12g")] + policies + [count]
    except SolverError as exc:
        width = len(sc.network.nodes) if sc.network is not None else len(sc.attacked.base.ids)
        return row + [f"error: {exc}"] + [""] * width + [0]


def cmd_sweep(args) -> int:
    sc = make_scenario(args.scenario)
    names = args.pair.split(",") if args.pair else [
        (a if isinstance(a, str) else sc.attacked.base.component(a).name) for a in sc.abnormal]
    if not 1 <= len(names) <= 2:
        raise CliError("sweep takes one or two components")
    for n in names:
        sc.resolve(n)
        if sc.resolve(n) not in sc.probs:
            raise CliError(f"{n} is not an abnormal component of {sc.name}")
    values = knowledge.grid_values(args.step)
    jobs = []
    grid = [(v,) for v in values] if len(names) == 1 else [(a, b) for a in values for b in values]
    for point in grid:
        jobs.append((sc, names, dict(zip(names, point))))
    comps = list(sc.network.nodes) if sc.network is not None else [c.name for c in sc.attacked.base.ordered()]
    header = ["p_a", "p_b"][:len(names)] + ["system_utility"] + [f"policy_{c}" for c in comps] + ["eq_count"]
    ex = _executor(args.jobs)
    try:
        rows = list((ex.map if ex else map)(_sweep_row, jobs))
    finally:
        if ex:
            ex.shutdown()
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


def cmd_loop(args) -> int:
    store = knowledge.load(args.kb)
    if not store.cases:
        raise knowledge.KnowledgeError("knowledge base is empty")
    nets = {}
    for item in args.model or []:
        name, sep, path = item.partition("=")
        if not sep:
            raise CliError(f"--model expects component=file, got {item!r}")
        if name not in store.components:
            raise CliError(f"--model names {name!r}, store components are {list(store.components)}")
        nets[store.components.index(name)] = load_network(Path(path).read_text(encoding="utf-8"))
    trace = read_trace_csv(Path(args.trace).read_text(encoding="utf-8"))
    log = run_loop(trace, nets, store, args.threshold)
    _emit(format_log(log, store.components), args.out)
    return EXIT_OK


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bayesdefense",
                                description="Compile component systems under attack into Bayesian games and solve them.")
    sub = p.add_subparsers(dest="command", required=True)

    def scen(sp, required=True):
        sp.add_argument("--scenario", choices=SCENARIOS, required=required)
        sp.add_argument("--prob", action="append", metavar="COMPONENT=P",
                        help="compromise probability override (repeatable)")

    def out(sp):
        sp.add_argument("-o", "--out", help="output file (default: stdout)")

    sp = sub.add_parser("build", help="write the game of a scenario as .efg")
    scen(sp)
    sp.add_argument("--json", action="store_true", help="write the JSON debug dump instead")
    out(sp)
    sp.set_defaults(func=cmd_build)

    sp = sub.add_parser("solve", help="list pure equilibria and the selected one")
    sp.add_argument("file", nargs="?", help=".efg file")
    scen(sp, required=False)
    sp.add_argument("--cap", type=int, default=DEFAULT_CAP)
    out(sp)
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("shapley", help="Shapley values of a scenario's components")
    sp.add_argument("--scenario", choices=SCENARIOS, required=True)
    out(sp)
    sp.set_defaults(func=cmd_shapley)

    sp = sub.add_parser("train", help="train a compromise classifier")
    sp.add_argument("--data", help="CSV with feature columns and a final 0/1 label")
    sp.add_argument("--samples", type=int, default=1000, help="synthetic sample count when --data is absent")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--epochs", type=int, default=60)
    sp.add_argument("--lr", type=float, default=0.05)
    sp.add_argument("--batch", type=int, default=32)
    out(sp)
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("kb-build", help="precompute a knowledge base over a probability grid")
    scen(sp)
    sp.add_argument("--components", help="comma-separated abnormal components to vary")
    sp.add_argument("--step", type=float, default=0.1)
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--stamp", help="provenance string stored in the header")
    out(sp)
    sp.set_defaults(func=cmd_kb_build)

    sp = sub.add_parser("kb-query", help="nearest stored case for a probability vector")
    sp.add_argument("--store", required=True)
    sp.add_argument("--probs", required=True)
    out(sp)
    sp.set_defaults(func=cmd_kb_query)

    sp = sub.add_parser("route", help="solve the routing game")
    sp.add_argument("--prob", action="append", metavar="NODE=P")
    sp.add_argument("--full", action="store_true", help="solve the whole game instead of the dynamic program")
    out(sp)
    sp.set_defaults(func=cmd_route)

    sp = sub.add_parser("sweep", help="CSV of selected policies over a probability grid")
    sp.add_argument("--scenario", choices=SCENARIOS, required=True)
    sp.add_argument("--pair", help="one or two comma-separated abnormal components")
    sp.add_argument("--step", type=float, default=0.1)
    sp.add_argument("--jobs", type=int, default=1)
    out(sp)
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("loop", help="replay a sensor trace through the adaptation loop")
    sp.add_argument("--trace", required=True, help="CSV, one sensor vector per row")
    sp.add_argument("--kb", required=True, help="knowledge-base file")
    sp.add_argument("--model", action="append", metavar="COMPONENT=FILE")
    sp.add_argument("--threshold", type=float, default=0.5)
    out(sp)
    sp.set_defaults(func=cmd_loop)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SolverCapError, SolverError) as exc:
        category, code, err = "solver", EXIT_SOLVER, exc
    except OSError as exc:
        category, code, err = "io", EXIT_IO, exc
    except (CliError, *CONFIG_ERRORS) as exc:
        category, code, err = "config", EXIT_CONFIG, exc
    print(f"error [{category}]: {err}", file=sys.stderr)
    return code

if __name__ == "__main__":
    sys.exit(main())
