"""Offline grid of solved games and nearest-case lookup at run time."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .game import CHANCE, TERMINAL, BayesGame, split_type_label
from .scenarios import Scenario, make_scenario, scenario_game
from .solver import PureProfile, SolverError, solve
from .system import COM, COO

FORMAT_TAG = "bayesdefense-kb"
FORMAT_VERSION = 1
NO_EQUILIBRIUM = "no-equilibrium"


class KnowledgeError(ValueError):
    pass


@dataclass(frozen=True)
class KnowledgeCase:
    """Probabilities of compromise, the actions an equilibrium enacts, and its value.

    ``a_star`` follows the realisation where every component is cooperative;
    ``a_star_compromised`` holds, for abnormal components only, the action
    taken when they are all compromised.  ``policy`` keeps the whole selected
    strategy per component so an executor can react to what it observes.
    """

    p_com: tuple[float, ...]
    a_star: tuple[str | None, ...]
    a_star_compromised: tuple[str | None, ...] = ()
    system_utility: float | None = None
    marker: str = ""
    policy: Mapping[str, Mapping[str, str]] = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"p_com": list(self.p_com), "a_star": list(self.a_star),
                "a_star_compromised": list(self.a_star_compromised),
                "system_utility": self.system_utility, "marker": self.marker,
                "policy": {k: dict(v) for k, v in self.policy.items()}}

    @classmethod
    def from_json(cls, d: dict) -> "KnowledgeCase":
        return cls(tuple(float(x) for x in d["p_com"]), tuple(d["a_star"]),
                   tuple(d.get("a_star_compromised", ())), d.get("system_utility"),
                   d.get("marker", ""), d.get("policy", {}))


@dataclass(frozen=True)
class CaseStore:
    cases: tuple[KnowledgeCase, ...]
    scenario: str = ""
    step: float | None = None
    components: tuple[str, ...] = ()
    built: str | None = None

    def __post_init__(self):
        seen = set()
        for k, case in enumerate(self.cases):
            key = tuple(case.p_com)
            if key in seen:
                raise KnowledgeError(f"case {k} repeats compromise vector {list(key)}")
            seen.add(key)
            if self.components and len(case.p_com) != len(self.components):
                raise KnowledgeError(f"case {k} has {len(case.p_com)} probabilities, "
                                     f"store has {len(self.components)} components")

    def __len__(self):
        return len(self.cases)


def grid_values(step: float) -> list[float]:
    k = round(1 / step)
    if k <= 0 or abs(k * step - 1) > 1e-9:
        raise KnowledgeError(f"step {step} does not divide 1")
    return [round(i / k, 12) for i in range(k + 1)]


def realised_actions(game: BayesGame, profile: PureProfile, type_choice: str) -> dict[int, str]:
    """Actions on the path where every type draw resolves to ``type_choice``."""
    v = game.nodes[game.root]
    out = {}
    while v.kind != TERMINAL:
        if v.kind == CHANCE:
            nxt = next((c for lab, c, _ in v.children if split_type_label(lab) == type_choice),
                       v.children[0][1])
        else:
            label = profile.action(v.player, v.infoset)
            out[v.player] = label
            nxt = dict((lab, c) for lab, c, _ in v.children)[label]
        v = game.nodes[nxt]
    return out


def policy_map(game: BayesGame, profile: PureProfile) -> dict[str, dict[str, str]]:
    return {game.player_name(pid): dict(zip(game.infoset_labels[pid], profile.actions[pid]))
            for pid in game.player_ids}


def _solve_point(args):
    scenario, probs = args
    ids = _component_ids(scenario)
    p_com = tuple(float(probs.get(c, 0.0)) for c in ids)
    if scenario.network is not None:
        return _routing_case(scenario, probs, p_com)
    game = scenario_game(scenario, probs)
    try:
        sol = solve(game)
    except SolverError:
        return KnowledgeCase(p_com, tuple(None for _ in ids), tuple(None for _ in ids), None, NO_EQUILIBRIUM)
    coop = realised_actions(game, sol.profile, COO)
    comp = realised_actions(game, sol.profile, COM)
    abnormal = scenario.attacked.abnormal
    return KnowledgeCase(p_com, tuple(coop.get(c) for c in ids),
                         tuple(comp.get(c) if c in abnormal else None for c in ids),
                         sol.utility, "", policy_map(game, sol.profile))


def _routing_case(scenario: Scenario, probs, p_com):
    from .routing import BACK, dp_solve
    net = scenario.network.with_probs(probs)
    sol = dp_solve(net)
    a = tuple(sol.policy.get(n) for n in net.nodes)
    bad = tuple(BACK if n in net.uncertain else None for n in net.nodes)
    return KnowledgeCase(p_com, a, bad, sol.expected_utility, "", {"route": {"benign": " ".join(sol.route)}})


def _component_ids(scenario: Scenario) -> list:
    if scenario.network is not None:
        return list(scenario.network.nodes)
    return list(scenario.attacked.base.ids)


def _component_names(scenario: Scenario) -> tuple[str, ...]:
    if scenario.network is not None:
        return tuple(scenario.network.nodes)
    return tuple(c.name for c in scenario.attacked.base.ordered())


def build_grid(scenario: Scenario | str, abnormal_ids: Sequence | None = None, step: float = 0.1,
               executor=None, built: str | None = None) -> CaseStore:
    """Solve the scenario at every grid point over the chosen abnormal components.

    Grid points are visited in row-major order (last component fastest);
    ``executor.map`` may solve them concurrently.
    """
    if isinstance(scenario, str):
        scenario = make_scenario(scenario)
    abnormal = list(abnormal_ids) if abnormal_ids is not None else list(scenario.abnormal)
    abnormal = [scenario.resolve(a) for a in abnormal]
    for a in abnormal:
        if a not in scenario.probs:
            raise KnowledgeError(f"component {a} is not abnormal in scenario {scenario.name}")
    values = grid_values(step)
    jobs = []
    for combo in itertools.product(values, repeat=len(abnormal)):
        probs = dict(scenario.probs)
        probs.update(zip(abnormal, combo))
        jobs.append((scenario, probs))
    mapper = executor.map if executor is not None else map
    cases = tuple(mapper(_solve_point, jobs))
    return CaseStore(cases, scenario.name, step, _component_names(scenario), built)


def squared_distance(a: Sequence[float], b: Sequence[float]) -> float:
    return sum((x - y) ** 2 for x, y in zip(a, b))


def retrieve(store: CaseStore, query: Sequence[float]) -> KnowledgeCase:
    """Case with the smallest squared distance to ``query``; the earliest one wins ties."""
    return store.cases[retrieve_index(store, query)]


def retrieve_index(store: CaseStore, query: Sequence[float]) -> int:
    if not store.cases:
        raise KnowledgeError("knowledge base is empty")
    query = tuple(float(q) for q in query)
    width = len(store.cases[0].p_com)
    if len(query) != width:
        raise KnowledgeError(f"query has {len(query)} probabilities, cases have {width}")
    best, best_d = 0, None
    for k, case in enumerate(store.cases):
        d = squared_distance(case.p_com, query)
        if best_d is None or d < best_d:
            best, best_d = k, d
    return best


# ----------------------------------------------------------- persistence

def dumps(store: CaseStore) -> str:
    header = {"format": FORMAT_TAG, "version": FORMAT_VERSION, "scenario": store.scenario,
              "step": store.step, "components": list(store.components), "built": store.built,
              "count": len(store.cases)}
    lines = [json.dumps(header, sort_keys=True)]
    lines.extend(json.dumps(c.to_json(), sort_keys=True) for c in store.cases)
    return "\n".join(lines) + "\n"


def loads(text: str) -> CaseStore:
    lines = [line for line in text.splitlines() if line.strip()]
    if not lines:
        raise KnowledgeError("store file is empty (no header)")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise KnowledgeError(f"header is not valid JSON: {exc}") from None
    if header.get("format") != FORMAT_TAG:
        raise KnowledgeError("not a knowledge-base file")
    if header.get("version") != FORMAT_VERSION:
        raise KnowledgeError(f"unsupported store version {header.get('version')}")
    cases = []
    for k, line in enumerate(lines[1:]):
        try:
            cases.append(KnowledgeCase.from_json(json.loads(line)))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise KnowledgeError(f"record {k}: malformed case ({exc})") from None
    if "count" in header and header["count"] != len(cases):
        raise KnowledgeError(f"record {len(cases)}: store declares {header['count']} cases, "
                             f"found {len(cases)}")
    return CaseStore(tuple(cases), header.get("scenario", ""), header.get("step"),
                     tuple(header.get("components", ())), header.get("built"))


def persist(store: CaseStore, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps(store))


def load(path) -> CaseStore:
    with open(path, encoding="utf-8") as fh:
        return loads(fh.read())
