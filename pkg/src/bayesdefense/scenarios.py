"""Shipped case studies: single tank, the news-site load balancer, SWaT fragments and routing."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from typing import Callable, Mapping, Sequence

import yaml

from .payoff import UtilityFunction, utility_tensor
from .system import (AttackedSystem, AttackModel, Component, ComponentSystem, SystemConfigError, apply_attack,
                     load_config, no_attack)

SCENARIOS = ("tank-a1", "tank-a2", "znn", "routing", "swat-mini")


class ScenarioError(KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


def data_text(filename: str) -> str:
    return resources.files("bayesdefense").joinpath("data", filename).read_text(encoding="utf-8")


@lru_cache(maxsize=None)
def _data(filename: str) -> dict:
    return yaml.safe_load(data_text(filename))


@dataclass(frozen=True)
class Scenario:
    """Everything ``compile_game`` needs, plus an optional attacker-payoff override.

    Iterating yields ``(attacked, utility, probs)`` so the object can be
    unpacked directly.
    """

    name: str
    attacked: AttackedSystem | None
    utility: UtilityFunction | None
    probs: Mapping[int, float]
    attacker_payoff: Callable[[float], float] | None = None
    network: object = None
    params: object = None

    def __iter__(self):
        return iter((self.attacked, self.utility, self.probs))

    def with_probs(self, probs: Mapping) -> "Scenario":
        resolved = dict(self.probs)
        for key, p in probs.items():
            resolved[self.resolve(key)] = float(p)
        return Scenario(self.name, self.attacked, self.utility, resolved, self.attacker_payoff,
                        self.network, self.params)

    def resolve(self, key) -> int | str:
        """Accept a component id, its name, or (for routing) a node name."""
        if self.attacked is None:
            return str(key)
        if isinstance(key, int) or (isinstance(key, str) and key.isdigit()):
            return int(key)
        try:
            return self.attacked.base.id_of(str(key))
        except (KeyError, SystemConfigError):
            raise ScenarioError(f"scenario {self.name!r} has no component {key!r}") from None

    @property
    def abnormal(self) -> tuple:
        if self.attacked is None:
            return tuple(self.network.uncertain)
        return tuple(sorted(self.attacked.abnormal))


# ------------------------------------------------------------------ tank

@dataclass(frozen=True)
class TankTable:
    values: Mapping[str, float]
    level_of: Mapping[str, str]
    outcomes: Mapping[str, Mapping[str, str]]

    @classmethod
    def shipped(cls) -> "TankTable":
        d = _data("tank.yaml")
        return cls(d["outcome_values"], d["true_level"], d["outcomes"])

    def classify(self, level: str, valve: str, pump: str) -> str:
        try:
            return self.outcomes[level][f"{valve}/{pump}"]
        except KeyError:
            raise ScenarioError(f"no tank outcome for level={level} valve={valve} pump={pump}") from None


def tank_outcome_utility(level: str, valve: str, pump: str, table: TankTable | None = None) -> float:
    """Value of the outcome class that a held (valve, pump) setting produces at ``level``."""
    table = table or TankTable.shipped()
    return float(table.values[table.classify(level, valve, pump)])


def tank_utility(system: ComponentSystem, table: TankTable | None = None) -> UtilityFunction:
    """Joint-action utility for (valve, pump, indicator); the indicator label fixes the true level."""
    table = table or TankTable.shipped()
    valve, pump, indicator = (system.id_of(n) for n in ("valve", "pump", "indicator"))
    ids = system.ids
    pos = {c: ids.index(c) for c in (valve, pump, indicator)}

    def evaluate(joint):
        level = table.level_of[joint[pos[indicator]]]
        return tank_outcome_utility(level, joint[pos[valve]], joint[pos[pump]], table)
    return UtilityFunction("tank-outcome", ids, evaluate)


@dataclass(frozen=True)
class TankDynamics:
    """Parameters of the optional level-tracking demo (cost of a simulated response)."""

    weights: tuple[float, float, float, float] = (1.0, 1.0, 1.0, 1.0)
    standard_level: float = 0.8
    tolerance: float = 0.05
    inflow: float = 0.02
    outflow: float = 0.02
    dt: float = 1.0
    horizon: int = 200


def continuous_tank_utility(level0: float, valve_on: Callable[[float], bool],
                            pump_open: Callable[[float], bool], params: TankDynamics = TankDynamics()
                            ) -> float:
    """Negative weighted cost of a simulated level trajectory under feedback rules.

    The cost adds squared deviation from the standard level, time until the
    level stays inside the tolerance band, overshoot and the final error.
    """
    w1, w2, w3, w4 = params.weights
    x = level0
    xs = params.standard_level
    deviation = 0.0
    peak = x
    settled_at = None
    for k in range(params.horizon):
        flow = params.inflow * valve_on(x) - params.outflow * pump_open(x)
        x = min(max(x + flow * params.dt, 0.0), 1.0)
        deviation += (x - xs) ** 2 * params.dt
        peak = max(peak, x)
        inside = abs(x - xs) <= params.tolerance
        if inside and settled_at is None:
            settled_at = (k + 1) * params.dt
        elif not inside:
            settled_at = None
    rise = settled_at if settled_at is not None else params.horizon * params.dt
    return -(w1 * deviation + w2 * rise + w3 * max(peak - xs, 0.0) + w4 * abs(x - xs))


def _tank(attack_id: str) -> Scenario:
    config = load_config(data_text("tank.yaml"))
    attack = config.attacks[attack_id]
    att = apply_attack(config.system, attack, attack.capability)
    p = float(_data("tank.yaml")["probabilities"][attack_id])
    probs = {cid: p for cid in att.abnormal}
    return Scenario(f"tank-{attack_id.lower()}", att, tank_utility(config.system), probs)


def tank_system() -> ComponentSystem:
    return load_config(data_text("tank.yaml")).system


# ------------------------------------------------------------------ znn

MULTIMEDIA, TEXT, DISCARD = "multimedia", "text", "discard"


@dataclass(frozen=True)
class ZnnParams:
    requests: int = 100
    step: int = 5
    revenue_multimedia: float = 1.6
    revenue_text: float = 1.0
    cost_multimedia: float = 1.4
    cost_text: float = 1.0
    threshold: float = 50.0
    penalty_scale: float = 25.0
    servers: tuple[str, ...] = ("Server1", "Server2", "Server3")

    def __post_init__(self):
        if not self.revenue_multimedia > self.revenue_text > 0:
            raise ScenarioError("multimedia revenue must exceed text revenue, both positive")
        if not self.cost_multimedia > self.cost_text > 0:
            raise ScenarioError("multimedia computation must exceed text computation, both positive")
        if self.step <= 0 or self.requests % self.step:
            raise ScenarioError(f"step {self.step} must divide the request count {self.requests}")

    @classmethod
    def shipped(cls, **overrides) -> "ZnnParams":
        d = _data("znn.yaml")
        base = dict(requests=d["requests"], step=d["step"],
                    revenue_multimedia=d["revenue"]["multimedia"], revenue_text=d["revenue"]["text"],
                    cost_multimedia=d["computation"]["multimedia"], cost_text=d["computation"]["text"],
                    threshold=d["threshold"], penalty_scale=d["penalty_scale"],
                    servers=tuple(d["servers"]))
        base.update(overrides)
        return cls(**base)

    def distributions(self) -> list[tuple[int, ...]]:
        units = self.requests // self.step
        n = len(self.servers)
        out = []
        for cut in itertools.product(range(units + 1), repeat=n - 1):
            if sum(cut) <= units:
                out.append(tuple(c * self.step for c in cut) + ((units - sum(cut)) * self.step,))
        return out


def distribution_label(d: Sequence[int]) -> str:
    return "-".join(str(x) for x in d)


def parse_distribution(label: str) -> tuple[int, ...]:
    return tuple(int(x) for x in label.split("-"))


def znn_utility(distribution: Sequence[float], modes: Sequence[str], compromised: Sequence[bool],
                params: ZnnParams = ZnnParams()) -> float:
    """Revenue of served requests minus the quadratic overload penalty of each server.

    A compromised server (or one whose mode is ``discard``) serves nothing.
    """
    if abs(sum(distribution) - params.requests) > 1e-9:
        raise ScenarioError(f"distribution {tuple(distribution)} does not sum to {params.requests}")
    if any(d < 0 for d in distribution):
        raise ScenarioError(f"distribution {tuple(distribution)} has a negative share")
    total = 0.0
    for d, mode, bad in zip(distribution, modes, compromised):
        if bad or mode == DISCARD:
            continue
        if mode == MULTIMEDIA:
            revenue, load = params.revenue_multimedia * d, params.cost_multimedia * d
        elif mode == TEXT:
            revenue, load = params.revenue_text * d, params.cost_text * d
        else:
            raise ScenarioError(f"unknown server mode {mode!r}")
        penalty = 0.0 if load <= params.threshold else (load - params.threshold) ** 2 / params.penalty_scale
        total += revenue - penalty
    return total


def znn_system(params: ZnnParams) -> ComponentSystem:
    lb = Component(1, "LoadBalancer", tuple(distribution_label(d) for d in params.distributions()))
    servers = [Component(k + 2, name, (MULTIMEDIA, TEXT)) for k, name in enumerate(params.servers)]
    edges = tuple((1, s.id) for s in servers)
    return ComponentSystem((lb, *servers), edges, (("response-time", tuple(s.id for s in servers)),
                                                   ("revenue", (1,) + tuple(s.id for s in servers))),
                           name="znn")


def znn_joint_utility(system: ComponentSystem, params: ZnnParams) -> UtilityFunction:
    def evaluate(joint):
        d = parse_distribution(joint[0])
        modes = joint[1:]
        return znn_utility(d, modes, [m == DISCARD for m in modes], params)
    return UtilityFunction("znn", system.ids, evaluate)


def _znn(params: ZnnParams | None = None) -> Scenario:
    params = params or ZnnParams.shipped()
    system = znn_system(params)
    u0 = znn_joint_utility(system, params)
    probs_by_name = _data("znn.yaml")["probabilities"]
    targets = [system.id_of(n) for n in probs_by_name]
    attack = AttackModel(("discard user requests",), frozenset(targets),
                         {t: (DISCARD,) for t in targets}, name="discard")
    att = apply_attack(system, attack, targets)
    u_max = float(utility_tensor(system, u0).max())
    n_att = len(targets)

    def system_loss(value: float) -> float:
        return (u_max - value) / n_att
    probs = {system.id_of(n): float(p) for n, p in probs_by_name.items()}
    return Scenario("znn", att, u0, probs, system_loss, params=params)


def server1_share(game, profile) -> float:
    """Fraction of requests the chosen load-balancer action sends to the first server."""
    label = profile.action(1, 1)
    d = parse_distribution(label)
    return d[0] / sum(d)


# -------------------------------------------------------------- swat

def swat_system() -> ComponentSystem:
    return load_config(data_text("swat.yaml")).system


def swat_attacked() -> AttackedSystem:
    config = load_config(data_text("swat.yaml"))
    attack = next(iter(config.attacks.values()))
    return apply_attack(config.system, attack, attack.capability)


def _swat_mini() -> Scenario:
    config = load_config(data_text("swat-mini.yaml"))
    d = _data("swat-mini.yaml")
    system = config.system
    table = {tuple(k.split("/")): float(v) for k, v in d["utility"].items()}
    u0 = UtilityFunction.from_table("swat-mini", system.ids, table)
    attack = next(iter(config.attacks.values()))
    att = apply_attack(system, attack, attack.capability)
    probs = {system.id_of(n): float(p) for n, p in d["probabilities"].items()}
    return Scenario("swat-mini", att, u0, probs)


# ------------------------------------------------------------ registry

def make_scenario(name: str) -> Scenario:
    if name == "tank-a1":
        return _tank("A1")
    if name == "tank-a2":
        return _tank("A2")
    if name == "znn":
        return _znn()
    if name == "swat-mini":
        return _swat_mini()
    if name == "routing":
        from .routing import load_network
        net = load_network(data_text("routing.yaml"))
        return Scenario("routing", None, None, dict(net.uncertain), network=net)
    raise ScenarioError(f"unknown scenario {name!r}; choose from {', '.join(SCENARIOS)}")


def scenario_game(scenario: Scenario | str, probs: Mapping | None = None):
    """Compile the full Bayesian game of a scenario (routing uses its own tree builder)."""
    if isinstance(scenario, str):
        scenario = make_scenario(scenario)
    if probs:
        scenario = scenario.with_probs(probs)
    if scenario.network is not None:
        from .routing import full_game
        return full_game(scenario.network.with_probs(scenario.probs))
    from .game import compile_game
    return compile_game(scenario.attacked, scenario.utility, scenario.probs,
                        attacker_payoff=scenario.attacker_payoff)


def unattacked(scenario: Scenario) -> AttackedSystem:
    return no_attack(scenario.attacked.base)
