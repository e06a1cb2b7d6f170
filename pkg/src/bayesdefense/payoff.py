"""System utility, the coalition feature function, Shapley values and payoff tables."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .system import COM, COO, AttackedSystem, ComponentSystem

TOL = 1e-9


class PayoffError(ValueError):
    pass


@dataclass(frozen=True)
class UtilityFunction:
    """System-level utility over joint actions, one label per component in id order."""

    name: str
    component_ids: tuple[int, ...]
    evaluate: Callable[[tuple[str, ...]], float] = field(compare=False)

    def __call__(self, joint: Sequence[str]) -> float:
        return float(self.evaluate(tuple(joint)))

    @classmethod
    def from_table(cls, name: str, component_ids: Sequence[int], table: Mapping[tuple, float]):
        table = dict(table)

        def lookup(joint):
            try:
                return table[joint]
            except KeyError:
                raise PayoffError(f"utility {name!r} undefined for joint action {joint}") from None
        return cls(name, tuple(component_ids), lookup)


def _check_order(sys: ComponentSystem, u0: UtilityFunction):
    if tuple(u0.component_ids) != sys.ids:
        raise PayoffError(f"utility {u0.name!r} is defined over components {u0.component_ids}, "
                          f"system has {sys.ids}")


def utility_tensor(sys: ComponentSystem, u0: UtilityFunction) -> np.ndarray:
    """Tabulate U0 over the base action sets; axis k is the k-th component by id."""
    _check_order(sys, u0)
    comps = sys.ordered()
    shape = tuple(len(c.actions) for c in comps)
    out = np.empty(shape)
    for idx in np.ndindex(*shape):
        out[idx] = u0(tuple(c.actions[k] for c, k in zip(comps, idx)))
    return out


def _feature_from_tensor(tensor: np.ndarray, axes: Sequence[int]) -> float:
    others = tuple(k for k in range(tensor.ndim) if k not in axes)
    reduced = tensor.mean(axis=others) if others else tensor
    return float(reduced.max())


def feature_value(sys: ComponentSystem, u0: UtilityFunction, subset: Iterable[int],
                  tensor: np.ndarray | None = None) -> float:
    """Best expected U0 when ``subset`` coordinates and everyone else plays uniformly.

    The empty coalition gets the all-uniform expectation.
    """
    ids = sys.ids
    subset = set(subset)
    if not subset <= set(ids):
        raise PayoffError(f"subset {sorted(subset)} is not part of the system")
    if tensor is None:
        tensor = utility_tensor(sys, u0)
    return _feature_from_tensor(tensor, [ids.index(c) for c in subset])


@dataclass(frozen=True)
class ShapleyResult:
    values: Mapping[int, float]
    feature_cache: Mapping[frozenset, float]


def shapley(sys: ComponentSystem, u0: UtilityFunction, cap: int = 10, executor=None) -> ShapleyResult:
    """Exact Shapley values over every component, via the subset-weighted sum.

    ``executor`` (anything with an ordered ``map``) spreads the feature
    evaluations; the merge follows subset enumeration order either way.
    """
    ids = sys.ids
    n = len(ids)
    if n > cap:
        raise PayoffError(f"{n} components exceed the exact Shapley cap of {cap}; "
                          "a sampling estimator would be needed (not implemented)")
    tensor = utility_tensor(sys, u0)
    subsets = [frozenset(s) for r in range(n + 1) for s in itertools.combinations(ids, r)]
    axes = [[ids.index(c) for c in s] for s in subsets]
    mapper = executor.map if executor is not None else map
    values = list(mapper(_feature_from_tensor, itertools.repeat(tensor), axes))
    cache = dict(zip(subsets, values))

    phi = {}
    for i in ids:
        total = 0.0
        for s in subsets:
            if i in s:
                continue
            weight = math.factorial(len(s)) * math.factorial(n - len(s) - 1) / math.factorial(n)
            total += weight * (cache[s | {i}] - cache[s])
        phi[i] = total
    return ShapleyResult(phi, cache)


AttackerPayoff = Callable[[float], float]


def component_payoff(att: AttackedSystem, u0: UtilityFunction, shap: ShapleyResult, i: int,
                     type_: str, a: Sequence[str], attacker_payoff: AttackerPayoff | None = None,
                     u0_value: float | None = None) -> float:
    value = u0(a) if u0_value is None else u0_value
    if i in att.normal:
        denom = sum(shap.values[j] for j in att.normal)
        if abs(denom) < 1e-12:
            raise PayoffError("degenerate Shapley denominator")
        return value * shap.values[i] / denom
    if i not in att.abnormal:
        raise PayoffError(f"unknown component {i}")
    if type_ == COM:
        if attacker_payoff is not None:
            return float(attacker_payoff(value))
        return -value / len(att.abnormal)
    if not att.normal:
        raise PayoffError("no normal components to cooperate with")
    return value / len(att.normal)


@dataclass(frozen=True)
class PayoffTable:
    entries: Mapping[tuple, float]
    utility: Mapping[tuple, float]
    component_ids: tuple[int, ...]

    def get(self, i: int, type_: str, a: Sequence[str]) -> float:
        try:
            return self.entries[(i, type_, tuple(a))]
        except KeyError:
            raise PayoffError(f"missing payoff row for component {i}, type {type_}, "
                              f"joint action {tuple(a)}") from None

    def types(self) -> set[str]:
        return {t for _, t, _ in self.entries}


def joint_domain(att: AttackedSystem) -> list[tuple[str, ...]]:
    return list(itertools.product(*(att.playable(c) for c in att.base.ids)))


def build_payoff_table(att: AttackedSystem, u0: UtilityFunction, shap: ShapleyResult | None = None,
                       attacker_payoff: AttackerPayoff | None = None) -> PayoffTable:
    sys = att.base
    _check_order(sys, u0)
    if shap is None:
        shap = shapley(sys, u0)
    ids = sys.ids
    entries = {}
    utility = {}
    types = (COO, COM) if att.abnormal else (COO,)
    for a in joint_domain(att):
        value = u0(a)
        utility[a] = value
        for pos, i in enumerate(ids):
            for t in types:
                if i in att.abnormal and a[pos] not in att.actions(i, t):
                    continue
                entries[(i, t, a)] = component_payoff(att, u0, shap, i, t, a, attacker_payoff, value)
    return PayoffTable(entries, utility, ids)
