"""Component systems, attack models and architecture refinement.

A system is declared in YAML (see ``load_config``) and turned into frozen
dataclasses.  ``refine_architecture`` drops components without run-time
actions and merges replaceable groups, ``apply_attack`` marks the attacked
components and swaps in the attacker's action lists.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from types import MappingProxyType
from typing import Iterable, Mapping

import yaml

NATURE = 0
COO = "coo"
COM = "com"


class SystemConfigError(ValueError):
    """Raised for invalid system definitions.  Carries a location hint."""


@dataclass(frozen=True)
class Component:
    id: int
    name: str
    actions: tuple[str, ...]
    runtime_actions: bool = True
    replace_group: str | None = None

    def __post_init__(self):
        if not self.actions:
            raise SystemConfigError(f"component {self.name!r}: empty action set")
        if len(set(self.actions)) != len(self.actions):
            raise SystemConfigError(f"component {self.name!r}: duplicate action labels")


@dataclass(frozen=True)
class ComponentSystem:
    components: tuple[Component, ...]
    edges: tuple[tuple[int, int], ...] = ()
    quality_attributes: tuple[tuple[str, tuple[int, ...]], ...] = ()
    name: str = ""

    def __post_init__(self):
        seen = set()
        for c in self.components:
            if c.id in seen:
                raise SystemConfigError(f"duplicate component id {c.id}")
            if c.id <= NATURE:
                raise SystemConfigError(f"component id {c.id} must be >= 1")
            seen.add(c.id)
        if len(set(self.edges)) != len(self.edges):
            raise SystemConfigError("duplicate edge")
        for u, w in self.edges:
            for end in (u, w):
                if end not in seen:
                    raise SystemConfigError(f"edge ({u}, {w}) references unknown component {end}")

    @property
    def ids(self) -> tuple[int, ...]:
        return tuple(sorted(c.id for c in self.components))

    def component(self, cid: int) -> Component:
        for c in self.components:
            if c.id == cid:
                return c
        raise KeyError(cid)

    def id_of(self, name: str) -> int:
        for c in self.components:
            if c.name == name:
                return c.id
        raise KeyError(name)

    def ordered(self) -> list[Component]:
        return sorted(self.components, key=lambda c: c.id)


@dataclass(frozen=True)
class AttackModel:
    objectives: tuple[str, ...]
    capability: frozenset[int]
    attack_actions: Mapping[int, tuple[str, ...]]
    attack_policy: str = "replace"
    # attack action label -> label other components observe (e.g. H-L looks like LOW)
    observations: Mapping[int, Mapping[str, str]] = field(default_factory=dict)
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "attack_actions", MappingProxyType(
            {int(k): tuple(v) for k, v in self.attack_actions.items()}))
        object.__setattr__(self, "observations", MappingProxyType(
            {int(k): MappingProxyType(dict(v)) for k, v in self.observations.items()}))
        for cid, acts in self.attack_actions.items():
            if cid not in self.capability:
                raise SystemConfigError(f"attack actions given for component {cid} outside capability")
            if not acts:
                raise SystemConfigError(f"attack on component {cid}: empty action set")


@dataclass(frozen=True)
class AttackedSystem:
    base: ComponentSystem
    abnormal: frozenset[int]
    normal: frozenset[int]
    attack_actions: Mapping[int, tuple[str, ...]]
    observations: Mapping[int, Mapping[str, str]] = field(default_factory=dict)

    def __post_init__(self):
        ids = set(self.base.ids)
        if self.abnormal & self.normal:
            raise SystemConfigError("a component cannot be both normal and abnormal")
        if (self.abnormal | self.normal) != ids:
            raise SystemConfigError("abnormal and normal sets must cover every component")
        if set(self.attack_actions) != set(self.abnormal):
            raise SystemConfigError("attack actions must be given for exactly the abnormal components")

    def actions(self, cid: int, type_: str = COO) -> tuple[str, ...]:
        if type_ == COM and cid in self.abnormal:
            return tuple(self.attack_actions[cid])
        return self.base.component(cid).actions

    def playable(self, cid: int) -> tuple[str, ...]:
        """Every label component ``cid`` can emit under either type."""
        acts = list(self.base.component(cid).actions)
        for a in self.attack_actions.get(cid, ()):
            if a not in acts:
                acts.append(a)
        return tuple(acts)

    def observe(self, cid: int, label: str) -> str:
        return self.observations.get(cid, {}).get(label, label)


# ---------------------------------------------------------------- loading

def _compose(text: str):
    try:
        return yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"line {mark.line + 1}" if mark else "unknown position"
        raise SystemConfigError(f"parse error at {where}: {getattr(exc, 'problem', exc)}") from exc


def _plain(node):
    return yaml.SafeLoader(" ").construct_object(node, deep=True) if node is not None else None


def _line(node) -> int:
    return node.start_mark.line + 1


def _mapping(node, where: str) -> dict:
    if not isinstance(node, yaml.MappingNode):
        raise SystemConfigError(f"{where} (line {_line(node)}): expected a mapping")
    return {k.value: v for k, v in node.value}


def _sequence(node, where: str) -> list:
    if not isinstance(node, yaml.SequenceNode):
        raise SystemConfigError(f"{where} (line {_line(node)}): expected a list")
    return list(node.value)


@dataclass(frozen=True)
class SystemConfig:
    system: ComponentSystem
    attacks: Mapping[str, AttackModel]


def load_config(text: str) -> SystemConfig:
    """Parse a system document with its attack catalog.

    Top-level keys: ``components`` (list of ``{id, name, actions, runtime,
    replace_group}``), ``edges`` (list of ``[from, to]``), ``quality``
    (list of ``{label, contributors}``) and ``attacks`` (list of ``{id,
    description, targets, replacement_actions, observed_as}``).
    """
    root = _compose(text)
    if root is None:
        raise SystemConfigError("parse error: empty document")
    top = _mapping(root, "document")
    if "components" not in top:
        raise SystemConfigError("document: missing 'components'")

    comps = []
    ids = {}
    for k, cnode in enumerate(_sequence(top["components"], "components")):
        where = f"components[{k}] (line {_line(cnode)})"
        c = _mapping(cnode, f"components[{k}]")
        for key in ("id", "name", "actions"):
            if key not in c:
                raise SystemConfigError(f"{where}: missing field '{key}'")
        cid = _plain(c["id"])
        if not isinstance(cid, int):
            raise SystemConfigError(f"{where}: field 'id' must be an integer")
        if cid in ids:
            raise SystemConfigError(f"{where}: duplicate component id {cid}")
        actions = _plain(c["actions"]) or []
        if not actions:
            raise SystemConfigError(f"{where}: empty action set for component {cid}")
        try:
            comp = Component(
                id=cid,
                name=str(_plain(c["name"])),
                actions=tuple(str(a) for a in actions),
                runtime_actions=bool(_plain(c["runtime"])) if "runtime" in c else True,
                replace_group=(str(_plain(c["replace_group"]))
                               if c.get("replace_group") is not None else None),
            )
        except SystemConfigError as exc:
            raise SystemConfigError(f"{where}: {exc}") from None
        ids[cid] = comp
        comps.append(comp)

    edges = []
    if "edges" in top:
        for k, enode in enumerate(_sequence(top["edges"], "edges")):
            pair = _plain(enode)
            where = f"edges[{k}] (line {_line(enode)})"
            if not (isinstance(pair, list) and len(pair) == 2):
                raise SystemConfigError(f"{where}: expected [from, to]")
            for end in pair:
                if end not in ids:
                    raise SystemConfigError(f"{where}: unknown component {end}")
            if tuple(pair) in edges:
                raise SystemConfigError(f"{where}: duplicate edge {pair}")
            edges.append(tuple(pair))

    quality = []
    for k, qnode in enumerate(_sequence(top["quality"], "quality") if "quality" in top else []):
        q = _plain(qnode)
        where = f"quality[{k}] (line {_line(qnode)})"
        contributors = tuple(q.get("contributors", []))
        for cid in contributors:
            if cid not in ids:
                raise SystemConfigError(f"{where}: unknown component {cid}")
        quality.append((str(q.get("label", "")), contributors))

    system = ComponentSystem(tuple(comps), tuple(edges), tuple(quality),
                             name=str(_plain(top["name"])) if "name" in top else "")

    attacks = {}
    for k, anode in enumerate(_sequence(top["attacks"], "attacks") if "attacks" in top else []):
        a = _plain(anode)
        where = f"attacks[{k}] (line {_line(anode)})"
        targets = frozenset(a.get("targets", []))
        for cid in targets:
            if cid not in ids:
                raise SystemConfigError(f"{where}: unknown component {cid}")
        replacement = {int(cid): tuple(str(x) for x in acts)
                       for cid, acts in (a.get("replacement_actions") or {}).items()}
        try:
            model = AttackModel(
                objectives=(str(a.get("description", "")),),
                capability=targets,
                attack_actions=replacement,
                attack_policy=str(a.get("policy", "replace")),
                observations=a.get("observed_as") or {},
                name=str(a.get("id", f"attack{k}")),
            )
        except SystemConfigError as exc:
            raise SystemConfigError(f"{where}: {exc}") from None
        if not targets < set(ids):
            raise SystemConfigError(f"{where}: capability must be a proper subset of the components")
        attacks[model.name] = model
    return SystemConfig(system, MappingProxyType(attacks))


def load_system(text: str) -> ComponentSystem:
    return load_config(text).system


# ---------------------------------------------------------- refinement

def representatives(sys: ComponentSystem) -> dict[int, int | None]:
    """Map every component id to the id that stands for it after refinement.

    Removed components map to None; members of a replace group map to the
    first declared member of that group.
    """
    first = {}
    rep = {}
    for c in sys.components:
        if not c.runtime_actions:
            rep[c.id] = None
            continue
        if c.replace_group is None:
            rep[c.id] = c.id
        else:
            rep[c.id] = first.setdefault(c.replace_group, c.id)
    return rep


def refine_architecture(sys: ComponentSystem, abnormal: Iterable[int] = ()) -> ComponentSystem:
    """Drop non-runtime components (bridging their edges) and collapse replace groups."""
    rep = representatives(sys)
    for cid in abnormal:
        if rep.get(cid) is None:
            raise SystemConfigError(f"abnormal component {cid} is removed by refinement")

    # bridge around removed components one at a time
    edges = set(sys.edges)
    for c in sys.components:
        if rep[c.id] is not None:
            continue
        preds = [u for u, w in edges if w == c.id and u != c.id]
        succs = [w for u, w in edges if u == c.id and w != c.id]
        edges = {(u, w) for u, w in edges if c.id not in (u, w)}
        edges |= {(u, w) for u in preds for w in succs if u != w}

    merged = []
    for u, w in sorted(edges):
        e = (rep[u], rep[w])
        if e[0] != e[1] and e not in merged:
            merged.append(e)

    kept = []
    for c in sys.components:
        if rep[c.id] == c.id:
            kept.append(replace(c, replace_group=None) if c.replace_group else c)
    quality = []
    for label, contributors in sys.quality_attributes:
        mapped = []
        for cid in contributors:
            r = rep[cid]
            if r is not None and r not in mapped:
                mapped.append(r)
        quality.append((label, tuple(mapped)))
    return ComponentSystem(tuple(kept), tuple(merged), tuple(quality), sys.name)


def refine_attacked(att: AttackedSystem) -> AttackedSystem:
    """Refine the base system of an attacked system, moving abnormal marks to representatives."""
    rep = representatives(att.base)
    refined = refine_architecture(att.base, att.abnormal)
    abnormal = frozenset(rep[c] for c in att.abnormal)
    actions = {rep[c]: acts for c, acts in att.attack_actions.items()}
    obs = {rep[c]: o for c, o in att.observations.items()}
    return AttackedSystem(refined, abnormal, frozenset(refined.ids) - abnormal,
                          MappingProxyType(actions), MappingProxyType(obs))


def apply_attack(sys: ComponentSystem, attack: AttackModel, targets: Iterable[int]) -> AttackedSystem:
    targets = frozenset(targets)
    for cid in sorted(targets):
        if cid not in attack.capability:
            raise SystemConfigError(f"attacker cannot reach component {cid}")
    actions = {}
    for cid in sorted(targets):
        # a capability without explicit replacement keeps the component's own actions
        actions[cid] = attack.attack_actions.get(cid, sys.component(cid).actions)
    obs = {cid: attack.observations[cid] for cid in targets if cid in attack.observations}
    return AttackedSystem(sys, targets, frozenset(sys.ids) - targets,
                          MappingProxyType(actions), MappingProxyType(obs))


def no_attack(sys: ComponentSystem) -> AttackedSystem:
    return AttackedSystem(sys, frozenset(), frozenset(sys.ids), MappingProxyType({}))
