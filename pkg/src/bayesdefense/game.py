"""Extensive-form Bayesian games: tree types, the generic builder and the compile pipeline."""

from __future__ import annotations

import graphlib
import heapq
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping, Sequence, Union

from .payoff import (AttackerPayoff, PayoffTable, ShapleyResult, UtilityFunction,
                     build_payoff_table)
from .system import COM, COO, NATURE, AttackedSystem, refine_attacked

CHANCE, PERSONAL, TERMINAL = "chance", "personal", "terminal"


class GameError(ValueError):
    pass


# ------------------------------------------------------------- tree specs
# Small nested descriptions that ``make_game`` numbers and validates.

@dataclass
class Leaf:
    payoffs: tuple[float, ...]
    utility: float | None = None


@dataclass
class Move:
    player: int
    key: object
    moves: list[tuple[str, "Spec"]]


@dataclass
class Chance:
    branches: list[tuple[str, float, "Spec"]]
    owner: int | None = None


Spec = Union[Leaf, Move, Chance]


def type_label(name: str, type_: str) -> str:
    return f"{name}:{type_}"


def split_type_label(label: str) -> str | None:
    head, _, tail = label.rpartition(":")
    return tail if head and tail in (COM, COO) else None


# ------------------------------------------------------------- game types

@dataclass(frozen=True)
class GameNode:
    id: int
    kind: str
    player: int | None
    children: tuple[tuple[str, int, float | None], ...] = ()
    payoffs: tuple[float, ...] = ()
    utility: float | None = None
    history: tuple[tuple[int, str], ...] = ()
    own_type_context: Mapping[int, str] = field(default_factory=dict)
    infoset: int = 0
    owner: int | None = None

    @property
    def actions(self) -> tuple[str, ...]:
        return tuple(label for label, _, _ in self.children)


@dataclass(frozen=True)
class BayesGame:
    title: str
    players: tuple[tuple[int, str], ...]
    nodes: tuple[GameNode, ...]
    infosets: Mapping[int, tuple[tuple[int, ...], ...]]
    infoset_labels: Mapping[int, tuple[str, ...]]
    compromise_probs: Mapping[int, float] = field(default_factory=dict)
    root: int = 0

    @property
    def player_ids(self) -> tuple[int, ...]:
        return tuple(p for p, _ in self.players)

    def player_name(self, pid: int) -> str:
        return dict(self.players)[pid]

    def player_index(self, pid: int) -> int:
        return self.player_ids.index(pid)

    def leaves(self) -> list[GameNode]:
        return [n for n in self.nodes if n.kind == TERMINAL]

    def infoset_actions(self, pid: int, k: int) -> tuple[str, ...]:
        """Actions available at information set ``k`` (1-based) of player ``pid``."""
        return self.nodes[self.infosets[pid][k - 1][0]].actions


def _infoset_label(node: GameNode) -> str:
    own = node.own_type_context.get(node.player, COO)
    seen = [label for pid, label in node.history if pid != NATURE]
    return f"{own}|{','.join(seen)}"


def make_game(title: str, players: Sequence[tuple[int, str]], root: Spec,
              compromise_probs: Mapping[int, float] | None = None) -> BayesGame:
    """Number a spec tree in pre-order and group information sets by (player, key)."""
    pids = [p for p, _ in players]
    names = dict(players)
    nodes: list[GameNode | None] = []
    groups: dict[int, dict[object, list[int]]] = {p: {} for p in pids}

    stack = [(root, None, (), {}, frozenset())]
    # iterative pre-order; children get ids in action order
    pending: dict[int, list] = {}
    while stack:
        spec, parent, history, types, acted = stack.pop()
        nid = len(nodes)
        nodes.append(None)
        if parent is not None:
            pending[parent[0]][parent[1]] = nid
        if isinstance(spec, Leaf):
            if len(spec.payoffs) != len(pids):
                raise GameError(f"terminal payoff vector has {len(spec.payoffs)} entries, "
                                f"expected {len(pids)}")
            nodes[nid] = GameNode(nid, TERMINAL, None, (), tuple(float(x) for x in spec.payoffs),
                                  None if spec.utility is None else float(spec.utility),
                                  history, MappingProxyType(dict(types)))
            continue
        if isinstance(spec, Chance):
            probs = [p for _, p, _ in spec.branches]
            if any(p < -1e-12 or p > 1 + 1e-12 for p in probs) or abs(sum(probs) - 1) > 1e-12:
                raise GameError(f"chance probabilities {probs} do not form a distribution")
            labels = [lab for lab, _, _ in spec.branches]
            subs = [(lab, p, sub) for lab, p, sub in spec.branches]
            player = NATURE
        else:
            if spec.player not in groups:
                raise GameError(f"unknown player {spec.player}")
            if spec.player in acted:
                raise GameError(f"player {names[spec.player]} acts twice on one path")
            if not spec.moves:
                raise GameError(f"player {names[spec.player]} has no actions")
            labels = [lab for lab, _ in spec.moves]
            subs = [(lab, None, sub) for lab, sub in spec.moves]
            player = spec.player
            groups[player].setdefault(spec.key, []).append(nid)
        if len(set(labels)) != len(labels):
            raise GameError(f"duplicate action labels {labels}")
        pending[nid] = [None] * len(subs)
        nodes[nid] = (spec, player, history, dict(types), subs)
        for k in reversed(range(len(subs))):
            lab, _, sub = subs[k]
            new_types = types
            if isinstance(spec, Chance) and spec.owner is not None:
                t = split_type_label(lab)
                if t is not None:
                    new_types = {**types, spec.owner: t}
            new_acted = acted | {player} if player != NATURE else acted
            stack.append((sub, (nid, k), history + ((player, lab),), new_types, new_acted))

    # second pass: freeze the non-terminal nodes now that child ids are known
    for nid, item in enumerate(nodes):
        if isinstance(item, GameNode):
            continue
        spec, player, history, types, subs = item
        kids = tuple((lab, pending[nid][k], p) for k, (lab, p, _) in enumerate(subs))
        if player == NATURE:
            nodes[nid] = GameNode(nid, CHANCE, NATURE, kids, history=history,
                                  own_type_context=MappingProxyType(types), owner=spec.owner)
        else:
            nodes[nid] = GameNode(nid, PERSONAL, player, kids, history=history,
                                  own_type_context=MappingProxyType(types))

    infosets = {}
    labels = {}
    for p in pids:
        sets = []
        for members in groups[p].values():
            acts = {nodes[m].actions for m in members}
            if len(acts) != 1:
                raise GameError(f"information set of {names[p]} mixes action lists {sorted(acts)}")
            sets.append(tuple(members))
        infosets[p] = tuple(sets)
        for k, members in enumerate(sets, start=1):
            for m in members:
                n = nodes[m]
                nodes[m] = GameNode(n.id, n.kind, n.player, n.children, n.payoffs, n.utility,
                                    n.history, n.own_type_context, k, n.owner)
        labels[p] = tuple(_infoset_label(min((nodes[m] for m in s), key=_coo_first))
                          for s in sets)
    return BayesGame(title, tuple(players), tuple(nodes), MappingProxyType(infosets),
                     MappingProxyType(labels), MappingProxyType(dict(compromise_probs or {})))


def _coo_first(node: GameNode):
    return (sum(t == COM for t in node.own_type_context.values()), node.id)


# ------------------------------------------------------------- pipeline

@dataclass(frozen=True)
class PlayOrder:
    entries: tuple[tuple[str, int], ...]

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)

    def describe(self, att: AttackedSystem | None = None) -> list[str]:
        out = []
        for kind, cid in self.entries:
            if kind == "nature":
                out.append("nature")
            else:
                out.append(att.base.component(cid).name if att else f"Play({cid})")
        return out


def topological_order(ids: Sequence[int], edges: Sequence[tuple[int, int]]) -> list[int]:
    """Topological order with ties broken by ascending id; raises on cycles."""
    sorter = graphlib.TopologicalSorter({i: set() for i in ids})
    for u, w in edges:
        sorter.add(w, u)
    try:
        sorter.prepare()
    except graphlib.CycleError as exc:
        cycle = exc.args[1]
        raise GameError(f"architecture graph has a cycle: {' -> '.join(map(str, cycle))}") from None
    heap: list[int] = []
    order = []
    while sorter.is_active():
        for node in sorter.get_ready():
            heapq.heappush(heap, node)
        node = heapq.heappop(heap)
        order.append(node)
        sorter.done(node)
    return order


def order_of_play(att: AttackedSystem) -> PlayOrder:
    att = refine_attacked(att)
    entries = []
    for cid in topological_order(att.base.ids, att.base.edges):
        if cid in att.abnormal:
            entries.append(("nature", cid))
        entries.append(("play", cid))
    return PlayOrder(tuple(entries))


def _check_probs(att: AttackedSystem, probs: Mapping[int, float]):
    if set(probs) != set(att.abnormal):
        raise GameError(f"compromise probabilities given for {sorted(probs)}, "
                        f"abnormal components are {sorted(att.abnormal)}")
    for cid, p in probs.items():
        if not 0.0 <= p <= 1.0:
            raise GameError(f"compromise probability {p} for component {cid} is outside [0, 1]")


def build_tree(order: PlayOrder, att: AttackedSystem, payoffs: PayoffTable,
               probs: Mapping[int, float]) -> BayesGame:
    """Expand the play order into a game tree.

    Information sets are keyed by the acting component's own type and the
    labels it has observed; type draws for other components stay hidden.
    """
    probs = {int(k): float(v) for k, v in probs.items()}
    _check_probs(att, probs)
    ids = att.base.ids
    entries = list(order)

    def expand(step, actions, types, observed):
        if step == len(entries):
            joint = tuple(actions[c] for c in ids)
            vec = tuple(payoffs.get(c, types.get(c, COO), joint) for c in ids)
            return Leaf(vec, payoffs.utility[joint])
        kind, cid = entries[step]
        name = att.base.component(cid).name
        if kind == "nature":
            p = probs[cid]
            return Chance([
                (type_label(name, COM), p, expand(step + 1, actions, {**types, cid: COM}, observed)),
                (type_label(name, COO), 1.0 - p, expand(step + 1, actions, {**types, cid: COO}, observed)),
            ], owner=cid)
        own = types.get(cid, COO)
        moves = []
        for a in att.actions(cid, own):
            moves.append((a, expand(step + 1, {**actions, cid: a}, types,
                                    observed + (att.observe(cid, a),))))
        return Move(cid, (own, observed), moves)

    if sorted(c for k, c in entries if k == "play") != list(ids):
        raise GameError("play order must list every component exactly once")
    root = expand(0, {}, {}, ())
    players = tuple((c, att.base.component(c).name) for c in ids)
    return make_game(att.base.name, players, root, probs)


def compile_game(att: AttackedSystem, u0: UtilityFunction, probs: Mapping[int, float],
                 attacker_payoff: AttackerPayoff | None = None,
                 shap: ShapleyResult | None = None, table: PayoffTable | None = None) -> BayesGame:
    """Refine, order, allocate payoffs and build the tree in one pure call."""
    att = refine_attacked(att)
    order = order_of_play(att)
    if table is None:
        table = build_payoff_table(att, u0, shap, attacker_payoff)
    return build_tree(order, att, table, probs)


compile = compile_game


def dlr_traverse(game: BayesGame) -> list[int]:
    """Depth-first listing that always descends into the unvisited child with the largest id."""
    order = [game.root]
    visited = {game.root}
    waiting = [game.root]
    while waiting:
        top = game.nodes[waiting[-1]]
        fresh = [cid for _, cid, _ in top.children if cid not in visited]
        if not fresh:
            waiting.pop()
            continue
        nxt = max(fresh)
        visited.add(nxt)
        order.append(nxt)
        waiting.append(nxt)
    return order


def children_of(game: BayesGame) -> dict[int, list[int]]:
    return {n.id: [c for _, c, _ in n.children] for n in game.nodes}
