"""Pure Bayesian-Nash equilibria by exhaustive profile search, plus a subgame-perfect selector.

A pure profile fixes one action per information set.  Because a component
acts at most once on any path, its ex-ante payoff is a sum of independent
per-information-set terms, so the best deviation for player i is obtained by
maximising each of its information sets separately.  That makes the
equilibrium test a single bottom-up pass per profile, vectorised over a
chunk of profiles at a time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .game import CHANCE, PERSONAL, TERMINAL, BayesGame

TOL = 1e-9
DEFAULT_CAP = 10**7


class SolverError(RuntimeError):
    pass


class SolverCapError(SolverError):
    pass


@dataclass(frozen=True)
class PureProfile:
    """Chosen action label per information set, for every player."""

    actions: Mapping[int, tuple[str, ...]]

    def action(self, pid: int, infoset: int) -> str:
        return self.actions[pid][infoset - 1]

    def encoding(self, game: BayesGame) -> tuple[int, ...]:
        out = []
        for pid in sorted(self.actions):
            for k, label in enumerate(self.actions[pid], start=1):
                out.append(game.infoset_actions(pid, k).index(label))
        return tuple(out)


@dataclass(frozen=True)
class Equilibrium:
    profile: PureProfile
    payoffs: tuple[float, ...]
    utility: float


@dataclass(frozen=True)
class EquilibriumSet:
    equilibria: tuple[Equilibrium, ...]
    game: BayesGame

    def __len__(self):
        return len(self.equilibria)

    def __iter__(self):
        return iter(self.equilibria)

    def profiles(self) -> list[PureProfile]:
        return [e.profile for e in self.equilibria]


def leaf_utility(game: BayesGame, node) -> float:
    """System utility at a leaf; falls back to the payoff sum of never-drawn players."""
    if node.utility is not None:
        return node.utility
    drawn = {n.owner for n in game.nodes if n.kind == CHANCE and n.owner is not None}
    return sum(x for pid, x in zip(game.player_ids, node.payoffs) if pid not in drawn)


def expected_payoffs(game: BayesGame, profile: PureProfile) -> tuple[tuple[float, ...], float]:
    """Walk the tree under ``profile``; returns (per-player expectations, expected utility)."""
    n = len(game.players)
    value: dict[int, np.ndarray] = {}
    for node in reversed(game.nodes):
        if node.kind == TERMINAL:
            value[node.id] = np.array(node.payoffs + (leaf_utility(game, node),))
        elif node.kind == CHANCE:
            value[node.id] = sum(p * value[c] for _, c, p in node.children)
        else:
            chosen = profile.action(node.player, node.infoset)
            for label, c, _ in node.children:
                if label == chosen:
                    value[node.id] = value[c]
                    break
            else:
                raise SolverError(f"action {chosen!r} unavailable at node {node.id}")
    root = value[game.root]
    return tuple(float(x) for x in root[:n]), float(root[n])


# ------------------------------------------------------ compiled form

class _Compiled:
    """Array view of a (possibly reduced) tree for vectorised profile evaluation.

    ``order`` lists local node indices in pre-order.  Leaves carry a vector of
    length n_players + 1 (the last entry is system utility).
    """

    def __init__(self, n_players, kinds, children, probs, slots, leaf_values, slot_actions,
                 slot_players, slot_members):
        self.n = n_players
        self.kinds = kinds
        self.children = children
        self.probs = probs
        self.slots = slots
        self.leaf_values = leaf_values
        self.slot_actions = slot_actions
        self.slot_players = slot_players
        self.slot_members = slot_members
        self.radices = [len(a) for a in slot_actions]

    @property
    def total(self) -> int:
        return math.prod(self.radices)

    def decode(self, start: int, stop: int) -> np.ndarray:
        idx = np.arange(start, stop, dtype=np.int64)
        if not self.radices:
            return np.zeros((len(idx), 0), dtype=np.int64)
        return np.stack(np.unravel_index(idx, self.radices), axis=1)

    def evaluate(self, acts: np.ndarray):
        """Return (values (B, n+1), gains (B, n)) for the profiles in ``acts``."""
        B = acts.shape[0]
        m = len(self.kinds)
        reach = [None] * m
        reach[0] = np.ones(B)
        for v in range(m):
            kind = self.kinds[v]
            if kind == TERMINAL:
                continue
            if kind == CHANCE:
                for c, p in zip(self.children[v], self.probs[v]):
                    reach[c] = reach[v] * p
            else:
                col = acts[:, self.slots[v]]
                for j, c in enumerate(self.children[v]):
                    reach[c] = reach[v] * (col == j)
        val = [None] * m
        for v in reversed(range(m)):
            kind = self.kinds[v]
            if kind == TERMINAL:
                val[v] = np.broadcast_to(self.leaf_values[v], (B, self.n + 1))
            elif kind == CHANCE:
                acc = np.zeros((B, self.n + 1))
                for c, p in zip(self.children[v], self.probs[v]):
                    if p:
                        acc = acc + p * val[c]
                val[v] = acc
            else:
                stacked = np.stack([val[c] for c in self.children[v]])
                col = acts[:, self.slots[v]]
                val[v] = stacked[col, np.arange(B)]
        gains = np.zeros((B, self.n))
        for s, members in enumerate(self.slot_members):
            pi = self.slot_players[s]
            q = np.zeros((B, self.radices[s]))
            for v in members:
                for j, c in enumerate(self.children[v]):
                    q[:, j] += reach[v] * val[c][:, pi]
            chosen = q[np.arange(B), acts[:, s]]
            gains[:, pi] += q.max(axis=1) - chosen
        return val[0], gains


def _compile_region(game: BayesGame, root: int, resolved: Mapping[int, np.ndarray] | None = None):
    """Compile the subtree at ``root``; nodes in ``resolved`` become leaves with fixed values."""
    resolved = resolved or {}
    n = len(game.players)
    pindex = {pid: k for k, pid in enumerate(game.player_ids)}
    local: dict[int, int] = {}
    order = []
    stack = [root]
    while stack:
        v = stack.pop()
        local[v] = len(order)
        order.append(v)
        node = game.nodes[v]
        if node.kind != TERMINAL and (v == root or v not in resolved):
            stack.extend(c for _, c, _ in reversed(node.children))
    kinds, children, probs, slots, leaf_values = [], [], [], [], []
    slot_index: dict[tuple[int, int], int] = {}
    for v in order:
        node = game.nodes[v]
        if node.kind == TERMINAL or (v != root and v in resolved):
            kinds.append(TERMINAL)
            children.append(())
            probs.append(())
            slots.append(-1)
            if v in resolved:
                leaf_values.append(np.asarray(resolved[v], dtype=float))
            else:
                leaf_values.append(np.array(node.payoffs + (leaf_utility(game, node),)))
            continue
        kinds.append(node.kind)
        children.append(tuple(local[c] for _, c, _ in node.children))
        probs.append(tuple(p for _, _, p in node.children) if node.kind == CHANCE else ())
        leaf_values.append(None)
        if node.kind == PERSONAL:
            slot_index.setdefault((node.player, node.infoset), -1)
            slots.append((node.player, node.infoset))
        else:
            slots.append(-1)
    keys = sorted(slot_index)
    slot_index = {k: s for s, k in enumerate(keys)}
    slots = [slot_index[s] if s != -1 else -1 for s in slots]
    slot_actions = [game.infoset_actions(pid, k) for pid, k in keys]
    slot_players = [pindex[pid] for pid, _ in keys]
    members = [[] for _ in keys]
    for v, s in enumerate(slots):
        if s != -1:
            members[s].append(v)
    return _Compiled(n, kinds, children, probs, slots, leaf_values, slot_actions,
                     slot_players, members), keys


def _scan(args):
    comp, start, stop = args
    acts = comp.decode(start, stop)
    values, gains = comp.evaluate(acts)
    ok = np.all(gains <= TOL, axis=1)
    return acts[ok], np.asarray(values)[ok]


def _chunk_size(comp: _Compiled) -> int:
    per = max(1, len(comp.kinds) * (comp.n + 2))
    return int(max(1, min(1 << 16, 4_000_000 // per)))


def _enumerate_compiled(comp: _Compiled, cap: int, executor=None):
    total = comp.total
    if total > cap:
        raise SolverCapError(
            f"{total} pure profiles exceed the enumeration cap of {cap}; use the routing "
            "dynamic program, the subgame-perfect solver, or coarser action sets")
    size = _chunk_size(comp)
    ranges = [(comp, s, min(total, s + size)) for s in range(0, total, size)]
    mapper = executor.map if executor is not None else map
    acts, values = [], []
    for a, v in mapper(_scan, ranges):
        acts.append(a)
        values.append(v)
    if not acts:
        return np.zeros((0, len(comp.radices)), dtype=np.int64), np.zeros((0, comp.n + 1))
    return np.concatenate(acts), np.concatenate(values)


def _profile_from(game: BayesGame, keys, row) -> dict[tuple[int, int], str]:
    return {key: game.infoset_actions(*key)[int(j)] for key, j in zip(keys, row)}


def _make_profile(game: BayesGame, choice: Mapping[tuple[int, int], str]) -> PureProfile:
    actions = {}
    for pid in game.player_ids:
        actions[pid] = tuple(choice[(pid, k)] for k in range(1, len(game.infosets[pid]) + 1))
    return PureProfile(actions)


def strategy_count(game: BayesGame) -> int:
    return math.prod(len(game.infoset_actions(pid, k))
                     for pid in game.player_ids for k in range(1, len(game.infosets[pid]) + 1))


def enumerate_pure_equilibria(game: BayesGame, cap: int = DEFAULT_CAP, executor=None) -> EquilibriumSet:
    """Every pure profile from which no player gains more than ``TOL`` by deviating.

    The profile space is split into index ranges; ``executor.map`` may
    evaluate them concurrently and results are merged in range order.
    """
    comp, keys = _compile_region(game, game.root)
    acts, values = _enumerate_compiled(comp, cap, executor)
    n = len(game.players)
    out = []
    for row, val in zip(acts, values):
        profile = _make_profile(game, _profile_from(game, keys, row))
        out.append(Equilibrium(profile, tuple(float(x) for x in val[:n]), float(val[n])))
    return EquilibriumSet(tuple(out), game)


def select_equilibrium(eqs: EquilibriumSet | Sequence[Equilibrium], game: BayesGame | None = None
                       ) -> Equilibrium:
    """Highest expected system utility; ties go to the smallest action-index encoding."""
    items = list(eqs)
    if game is None and isinstance(eqs, EquilibriumSet):
        game = eqs.game
    if not items:
        raise SolverError("no pure equilibrium")
    best = max(e.utility for e in items)
    top = [e for e in items if e.utility >= best - TOL]
    if len(top) == 1:
        return top[0]
    if game is None:
        raise SolverError("breaking a utility tie needs the game to order action indices")
    return min(top, key=lambda e: e.profile.encoding(game))


# ---------------------------------------------------- subgame-perfect path

def subgame_roots(game: BayesGame) -> list[bool]:
    """Flag nodes whose subtree no information set crosses."""
    parent = [-1] * len(game.nodes)
    depth = [0] * len(game.nodes)
    for node in game.nodes:
        for _, c, _ in node.children:
            parent[c] = node.id
            depth[c] = depth[node.id] + 1
    ok = [True] * len(game.nodes)
    for pid in game.player_ids:
        for members in game.infosets[pid]:
            if len(members) < 2:
                continue
            # lowest common ancestor of the set
            lca = members[0]
            for m in members[1:]:
                a, b = lca, m
                while depth[a] > depth[b]:
                    a = parent[a]
                while depth[b] > depth[a]:
                    b = parent[b]
                while a != b:
                    a, b = parent[a], parent[b]
                lca = a
            for m in members:
                v = m
                while v != lca:
                    ok[v] = False
                    v = parent[v]
    return ok


@dataclass(frozen=True)
class Solution:
    profile: PureProfile
    payoffs: tuple[float, ...]
    utility: float
    subgames: int


def _local_equilibria(game, comp, keys):
    acts, values = _enumerate_compiled(comp, DEFAULT_CAP)
    if len(acts) == 0:
        raise SolverError("no pure equilibrium")
    best = values[:, -1].max()
    # ranges are scanned in encoding order, so the first top-utility row wins ties
    k = int(np.flatnonzero(values[:, -1] >= best - TOL)[0])
    return _profile_from(game, keys, acts[k]), values[k]


def solve(game: BayesGame) -> Solution:
    """Subgame-perfect pure equilibrium built bottom-up.

    Every proper subgame is solved by exhaustive enumeration with the usual
    selection rule, then collapsed to its value.  This fixes behaviour at
    information sets that a single equilibrium of the whole game leaves
    unreached.
    """
    roots = subgame_roots(game)
    n = len(game.players)
    pindex = {pid: k for k, pid in enumerate(game.player_ids)}
    resolved: dict[int, np.ndarray] = {}
    choice: dict[tuple[int, int], str] = {}
    count = 0
    for node in reversed(game.nodes):
        v = node.id
        if not roots[v]:
            continue
        if node.kind == TERMINAL:
            resolved[v] = np.array(node.payoffs + (leaf_utility(game, node),))
            continue
        kids = [c for _, c, _ in node.children]
        if all(c in resolved for c in kids):
            if node.kind == CHANCE:
                resolved[v] = sum(p * resolved[c] for _, c, p in node.children)
                continue
            # one decision with known continuations: argmax with the selection tie rules
            pi = pindex[node.player]
            vals = [resolved[c] for c in kids]
            top = max(x[pi] for x in vals)
            cands = [j for j, x in enumerate(vals) if x[pi] >= top - TOL]
            best_u = max(vals[j][n] for j in cands)
            j = next(j for j in cands if vals[j][n] >= best_u - TOL)
            choice[(node.player, node.infoset)] = node.children[j][0]
            resolved[v] = vals[j]
            count += 1
            continue
        comp, keys = _compile_region(game, v, resolved)
        local, value = _local_equilibria(game, comp, keys)
        choice.update(local)
        resolved[v] = value
        count += 1
    profile = _make_profile(game, choice)
    payoffs, utility = expected_payoffs(game, profile)
    return Solution(profile, payoffs, utility, count)


# ---------------------------------------------------------- audit

def audit(game: BayesGame, profile: PureProfile) -> bool:
    """Re-check a profile by trying every single-information-set deviation with plain tree walks."""
    base, _ = expected_payoffs(game, profile)
    for k, pid in enumerate(game.player_ids):
        for s in range(1, len(game.infosets[pid]) + 1):
            for label in game.infoset_actions(pid, s):
                if label == profile.action(pid, s):
                    continue
                acts = dict(profile.actions)
                row = list(acts[pid])
                row[s - 1] = label
                acts[pid] = tuple(row)
                dev, _ = expected_payoffs(game, PureProfile(acts))
                if dev[k] > base[k] + TOL:
                    return False
    return True


def policy_table(game: BayesGame, profile: PureProfile, pid: int) -> list[tuple[str, str]]:
    """(information-set label, action) pairs for one player, in information-set order."""
    return list(zip(game.infoset_labels[pid], profile.actions[pid]))


def policy_string(game: BayesGame, profile: PureProfile, pid: int) -> str:
    """Readable policy such as ``Low-ON; High-OFF``.

    Each information set is named by what the player observed, title-cased;
    a type prefix is added when the player's type is ever drawn.
    """
    drawn = any(n.kind == CHANCE and n.owner == pid for n in game.nodes)
    parts = []
    for label, action in policy_table(game, profile, pid):
        own, _, seen = label.partition("|")
        seen = ",".join(s.title() for s in seen.split(",")) if seen else "*"
        parts.append(f"{own}:{seen}-{action}" if drawn else f"{seen}-{action}")
    return "; ".join(parts)
