"""Packet forwarding among autonomous systems when some relays may bounce traffic.

Every node that holds the package picks the next hop among neighbours that
have not held it yet.  A malicious uncertain node sends the package straight
back; the node that gets it back redelivers to its closest remaining
neighbour.  System utility is ``base_utility`` minus every hop travelled,
bounces included.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Mapping

import yaml

from .game import BayesGame, Chance, Leaf, Move, make_game, type_label
from .solver import enumerate_pure_equilibria, solve
from .system import COM, COO

BACK = "back"
FULL_GAME_CAP = 8


class RoutingError(ValueError):
    pass


@dataclass(frozen=True)
class RoutingNetwork:
    nodes: tuple[str, ...]
    edges: tuple[tuple[str, str], ...]
    source: str
    destination: str
    uncertain: Mapping[str, float]
    base_utility: float = 10.0

    def __post_init__(self):
        if self.source == self.destination:
            raise RoutingError("source and destination must differ")
        known = set(self.nodes)
        for a, b in self.edges:
            if a not in known or b not in known:
                raise RoutingError(f"edge {a}-{b} names an unknown node")
        for n, p in self.uncertain.items():
            if n not in known or n in (self.source, self.destination):
                raise RoutingError(f"uncertain node {n} must be an intermediate node")
            if not 0.0 <= p <= 1.0:
                raise RoutingError(f"probability {p} for {n} is outside [0, 1]")
        seen = {self.source}
        todo = [self.source]
        while todo:
            for m in self.adj(todo.pop()):
                if m not in seen:
                    seen.add(m)
                    todo.append(m)
        if seen != known:
            raise RoutingError(f"network is not connected: {sorted(known - seen)} unreachable")

    def order(self, n: str) -> int:
        return self.nodes.index(n)

    def node_id(self, n: str) -> int:
        return self.nodes.index(n) + 1

    def adj(self, n: str) -> list[str]:
        out = {b for a, b in self.edges if a == n} | {a for a, b in self.edges if b == n}
        return sorted(out, key=self.order)

    def with_probs(self, probs: Mapping[str, float]) -> "RoutingNetwork":
        merged = dict(self.uncertain)
        for k, v in probs.items():
            if k not in merged:
                raise RoutingError(f"{k} is not an uncertain node")
            merged[k] = float(v)
        return RoutingNetwork(self.nodes, self.edges, self.source, self.destination, merged,
                              self.base_utility)

    @property
    def max_utility(self) -> float:
        return self.base_utility - hop_distance(self, self.source)


def load_network(text: str) -> RoutingNetwork:
    d = yaml.safe_load(text)
    try:
        return RoutingNetwork(tuple(str(n) for n in d["nodes"]),
                              tuple((str(a), str(b)) for a, b in d["edges"]),
                              str(d["source"]), str(d["destination"]),
                              {str(k): float(v) for k, v in (d.get("uncertain") or {}).items()},
                              float(d.get("base_utility", 10)))
    except KeyError as exc:
        raise RoutingError(f"network file lacks key {exc.args[0]!r}") from None


def hop_distance(net: RoutingNetwork, n: str) -> int:
    """Breadth-first hop count from ``n`` to the destination."""
    return _distances(net)[n]


def _distances(net: RoutingNetwork) -> dict[str, int]:
    dist = {net.destination: 0}
    queue = deque([net.destination])
    while queue:
        v = queue.popleft()
        for m in net.adj(v):
            if m not in dist:
                dist[m] = dist[v] + 1
                queue.append(m)
    missing = set(net.nodes) - set(dist)
    if missing:
        raise RoutingError(f"destination unreachable from {sorted(missing, key=net.order)}")
    return dist


# --------------------------------------------------------------- walking

@dataclass(frozen=True)
class Context:
    """What a node knows when it receives the package."""

    sender: str | None
    visited: frozenset
    hops: int
    revealed: frozenset  # (node, type) pairs observed on the way


def _closest(net, dist, options):
    return min(options, key=lambda m: (dist[m], net.order(m)))


def _candidates(net, node, ctx: Context):
    return [m for m in net.adj(node) if m not in ctx.visited]


Policy = Callable[[str, Context], str]


def walk(net: RoutingNetwork, types: Mapping[str, str], policy: Policy,
         start: str | None = None, ctx: Context | None = None, first: str | None = None):
    """Follow the package from ``start`` to the destination.

    ``first`` forces the first forwarding choice.  Returns the path and hop count.
    """
    dist = _distances(net)
    cur = start or net.source
    ctx = ctx or Context(None, frozenset({cur}), 0, frozenset())
    path = [cur]
    hops = ctx.hops
    visited = set(ctx.visited)
    revealed = set(ctx.revealed)
    sender = ctx.sender
    forced = first
    while cur != net.destination:
        here = Context(sender, frozenset(visited), hops, frozenset(revealed))
        options = _candidates(net, cur, here)
        if not options:
            raise RoutingError(f"package stuck at {cur}: every neighbour already held it")
        nxt = forced if forced is not None else policy(cur, here)
        forced = None
        if nxt not in options:
            raise RoutingError(f"{cur} cannot forward to {nxt}")
        while types.get(nxt) == COM:
            # bounced: back to cur, which redelivers to its closest fresh neighbour
            visited.add(nxt)
            revealed.add((nxt, COM))
            hops += 2
            path += [nxt, cur]
            retry = [m for m in net.adj(cur) if m not in visited]
            if not retry:
                raise RoutingError(f"package stuck at {cur} after a bounce from {nxt}")
            nxt = _closest(net, dist, retry)
        hops += 1
        path.append(nxt)
        visited.add(nxt)
        if nxt in net.uncertain:
            revealed.add((nxt, COO))
        sender, cur = cur, nxt
    return path, hops


def shortest_policy(net: RoutingNetwork) -> Policy:
    dist = _distances(net)

    def choose(node, ctx):
        return _closest(net, dist, _candidates(net, node, ctx))
    return choose


def realizations(net: RoutingNetwork, nodes=None):
    """Every type assignment of the uncertain nodes with its probability."""
    nodes = list(net.uncertain) if nodes is None else list(nodes)
    for combo in itertools.product((COM, COO), repeat=len(nodes)):
        prob = 1.0
        for n, t in zip(nodes, combo):
            p = net.uncertain[n]
            prob *= p if t == COM else 1.0 - p
        yield dict(zip(nodes, combo)), prob


def allocate(net: RoutingNetwork, types: Mapping[str, str], utility: float) -> tuple[float, ...]:
    """Normal nodes split the realised utility; malicious ones split the shortfall from the best case."""
    bad = [n for n in net.nodes if types.get(n) == COM]
    good = [n for n in net.nodes if types.get(n) != COM]
    loss = net.max_utility - utility
    return tuple(loss / len(bad) if types.get(n) == COM else utility / len(good) for n in net.nodes)


def greedy_route(net: RoutingNetwork, types: Mapping[str, str]):
    """Shortest-path forwarding with redelivery after bounces; returns (path, utility)."""
    path, hops = walk(net, types, shortest_policy(net))
    return path, net.base_utility - hops


def greedy_expected_utility(net: RoutingNetwork) -> float:
    return sum(p * greedy_route(net, t)[1] for t, p in realizations(net))


# ------------------------------------------------------ dynamic program

@dataclass
class RoutingSolution:
    policy: dict[str, str]
    expected_utility: float
    route: list[str]
    contexts: dict = field(default_factory=dict)
    order: list[str] = field(default_factory=list)
    ties: dict = field(default_factory=dict)


class _Planner:
    """Memoised subgame solver over (node, context)."""

    def __init__(self, net: RoutingNetwork):
        self.net = net
        self.dist = _distances(net)
        self.memo: dict[tuple[str, Context], str] = {}
        self.ties: dict[tuple[str, Context], tuple[str, ...]] = {}
        self.todo = {n for n in net.nodes
                     if n != net.destination and n not in net.uncertain
                     and any(m in net.uncertain for m in net.adj(n))}
        self.greedy = shortest_policy(net)

    def policy(self, node: str, ctx: Context) -> str:
        if node not in self.todo:
            return self.greedy(node, ctx)
        key = (node, ctx)
        if key not in self.memo:
            game = self.subgame(node, ctx)
            sol = solve(game)
            pid = self.net.node_id(node)
            self.memo[key] = sol.profile.action(pid, 1)
            eqs = enumerate_pure_equilibria(game)
            actions = tuple(sorted({e.profile.action(pid, 1) for e in eqs}, key=self.net.order))
            if len(actions) > 1:
                self.ties[key] = actions
        return self.memo[key]

    def hidden(self, ctx: Context) -> list[str]:
        known = {n for n, _ in ctx.revealed}
        return [n for n in self.net.uncertain if n not in known]

    def subgame(self, node: str, ctx: Context) -> BayesGame:
        net = self.net
        options = _candidates(net, node, ctx)
        if not options:
            raise RoutingError(f"{node} has nowhere to forward in this context")
        hidden = [n for n in self.hidden(ctx) if n != node]
        pid = net.node_id(node)
        known_types = {n: t for n, t in ctx.revealed}

        def leaf(types, choice):
            full = {**known_types, **types}
            _, hops = walk(net, full, self.policy, start=node, ctx=ctx, first=choice)
            u = net.base_utility - hops
            return Leaf(allocate(net, full, u), u)

        def draw(k, types):
            if k == len(hidden):
                return Move(pid, "decide", [(m, leaf(types, m)) for m in options])
            n = hidden[k]
            p = net.uncertain[n]
            return Chance([(type_label(n, COM), p, draw(k + 1, {**types, n: COM})),
                           (type_label(n, COO), 1.0 - p, draw(k + 1, {**types, n: COO}))],
                          owner=net.node_id(n))
        players = tuple((net.node_id(n), n) for n in net.nodes)
        return make_game(f"routing subgame at {node}", players, draw(0, {}),
                         {net.node_id(n): net.uncertain[n] for n in hidden})

    def prefix(self, node: str) -> list[str]:
        """Shortest route from the source to ``node``, ties broken by node order."""
        net = self.net
        prev = {net.source: None}
        queue = deque([net.source])
        while queue:
            v = queue.popleft()
            for m in net.adj(v):
                if m not in prev:
                    prev[m] = v
                    queue.append(m)
        path = [node]
        while prev[path[-1]] is not None:
            path.append(prev[path[-1]])
        return path[::-1]

    def default_context(self, node: str) -> Context:
        """Context on the shortest all-benign route from the source."""
        path = self.prefix(node)
        if len(path) == 1:
            return Context(None, frozenset(path), 0, frozenset())
        revealed = frozenset((n, COO) for n in path[:-1] if n in self.net.uncertain)
        return Context(path[-2], frozenset(path), len(path) - 1, revealed)


def build_subgame(net: RoutingNetwork, node: str, ctx: Context | None = None) -> BayesGame:
    """Subgame of ``node`` receiving the package in ``ctx`` (default: along the shortest route)."""
    planner = _Planner(net)
    return planner.subgame(node, ctx or planner.default_context(node))


def dp_solve(net: RoutingNetwork) -> RoutingSolution:
    """Solve outward from the destination, one subgame per node that borders an uncertain node."""
    planner = _Planner(net)
    dist = planner.dist
    solved: set[str] = {net.destination}
    order = []
    policy: dict[str, str] = {}
    pending = set()
    for level in range(1, max(dist.values()) + 1):
        for n in sorted((m for m in net.nodes if dist[m] == level), key=net.order):
            if n in planner.todo:
                pending.add(n)
            else:
                solved.add(n)
                order.append(n)
        progress = True
        while progress:
            progress = False
            for n in sorted(pending, key=net.order):
                closer = [m for m in net.adj(n) if dist[m] < dist[n]]
                if all(m in solved for m in closer):
                    pending.discard(n)
                    solved.add(n)
                    order.append(n)
                    progress = True
        if net.source in solved:
            break
    for n in net.nodes:
        if n == net.destination:
            continue
        ctx = planner.default_context(n)
        if _candidates(net, n, ctx):
            policy[n] = planner.policy(n, ctx)
    expected = sum(p * (net.base_utility - walk(net, t, planner.policy)[1])
                   for t, p in realizations(net))
    route, _ = walk(net, {}, planner.policy)
    return RoutingSolution(policy, expected, route, dict(planner.memo), order, dict(planner.ties))


# --------------------------------------------------------- full game oracle

def full_game(net: RoutingNetwork) -> BayesGame:
    """The whole interaction as one game.

    Types are drawn when the package first reaches an uncertain node; leaf
    payoffs average over the types of nodes the package never reached.
    """
    if len(net.nodes) > FULL_GAME_CAP:
        raise RoutingError(f"full game limited to {FULL_GAME_CAP} nodes, network has {len(net.nodes)}")
    dist = _distances(net)

    def leaf(types, hops):
        u = net.base_utility - hops
        rest = [n for n in net.uncertain if n not in types]
        acc = [0.0] * len(net.nodes)
        for extra, p in realizations(net, rest):
            for k, x in enumerate(allocate(net, {**types, **extra}, u)):
                acc[k] += p * x
        return Leaf(tuple(acc), u)

    def at(node, sender, visited, hops, types, seen):
        """``node`` has just received the package from ``sender``."""
        if node == net.destination:
            return leaf(types, hops)
        if node in net.uncertain and node not in types:
            p = net.uncertain[node]
            return Chance([
                (type_label(node, COM), p, at(node, sender, visited, hops, {**types, node: COM}, seen)),
                (type_label(node, COO), 1.0 - p, at(node, sender, visited, hops, {**types, node: COO}, seen)),
            ], owner=net.node_id(node))
        pid = net.node_id(node)
        own = types.get(node, COO)
        if own == COM:
            back = bounce(sender, node, visited, hops + 1, types, seen + (BACK,))
            return Move(pid, (own, seen), [(BACK, back)])
        options = [m for m in net.adj(node) if m not in visited]
        if not options:
            raise RoutingError(f"package stuck at {node}")
        moves = [(m, at(m, node, visited | {m}, hops + 1, types, seen + (m,))) for m in options]
        return Move(pid, (own, seen), moves)

    def bounce(holder, bouncer, visited, hops, types, seen):
        retry = [m for m in net.adj(holder) if m not in visited]
        if not retry:
            raise RoutingError(f"package stuck at {holder} after a bounce from {bouncer}")
        alt = _closest(net, dist, retry)
        return at(alt, holder, visited | {alt}, hops + 1, types, seen)

    players = tuple((net.node_id(n), n) for n in net.nodes)
    s = net.source
    root = at(s, None, frozenset({s}), 0, {}, ())
    return make_game("routing", players, root,
                     {net.node_id(n): p for n, p in net.uncertain.items()})


def full_game_solve(net: RoutingNetwork) -> RoutingSolution:
    game = full_game(net)
    sol = solve(game)
    planner = _Planner(net)
    policy = {}
    for n in net.nodes:
        if n == net.destination:
            continue
        node = _node_on_route(game, net, planner.prefix(n))
        if node is not None:
            policy[n] = sol.profile.action(node.player, node.infoset)
    route = _route_under(game, sol.profile, net)
    return RoutingSolution(policy, sol.utility, route)


def _node_on_route(game: BayesGame, net: RoutingNetwork, path: list[str]):
    """Personal node of ``path[-1]`` reached by following ``path`` with everyone benign."""
    pid = net.node_id(path[-1])
    v = game.nodes[game.root]
    k = 1
    while v.kind != "terminal":
        if v.kind == "chance":
            label = type_label(net.nodes[v.owner - 1], COO)
        elif v.player == pid:
            return v
        elif k < len(path):
            label = path[k]
            k += 1
        else:
            return None
        v = game.nodes[dict((lab, c) for lab, c, _ in v.children)[label]]
    return None


def _route_under(game: BayesGame, profile, net: RoutingNetwork) -> list[str]:
    v = game.nodes[game.root]
    route = [net.source]
    while v.kind != "terminal":
        if v.kind == "chance":
            label = type_label(net.nodes[v.owner - 1], COO)
        else:
            label = profile.action(v.player, v.infoset)
            route.append(label)
        v = game.nodes[dict((lab, c) for lab, c, _ in v.children)[label]]
    return route


def routing_grid(net: RoutingNetwork, step: float, nodes=None):
    """Row-major grid over the uncertain nodes' probabilities."""
    nodes = list(net.uncertain) if nodes is None else list(nodes)
    k = round(1 / step)
    if abs(k * step - 1) > 1e-9:
        raise RoutingError(f"step {step} does not divide 1")
    values = [round(i / k, 12) for i in range(k + 1)]
    for combo in itertools.product(values, repeat=len(nodes)):
        yield dict(zip(nodes, combo))
