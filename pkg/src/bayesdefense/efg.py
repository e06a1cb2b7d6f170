"""Gambit ``.efg`` (outcome-free subset) writer and reader, plus a JSON debug dump."""

from __future__ import annotations

import json
import re
from fractions import Fraction

from .game import (CHANCE, PERSONAL, TERMINAL, BayesGame, Chance, GameError, Leaf, Move, make_game,
                   split_type_label)

PROB_TOL = 1e-9


class EfgError(ValueError):
    pass


def _quote(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def format_number(x: float) -> str:
    """Integers without a decimal point, otherwise the shortest round-tripping form."""
    x = float(x)
    if x == 0:
        return "0"
    if x.is_integer() and abs(x) < 1e15:
        return str(int(x))
    return repr(x)


def format_prob(p: float) -> str:
    return format(float(p), ".12g")


def serialize_efg(game: BayesGame) -> str:
    names = " ".join(_quote(name) for _, name in game.players)
    lines = [f"EFG 2 R {_quote(game.title)} {{ {names} }}"]
    index = {pid: k for k, pid in enumerate(game.player_ids, start=1)}
    chance_set = 0
    outcome = 0
    for node in game.nodes:
        if node.kind == CHANCE:
            chance_set += 1
            body = " ".join(f"{_quote(lab)} {format_prob(p)}" for lab, _, p in node.children)
            lines.append(f'c "" {chance_set} "" {{ {body} }} 0')
        elif node.kind == PERSONAL:
            body = " ".join(_quote(lab) for lab in node.actions)
            lines.append(f'p "" {index[node.player]} {node.infoset} "" {{ {body} }} 0')
        else:
            outcome += 1
            pay = ", ".join(format_number(x) for x in node.payoffs)
            lines.append(f't "" {outcome} "" {{ {pay} }}')
    return "\n".join(lines) + "\n"


_TOKEN = re.compile(r'\s*(?:(")((?:[^"\\]|\\.)*)"|([{}])|(,)|([^\s{},"]+))')


def _tokens(line: str, lineno: int) -> list:
    out = []
    pos = 0
    line = line.rstrip("\n")
    while pos < len(line):
        if line[pos:].strip() == "":
            break
        m = _TOKEN.match(line, pos)
        if not m:
            raise EfgError(f"line {lineno}: cannot read {line[pos:]!r}")
        pos = m.end()
        if m.group(1):
            out.append(("str", re.sub(r"\\(.)", r"\1", m.group(2))))
        elif m.group(3):
            out.append((m.group(3), m.group(3)))
        elif m.group(4):
            continue
        else:
            out.append(("word", m.group(5)))
    return out


def _number(tok, lineno: int) -> float:
    kind, value = tok
    if kind != "word":
        raise EfgError(f"line {lineno}: expected a number, found {value!r}")
    try:
        return float(Fraction(value)) if "/" in value else float(value)
    except ValueError:
        raise EfgError(f"line {lineno}: expected a number, found {value!r}") from None


def _integer(tok, lineno: int) -> int:
    kind, value = tok
    if kind != "word" or not re.fullmatch(r"-?\d+", value):
        raise EfgError(f"line {lineno}: expected an integer, found {value!r}")
    return int(value)


def _braced(toks, start: int, lineno: int):
    if start >= len(toks) or toks[start][0] != "{":
        raise EfgError(f"line {lineno}: expected '{{'")
    items = []
    k = start + 1
    while k < len(toks) and toks[k][0] != "}":
        items.append(toks[k])
        k += 1
    if k == len(toks):
        raise EfgError(f"line {lineno}: unterminated '{{'")
    return items, k + 1


def _expect_str(toks, k, lineno):
    if k >= len(toks) or toks[k][0] != "str":
        raise EfgError(f"line {lineno}: expected a quoted string")
    return toks[k][1]


def parse_efg(text: str) -> BayesGame:
    """Rebuild a game from the subset of the format that ``serialize_efg`` writes.

    Chance branches labelled ``<player>:com`` / ``<player>:coo`` are read as
    that player's type draw.  System utility is not stored in the file; the
    game falls back to summing the payoffs of players whose type is never drawn.
    """
    raw = [(k, line) for k, line in enumerate(text.splitlines(), start=1) if line.strip()]
    if not raw:
        raise EfgError("line 1: expected EFG header")
    lineno, header = raw[0]
    toks = _tokens(header, lineno)
    if len(toks) < 4 or toks[0] != ("word", "EFG") or toks[1] != ("word", "2") or toks[2][1] not in "RD":
        raise EfgError(f"line {lineno}: expected EFG header")
    title = _expect_str(toks, 3, lineno)
    items, _ = _braced(toks, 4, lineno)
    names = []
    for tok in items:
        if tok[0] != "str":
            raise EfgError(f"line {lineno}: player names must be quoted")
        names.append(tok[1])
    players = tuple((k, name) for k, name in enumerate(names, start=1))
    by_name = {name: pid for pid, name in players}

    records = []
    for lineno, line in raw[1:]:
        toks = _tokens(line, lineno)
        if not toks or toks[0][0] != "word" or toks[0][1] not in ("c", "p", "t"):
            raise EfgError(f"line {lineno}: expected a node record starting with c, p or t")
        kind = toks[0][1]
        _expect_str(toks, 1, lineno)
        if kind == "t":
            _integer(toks[2], lineno) if len(toks) > 2 else None
            _expect_str(toks, 3, lineno)
            items, _ = _braced(toks, 4, lineno)
            payoffs = tuple(_number(t, lineno) for t in items)
            if len(payoffs) != len(players):
                raise EfgError(f"line {lineno}: {len(payoffs)} payoffs for {len(players)} players")
            records.append((lineno, "t", payoffs))
        elif kind == "c":
            _integer(toks[2], lineno) if len(toks) > 2 else None
            _expect_str(toks, 3, lineno)
            items, _ = _braced(toks, 4, lineno)
            if len(items) % 2:
                raise EfgError(f"line {lineno}: chance branches need a label and a probability each")
            branches = [(items[k][1], _number(items[k + 1], lineno)) for k in range(0, len(items), 2)]
            total = sum(p for _, p in branches)
            if abs(total - 1.0) > PROB_TOL:
                raise EfgError(f"line {lineno}: probabilities sum to {total:.12g}")
            records.append((lineno, "c", branches))
        else:
            if len(toks) < 4:
                raise EfgError(f"line {lineno}: truncated personal node")
            player = _integer(toks[2], lineno)
            if not 1 <= player <= len(players):
                raise EfgError(f"line {lineno}: player {player} out of range 1..{len(players)}")
            iset = _integer(toks[3], lineno)
            _expect_str(toks, 4, lineno)
            items, _ = _braced(toks, 5, lineno)
            labels = [t[1] for t in items]
            if not labels:
                raise EfgError(f"line {lineno}: personal node without actions")
            records.append((lineno, "p", (player, iset, labels)))
    if not records:
        raise EfgError("file has no nodes")

    # pre-order records -> nested specs
    pos = 0

    def build():
        nonlocal pos
        if pos >= len(records):
            raise EfgError(f"line {records[-1][0]}: tree ends early")
        lineno, kind, data = records[pos]
        pos += 1
        if kind == "t":
            return Leaf(data)
        if kind == "c":
            owner = None
            subs = []
            for label, p in data:
                subs.append((label, p, build()))
                prefix = label.rpartition(":")[0]
                if split_type_label(label) and prefix in by_name:
                    owner = by_name[prefix]
            return Chance(subs, owner)
        player, iset, labels = data
        return Move(player, iset, [(label, build()) for label in labels])

    root = build()
    if pos != len(records):
        raise EfgError(f"line {records[pos][0]}: node outside the tree")
    try:
        game = make_game(title, players, root)
    except GameError as exc:
        raise EfgError(str(exc)) from None
    probs = {}
    for node in game.nodes:
        if node.kind == CHANCE and node.owner is not None and node.owner not in probs:
            probs[node.owner] = node.children[0][2]
    return BayesGame(game.title, game.players, game.nodes, game.infosets, game.infoset_labels, probs)


def structurally_equal(a: BayesGame, b: BayesGame, tol: float = 1e-12) -> bool:
    """Same players, node kinds, labels, probabilities, payoffs and information sets."""
    if a.players != b.players or len(a.nodes) != len(b.nodes):
        return False
    for x, y in zip(a.nodes, b.nodes):
        if (x.kind, x.player, x.infoset) != (y.kind, y.player, y.infoset):
            return False
        if [(lab, c) for lab, c, _ in x.children] != [(lab, c) for lab, c, _ in y.children]:
            return False
        if x.kind == CHANCE and any(abs(p - q) > tol for (_, _, p), (_, _, q)
                                    in zip(x.children, y.children)):
            return False
        if x.kind == TERMINAL and any(abs(p - q) > tol for p, q in zip(x.payoffs, y.payoffs)):
            return False
    return dict(a.infosets) == dict(b.infosets)


def dump_json(game: BayesGame) -> str:
    """Readable dump for debugging; not meant to be parsed back."""
    doc = {
        "title": game.title,
        "players": [{"id": pid, "name": name} for pid, name in game.players],
        "compromise_probs": {str(k): v for k, v in game.compromise_probs.items()},
        "infosets": {str(pid): [list(s) for s in sets] for pid, sets in game.infosets.items()},
        "infoset_labels": {str(pid): list(v) for pid, v in game.infoset_labels.items()},
        "nodes": [
            {"id": n.id, "kind": n.kind, "player": n.player, "infoset": n.infoset or None,
             "children": [{"label": lab, "child": c, "prob": p} for lab, c, p in n.children],
             "payoffs": list(n.payoffs) or None, "utility": n.utility}
            for n in game.nodes
        ],
    }
    return json.dumps(doc, indent=1)
