"""Replay of the monitor / analyse / plan / execute loop over a recorded sensor trace."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Mapping, Sequence

from .knowledge import CaseStore, KnowledgeError, retrieve_index
from .predictor import ClfNetwork, clf


@dataclass(frozen=True)
class LoopEntry:
    tick: int
    p: tuple[float, ...]
    case_id: int
    actions: tuple[str | None, ...]


def run_loop(trace: Sequence[Sequence[float]], nets: Mapping[int, ClfNetwork], store: CaseStore,
             threshold: float = 0.5) -> list[LoopEntry]:
    """One entry per tick: classify, look up the nearest case and enact its joint action.

    ``nets`` is keyed by position in the store's component list.
    """
    if not store.cases:
        raise KnowledgeError("knowledge base is empty")
    width = len(store.cases[0].p_com)
    log = []
    for tick, status in enumerate(trace):
        out = clf(nets, status, threshold, components=range(width))  # monitor + analyse
        k = retrieve_index(store, out.p)                              # plan
        log.append(LoopEntry(tick, out.p, k, store.cases[k].a_star))  # execute
    return log


def format_log(log: Sequence[LoopEntry], components: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["tick"] + [f"p_{c}" for c in components] + ["case_id"] + [f"action_{c}" for c in components])
    for e in log:
        w.writerow([e.tick] + [format(x, ".6g") for x in e.p] + [e.case_id]
                   + ["" if a is None else a for a in e.actions])
    return buf.getvalue()
