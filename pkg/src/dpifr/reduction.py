"""One-step reduction: exhaustive successor enumeration and trace search.

Successors are enumerated on the canonical form, which subsumes the
structural rule, and every returned successor is canonicalized again.
The parallel rule's freshness side condition is discharged by renaming
promoted restriction binders against every name in the system.
"""

from __future__ import annotations

import heapq
from typing import NamedTuple, Optional

from . import network as networkmod
from .congruence import canonicalize
from .syntax import (
    LOC, NIL, ROOT,
    Located, Name, SpawnMsg, System, SortViolation,
    fresh_name, subst_proc, system_idents, system_key,
)

RULE_TAGS = (
    "SPAWN-L", "BANG", "NEW", "FORK", "IF-EQ", "IF-NEQ", "NODE", "FORGET",
    "MSG", "LINK", "UNLINK", "CREATE-S", "CREATE-F", "KILL",
    "SPAWN-C-S", "SPAWN-C-F", "SPAWN-S", "SPAWN-F", "GO-S", "GO-F",
)


class Step(NamedTuple):
    rule: str
    path: tuple
    successor: System


class HintMismatch(Exception):
    pass


def go_view(net, n, m):
    """The belief the go primitive acts on: own incarnation for self,
    else the recorded view, else the actual incarnation, else none."""
    if n == m:
        return networkmod.a_of(net, n)
    b = networkmod.belief(net, n, m)
    if b != 0:
        return b
    if b == 0:
        return networkmod.a_of(net, m)
    return 0


def _value_eq(a, b):
    return a == b


def successors(s: System, go_enabled: bool = False):
    """All one-step reducts as Steps with canonical successor systems.

    Deduplicated by canonical form; a Step keeps the rule tag and redex
    position of the first derivation found in canonical enumeration order.
    """
    c = canonicalize(s)
    net = c.net
    items = c.cfg
    steps = []

    def emit(rule, path, restricted, new_net, new_items):
        succ = canonicalize(System(restricted, new_net, tuple(new_items)))
        steps.append(Step(rule, path, succ))

    def replaced(i, *new):
        return items[:i] + tuple(new) + items[i + 1:]

    for i, item in enumerate(items):
        if item[0] == "msg":
            _, m, kstar, p, n, lam = item
            actual = networkmod.a_of(net, m)
            linked = networkmod.has_link(net, n, m)
            if (actual > 0 and (kstar == actual or kstar == 0) and linked
                    and networkmod.belief(net, m, n) <= lam):
                net2 = networkmod.apply(net, networkmod.SetBelief(m, n, lam))
                emit("SPAWN-S", (i,), c.restricted, net2,
                     replaced(i, Located(p, m, actual)))
            if (actual != kstar and kstar != 0) or not linked \
                    or lam < networkmod.belief(net, m, n):
                net2 = networkmod.apply(net, networkmod.DropBelief(n, m))
                emit("SPAWN-F", (i,), c.restricted, net2, replaced(i))
            continue

        _, p, n, lam = item
        if not networkmod.is_alive(net, n, lam):
            continue
        tag = p[0]

        if tag == "spawn":
            m, body = p[1], p[2]
            if m == n:
                emit("SPAWN-L", (i,), c.restricted, net,
                     replaced(i, Located(body, n, lam)))
            elif networkmod.has_link(net, n, m):
                kappa = networkmod.belief(net, n, m)
                emit("SPAWN-C-S", (i,), c.restricted, net,
                     replaced(i, SpawnMsg(m, kappa, body, n, lam)))
            else:
                net2 = networkmod.apply(net, networkmod.DropBelief(n, m))
                emit("SPAWN-C-F", (i,), c.restricted, net2, replaced(i))
        elif tag == "go" and go_enabled:
            m, body = p[1], p[2]
            actual = networkmod.a_of(net, m)
            view = go_view(net, n, m)
            linked = networkmod.has_link(net, n, m)
            if actual > 0 and linked and view == actual:
                net2 = networkmod.apply(net, networkmod.SetBelief(m, n, lam))
                emit("GO-S", (i,), c.restricted, net2,
                     replaced(i, Located(body, m, actual)))
            if actual <= 0 or view != actual or not linked:
                net2 = networkmod.apply(net, networkmod.DropBelief(n, m))
                emit("GO-F", (i,), c.restricted, net2, replaced(i))
        elif tag == "bang":
            ch, binders, cont = p[1], p[2], p[3]
            if len(p) == 5 and p[4] <= 0:
                continue
            copy = p[:4] if len(p) == 4 else ("bang", ch, binders, cont, p[4] - 1)
            unfolded = ("in", ch, binders, ("par", cont, copy))
            emit("BANG", (i,), c.restricted, net,
                 replaced(i, Located(unfolded, n, lam)))
        elif tag == "res":
            w, body = p[1], p[2]
            fresh = fresh_name(w.kind, w.ident, system_idents(c))
            emit("NEW", (i,), c.restricted + (fresh,), net,
                 replaced(i, Located(subst_proc(body, {w: fresh}), n, lam)))
        elif tag == "par":
            emit("FORK", (i,), c.restricted, net,
                 replaced(i, Located(p[1], n, lam), Located(p[2], n, lam)))
        elif tag == "if":
            rule = "IF-EQ" if _value_eq(p[1], p[2]) else "IF-NEQ"
            branch = p[3] if rule == "IF-EQ" else p[4]
            emit(rule, (i,), c.restricted, net, replaced(i, Located(branch, n, lam)))
        elif tag == "node":
            body = subst_proc(p[3], {p[1]: n, p[2]: lam})
            emit("NODE", (i,), c.restricted, net, replaced(i, Located(body, n, lam)))
        elif tag == "forget":
            net2 = networkmod.apply(net, networkmod.DropBelief(n, p[1]))
            emit("FORGET", (i,), c.restricted, net2,
                 replaced(i, Located(p[2], n, lam)))
        elif tag == "kill":
            if n != ROOT:
                net2 = networkmod.apply(net, networkmod.Kill(n, lam))
                emit("KILL", (i,), c.restricted, net2, replaced(i))
        elif tag == "create":
            m, body = p[1], p[2]
            if networkmod.is_dead(net, m):
                inc = abs(networkmod.a_of(net, m)) + 1
                net2 = networkmod.apply(net, networkmod.Activate(m, inc))
                emit("CREATE-S", (i,), c.restricted, net2,
                     replaced(i, Located(body, m, inc)))
            else:
                emit("CREATE-F", (i,), c.restricted, net, replaced(i))
        elif tag == "link":
            if not networkmod.has_link(net, n, p[1]):
                net2 = networkmod.apply(net, networkmod.AddLink(n, p[1]))
                emit("LINK", (i,), c.restricted, net2,
                     replaced(i, Located(p[2], n, lam)))
        elif tag == "unlink":
            if networkmod.has_link(net, n, p[1]):
                net2 = networkmod.apply(net, networkmod.DelLink(n, p[1]))
                emit("UNLINK", (i,), c.restricted, net2,
                     replaced(i, Located(p[2], n, lam)))

    # local synchronous exchange between co-located output and input
    for i, out_item in enumerate(items):
        if out_item[0] != "proc" or out_item[1][0] != "out":
            continue
        _, op, n, lam = out_item
        if not networkmod.is_alive(net, n, lam):
            continue
        _, ch, vals, ocont = op
        for j, in_item in enumerate(items):
            if i == j or in_item[0] != "proc":
                continue
            _, ip, n2, lam2 = in_item
            if (n2, lam2) != (n, lam) or ip[0] != "in":
                continue
            if ip[1] != ch or len(ip[2]) != len(vals):
                continue
            try:
                body = subst_proc(ip[3], dict(zip(ip[2], vals)))
            except SortViolation:
                continue
            new_items = list(items)
            new_items[i] = Located(ocont, n, lam)
            new_items[j] = Located(body, n, lam)
            emit("MSG", (i, j), c.restricted, net, new_items)

    seen = {}
    out = []
    for st in steps:
        if st.successor not in seen:
            seen[st.successor] = True
            out.append(st)
    return out


class Trace(NamedTuple):
    start: System
    steps: tuple          # Steps actually taken (hinted mode)
    final: System
    states: Optional[tuple]   # reachable canonical states (exhaustive mode)
    truncated: bool


def parse_hints(text: str):
    """Hints: one rule tag per line, optionally '@ k' to pick the k-th
    matching redex (0-based) in canonical enumeration order."""
    hints = []
    for line in text.splitlines():
        line = line.split("//")[0].strip()
        if not line:
            continue
        if "@" in line:
            tag, _, idx = line.partition("@")
            hints.append((tag.strip(), int(idx)))
        else:
            hints.append((line, 0))
    for tag, _ in hints:
        if tag not in RULE_TAGS:
            raise HintMismatch(f"unknown rule tag {tag!r}")
    return hints


def run_trace(s: System, hints=None, max_steps: int = 1000,
              go_enabled: bool = False) -> Trace:
    """Deterministic replay of a hint script, or bounded BFS when
    ``hints`` is None."""
    start = canonicalize(s)
    if hints is not None:
        cur = start
        taken = []
        for k, (tag, idx) in enumerate(hints):
            matching = [st for st in successors(cur, go_enabled) if st.rule == tag]
            if idx >= len(matching):
                raise HintMismatch(
                    f"step {k}: no redex #{idx} for {tag} "
                    f"({len(matching)} available)")
            step = matching[idx]
            taken.append(step)
            cur = step.successor
        return Trace(start, tuple(taken), cur, None, False)

    seen = {start}
    frontier = [start]
    depth = 0
    truncated = False
    while frontier and depth < max_steps:
        depth += 1
        nxt = []
        for state in frontier:
            for st in successors(state, go_enabled):
                if st.successor not in seen:
                    seen.add(st.successor)
                    nxt.append(st.successor)
        frontier = nxt
    if frontier:
        truncated = True
    return Trace(start, (), start, tuple(sorted(seen, key=system_key)), truncated)


def format_step(step: Step, printer) -> str:
    path = ",".join(str(x) for x in step.path)
    return f"{step.rule} @ {path} :: {printer(step.successor)}"


# ---------------------------------------------------------------------------
# guided search towards a target network (bridge soundness checks)


def _net_distance(net, target):
    a1, a2 = networkmod.alive_map(net), networkmod.alive_map(target)
    d = 0
    for n in set(a1) | set(a2):
        x, y = a1.get(n, 0), a2.get(n, 0)
        while x != y:
            d += 1
            x = -x if x > 0 else abs(x) + 1
            if d > 50:
                return d
    d += len(set(net.links).symmetric_difference(target.links))
    v1, v2 = networkmod.views_map(net), networkmod.views_map(target)
    for n in set(v1) | set(v2):
        r1, r2 = v1.get(n, {}), v2.get(n, {})
        for m in set(r1) | set(r2):
            if r1.get(m, 0) != r2.get(m, 0):
                d += 1
    return d


def reach_system(s: System, goal: System, max_states: int = 20000,
                 go_enabled: bool = False) -> Optional[tuple]:
    """Best-first search for a reduction path from s to goal (canonical
    equality).  Returns the rule-tag path, or None when the bounded search
    exhausts.  The priority favours states whose network is close to the
    goal's and whose configuration has little left to consume."""
    start = canonicalize(s)
    target = canonicalize(goal)
    if start == target:
        return ()
    seen = {start}
    tick = 0
    heap = [(_net_distance(start.net, target.net) + len(start.cfg), 0, start, ())]
    while heap and len(seen) < max_states:
        _, _, cur, path = heapq.heappop(heap)
        for st in successors(cur, go_enabled):
            nxt = st.successor
            if nxt in seen:
                continue
            if nxt == target:
                return path + (st.rule,)
            seen.add(nxt)
            tick += 1
            score = _net_distance(nxt.net, target.net) + len(nxt.cfg)
            heapq.heappush(heap, (score, tick, nxt, path + (st.rule,)))
    return None
