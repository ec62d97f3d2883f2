"""Labelled transition semantics and bounded state-graph construction.

Silent moves mirror the reduction rules; visible moves add early-style
input/output at alive locations and the net actions a surrounding context
could perform (kill, create, link toggles and view probes at free
locations).  Input values and net locations are finitized by a Universe
computed from the systems under analysis plus a reserved fresh pool.

Restriction is handled at the system level: a label mentioning a bound
name is blocked unless it is an output that extrudes the name, in which
case the name leaves the restriction list and is renamed to a reserved
extrusion identifier so that labels compare structurally across systems.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product
from typing import Optional

from . import network as networkmod
from .congruence import canonicalize
from .reduction import go_view
from .syntax import (
    CHAN, IVAR, LOC, NIL, ROOT,
    Located, Name, SpawnMsg, System, SortViolation,
    free_names, fresh_name, subst_config, subst_proc, system_idents,
)

TAU = ("tau",)


def label_fn(label):
    tag = label[0]
    if tag == "tau":
        return frozenset()
    if tag == "out":
        _, extruded, ch, vals, loc, _inc = label
        names = {v for v in vals if isinstance(v, Name)}
        return frozenset(names | {ch, loc}) - frozenset(extruded)
    if tag == "in":
        _, ch, vals, loc, _inc = label
        names = {v for v in vals if isinstance(v, Name)}
        return frozenset(names | {ch, loc})
    if tag in ("kill", "create"):
        return frozenset({label[1]})
    if tag in ("link+", "link-", "view"):
        return frozenset({label[1], label[3]})
    raise ValueError(f"unknown label {tag!r}")


def render_label(label) -> str:
    tag = label[0]
    if tag == "tau":
        return "tau"
    if tag == "out":
        _, extruded, ch, vals, loc, inc = label
        head = "out{" + ",".join(n.ident for n in extruded) + "} " if extruded else "out "
        body = ",".join(_rv(v) for v in vals)
        return f"{head}{ch.ident}<{body}>@{loc.ident}:{inc}"
    if tag == "in":
        _, ch, vals, loc, inc = label
        body = ",".join(_rv(v) for v in vals)
        return f"in {ch.ident}({body})@{loc.ident}:{inc}"
    if tag == "kill":
        return f"kill({label[1].ident},{label[2]})"
    if tag == "create":
        return f"create({label[1].ident},{label[2]})"
    if tag in ("link+", "link-"):
        return f"{tag}({label[1].ident}:{label[2]},{label[3].ident})"
    if tag == "view":
        return f"view({label[1].ident}:{label[2]},{label[3].ident})"
    raise ValueError(tag)


def _rv(v):
    return v.ident if isinstance(v, Name) else str(v)


# ---------------------------------------------------------------------------
# universe


@dataclass(frozen=True)
class Universe:
    chan_values: tuple
    loc_values: tuple
    int_values: tuple
    net_locs: tuple
    net_locs_dynamic: bool   # extend net rules to newly free locations
    ext_idents: tuple
    chan_arities: dict   # Name -> frozenset of observed subject arities

    def describe(self):
        return {
            "channels": [n.ident for n in self.chan_values],
            "locations": [n.ident for n in self.loc_values],
            "ints": list(self.int_values),
            "net_locations": [n.ident for n in self.net_locs],
        }


def _scan_arities(term, table):
    """Record subject arities of every channel use in a process."""
    stack = [term]
    while stack:
        p = stack.pop()
        tag = p[0]
        if tag == "out":
            table.setdefault(p[1], set()).add(len(p[2]))
            stack.append(p[3])
        elif tag in ("in", "bang"):
            table.setdefault(p[1], set()).add(len(p[2]))
            stack.append(p[3])
        elif tag == "res":
            stack.append(p[2])
        elif tag == "if":
            stack.append(p[3])
            stack.append(p[4])
        elif tag == "par":
            stack.append(p[1])
            stack.append(p[2])
        elif tag == "node":
            stack.append(p[3])
        elif tag in ("forget", "spawn", "create", "link", "unlink", "go"):
            stack.append(p[2])
    return table


def _scan_ints(term, acc):
    stack = [term]
    while stack:
        p = stack.pop()
        tag = p[0]
        if tag == "out":
            acc.update(v for v in p[2] if isinstance(v, int))
            stack.append(p[3])
        elif tag == "if":
            acc.update(v for v in (p[1], p[2]) if isinstance(v, int))
            stack.append(p[3])
            stack.append(p[4])
        elif tag in ("in", "bang"):
            stack.append(p[3])
        elif tag == "res":
            stack.append(p[2])
        elif tag == "par":
            stack.append(p[1])
            stack.append(p[2])
        elif tag == "node":
            stack.append(p[3])
        elif tag in ("forget", "spawn", "create", "link", "unlink", "go"):
            stack.append(p[2])
    return acc


def make_universe(systems, fresh: int = 2, fresh_locs: Optional[int] = None,
                  extra_ints=(), net_locs_override=None,
                  chan_values=None, loc_values=None, int_values=None) -> Universe:
    """Finitized value and location sets covering the given systems.

    ``fresh`` reserves that many fresh channels (and, unless ``fresh_locs``
    narrows it, locations) for inputs and context actions.  ``net_locs_override``
    restricts the locations net rules range over ('none' disables them).
    The ``*_values`` overrides pin the input-instantiation sets directly;
    a narrowed universe keeps NotEquivalent verdicts sound but weakens
    Equivalent ones to the chosen universe.
    """
    if fresh_locs is None:
        fresh_locs = fresh
    idents = set()
    chans, locs = set(), set()
    ints = {0}
    arities = {}
    for s in systems:
        idents |= system_idents(s)
        for n in free_names(s):
            if n.kind == CHAN:
                chans.add(n)
            elif n.kind == LOC:
                locs.add(n)
        for item in s.cfg:
            p = item[1] if item[0] == "proc" else item[3]
            _scan_arities(p, arities)
            _scan_ints(p, ints)
        for _n, inc in s.net.alive:
            ints.add(abs(inc))
        for _n, row in s.net.views:
            for _m, k in row:
                ints.add(k)
    ints.update(extra_ints)

    def pool(prefix, count, kind):
        out = []
        i = 1
        while len(out) < count:
            ident = f"{prefix}{i}"
            if ident not in idents:
                out.append(Name(kind, ident))
                idents.add(ident)
            i += 1
        return out

    fresh_chans = pool("fc", fresh, CHAN)
    fresh_loc_names = pool("fl", fresh_locs, LOC)
    ext = []
    i = 1
    while len(ext) < 8:
        ident = f"ext{i}"
        if ident not in idents:
            ext.append(ident)
        i += 1

    all_locs = tuple(sorted(locs | set(fresh_loc_names) | {ROOT}))
    dynamic = net_locs_override is None
    if net_locs_override == "none":
        net_locs = ()
    elif net_locs_override is not None:
        net_locs = tuple(sorted(net_locs_override))
    else:
        net_locs = all_locs

    free_arities = {n: frozenset(a) for n, a in arities.items()}
    return Universe(
        chan_values=(tuple(sorted(chan_values)) if chan_values is not None
                     else tuple(sorted(chans | set(fresh_chans)))),
        loc_values=(tuple(sorted(loc_values)) if loc_values is not None
                    else all_locs),
        int_values=(tuple(sorted(int_values)) if int_values is not None
                    else tuple(sorted(ints))),
        net_locs=net_locs,
        net_locs_dynamic=dynamic,
        ext_idents=tuple(ext),
        chan_arities=free_arities,
    )


def _input_values(universe, binders, cont):
    """Early instantiation: one tuple per combination of universe values
    matching the binder kinds.  The choice depends only on the universe and
    the binder kinds so that input label sets align across systems."""
    choices = []
    for b in binders:
        if b.kind == CHAN:
            cands = universe.chan_values
        elif b.kind == LOC:
            cands = universe.loc_values
        else:
            cands = universe.int_values
        if not cands:
            return
        choices.append(cands)
    yield from product(*choices)


# ---------------------------------------------------------------------------
# single-state transitions


def lts_step(s: System, universe: Universe, go_enabled: bool = False):
    """All labelled transitions from s: list of (label, successor system).

    Successors are canonicalized; the pair set is deduplicated.
    """
    c = canonicalize(s)
    net = c.net
    items = c.cfg
    bound = frozenset(c.restricted)
    results = []

    def emit(label, restricted, new_net, new_items):
        results.append((label, restricted, new_net, tuple(new_items)))

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
                emit(TAU, c.restricted, net2, replaced(i, Located(p, m, actual)))
            if (actual != kstar and kstar != 0) or not linked \
                    or lam < networkmod.belief(net, m, n):
                net2 = networkmod.apply(net, networkmod.DropBelief(n, m))
                emit(TAU, c.restricted, net2, replaced(i))
            continue

        _, p, n, lam = item
        if not networkmod.is_alive(net, n, lam):
            continue
        tag = p[0]

        if tag == "out":
            _, ch, vals, cont = p
            emit(("out", (), ch, vals, n, lam), c.restricted, net,
                 replaced(i, Located(cont, n, lam)))
        elif tag == "in":
            _, ch, binders, cont = p
            for vals in _input_values(universe, binders, cont):
                try:
                    body = subst_proc(cont, dict(zip(binders, vals)))
                except SortViolation:
                    continue
                emit(("in", ch, tuple(vals), n, lam), c.restricted, net,
                     replaced(i, Located(body, n, lam)))
        elif tag == "bang":
            ch, binders, cont = p[1], p[2], p[3]
            if len(p) == 5 and p[4] <= 0:
                continue
            copy = p if len(p) == 4 else ("bang", ch, binders, cont, p[4] - 1)
            emit(TAU, c.restricted, net,
                 replaced(i, Located(("in", ch, binders, ("par", cont, copy)), n, lam)))
        elif tag == "res":
            w, body = p[1], p[2]
            fresh = fresh_name(w.kind, w.ident, system_idents(c))
            emit(TAU, c.restricted + (fresh,), net,
                 replaced(i, Located(subst_proc(body, {w: fresh}), n, lam)))
        elif tag == "par":
            emit(TAU, c.restricted, net,
                 replaced(i, Located(p[1], n, lam), Located(p[2], n, lam)))
        elif tag == "if":
            branch = p[3] if p[1] == p[2] else p[4]
            emit(TAU, c.restricted, net, replaced(i, Located(branch, n, lam)))
        elif tag == "node":
            body = subst_proc(p[3], {p[1]: n, p[2]: lam})
            emit(TAU, c.restricted, net, replaced(i, Located(body, n, lam)))
        elif tag == "forget":
            net2 = networkmod.apply(net, networkmod.DropBelief(n, p[1]))
            emit(TAU, c.restricted, net2, replaced(i, Located(p[2], n, lam)))
        elif tag == "kill":
            if n != ROOT:
                net2 = networkmod.apply(net, networkmod.Kill(n, lam))
                emit(TAU, c.restricted, net2, replaced(i))
        elif tag == "create":
            m, body = p[1], p[2]
            if networkmod.is_dead(net, m):
                inc = abs(networkmod.a_of(net, m)) + 1
                net2 = networkmod.apply(net, networkmod.Activate(m, inc))
                emit(TAU, c.restricted, net2, replaced(i, Located(body, m, inc)))
            else:
                emit(TAU, c.restricted, net, replaced(i))
        elif tag == "link":
            if not networkmod.has_link(net, n, p[1]):
                net2 = networkmod.apply(net, networkmod.AddLink(n, p[1]))
                emit(TAU, c.restricted, net2, replaced(i, Located(p[2], n, lam)))
        elif tag == "unlink":
            if networkmod.has_link(net, n, p[1]):
                net2 = networkmod.apply(net, networkmod.DelLink(n, p[1]))
                emit(TAU, c.restricted, net2, replaced(i, Located(p[2], n, lam)))
        elif tag == "spawn":
            m, body = p[1], p[2]
            if m == n:
                emit(TAU, c.restricted, net, replaced(i, Located(body, n, lam)))
            elif networkmod.has_link(net, n, m):
                kappa = networkmod.belief(net, n, m)
                emit(TAU, c.restricted, net,
                     replaced(i, SpawnMsg(m, kappa, body, n, lam)))
            else:
                net2 = networkmod.apply(net, networkmod.DropBelief(n, m))
                emit(TAU, c.restricted, net2, replaced(i))
        elif tag == "go" and go_enabled:
            m, body = p[1], p[2]
            actual = networkmod.a_of(net, m)
            view = go_view(net, n, m)
            linked = networkmod.has_link(net, n, m)
            if actual > 0 and linked and view == actual:
                net2 = networkmod.apply(net, networkmod.SetBelief(m, n, lam))
                emit(TAU, c.restricted, net2, replaced(i, Located(body, m, actual)))
            if actual <= 0 or view != actual or not linked:
                net2 = networkmod.apply(net, networkmod.DropBelief(n, m))
                emit(TAU, c.restricted, net2, replaced(i))

    # synchronization of co-located complementary prefixes
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
            if (n2, lam2) != (n, lam) or ip[0] != "in" or ip[1] != ch \
                    or len(ip[2]) != len(vals):
                continue
            try:
                body = subst_proc(ip[3], dict(zip(ip[2], vals)))
            except SortViolation:
                continue
            new_items = list(items)
            new_items[i] = Located(ocont, n, lam)
            new_items[j] = Located(body, n, lam)
            emit(TAU, c.restricted, net, new_items)

    # net rules: context actions on the public part of the network
    pool = set(universe.net_locs)
    if universe.net_locs_dynamic:
        pool |= fn_locs(c)
    net_candidates = sorted(pool - set(c.restricted))
    for n in net_candidates:
        a = networkmod.a_of(net, n)
        if n != ROOT:
            if a > 0:
                emit(("kill", n, a), c.restricted,
                     networkmod.apply(net, networkmod.Kill(n, a)), items)
            else:
                emit(("create", n, abs(a) + 1), c.restricted,
                     networkmod.apply(net, networkmod.Activate(n, abs(a) + 1)),
                     items)
        if a > 0:
            for m in net_candidates:
                if networkmod.has_link(net, n, m):
                    emit(("link-", n, a, m), c.restricted,
                         networkmod.apply(net, networkmod.DelLink(n, m)), items)
                else:
                    emit(("link+", n, a, m), c.restricted,
                         networkmod.apply(net, networkmod.AddLink(n, m)), items)
                if m != n:
                    b = networkmod.belief(net, n, m)
                    if b == 0 or b == networkmod.a_of(net, m):
                        emit(("view", n, a, m), c.restricted, net, items)

    # restriction boundary: block or extrude
    out = []
    seen = set()
    for label, restricted, new_net, new_items in results:
        fn = label_fn(label)
        blocked = fn & bound
        if blocked:
            if label[0] != "out":
                continue
            _, _ext, ch, vals, n, lam = label
            if ch in bound or n in bound:
                continue
            extruded = []
            for v in vals:
                if isinstance(v, Name) and v in bound and v not in extruded:
                    extruded.append(v)
            avoid = system_idents(c)
            mapping = {}
            fresh_names = []
            for w in extruded:
                ident = next(e for e in universe.ext_idents
                             if e not in avoid and e not in {m.ident for m in mapping.values()})
                nw = Name(w.kind, ident)
                mapping[w] = nw
                fresh_names.append(nw)
            new_vals = tuple(mapping.get(v, v) if isinstance(v, Name) else v
                             for v in vals)
            label = ("out", tuple(fresh_names), ch, new_vals, n, lam)
            restricted = tuple(r for r in restricted if r not in mapping)
            new_net2 = new_net
            for w, nw in mapping.items():
                new_net2 = networkmod.network_substitute(new_net2, nw, w)
            new_items2 = subst_config(new_items, mapping)
            succ = canonicalize(System(restricted, new_net2, new_items2))
        else:
            succ = canonicalize(System(restricted, new_net, new_items))
        key = (label, succ)
        if key not in seen:
            seen.add(key)
            out.append((label, succ))
    return out


def fn_locs(s: System):
    return {n for n in free_names(s) if n.kind == LOC}


# ---------------------------------------------------------------------------
# graph construction


@dataclass
class Lts:
    states: list
    index: dict
    edges: list                 # edges[src] = list of (label, dst)
    initials: list
    cut: set = field(default_factory=set)
    truncated: bool = False
    bounds: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.states)

    def edge_count(self):
        return sum(len(e) for e in self.edges)

    def labels(self):
        out = set()
        for es in self.edges:
            out.update(l for l, _ in es)
        return out


def annotate_bangs(term, fuel):
    """Give every replicated input a per-occurrence unfolding budget."""
    if isinstance(term, System):
        return System(term.restricted, term.net,
                      tuple(annotate_bangs(it, fuel) for it in term.cfg))
    if not isinstance(term, tuple) or not term:
        return term
    tag = term[0]
    if tag == "proc":
        return ("proc", annotate_bangs(term[1], fuel), term[2], term[3])
    if tag == "msg":
        return ("msg", term[1], term[2], annotate_bangs(term[3], fuel),
                term[4], term[5])
    if tag == "bang":
        return ("bang", term[1], term[2], annotate_bangs(term[3], fuel), fuel)
    if tag in ("out", "in"):
        return term[:3] + (annotate_bangs(term[3], fuel),)
    if tag == "res":
        return ("res", term[1], annotate_bangs(term[2], fuel))
    if tag == "if":
        return ("if", term[1], term[2], annotate_bangs(term[3], fuel),
                annotate_bangs(term[4], fuel))
    if tag == "par":
        return ("par", annotate_bangs(term[1], fuel), annotate_bangs(term[2], fuel))
    if tag == "node":
        return ("node", term[1], term[2], annotate_bangs(term[3], fuel))
    if tag in ("forget", "spawn", "create", "link", "unlink", "go"):
        return (tag, term[1], annotate_bangs(term[2], fuel))
    return term


def _has_exhausted_bang(s: System):
    for item in s.cfg:
        p = item[1] if item[0] == "proc" else item[3]
        stack = [p]
        while stack:
            t = stack.pop()
            tag = t[0]
            if tag == "bang" and len(t) == 5 and t[4] <= 0:
                return True
            if tag in ("out", "in", "bang", "res", "node"):
                stack.append(t[3] if tag in ("out", "in", "bang", "node") else t[2])
            elif tag == "if":
                stack.append(t[3])
                stack.append(t[4])
            elif tag == "par":
                stack.append(t[1])
                stack.append(t[2])
            elif tag in ("forget", "spawn", "create", "link", "unlink", "go"):
                stack.append(t[2])
    return False


def build_lts(roots, universe: Universe, max_states: int = 200000,
              max_depth: int = 1 << 30, bang_unfold: Optional[int] = 2,
              go_enabled: bool = False) -> Lts:
    """BFS over lts_step with canonical-state deduplication.

    The truncation flag is set whenever any bound cuts exploration or a
    replicated input runs out of its unfolding budget.
    """
    if isinstance(roots, System):
        roots = [roots]
    prepared = []
    for r in roots:
        if bang_unfold is not None:
            r = annotate_bangs(r, bang_unfold)
        prepared.append(canonicalize(r))

    g = Lts(states=[], index={}, edges=[], initials=[],
            bounds={"max_states": max_states, "max_depth": max_depth,
                    "bang_unfold": bang_unfold})

    def intern(state):
        idx = g.index.get(state)
        if idx is None:
            idx = len(g.states)
            g.index[state] = idx
            g.states.append(state)
            g.edges.append([])
        return idx

    frontier = []
    for r in prepared:
        idx = intern(r)
        g.initials.append(idx)
        frontier.append(idx)

    depth = 0
    expanded = set()
    while frontier:
        if depth >= max_depth:
            g.truncated = True
            g.cut.update(frontier)
            break
        nxt = []
        for src in frontier:
            if src in expanded:
                continue
            expanded.add(src)
            state = g.states[src]
            if _has_exhausted_bang(state):
                g.truncated = True
                g.cut.add(src)
            for label, succ in lts_step(state, universe, go_enabled):
                if succ in g.index:
                    dst = g.index[succ]
                    g.edges[src].append((label, dst))
                    continue
                if len(g.states) >= max_states:
                    g.truncated = True
                    g.cut.add(src)
                    continue
                dst = intern(succ)
                g.edges[src].append((label, dst))
                nxt.append(dst)
        frontier = nxt
        depth += 1
    return g


def tau_closure(g: Lts):
    """Reflexive-transitive closure of the tau edges, as per-state sorted
    id tuples.  Handles cycles through SCC condensation."""
    n = len(g.states)
    tau_succ = [[d for (l, d) in g.edges[s] if l == TAU] for s in range(n)]

    index = [0] * n
    low = [0] * n
    onstack = [False] * n
    comp = [-1] * n
    counter = [1]
    stack = []
    comps = []

    def strongconnect(v0):
        work = [(v0, 0)]
        while work:
            v, pi = work[-1]
            if pi == 0:
                index[v] = low[v] = counter[0]
                counter[0] += 1
                stack.append(v)
                onstack[v] = True
            recurse = False
            for i in range(pi, len(tau_succ[v])):
                w = tau_succ[v][i]
                if index[w] == 0:
                    work[-1] = (v, i + 1)
                    work.append((w, 0))
                    recurse = True
                    break
                elif onstack[w]:
                    low[v] = min(low[v], index[w])
            if recurse:
                continue
            if low[v] == index[v]:
                members = []
                while True:
                    w = stack.pop()
                    onstack[w] = False
                    comp[w] = len(comps)
                    members.append(w)
                    if w == v:
                        break
                comps.append(members)
            work.pop()
            if work:
                u, _ = work[-1]
                low[u] = min(low[u], low[v])

    for v in range(n):
        if index[v] == 0:
            strongconnect(v)

    # comps are produced in reverse topological order of the condensation
    comp_closure = [None] * len(comps)
    for ci, members in enumerate(comps):
        acc = set(members)
        for v in members:
            for w in tau_succ[v]:
                cj = comp[w]
                if cj != ci:
                    acc |= comp_closure[cj]
        comp_closure[ci] = acc

    return [tuple(sorted(comp_closure[comp[v]])) for v in range(n)]


def weak_closure(g: Lts) -> Lts:
    """Materialized weak transitions: s ==alpha==> t becomes a direct edge.

    Quadratic in the worst case; meant for small graphs.  The weak
    bisimulation checker saturates on the fly instead.
    """
    closure = tau_closure(g)
    n = len(g.states)
    new_edges = [set(es) for es in (g.edges[s] for s in range(n))]
    for s in range(n):
        for mid in closure[s]:
            for label, t in g.edges[mid]:
                if label == TAU:
                    continue
                for t2 in closure[t]:
                    new_edges[s].add((label, t2))
        for t in closure[s]:
            new_edges[s].add((TAU, t))
    out = Lts(states=g.states, index=g.index,
              edges=[sorted(es, key=lambda e: (render_label(e[0]), e[1]))
                     for es in new_edges],
              initials=list(g.initials), cut=set(g.cut),
              truncated=g.truncated, bounds=dict(g.bounds))
    return out


# ---------------------------------------------------------------------------
# exports


def to_aut(g: Lts) -> str:
    lines = [f"des (0, {g.edge_count()}, {len(g.states)})"]
    for src in range(len(g.states)):
        for label, dst in g.edges[src]:
            lines.append(f'({src},"{render_label(label)}",{dst})')
    return "\n".join(lines) + "\n"


def to_dot(g: Lts, state_namer=None) -> str:
    lines = ["digraph lts {"]
    for i in range(len(g.states)):
        shape = "doublecircle" if i in g.initials else "circle"
        extra = ' style=dashed' if i in g.cut else ""
        name = state_namer(g.states[i]) if state_namer else str(i)
        lines.append(f'  {i} [label="{name}" shape={shape}{extra}];')
    for src in range(len(g.states)):
        for label, dst in g.edges[src]:
            lines.append(f'  {src} -> {dst} [label="{render_label(label)}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"
