"""Barbs, strong/weak bisimilarity, weak similarity and their verdicts.

Both systems must be explored over a shared universe, otherwise net labels
would trivially separate them.  Checking is signature-based partition
refinement; the weak variant saturates signatures over the tau condensation
on the fly instead of materializing the weak closure.

Verdicts on truncated graphs are honest about their bounds: an Equivalent
outcome downgrades to inconclusive-up-to-bound, and a NotEquivalent outcome
is kept only when its distinguishing strategy can be replayed without
relying on states whose successors were cut off.
"""

from __future__ import annotations

from typing import NamedTuple, Optional

from . import network as networkmod
from .congruence import canonicalize
from .reduction import successors
from .lts import Lts, TAU, build_lts, make_universe, render_label
from .syntax import (
    CHAN, LOC, ROOT,
    Name, System,
    free_names,
)

EQUIVALENT = "equivalent"
NOT_EQUIVALENT = "not-equivalent"
INCONCLUSIVE = "inconclusive-up-to-bound"


class Verdict(NamedTuple):
    result: str
    witness: Optional[dict]
    bounds: dict
    state_counts: tuple
    truncated: bool

    def to_json(self):
        return {
            "result": self.result,
            "witness": self.witness,
            "bounds": self.bounds,
            "stateCounts": list(self.state_counts),
            "truncated": self.truncated,
        }


class Barb(NamedTuple):
    chan: Name
    loc: Name
    inc: int
    weak: bool


def barbs(s: System, weak: bool = False, depth: int = 12,
          max_states: int = 20000, go_enabled: bool = False):
    """Observable outputs: enabled free-channel outputs at alive free
    locations, reached through at most ``depth`` silent steps if weak."""
    found = set()
    start = canonicalize(s)
    seen = {start}
    frontier = [start]
    level = 0
    while frontier:
        for state in frontier:
            bound = set(state.restricted)
            for item in state.cfg:
                if item[0] != "proc" or item[1][0] != "out":
                    continue
                _, p, n, lam = item
                if p[1] in bound or n in bound:
                    continue
                if networkmod.is_alive(state.net, n, lam):
                    found.add(Barb(p[1], n, lam, level > 0))
        if not weak or level >= depth or len(seen) > max_states:
            break
        nxt = []
        for state in frontier:
            for st in successors(state, go_enabled):
                if st.successor not in seen:
                    seen.add(st.successor)
                    nxt.append(st.successor)
        frontier = nxt
        level += 1
    if not weak:
        return {b for b in found if not b.weak}
    return found


def location_barbs(barb_set):
    return {(b.loc, b.inc) for b in barb_set}


# ---------------------------------------------------------------------------
# union graph plumbing


class _Union:
    def __init__(self, g1: Lts, g2: Lts):
        self.g1, self.g2 = g1, g2
        self.n1 = len(g1.states)
        self.n = self.n1 + len(g2.states)
        self.labels = {}
        self.label_list = []
        self.edges = [[] for _ in range(self.n)]
        for off, g in ((0, g1), (self.n1, g2)):
            for src in range(len(g.states)):
                for label, dst in g.edges[src]:
                    self.edges[off + src].append((self._lab(label), off + dst))
        self.cut = set(g1.cut) | {self.n1 + c for c in g2.cut}
        self.root1 = g1.initials[0]
        self.root2 = self.n1 + g2.initials[0]
        self.tau_id = self._lab(TAU)
        self._wmoves_cache = {}
        self._closure_cache = {}

    def _lab(self, label):
        i = self.labels.get(label)
        if i is None:
            i = len(self.label_list)
            self.labels[label] = i
            self.label_list.append(label)
        return i

    def tau_closure_of(self, s):
        got = self._closure_cache.get(s)
        if got is not None:
            return got
        seen = {s}
        stack = [s]
        while stack:
            v = stack.pop()
            for lab, t in self.edges[v]:
                if lab == self.tau_id and t not in seen:
                    seen.add(t)
                    stack.append(t)
        out = frozenset(seen)
        self._closure_cache[s] = out
        return out

    def weak_moves(self, s):
        """dict label_id -> frozenset of weak targets (tau* a tau*)."""
        got = self._wmoves_cache.get(s)
        if got is not None:
            return got
        cl = self.tau_closure_of(s)
        moves = {self.tau_id: set(cl)}
        for v in cl:
            for lab, t in self.edges[v]:
                if lab == self.tau_id:
                    continue
                moves.setdefault(lab, set()).update(self.tau_closure_of(t))
        out = {lab: frozenset(ts) for lab, ts in moves.items()}
        self._wmoves_cache[s] = out
        return out

    def weak_proof_complete(self, s):
        """True when every state involved in computing s's weak moves is
        fully explored (no truncation cut)."""
        cl = self.tau_closure_of(s)
        if cl & self.cut:
            return False
        for v in cl:
            for lab, t in self.edges[v]:
                if lab != self.tau_id and (self.tau_closure_of(t) & self.cut):
                    return False
        return True


def _tarjan(succ, n):
    index = [0] * n
    low = [0] * n
    onstack = [False] * n
    comp = [-1] * n
    counter = [1]
    stack = []
    comps = []
    for v0 in range(n):
        if index[v0]:
            continue
        work = [(v0, 0)]
        while work:
            v, pi = work[-1]
            if pi == 0:
                index[v] = low[v] = counter[0]
                counter[0] += 1
                stack.append(v)
                onstack[v] = True
            advanced = False
            for i in range(pi, len(succ[v])):
                w = succ[v][i]
                if index[w] == 0:
                    work[-1] = (v, i + 1)
                    work.append((w, 0))
                    advanced = True
                    break
                elif onstack[w]:
                    low[v] = min(low[v], index[w])
            if advanced:
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
    return comp, comps


def _refine_strong(u: _Union):
    block = [0] * u.n
    nblocks = 1
    while True:
        sigs = {}
        new_block = [0] * u.n
        for s in range(u.n):
            sig = (block[s],
                   frozenset((lab, block[t]) for lab, t in u.edges[s]))
            idx = sigs.get(sig)
            if idx is None:
                idx = len(sigs)
                sigs[sig] = idx
            new_block[s] = idx
        if len(sigs) == nblocks:
            return new_block
        block, nblocks = new_block, len(sigs)


def _refine_weak(u: _Union):
    tau_succ = [[t for lab, t in u.edges[s] if lab == u.tau_id]
                for s in range(u.n)]
    comp, comps = _tarjan(tau_succ, u.n)
    ncomps = len(comps)
    comp_tau_succ = [set() for _ in range(ncomps)]
    for s in range(u.n):
        for t in tau_succ[s]:
            if comp[t] != comp[s]:
                comp_tau_succ[comp[s]].add(comp[t])
    # Tarjan emits components in reverse topological order: successors first
    order = range(ncomps)

    block = [0] * u.n
    nblocks = 1
    while True:
        wb = [None] * ncomps
        for ci in order:
            acc = {block[v] for v in comps[ci]}
            for cj in comp_tau_succ[ci]:
                acc |= wb[cj]
            wb[ci] = acc
        fb = [None] * ncomps
        for ci in order:
            acc = set()
            for v in comps[ci]:
                for lab, t in u.edges[v]:
                    if lab == u.tau_id:
                        continue
                    for b in wb[comp[t]]:
                        acc.add((lab, b))
            for cj in comp_tau_succ[ci]:
                acc |= fb[cj]
            fb[ci] = acc

        sigs = {}
        new_block = [0] * u.n
        for s in range(u.n):
            ci = comp[s]
            sig = (block[s],
                   frozenset(fb[ci]) | frozenset((u.tau_id, b) for b in wb[ci]))
            idx = sigs.get(sig)
            if idx is None:
                idx = len(sigs)
                sigs[sig] = idx
            new_block[s] = idx
        if len(sigs) == nblocks:
            return new_block
        block, nblocks = new_block, len(sigs)


# ---------------------------------------------------------------------------
# witness extraction


def _witness(u: _Union, block, x, y, depth=20, memo=None):
    """Distinguishing strategy: a challenger weak move one side cannot
    weakly match into the same class.  Returns None when every candidate
    claim would rest on truncated states."""
    if memo is None:
        memo = {}
    key = (x, y)
    if key in memo:
        return memo[key]
    memo[key] = None   # cycle guard
    if depth <= 0:
        return None

    for side, a, b in (("left", x, y), ("right", y, x)):
        amoves = u.weak_moves(a)
        bmoves = u.weak_moves(b)
        if not u.weak_proof_complete(b):
            continue
        options = []
        for lab, targets in amoves.items():
            breach = {block[t] for t in bmoves.get(lab, frozenset())}
            for t in targets:
                if block[t] not in breach:
                    options.append((len(bmoves.get(lab, frozenset())), lab, t))
        options.sort(key=lambda o: (o[0], render_label(u.label_list[o[1]]), o[2]))
        for _, lab, t in options:
            replies = []
            ok = True
            for r in sorted(bmoves.get(lab, frozenset())):
                child = _witness(u, block, t, r, depth - 1, memo) \
                    if side == "left" else _witness(u, block, r, t, depth - 1, memo)
                if child is None:
                    ok = False
                    break
                replies.append(child)
            if ok:
                node = {
                    "side": side,
                    "label": render_label(u.label_list[lab]),
                    "replies": replies,
                }
                memo[key] = node
                return node
    return None


def witness_paths(witness):
    """All root-to-leaf label sequences of a witness tree."""
    if witness is None:
        return []
    if not witness.get("replies"):
        return [[witness["label"]]]
    out = []
    for child in witness["replies"]:
        for path in witness_paths(child):
            out.append([witness["label"]] + path)
    return out


# ---------------------------------------------------------------------------
# verdict assembly


def _verdict(u: _Union, block, g1, g2, bounds):
    truncated = g1.truncated or g2.truncated
    counts = (len(g1.states), len(g2.states))
    if block[u.root1] == block[u.root2]:
        result = INCONCLUSIVE if truncated else EQUIVALENT
        return Verdict(result, None, bounds, counts, truncated)
    wit = _witness(u, block, u.root1, u.root2)
    if wit is None:
        return Verdict(INCONCLUSIVE, None, bounds, counts, truncated)
    return Verdict(NOT_EQUIVALENT, wit, bounds, counts, truncated)


def strong_bisim(g1: Lts, g2: Lts) -> Verdict:
    u = _Union(g1, g2)
    block = _refine_strong(u)
    bounds = {"mode": "strong", **g1.bounds}
    # a strong witness needs strong matching only, but reuse the weak
    # extractor when the graphs are tau-free; otherwise specialise
    truncated = g1.truncated or g2.truncated
    counts = (len(g1.states), len(g2.states))
    if block[u.root1] == block[u.root2]:
        result = INCONCLUSIVE if truncated else EQUIVALENT
        return Verdict(result, None, bounds, counts, truncated)
    wit = _strong_witness(u, block, u.root1, u.root2)
    if wit is None:
        return Verdict(INCONCLUSIVE, None, bounds, counts, truncated)
    return Verdict(NOT_EQUIVALENT, wit, bounds, counts, truncated)


def _strong_witness(u: _Union, block, x, y, depth=20, memo=None):
    if memo is None:
        memo = {}
    key = (x, y)
    if key in memo:
        return memo[key]
    memo[key] = None
    if depth <= 0:
        return None
    for side, a, b in (("left", x, y), ("right", y, x)):
        if b in u.cut:
            continue
        bposts = {}
        for lab, t in u.edges[b]:
            bposts.setdefault(lab, set()).add(t)
        for lab, t in sorted(u.edges[a],
                             key=lambda e: (render_label(u.label_list[e[0]]), e[1])):
            breach = {block[r] for r in bposts.get(lab, ())}
            if block[t] in breach:
                continue
            replies = []
            ok = True
            for r in sorted(bposts.get(lab, ())):
                child = _strong_witness(u, block, t, r, depth - 1, memo) \
                    if side == "left" else _strong_witness(u, block, r, t, depth - 1, memo)
                if child is None:
                    ok = False
                    break
                replies.append(child)
            if ok:
                node = {"side": side,
                        "label": render_label(u.label_list[lab]),
                        "replies": replies}
                memo[key] = node
                return node
    return None


def weak_bisim(g1: Lts, g2: Lts) -> Verdict:
    u = _Union(g1, g2)
    block = _refine_weak(u)
    bounds = {"mode": "weak", **g1.bounds}
    return _verdict(u, block, g1, g2, bounds)


def weak_simulates(g1: Lts, g2: Lts) -> Verdict:
    """Can g2 weakly simulate g1 (g2 matches every move of g1)?

    Computed on the fly over the game positions reachable from the root
    pair.  Failure is reported only when the losing strategy never leans
    on a truncated defender state; conversely a defender whose options
    were cut off is given the benefit of the doubt, so an Equivalent
    verdict on truncated graphs means "up to the exploration bound".
    """
    u = _Union(g1, g2)
    bounds = {"mode": "simulation", **g1.bounds}
    counts = (len(g1.states), len(g2.states))
    truncated = g1.truncated or g2.truncated

    root = (u.root1, u.root2)
    moves_of = {}   # pair -> (defender_complete, [(lab, t, reply pairs)])
    work = [root]
    seen = {root}
    while work:
        pair = work.pop()
        s, r = pair
        rmoves = u.weak_moves(r)
        entry = []
        for lab, t in u.edges[s]:
            replies = tuple((t, q) for q in sorted(rmoves.get(lab, frozenset())))
            entry.append((lab, t, replies))
            for child in replies:
                if child not in seen:
                    seen.add(child)
                    work.append(child)
        moves_of[pair] = (u.weak_proof_complete(r), entry)

    # least fixpoint of provably losing positions
    proven = set()
    reasons = {}
    changed = True
    while changed:
        changed = False
        for pair, (complete, entry) in moves_of.items():
            if pair in proven or not complete:
                continue
            for lab, t, replies in entry:
                if all(ch in proven for ch in replies):
                    proven.add(pair)
                    reasons[pair] = (lab, replies)
                    changed = True
                    break

    if root in proven:
        def build(pair):
            lab, replies = reasons[pair]
            return {"side": "left", "label": render_label(u.label_list[lab]),
                    "replies": [build(ch) for ch in replies]}
        return Verdict(NOT_EQUIVALENT, build(root), bounds, counts, truncated)

    # optimistic fixpoint: cut-off defenders count as matching
    good = {pair: True for pair in moves_of}
    changed = True
    while changed:
        changed = False
        for pair, (complete, entry) in moves_of.items():
            if not good[pair]:
                continue
            for _lab, _t, replies in entry:
                if any(good.get(ch, True) for ch in replies):
                    continue
                if not complete:
                    continue
                good[pair] = False
                changed = True
                break

    if good[root]:
        return Verdict(EQUIVALENT, None, bounds, counts, truncated)
    return Verdict(INCONCLUSIVE, None, bounds, counts, truncated)


# ---------------------------------------------------------------------------
# cross checks and helpers


def public_network_check(s1: System, s2: System, verdict: Verdict):
    """For an Equivalent strong verdict on untruncated graphs, the public
    parts of the networks must agree; returns None or a discrepancy."""
    if verdict.result != EQUIVALENT:
        return None
    c1, c2 = canonicalize(s1), canonicalize(s2)
    hidden = set(c1.restricted) | set(c2.restricted)
    a1, a2 = networkmod.alive_map(c1.net), networkmod.alive_map(c2.net)
    for n in sorted(set(a1) | set(a2)):
        if n in hidden:
            continue
        if a1.get(n, 0) != a2.get(n, 0):
            return f"incarnation map differs at {n.ident}"
    l1 = {p for p in c1.net.links if not (p[0] in hidden or p[1] in hidden)}
    l2 = {p for p in c2.net.links if not (p[0] in hidden or p[1] in hidden)}
    if l1 != l2:
        diff = l1.symmetric_difference(l2)
        a, b = sorted(diff)[0]
        return f"link set differs at {a.ident}<->{b.ident}"
    v1, v2 = networkmod.views_map(c1.net), networkmod.views_map(c2.net)
    for n in sorted(set(v1) | set(v2)):
        if n in hidden:
            continue
        row1 = {m: k for m, k in v1.get(n, {}).items() if m not in hidden}
        row2 = {m: k for m, k in v2.get(n, {}).items() if m not in hidden}
        if row1 != row2:
            return f"views differ at {n.ident}"
    return None


def go_encode(term):
    """Replace every go by the corresponding spawn, homomorphically."""
    if isinstance(term, System):
        return System(term.restricted, term.net,
                      tuple(go_encode(it) for it in term.cfg))
    if not isinstance(term, tuple) or not term or not isinstance(term[0], str):
        return term
    tag = term[0]
    if tag == "go":
        return ("spawn", term[1], go_encode(term[2]))
    if tag == "proc":
        return ("proc", go_encode(term[1]), term[2], term[3])
    if tag == "msg":
        return ("msg", term[1], term[2], go_encode(term[3]), term[4], term[5])
    if tag in ("out", "in", "bang"):
        return term[:3] + (go_encode(term[3]),) + term[4:]
    if tag == "res":
        return ("res", term[1], go_encode(term[2]))
    if tag == "if":
        return ("if", term[1], term[2], go_encode(term[3]), go_encode(term[4]))
    if tag == "par":
        return ("par", go_encode(term[1]), go_encode(term[2]))
    if tag == "node":
        return ("node", term[1], term[2], go_encode(term[3]))
    if tag in ("forget", "spawn", "create", "link", "unlink"):
        return (tag, term[1], go_encode(term[2]))
    return term


def check_systems(s1: System, s2: System, mode: str = "weak",
                  fresh: int = 2, fresh_locs: Optional[int] = None,
                  bang_unfold: Optional[int] = 2,
                  max_states: int = 200000, max_depth: int = 1 << 30,
                  go_enabled: bool = False, net_locs_override=None) -> Verdict:
    """Build both LTSs over the shared universe and compare."""
    universe = make_universe([s1, s2], fresh=fresh, fresh_locs=fresh_locs,
                             net_locs_override=net_locs_override)
    g1 = build_lts(s1, universe, max_states=max_states, max_depth=max_depth,
                   bang_unfold=bang_unfold, go_enabled=go_enabled)
    g2 = build_lts(s2, universe, max_states=max_states, max_depth=max_depth,
                   bang_unfold=bang_unfold, go_enabled=go_enabled)
    if mode == "strong":
        return strong_bisim(g1, g2)
    if mode == "weak":
        return weak_bisim(g1, g2)
    if mode == "simulation":
        return weak_simulates(g1, g2)
    raise ValueError(f"unknown mode {mode!r}")
