"""Structural congruence via a canonical form.

Two systems are structurally congruent exactly when their canonical forms
are identical.  Canonicalization flattens parallel composition into a
sorted item multiset, drops inert located nils, garbage-collects unused
restrictions, renames process binders positionally and restriction binders
to stable slots, and normalizes the network representation.

Restriction slots are assigned from an alpha-invariant occurrence profile
per restricted name (where it sits in each item, erased of all restricted
identities, plus its role in the network).  Names with identical profiles
are tie-broken by minimizing the rendered form over their orderings, so
the result does not depend on the input identifiers.

Located nil processes are treated as structurally null here.  They have no
transitions and no barbs, so this only coarsens the congruence by garbage
that is invisible to every semantic check built on top.
"""

from __future__ import annotations

from functools import lru_cache
from itertools import permutations

from . import network as networkmod
from .syntax import (
    CHAN, IVAR, LOC, ROOT,
    Name, Network, System,
    _fn_proc, fn_network, free_names, free_inc_vars, item_key, idents_of,
    subst_config, system_key,
)

_PERM_CAP = 720


def _scheme(base, idents):
    while any(i.startswith(base) for i in idents):
        base += "_"
    return base


def _debruijn_proc(p, env, counter, scheme):
    """Rename every process binder to a positional name in pre-order."""
    tag = p[0]
    if tag in ("nil", "kill"):
        return p

    def ren(n):
        return env.get(n, n)

    def renv(v):
        return env.get(v, v) if isinstance(v, Name) else v

    if tag == "out":
        return ("out", ren(p[1]), tuple(renv(v) for v in p[2]),
                _debruijn_proc(p[3], env, counter, scheme))
    if tag in ("in", "bang"):
        ch = ren(p[1])
        env2 = dict(env)
        fresh = []
        for b in p[2]:
            nb = Name(b.kind, f"{scheme}{counter[0]}")
            counter[0] += 1
            env2[b] = nb
            fresh.append(nb)
        return (tag, ch, tuple(fresh),
                _debruijn_proc(p[3], env2, counter, scheme)) + p[4:]
    if tag == "res":
        nb = Name(p[1].kind, f"{scheme}{counter[0]}")
        counter[0] += 1
        env2 = dict(env)
        env2[p[1]] = nb
        return ("res", nb, _debruijn_proc(p[2], env2, counter, scheme))
    if tag == "if":
        return ("if", renv(p[1]), renv(p[2]),
                _debruijn_proc(p[3], env, counter, scheme),
                _debruijn_proc(p[4], env, counter, scheme))
    if tag == "par":
        return ("par", _debruijn_proc(p[1], env, counter, scheme),
                _debruijn_proc(p[2], env, counter, scheme))
    if tag == "node":
        nl = Name(LOC, f"{scheme}{counter[0]}")
        ni = Name(IVAR, f"{scheme}{counter[0] + 1}")
        counter[0] += 2
        env2 = dict(env)
        env2[p[1]] = nl
        env2[p[2]] = ni
        return ("node", nl, ni, _debruijn_proc(p[3], env2, counter, scheme))
    return (tag, ren(p[1]), _debruijn_proc(p[2], env, counter, scheme))


@lru_cache(maxsize=1 << 17)
def _db_item(item):
    if item[0] == "proc":
        return ("proc", _debruijn_proc(item[1], {}, [0], "\x02"), item[2], item[3])
    return ("msg", item[1], item[2],
            _debruijn_proc(item[3], {}, [0], "\x02"), item[4], item[5])


@lru_cache(maxsize=1 << 17)
def _binder_idents(item):
    """Identifiers bound by input/res/node binders anywhere in an item."""
    out = set()
    stack = [item[1] if item[0] == "proc" else item[3]]
    while stack:
        p = stack.pop()
        tag = p[0]
        if tag in ("nil", "kill"):
            continue
        if tag in ("in", "bang"):
            out.update(b.ident for b in p[2])
            stack.append(p[3])
        elif tag == "res":
            out.add(p[1].ident)
            stack.append(p[2])
        elif tag == "node":
            out.add(p[1].ident)
            out.add(p[2].ident)
            stack.append(p[3])
        elif tag == "out":
            stack.append(p[3])
        elif tag == "if":
            stack.append(p[3])
            stack.append(p[4])
        elif tag == "par":
            stack.append(p[1])
            stack.append(p[2])
        else:
            stack.append(p[2])
    return frozenset(out)


def _finalize_binders(p, bscheme):
    """Rename the internal positional binder names to their printable
    scheme; binder names are unique within an item so a total rename is
    safe."""
    if isinstance(p, Name):
        if p.ident.startswith("\x02"):
            return Name(p.kind, bscheme + p.ident[1:])
        return p
    if not isinstance(p, tuple):
        return p
    if p and isinstance(p[0], str) and not isinstance(p, Name):
        return (p[0],) + tuple(_finalize_binders(c, bscheme) for c in p[1:])
    return tuple(_finalize_binders(c, bscheme) for c in p)


@lru_cache(maxsize=1 << 17)
def _item_fn(item):
    return free_names(item)


@lru_cache(maxsize=1 << 18)
def _item_key_c(item):
    return item_key(item)


def _ren_proc(p, m, keys):
    """Fast free-name renaming for debruijnized processes: binders are
    positional names so no capture check is needed, and subtrees that do
    not mention a renamed name are shared."""
    if not (_fn_proc(p) & keys):
        return p
    tag = p[0]
    if tag == "out":
        return ("out", m.get(p[1], p[1]),
                tuple(m.get(v, v) if isinstance(v, Name) else v for v in p[2]),
                _ren_proc(p[3], m, keys))
    if tag in ("in", "bang"):
        return (tag, m.get(p[1], p[1]), p[2],
                _ren_proc(p[3], m, keys)) + p[4:]
    if tag == "res":
        return ("res", p[1], _ren_proc(p[2], m, keys))
    if tag == "if":
        return ("if",
                m.get(p[1], p[1]) if isinstance(p[1], Name) else p[1],
                m.get(p[2], p[2]) if isinstance(p[2], Name) else p[2],
                _ren_proc(p[3], m, keys), _ren_proc(p[4], m, keys))
    if tag == "par":
        return ("par", _ren_proc(p[1], m, keys), _ren_proc(p[2], m, keys))
    if tag == "node":
        return ("node", p[1], p[2], _ren_proc(p[3], m, keys))
    return (tag, m.get(p[1], p[1]), _ren_proc(p[2], m, keys))


def _ren_item(item, m, keys):
    if not (_item_fn(item) & keys):
        return item
    if item[0] == "proc":
        return ("proc", _ren_proc(item[1], m, keys),
                m.get(item[2], item[2]), item[3])
    return ("msg", m.get(item[1], item[1]), item[2],
            _ren_proc(item[3], m, keys), m.get(item[4], item[4]), item[5])


@lru_cache(maxsize=1 << 18)
def _ren_item_cached(item, mkey):
    m = dict(mkey)
    return _ren_item(item, m, frozenset(m))


@lru_cache(maxsize=1 << 18)
def _colored_key(item, coloring):
    """Item key with restricted names collapsed to their current color."""
    if not coloring:
        return _item_key_c(item)
    mapping = {n: Name(n.kind, f"\x01{c}") for n, c in coloring}
    return item_key(_ren_item(item, mapping, frozenset(mapping)))


@lru_cache(maxsize=1 << 17)
def _occ_census(item):
    """How each free name occurs in an item: 'isub' for input subjects,
    'other' for any other occurrence (payloads, output subjects, targets)."""
    census = {}

    def mark(n, kind):
        census.setdefault(n, set()).add(kind)

    def walk(p, bound):
        tag = p[0]
        if tag in ("nil", "kill"):
            return
        if tag == "out":
            if p[1] not in bound:
                mark(p[1], "other")
            for v in p[2]:
                if isinstance(v, Name) and v not in bound:
                    mark(v, "other")
            walk(p[3], bound)
        elif tag in ("in", "bang"):
            if p[1] not in bound:
                mark(p[1], "isub")
            walk(p[3], bound | set(p[2]))
        elif tag == "res":
            walk(p[2], bound | {p[1]})
        elif tag == "if":
            for v in (p[1], p[2]):
                if isinstance(v, Name) and v not in bound:
                    mark(v, "other")
            walk(p[3], bound)
            walk(p[4], bound)
        elif tag == "par":
            walk(p[1], bound)
            walk(p[2], bound)
        elif tag == "node":
            walk(p[3], bound | {p[1], p[2]})
        else:
            if p[1] not in bound:
                mark(p[1], "other")
            walk(p[2], bound)

    if item[0] == "proc":
        walk(item[1], frozenset())
        mark(item[2], "other")
    else:
        walk(item[3], frozenset())
        mark(item[1], "other")
        mark(item[4], "other")
    return {n: frozenset(k) for n, k in census.items()}


def _gc_dead_inputs(cfg, restricted):
    chans = frozenset(n for n in restricted if n.kind == CHAN)
    if not chans:
        return cfg
    return _gc_dead_cached(cfg, chans)


@lru_cache(maxsize=1 << 16)
def _gc_dead_cached(cfg, restricted):
    """Drop receivers that can never fire: items whose whole process is an
    input on a restricted channel that occurs nowhere except as an input
    subject, so no output on it can ever arise.  Such items have no
    transitions and no barbs; removing them is invisible to the semantics
    but keeps recovery-loop state spaces finite."""
    chans = {n for n in restricted if n.kind == CHAN}
    if not chans:
        return cfg
    while True:
        census = {}
        for item in cfg:
            for n, kinds in _occ_census(item).items():
                census.setdefault(n, set()).update(kinds)
        dead = {x for x in chans
                if census.get(x) and census[x] == {"isub"}}
        if not dead:
            return cfg
        kept = tuple(
            item for item in cfg
            if not (item[0] == "proc" and item[1][0] in ("in", "bang")
                    and item[1][1] in dead))
        if len(kept) == len(cfg):
            return cfg
        cfg = kept


@lru_cache(maxsize=1 << 17)
def _occ_paths(item):
    """Occurrence paths of every name in an item, as sorted path tuples."""
    acc = {}

    def walk(t, path):
        if isinstance(t, Name):
            acc.setdefault(t, []).append(path)
            return
        if isinstance(t, int):
            return
        if not t or not isinstance(t[0], str):
            for i, c in enumerate(t):
                walk(c, path + (i,))
            return
        for i, c in enumerate(t[1:]):
            walk(c, path + (i,))

    walk(item, ())
    return {n: tuple(sorted(v)) for n, v in acc.items()}


def _rename_net(net: Network, mapping):
    def r(n):
        return mapping.get(n, n)

    alive = {r(n): i for n, i in net.alive}
    links = {tuple(sorted((r(a), r(b)))) for a, b in net.links}
    views = {r(n): {r(m): k for m, k in row} for n, row in net.views}
    return networkmod.make_network(alive, links, views)


def _render(net, cfg, assignment, slot_scheme, bscheme):
    mapping = {n: Name(n.kind, f"{slot_scheme}{i}")
               for i, n in enumerate(assignment)}
    keys = frozenset(mapping)
    new_cfg = []
    for item in cfg:
        rel = tuple(sorted((n, mapping[n]) for n in (_item_fn(item) & keys)))
        renamed = _ren_item_cached(item, rel) if rel else item
        new_cfg.append(_final_item(renamed, bscheme))
    new_cfg = tuple(sorted(new_cfg, key=_item_key_c))
    new_net = _rename_net(net, mapping)
    new_restricted = tuple(mapping[n] for n in assignment)
    return System(new_restricted, new_net, new_cfg)


@lru_cache(maxsize=1 << 18)
def _final_item(item, bscheme):
    return _finalize_binders(item, bscheme)


def _profiles_for_colors(net, cfg, kept, color):
    """Profile per restricted name under the current coloring: its own
    color, its network role and its occurrence positions, with all other
    restricted names collapsed to their colors."""
    kept_set = frozenset(kept)

    def erased(n):
        if n in kept_set:
            return ("b", n.kind, color[n])
        return ("f", n.kind, n.ident)

    profiles = {n: [("c", color[n]), ("kind", n.kind)] for n in kept}
    a = dict(net.alive)
    for n in kept:
        profiles[n].append(("alive", a.get(n, 0)))
    link_part = {n: [] for n in kept}
    for x, y in net.links:
        if x in kept_set:
            link_part[x].append(erased(y))
        if y in kept_set:
            link_part[y].append(erased(x))
    for n in kept:
        profiles[n].append(("links", tuple(sorted(link_part[n]))))
    vout = {n: [] for n in kept}
    vin = {n: [] for n in kept}
    for h, row in net.views:
        for m, k in row:
            if h in kept_set:
                vout[h].append((erased(m), k))
            if m in kept_set:
                vin[m].append((erased(h), k))
    for n in kept:
        profiles[n].append(("vout", tuple(sorted(vout[n]))))
        profiles[n].append(("vin", tuple(sorted(vin[n]))))

    occ = {n: [] for n in kept}
    for item in cfg:
        names = _item_fn(item) & kept_set
        if not names:
            continue
        coloring = tuple(sorted((x, color[x]) for x in names))
        ek = _colored_key(item, coloring)
        paths = _occ_paths(item)
        for n in names:
            occ[n].append((ek, paths.get(n, ())))
    for n in kept:
        profiles[n].append(("occ", tuple(sorted(occ[n]))))
    return {n: tuple(profiles[n]) for n in kept}


def _refine_classes(net, cfg, kept):
    """Iterated color refinement; returns classes ordered by their final
    profiles, an alpha-invariant ordering."""
    color = {n: 0 for n in kept}
    ncolors = 1
    while True:
        prof = _profiles_for_colors(net, cfg, kept, color)
        order = sorted(set(prof.values()))
        color = {n: order.index(prof[n]) for n in kept}
        if len(order) == ncolors:
            break
        ncolors = len(order)
    classes = {}
    for n in kept:
        classes.setdefault(color[n], []).append(n)
    return [sorted(classes[c]) for c in sorted(classes)]


@lru_cache(maxsize=1 << 16)
def canonicalize(s: System) -> System:
    """Idempotent canonical form, invariant under the congruence axioms."""
    free = idents_of(free_names(s) | free_inc_vars(s))
    bscheme = _scheme("_b", free)
    rscheme = _scheme("_r", free)

    # normalize restricted names positionally so every later step is
    # independent of the identifiers the input happened to use
    pre = {n: Name(n.kind, f"\x03{i}") for i, n in enumerate(s.restricted)}
    if pre:
        shadowed = any(n.ident in _binder_idents(it)
                       for it in s.cfg for n in s.restricted)
        if shadowed:
            cfg = subst_config(s.cfg, pre)
        else:
            keys = frozenset(pre)
            cfg = []
            for it in s.cfg:
                rel = tuple(sorted((n, pre[n]) for n in (_item_fn(it) & keys)))
                cfg.append(_ren_item_cached(it, rel) if rel else it)
            cfg = tuple(cfg)
        net = _rename_net(s.net, pre)
    else:
        cfg, net = s.cfg, s.net
    restricted = tuple(pre[n] for n in s.restricted)
    return _canon_core(net, cfg, restricted, bscheme, rscheme)


@lru_cache(maxsize=1 << 16)
def _canon_core(net, cfg, restricted, bscheme, rscheme):
    cfg = tuple(_db_item(it) for it in cfg
                if not (it[0] == "proc" and it[1] == ("nil",)))
    cfg = _gc_dead_inputs(cfg, set(restricted))

    used_names = set(fn_network(net))
    for item in cfg:
        used_names |= _item_fn(item)
    kept = [n for n in restricted if n in used_names]

    if not kept:
        return System((), net,
                      tuple(sorted((_final_item(it, bscheme) for it in cfg),
                                   key=_item_key_c)))
    if len(kept) == 1:
        return _render(net, cfg, kept, rscheme, bscheme)

    ordered_classes = _refine_classes(net, cfg, kept)

    if all(len(cl) == 1 for cl in ordered_classes):
        assignment = [cl[0] for cl in ordered_classes]
        return _render(net, cfg, assignment, rscheme, bscheme)

    total = 1
    for cl in ordered_classes:
        for k in range(2, len(cl) + 1):
            total *= k
    if total > _PERM_CAP:
        # refinement left a tie too wide to enumerate; fall back to the
        # positional order, deterministic but not reorder-invariant
        assignment = [n for cl in ordered_classes for n in cl]
        return _render(net, cfg, assignment, rscheme, bscheme)

    best = None
    for combo in _class_orders(ordered_classes):
        cand = _render(net, cfg, combo, rscheme, bscheme)
        key = system_key(cand)
        if best is None or key < best[0]:
            best = (key, cand)
    return best[1]


def _class_orders(classes):
    def rec(i):
        if i == len(classes):
            yield []
            return
        for perm in permutations(classes[i]):
            for rest in rec(i + 1):
                yield list(perm) + rest
    return rec(0)


def congruent(s1: System, s2: System) -> bool:
    return canonicalize(s1) == canonicalize(s2)
