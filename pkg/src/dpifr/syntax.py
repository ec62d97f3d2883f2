"""Core term language: names, processes, configurations, systems.

Terms are immutable tagged tuples so they hash fast and can be shared
freely across explorers.  Three layers:

* processes      -- ('nil',), ('out', ch, vals, P), ('in', ch, binders, P),
                    ('bang', ch, binders, P), ('res', w, P),
                    ('if', l, r, P, Q), ('par', P, Q),
                    ('node', locvar, incvar, P), ('forget', n, P),
                    ('spawn', n, P), ('kill',), ('create', n, P),
                    ('link', n, P), ('unlink', n, P), ('go', n, P)
* configurations -- tuples of items: ('proc', P, loc, inc) for a located
                    process, ('msg', target, tinc, P, src, sinc) for an
                    in-flight spawn request
* systems        -- System(restricted, net, cfg), all restrictions at top

Integers stand for incarnation numbers; names are (kind, ident) pairs with
disjoint channel / location / incarnation-variable namespaces.
"""

from __future__ import annotations

from functools import lru_cache
from typing import Iterable, NamedTuple, Optional, Union


CHAN = "chan"
LOC = "loc"
IVAR = "ivar"

KINDS = (CHAN, LOC, IVAR)


class Name(NamedTuple):
    kind: str
    ident: str

    def __repr__(self):
        return f"{self.ident}:{self.kind[0]}"


ROOT = Name(LOC, "$root")

Value = Union[Name, int]
Proc = tuple
Item = tuple
Config = tuple


class SortViolation(Exception):
    """A name slot received a value of the wrong kind."""


class Network(NamedTuple):
    """Network state: incarnation map, symmetric link set, local views.

    ``alive``  -- sorted ((name, inc), ...) with no zero entries; the root
                  location is implicit and always mapped to 1.
    ``links``  -- sorted canonical (a, b) pairs with a <= b.
    ``views``  -- sorted ((name, ((peer, belief), ...)), ...) keeping only
                  strictly positive beliefs and non-empty view rows.
    """

    alive: tuple
    links: tuple
    views: tuple


class System(NamedTuple):
    restricted: tuple
    net: Network
    cfg: Config


NIL = ("nil",)
KILL = ("kill",)


def Out(ch, vals, cont=NIL):
    return ("out", ch, tuple(vals), cont)


def In(ch, binders, cont=NIL):
    binders = tuple(binders)
    if len(set(binders)) != len(binders):
        raise ValueError(f"duplicate binders in input: {binders}")
    return ("in", ch, binders, cont)


def Bang(ch, binders, cont=NIL):
    binders = tuple(binders)
    if len(set(binders)) != len(binders):
        raise ValueError(f"duplicate binders in replicated input: {binders}")
    return ("bang", ch, binders, cont)


def Res(name, body):
    if name == ROOT:
        raise ValueError("the root location cannot be restricted")
    if name.kind == IVAR:
        raise ValueError("restriction binds channels and locations only")
    return ("res", name, body)


def If(lhs, rhs, then, els=NIL):
    return ("if", lhs, rhs, then, els)


def Par(left, right):
    return ("par", left, right)


def NodeP(locvar, incvar, cont):
    return ("node", locvar, incvar, cont)


def Forget(loc, cont=NIL):
    return ("forget", loc, cont)


def Spawn(loc, body):
    return ("spawn", loc, body)


def Create(loc, body):
    if loc == ROOT:
        raise ValueError("the root location cannot be a create target")
    return ("create", loc, body)


def Link(loc, cont=NIL):
    return ("link", loc, cont)


def Unlink(loc, cont=NIL):
    return ("unlink", loc, cont)


def Go(loc, body):
    return ("go", loc, body)


def Located(proc, loc, inc):
    if inc < 1:
        raise ValueError(f"located incarnation must be positive, got {inc}")
    return ("proc", proc, loc, inc)


def SpawnMsg(target, tinc, proc, src, sinc):
    if tinc < 0:
        raise ValueError(f"message target incarnation must be >= 0, got {tinc}")
    if sinc < 1:
        raise ValueError(f"message source incarnation must be positive, got {sinc}")
    return ("msg", target, tinc, proc, src, sinc)


# ---------------------------------------------------------------------------
# free names / free incarnation variables


def _vals_names(vals):
    return frozenset(v for v in vals if isinstance(v, Name) and v.kind != IVAR)


def _vals_ivars(vals):
    return frozenset(v for v in vals if isinstance(v, Name) and v.kind == IVAR)


@lru_cache(maxsize=1 << 18)
def _fn_proc(p):
    tag = p[0]
    if tag in ("nil", "kill"):
        return frozenset()
    if tag == "out":
        _, ch, vals, cont = p
        return _vals_names(vals) | {ch} | _fn_proc(cont)
    if tag in ("in", "bang"):
        ch, binders, cont = p[1], p[2], p[3]
        return frozenset({ch}) | (_fn_proc(cont) - frozenset(binders))
    if tag == "res":
        _, w, body = p
        return _fn_proc(body) - {w}
    if tag == "if":
        _, l, r, then, els = p
        return _vals_names((l, r)) | _fn_proc(then) | _fn_proc(els)
    if tag == "par":
        return _fn_proc(p[1]) | _fn_proc(p[2])
    if tag == "node":
        _, locvar, _incvar, cont = p
        return _fn_proc(cont) - {locvar}
    if tag in ("forget", "spawn", "create", "link", "unlink", "go"):
        return _fn_proc(p[2]) | {p[1]}
    raise ValueError(f"unknown process tag {tag!r}")


@lru_cache(maxsize=1 << 18)
def _fv_proc(p):
    tag = p[0]
    if tag in ("nil", "kill"):
        return frozenset()
    if tag == "out":
        _, _ch, vals, cont = p
        return _vals_ivars(vals) | _fv_proc(cont)
    if tag in ("in", "bang"):
        binders, cont = p[2], p[3]
        return _fv_proc(cont) - frozenset(binders)
    if tag == "res":
        return _fv_proc(p[2])
    if tag == "if":
        _, l, r, then, els = p
        return _vals_ivars((l, r)) | _fv_proc(then) | _fv_proc(els)
    if tag == "par":
        return _fv_proc(p[1]) | _fv_proc(p[2])
    if tag == "node":
        _, _locvar, incvar, cont = p
        return _fv_proc(cont) - {incvar}
    if tag in ("forget", "spawn", "create", "link", "unlink", "go"):
        return _fv_proc(p[2])
    raise ValueError(f"unknown process tag {tag!r}")


def _fn_item(item):
    if item[0] == "proc":
        _, p, loc, _inc = item
        return _fn_proc(p) | {loc}
    _, target, _tinc, p, src, _sinc = item
    return _fn_proc(p) | {target, src}


def fn_network(net: Network):
    """supp(A) together with the endpoints of the link set."""
    names = {n for n, _ in net.alive}
    for a, b in net.links:
        names.add(a)
        names.add(b)
    names.discard(ROOT)
    return frozenset(names)


def free_names(term):
    """Free channel and location names of a process, item, config or system."""
    if isinstance(term, System):
        inner = fn_network(term.net)
        for item in term.cfg:
            inner |= _fn_item(item)
        return inner - frozenset(term.restricted)
    if isinstance(term, tuple) and term and isinstance(term[0], tuple):
        out = frozenset()
        for item in term:
            out |= _fn_item(item)
        return out
    if isinstance(term, tuple) and term and term[0] in ("proc", "msg"):
        return _fn_item(term)
    if term == ():
        return frozenset()
    return _fn_proc(term)


def free_inc_vars(term):
    """Free incarnation variables; node binds its incarnation variable."""
    if isinstance(term, System):
        out = frozenset()
        for item in term.cfg:
            out |= free_inc_vars(item)
        return out
    if isinstance(term, tuple) and term and isinstance(term[0], tuple):
        out = frozenset()
        for item in term:
            out |= free_inc_vars(item)
        return out
    if isinstance(term, tuple) and term and term[0] == "proc":
        return _fv_proc(term[1])
    if isinstance(term, tuple) and term and term[0] == "msg":
        return _fv_proc(term[3])
    if term == ():
        return frozenset()
    return _fv_proc(term)


# ---------------------------------------------------------------------------
# fresh names


def fresh_name(kind, base, avoid_idents):
    """First of base, base1, base2, ... whose ident is not in avoid_idents."""
    base = base.rstrip("0123456789") or "u"
    if base not in avoid_idents:
        return Name(kind, base)
    i = 1
    while f"{base}{i}" in avoid_idents:
        i += 1
    return Name(kind, f"{base}{i}")


def idents_of(names: Iterable[Name]):
    return {n.ident for n in names}


# ---------------------------------------------------------------------------
# substitution


def _subst_val(v, m):
    if isinstance(v, Name):
        return m.get(v, v)
    return v


def _subst_name(n, m, want_kind, what):
    v = m.get(n, n)
    if not isinstance(v, Name) or v.kind != want_kind:
        raise SortViolation(f"{what} position needs a {want_kind} name, got {v!r}")
    return v


def _live(m, binders):
    return {k: v for k, v in m.items() if k not in binders}


def _avoid_capture(binders, m, conts):
    """Rename binders that clash with names introduced by the mapping.

    Returns (new_binders, renaming) where renaming maps old binder names
    to fresh ones to be applied to the continuations first.
    """
    introduced = set()
    for v in m.values():
        if isinstance(v, Name):
            introduced.add(v)
    if not introduced.intersection(binders):
        return tuple(binders), {}
    avoid = set(idents_of(introduced))
    for k in m:
        avoid.add(k.ident)
    for c in conts:
        avoid |= idents_of(_fn_proc(c) | _fv_proc(c))
    renaming = {}
    out = []
    for b in binders:
        if b in introduced:
            nb = fresh_name(b.kind, b.ident, avoid)
            avoid.add(nb.ident)
            renaming[b] = nb
            out.append(nb)
        else:
            out.append(b)
    return tuple(out), renaming


def subst_proc(p, m):
    """Simultaneous capture-avoiding substitution on a process."""
    if not m:
        return p
    tag = p[0]
    if tag in ("nil", "kill"):
        return p
    if tag == "out":
        _, ch, vals, cont = p
        return ("out", _subst_name(ch, m, CHAN, "output subject"),
                tuple(_subst_val(v, m) for v in vals), subst_proc(cont, m))
    if tag in ("in", "bang"):
        ch, binders, cont = p[1], p[2], p[3]
        ch = _subst_name(ch, m, CHAN, "input subject")
        live = _live(m, binders)
        binders, renaming = _avoid_capture(binders, live, (cont,))
        if renaming:
            cont = subst_proc(cont, renaming)
        return (tag, ch, binders, subst_proc(cont, live)) + p[4:]
    if tag == "res":
        _, w, body = p
        live = _live(m, (w,))
        (w,), renaming = _avoid_capture((w,), live, (body,))
        if renaming:
            body = subst_proc(body, renaming)
        return ("res", w, subst_proc(body, live))
    if tag == "if":
        _, l, r, then, els = p
        return ("if", _subst_val(l, m), _subst_val(r, m),
                subst_proc(then, m), subst_proc(els, m))
    if tag == "par":
        return ("par", subst_proc(p[1], m), subst_proc(p[2], m))
    if tag == "node":
        _, locvar, incvar, cont = p
        live = _live(m, (locvar, incvar))
        (locvar, incvar), renaming = _avoid_capture((locvar, incvar), live, (cont,))
        if renaming:
            cont = subst_proc(cont, renaming)
        return ("node", locvar, incvar, subst_proc(cont, live))
    if tag in ("forget", "spawn", "create", "link", "unlink", "go"):
        return (tag, _subst_name(p[1], m, LOC, tag + " target"), subst_proc(p[2], m))
    raise ValueError(f"unknown process tag {tag!r}")


def subst_item(item, m):
    if item[0] == "proc":
        _, p, loc, inc = item
        return ("proc", subst_proc(p, m), _subst_name(loc, m, LOC, "located host"), inc)
    _, target, tinc, p, src, sinc = item
    return ("msg", _subst_name(target, m, LOC, "message target"), tinc,
            subst_proc(p, m), _subst_name(src, m, LOC, "message source"), sinc)


def subst_config(cfg, m):
    return tuple(subst_item(it, m) for it in cfg)


def substitute(term, m):
    """Substitution over any term layer; systems rename their network too."""
    from . import network as _network

    if isinstance(term, System):
        live = _live(m, term.restricted)
        if not live:
            return term
        net = term.net
        for k, v in live.items():
            if k.kind == LOC and isinstance(v, Name):
                net = _network.network_substitute(net, v, k)
        return System(term.restricted, net, subst_config(term.cfg, live))
    if isinstance(term, tuple) and term and isinstance(term[0], tuple):
        return subst_config(term, m)
    if isinstance(term, tuple) and term and term[0] in ("proc", "msg"):
        return subst_item(term, m)
    if term == ():
        return ()
    return subst_proc(term, m)


# ---------------------------------------------------------------------------
# alpha equality


def _alpha_proc(p, q, env1, env2, depth):
    if p[0] != q[0]:
        return False
    tag = p[0]

    def name_eq(a, b):
        da, db = env1.get(a), env2.get(b)
        if (da is None) != (db is None):
            return False
        if da is not None:
            return da == db
        return a == b

    def val_eq(a, b):
        if isinstance(a, Name) != isinstance(b, Name):
            return False
        if isinstance(a, Name):
            return name_eq(a, b)
        return a == b

    if tag in ("nil", "kill"):
        return True
    if tag == "out":
        return (name_eq(p[1], q[1]) and len(p[2]) == len(q[2])
                and all(val_eq(a, b) for a, b in zip(p[2], q[2]))
                and _alpha_proc(p[3], q[3], env1, env2, depth))
    if tag in ("in", "bang"):
        if not name_eq(p[1], q[1]) or len(p[2]) != len(q[2]) or p[4:] != q[4:]:
            return False
        if any(a.kind != b.kind for a, b in zip(p[2], q[2])):
            return False
        e1, e2 = dict(env1), dict(env2)
        for i, (a, b) in enumerate(zip(p[2], q[2])):
            e1[a] = e2[b] = depth + i
        return _alpha_proc(p[3], q[3], e1, e2, depth + len(p[2]))
    if tag == "res":
        if p[1].kind != q[1].kind:
            return False
        e1, e2 = dict(env1), dict(env2)
        e1[p[1]] = e2[q[1]] = depth
        return _alpha_proc(p[2], q[2], e1, e2, depth + 1)
    if tag == "if":
        return (val_eq(p[1], q[1]) and val_eq(p[2], q[2])
                and _alpha_proc(p[3], q[3], env1, env2, depth)
                and _alpha_proc(p[4], q[4], env1, env2, depth))
    if tag == "par":
        return (_alpha_proc(p[1], q[1], env1, env2, depth)
                and _alpha_proc(p[2], q[2], env1, env2, depth))
    if tag == "node":
        e1, e2 = dict(env1), dict(env2)
        e1[p[1]] = e2[q[1]] = depth
        e1[p[2]] = e2[q[2]] = depth + 1
        return _alpha_proc(p[3], q[3], e1, e2, depth + 2)
    if tag in ("forget", "spawn", "create", "link", "unlink", "go"):
        return name_eq(p[1], q[1]) and _alpha_proc(p[2], q[2], env1, env2, depth)
    raise ValueError(f"unknown process tag {tag!r}")


def _alpha_item(i1, i2, env1, env2, depth):
    if i1[0] != i2[0]:
        return False

    def name_eq(a, b):
        da, db = env1.get(a), env2.get(b)
        if (da is None) != (db is None):
            return False
        return da == db if da is not None else a == b

    if i1[0] == "proc":
        return (i1[3] == i2[3] and name_eq(i1[2], i2[2])
                and _alpha_proc(i1[1], i2[1], env1, env2, depth))
    return (i1[2] == i2[2] and i1[5] == i2[5]
            and name_eq(i1[1], i2[1]) and name_eq(i1[4], i2[4])
            and _alpha_proc(i1[3], i2[3], env1, env2, depth))


def _net_translated(net, env):
    def tr(n):
        d = env.get(n)
        return ("b", d) if d is not None else ("f", n)

    alive = tuple(sorted((tr(n), i) for n, i in net.alive))
    links = tuple(sorted(tuple(sorted((tr(a), tr(b)))) for a, b in net.links))
    views = tuple(sorted(
        (tr(n), tuple(sorted((tr(m), k) for m, k in row))) for n, row in net.views))
    return alive, links, views


def alpha_equal(s1, s2) -> bool:
    """Alpha equality: renames restriction and process binders only.

    Configuration items are compared in order; use the congruence module
    for equality modulo parallel commutation.
    """
    if isinstance(s1, System) != isinstance(s2, System):
        return False
    if isinstance(s1, System):
        if len(s1.restricted) != len(s2.restricted):
            return False
        if any(a.kind != b.kind for a, b in zip(s1.restricted, s2.restricted)):
            return False
        env1 = {n: i for i, n in enumerate(s1.restricted)}
        env2 = {n: i for i, n in enumerate(s2.restricted)}
        depth = len(s1.restricted)
        if _net_translated(s1.net, env1) != _net_translated(s2.net, env2):
            return False
        if len(s1.cfg) != len(s2.cfg):
            return False
        return all(_alpha_item(a, b, env1, env2, depth)
                   for a, b in zip(s1.cfg, s2.cfg))
    return _alpha_proc(s1, s2, {}, {}, 0)


# ---------------------------------------------------------------------------
# well-formedness


def net_alive_map(net: Network):
    d = dict(net.alive)
    d[ROOT] = 1
    return d


def well_formed(s: System) -> Optional[str]:
    """None when the system is closed and well-formed, else the first
    violated clause as a short report string."""
    fv = free_inc_vars(s)
    if fv:
        worst = min(fv)
        return f"not-closed {worst.ident}"
    a = net_alive_map(s.net)
    for n, row in s.net.views:
        for m, belief in row:
            if belief > abs(a.get(m, 0)):
                return f"view-bound {n.ident} {m.ident}"
    for item in s.cfg:
        if item[0] != "msg":
            continue
        _, target, tinc, _p, src, sinc = item
        if sinc > abs(a.get(src, 0)):
            return f"msg-src-bound {src.ident} {sinc}"
        if tinc > abs(a.get(target, 0)):
            return f"msg-target-bound {target.ident} {tinc}"
    return None


# ---------------------------------------------------------------------------
# deterministic term ordering (used by the canonical form and enumerators)


def value_key(v):
    if isinstance(v, Name):
        return (0, v.kind, v.ident)
    return (1, "", v)


def term_key(t):
    if isinstance(t, Name):
        return ("N", t.kind, t.ident)
    if isinstance(t, int):
        return ("I", "", t)
    if not t or not isinstance(t[0], str):
        # value or binder tuple, not a tagged term
        return ("T",) + tuple(term_key(c) for c in t)
    return (t[0],) + tuple(term_key(c) for c in t[1:])


def item_key(item):
    return term_key(item)


def network_key(net: Network):
    alive = tuple((term_key(n), i) for n, i in net.alive)
    links = tuple((term_key(a), term_key(b)) for a, b in net.links)
    views = tuple((term_key(n), tuple((term_key(m), k) for m, k in row))
                  for n, row in net.views)
    return (alive, links, views)


def system_key(s: System):
    return (tuple(item_key(i) for i in s.cfg),
            network_key(s.net),
            tuple(term_key(n) for n in s.restricted))


def term_idents(t) -> set:
    """Identifiers occurring anywhere in a process/item/config, bound or free."""
    out = set()

    def walk(p):
        if isinstance(p, Name):
            out.add(p.ident)
            return
        if isinstance(p, int):
            return
        tag = p[0]
        if tag in ("nil", "kill"):
            return
        if tag == "out":
            walk(p[1])
            for v in p[2]:
                walk(v)
            walk(p[3])
        elif tag in ("in", "bang"):
            walk(p[1])
            for b in p[2]:
                walk(b)
            walk(p[3])
        elif tag == "res":
            walk(p[1])
            walk(p[2])
        elif tag == "if":
            walk(p[1])
            walk(p[2])
            walk(p[3])
            walk(p[4])
        elif tag == "par":
            walk(p[1])
            walk(p[2])
        elif tag == "node":
            walk(p[1])
            walk(p[2])
            walk(p[3])
        elif tag in ("forget", "spawn", "create", "link", "unlink", "go"):
            walk(p[1])
            walk(p[2])
        elif tag == "proc":
            walk(p[1])
            walk(p[2])
        elif tag == "msg":
            walk(p[1])
            walk(p[3])
            walk(p[4])
        else:
            raise ValueError(f"unknown tag {tag!r}")

    walk(t)
    return out


def system_idents(s: System) -> set:
    out = set()
    for item in s.cfg:
        out |= term_idents(item)
    for n in s.restricted:
        out.add(n.ident)
    for n, _ in s.net.alive:
        out.add(n.ident)
    for a, b in s.net.links:
        out.add(a.ident)
        out.add(b.ident)
    for n, row in s.net.views:
        out.add(n.ident)
        for m, _ in row:
            out.add(m.ident)
    return out
