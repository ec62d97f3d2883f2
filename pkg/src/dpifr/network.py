"""Network state and its judgments, updates, substitution and bridging.

A network is a triple of an incarnation map A, a symmetric link set L and
per-location views V.  A(n) > 0 means alive at that incarnation, A(n) < 0
dead with |A(n)| the last incarnation, A(n) = 0 never present.  The root
location is always alive at incarnation 1 and is stored implicitly.
"""

from __future__ import annotations

from typing import Optional

from .syntax import (
    CHAN, IVAR, LOC, NIL, KILL, ROOT,
    Create, Forget, Link, Located, Name, Network, Spawn, SpawnMsg, Unlink,
)


class CaptureRisk(Exception):
    """network_substitute target name already present in the network."""


class PreconditionFailed(Exception):
    """network_bridge called on a pair violating the extension conditions."""

    def __init__(self, violated):
        self.violated = violated
        super().__init__(f"extension condition {violated[0]} violated: {violated[1]}")


def _pair(a, b):
    return (a, b) if a <= b else (b, a)


def make_network(alive=(), links=(), views=()) -> Network:
    """Normalize and validate a network triple.

    ``alive`` may be a mapping or iterable of (name, inc); zero entries are
    dropped, the root entry must be 1 if given.  ``views`` likewise, with
    inner rows as mappings or pair iterables; zero beliefs are dropped.
    """
    a = dict(alive.items()) if hasattr(alive, "items") else dict(alive)
    if a.get(ROOT, 1) != 1:
        raise ValueError("the root location is always alive at incarnation 1")
    a.pop(ROOT, None)
    a = {n: i for n, i in a.items() if i != 0}
    for n in a:
        if n.kind != LOC:
            raise ValueError(f"incarnation map key {n!r} is not a location")

    lset = set()
    for x, y in links:
        if x.kind != LOC or y.kind != LOC:
            raise ValueError(f"link endpoint {x!r}/{y!r} is not a location")
        lset.add(_pair(x, y))

    v = dict(views.items()) if hasattr(views, "items") else dict(views)
    rows = {}
    for n, row in v.items():
        row = dict(row.items()) if hasattr(row, "items") else dict(row)
        row = {m: k for m, k in row.items() if k != 0}
        for m, k in row.items():
            if k < 0:
                raise ValueError(f"negative belief {k} for {n!r} about {m!r}")
        if not row:
            continue
        if n != ROOT and a.get(n, 0) == 0:
            raise ValueError(f"view for {n!r} which is absent from the network")
        rows[n] = row

    return Network(
        alive=tuple(sorted(a.items())),
        links=tuple(sorted(lset)),
        views=tuple(sorted((n, tuple(sorted(r.items()))) for n, r in rows.items())),
    )


EMPTY = make_network()


def alive_map(net: Network) -> dict:
    d = dict(net.alive)
    d[ROOT] = 1
    return d


def views_map(net: Network) -> dict:
    return {n: dict(row) for n, row in net.views}


def a_of(net: Network, n: Name) -> int:
    if n == ROOT:
        return 1
    for k, v in net.alive:
        if k == n:
            return v
    return 0


def belief(net: Network, n: Name, m: Name) -> int:
    for k, row in net.views:
        if k == n:
            for p, b in row:
                if p == m:
                    return b
            return 0
    return 0


def judge(net: Network, query) -> bool:
    """Judgments: ('alive', n, inc), ('dead', n), ('link', n, m)."""
    tag = query[0]
    if tag == "alive":
        _, n, inc = query
        return inc > 0 and a_of(net, n) == inc
    if tag == "dead":
        return a_of(net, query[1]) <= 0
    if tag == "link":
        _, n, m = query
        return _pair(n, m) in net.links
    raise ValueError(f"unknown judgment {tag!r}")


def is_alive(net: Network, n: Name, inc: int) -> bool:
    return inc > 0 and a_of(net, n) == inc


def is_dead(net: Network, n: Name) -> bool:
    return a_of(net, n) <= 0


def has_link(net: Network, n: Name, m: Name) -> bool:
    return _pair(n, m) in net.links


# ---------------------------------------------------------------------------
# updates


def AddLink(n, m):
    return ("addlink", n, m)


def DelLink(n, m):
    return ("dellink", n, m)


def Activate(n, inc):
    if inc < 1:
        raise ValueError("activation incarnation must be positive")
    return ("activate", n, inc)


def Kill(n, inc):
    if inc < 1:
        raise ValueError("kill incarnation must be positive")
    return ("kill", n, inc)


def SetBelief(n, m, inc):
    return ("setbelief", n, m, inc)


def DropBelief(n, m):
    return ("dropbelief", n, m)


def apply(net: Network, update) -> Network:
    """Apply one of the seven update clauses; updates are total."""
    tag = update[0]
    a = dict(net.alive)
    links = set(net.links)
    views = views_map(net)

    if tag == "addlink":
        links.add(_pair(update[1], update[2]))
    elif tag == "dellink":
        links.discard(_pair(update[1], update[2]))
    elif tag == "activate":
        _, n, inc = update
        a[n] = inc
        views.pop(n, None)
    elif tag == "kill":
        _, n, inc = update
        a[n] = -inc
    elif tag == "setbelief":
        _, n, m, inc = update
        if n != m:
            row = views.setdefault(n, {})
            row[m] = inc
    elif tag == "dropbelief":
        _, n, m = update
        if n != m and n in views:
            views[n].pop(m, None)
    else:
        raise ValueError(f"unknown update {tag!r}")
    return make_network(a, links, views)


# ---------------------------------------------------------------------------
# substitution (for alpha conversion on systems)


def network_substitute(net: Network, v: Name, u: Name) -> Network:
    """Rename u to v throughout the network.

    Only acts when both names are locations; the incarnation entry and the
    view row of u move to v, u is zeroed, link endpoints and view row keys
    are renamed.
    """
    if u.kind != LOC or v.kind != LOC or u == v or u == ROOT or v == ROOT:
        return net
    a = dict(net.alive)
    if v in a:
        raise CaptureRisk(f"{v!r} already present in the incarnation map")

    if u in a:
        a[v] = a.pop(u)

    def ren(x):
        return v if x == u else x

    links = {_pair(ren(x), ren(y)) for x, y in net.links}

    old = views_map(net)
    views = {}
    for n, row in old.items():
        key = v if n == u else n
        views[key] = {ren(m): b for m, b in row.items()}
    return make_network(a, links, views)


# ---------------------------------------------------------------------------
# extension conditions (can a context drive net to net2?)


def _alive_able(a, a2, n):
    return a.get(n, 0) > 0 or abs(a.get(n, 0)) < abs(a2.get(n, 0))


def extension_ok(net: Network, net2: Network, restricted) -> Optional[tuple]:
    """None when a context can drive ``net`` to ``net2``; otherwise the
    first violated condition as (index, detail)."""
    restricted = {r for r in restricted if r.kind == LOC}
    a, a2 = alive_map(net), alive_map(net2)
    v, v2 = views_map(net), views_map(net2)

    for n in sorted(restricted):
        if a.get(n, 0) != a2.get(n, 0):
            return (1, f"{n.ident} changes under restriction")

    for n in sorted(set(a) | set(a2)):
        x, y = a.get(n, 0), a2.get(n, 0)
        if x == y or abs(x) < abs(y) or (y == -x and x >= 0):
            continue
        return (2, f"{y} is not in the future of {x} for {n.ident}")

    changed_links = set(net.links).symmetric_difference(net2.links)
    for x, y in sorted(changed_links):
        if x in restricted or y in restricted:
            return (3, f"link {x.ident}<->{y.ident} touches a restricted name")
        if not (_alive_able(a, a2, x) or _alive_able(a, a2, y)):
            return (3, f"no end of {x.ident}<->{y.ident} is ever alive")

    keys = set(v) | set(v2)
    peers = {m for row in list(v.values()) + list(v2.values()) for m in row}
    for n in sorted(keys):
        if n in restricted and v.get(n, {}) != v2.get(n, {}):
            return (4, f"view of restricted {n.ident} changes")
    for n in sorted(keys):
        for m in sorted(peers | set(v.get(n, {})) | set(v2.get(n, {}))):
            if m in restricted and v.get(n, {}).get(m, 0) != v2.get(n, {}).get(m, 0):
                return (4, f"belief about restricted {m.ident} changes")

    for n in sorted(keys):
        row, row2 = v.get(n, {}), v2.get(n, {})
        for m in sorted(set(row) | set(row2)):
            old, new = row.get(m, 0), row2.get(m, 0)
            if old == new:
                continue
            if new != 0:
                if not _alive_able(a, a2, n):
                    return (5, f"{n.ident} can never receive the belief about {m.ident}")
                if new > abs(a2.get(m, 0)):
                    return (5, f"belief {new} exceeds the final incarnation of {m.ident}")
            else:
                if not _alive_able(a, a2, n):
                    return (6, f"{n.ident} can never forget {m.ident}")
    return None


# ---------------------------------------------------------------------------
# bridge construction


def _ladder(start, goal):
    """Kill/create counts walking an incarnation value to a future one."""
    kills = creates = 0
    cur = start
    while cur != goal:
        if cur > 0:
            kills += 1
            cur = -cur
        else:
            creates += 1
            cur = abs(cur) + 1
    return kills, creates


def network_bridge(net: Network, net2: Network, restricted) -> tuple:
    """Configuration of root-hosted processes and stale messages that can
    drive ``net`` to ``net2`` through ordinary reductions.

    The pieces mirror the constructive argument: kill/create ladders with
    transient root links for the incarnation map, link/unlink probes spawned
    on an end that is alive at some point for the link set, and forget
    processes, stale messages or future double-spawns for the views.
    """
    bad = extension_ok(net, net2, restricted)
    if bad is not None:
        raise PreconditionFailed(bad)

    a, a2 = alive_map(net), alive_map(net2)
    v, v2 = views_map(net), views_map(net2)
    pieces = []
    root_touch = set()   # locations needing root link toggles + root forget
    spawn_targets = set()  # locations receiving at least one root spawn

    def at_root(p):
        return Located(p, ROOT, 1)

    def spawn_from_root(target, body):
        spawn_targets.add(target)
        root_touch.add(target)
        if target == ROOT:
            pieces.append(at_root(body))
        else:
            pieces.append(at_root(Spawn(target, body)))

    # incarnation ladders
    for n in sorted(set(a) | set(a2)):
        if n == ROOT or a.get(n, 0) == a2.get(n, 0):
            continue
        kills, creates = _ladder(a.get(n, 0), a2.get(n, 0))
        for _ in range(kills):
            spawn_from_root(n, KILL)
        for _ in range(creates):
            pieces.append(at_root(Create(n, NIL)))

    # link changes, spawned on whichever end can be alive
    for x, y in sorted(set(net.links).symmetric_difference(net2.links)):
        make = _pair(x, y) in set(net2.links)
        body = Link if make else Unlink
        ends = [e for e in (x, y) if e == ROOT or _alive_able(a, a2, e)]
        for e in ends:
            other = y if e == x else x
            spawn_from_root(e, body(other))

    # view changes
    stable_links = set(net.links) & set(net2.links)
    keys = set(v) | set(v2)
    for n in sorted(keys):
        row, row2 = v.get(n, {}), v2.get(n, {})
        for m in sorted(set(row) | set(row2)):
            old, new = row.get(m, 0), row2.get(m, 0)
            if old == new:
                continue
            if new == 0:
                spawn_from_root(n, Forget(m))
                continue
            # the n<->m link must hold while the belief is delivered
            if _pair(n, m) not in stable_links:
                if ROOT in (n, m):
                    root_touch.add(m if n == ROOT else n)
                else:
                    spawn_from_root(n, Link(m))
                    spawn_from_root(n, Unlink(m))
            if new <= abs(a.get(m, 0)):
                # a stale message from m carries the belief
                if old > new:
                    spawn_from_root(n, Forget(m))
                pieces.append(SpawnMsg(n, 0, NIL, m, new))
            else:
                # future belief: m spawns to n while climbing its ladder
                spawn_from_root(m, Spawn(n, NIL))

    # root spawns leave a belief about the root on their target; scrub it
    # when the goal view holds none
    for e in sorted(spawn_targets):
        if e != ROOT and v2.get(e, {}).get(ROOT, 0) == 0:
            spawn_from_root(e, Forget(ROOT))

    # shared scaffolding per touched location: clean root belief so spawn
    # commits stay deliverable, and toggle the root link both ways
    for e in sorted(root_touch):
        if e == ROOT:
            continue
        pieces.append(at_root(Forget(e)))
        pieces.append(at_root(Link(e)))
        pieces.append(at_root(Unlink(e)))

    return tuple(pieces)
