"""Concrete syntax for systems (.dpi files): parser and pretty-printer.

Grammar (frozen):

    system  := ("new" "(" namelist ")")? "net" "{" netbody "}" "|>" config
    netbody := ("alive:" aliveitems)? (";" "links:" linkitems)?
               (";" "views:" viewitems)?
    config  := "0" | item ("||" item)*
    item    := "[" proc "]" "@" LOC ":" INT
             | "spawnmsg" "(" LOC "," INT ")" "[" proc "]" "@" LOC ":" INT
    proc    := "0" | "out" CHAN "<" vals ">" ("." proc)?
             | CHAN "(" binders ")" "." proc | "!" CHAN "(" binders ")" "." proc
             | "new" NAME "." proc | "if" val "=" val "then" proc "else" proc
             | proc "|" proc | "node" "(" LOC "," IVAR ")" "." proc
             | "forget" LOC "." proc | "spawn" LOC "{" proc "}"
             | "go" LOC "{" proc "}" | "kill" | "create" LOC "{" proc "}"
             | "link" LOC ("." proc)? | "unlink" LOC ("." proc)?
             | "(" proc ")"

`$root` names the distinguished persistent location.  Name kinds are not
declared; they are inferred from the first position that determines one
(output subject makes a channel, a spawn target makes a location, and so
on) and a later conflicting use is a SortError.  Prefix continuations bind
tighter than `|`; use parentheses to put a parallel under a prefix.
"""

from __future__ import annotations

import re
from typing import NamedTuple, Optional

from . import network as networkmod
from .syntax import (
    CHAN, IVAR, LOC, NIL, KILL, ROOT,
    Name, Network, System,
)


class SourceSpan(NamedTuple):
    line: int
    col: int
    end_line: int
    end_col: int

    def __str__(self):
        return f"{self.line}:{self.col}"


class ParseError(Exception):
    def __init__(self, msg, span: SourceSpan):
        self.span = span
        super().__init__(f"{span}: {msg}")


class SortError(ParseError):
    pass


_TOKEN_RE = re.compile(r"""
    (?P<ws>\s+|//[^\n]*)
  | (?P<int>-?\d+)
  | (?P<ident>\$root|[A-Za-z_][A-Za-z0-9_']*)
  | (?P<sym><->|\|\||\|>|[(){}\[\]<>@:;,.=!|])
""", re.VERBOSE)

KEYWORDS = {"new", "net", "alive", "links", "views", "out", "if", "then",
            "else", "node", "forget", "spawn", "go", "kill", "create",
            "link", "unlink", "spawnmsg"}


class Token(NamedTuple):
    kind: str   # 'int' | 'ident' | 'kw' | 'sym' | 'eof'
    text: str
    span: SourceSpan


def _tokenize(text):
    tokens = []
    line, col = 1, 1
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise ParseError(f"unexpected character {text[pos]!r}",
                             SourceSpan(line, col, line, col + 1))
        lexeme = m.group(0)
        start_line, start_col = line, col
        for ch in lexeme:
            if ch == "\n":
                line += 1
                col = 1
            else:
                col += 1
        pos = m.end()
        if m.lastgroup == "ws":
            continue
        span = SourceSpan(start_line, start_col, line, col)
        if m.lastgroup == "int":
            tokens.append(Token("int", lexeme, span))
        elif m.lastgroup == "ident":
            kind = "kw" if lexeme in KEYWORDS else "ident"
            tokens.append(Token(kind, lexeme, span))
        else:
            tokens.append(Token("sym", lexeme, span))
    end = SourceSpan(line, col, line, col)
    tokens.append(Token("eof", "", end))
    return tokens


class _NameTable:
    """Kind and channel-arity inference over lexical scopes.

    Each binder occurrence opens a fresh cell for its identifier; free
    identifiers share one global cell.  The first kind-determining use wins
    and later conflicts raise SortError, as do channel arity conflicts.
    """

    def __init__(self):
        self.globals = {}
        self.scopes = []   # stack of {ident: cell}
        self.warnings = []

    def push(self, idents_with_spans):
        frame = {}
        for ident, span in idents_with_spans:
            frame[ident] = {"ident": ident, "kind": None, "span": span,
                            "arity": None, "binder": True}
        self.scopes.append(frame)
        return frame

    def pop(self):
        self.scopes.pop()

    def cell(self, ident, span):
        for frame in reversed(self.scopes):
            if ident in frame:
                return frame[ident]
        if ident not in self.globals:
            self.globals[ident] = {"ident": ident, "kind": None, "span": span,
                                   "arity": None, "binder": False}
        return self.globals[ident]

    def use(self, ident, span, kind=None, arity=None):
        if ident == "$root":
            if kind not in (None, LOC):
                raise SortError("$root is a location", span)
            return {"ident": ident, "kind": LOC, "root": True}
        cell = self.cell(ident, span)
        if kind is not None:
            if cell["kind"] is None:
                cell["kind"] = kind
                cell["span"] = span
            elif cell["kind"] != kind:
                raise SortError(
                    f"{ident} used as {kind} but first used as {cell['kind']} "
                    f"at {cell['span']}", span)
        if arity is not None:
            if cell["arity"] is None:
                cell["arity"] = arity
            elif cell["arity"] != arity:
                raise SortError(
                    f"channel {ident} used with arity {arity} "
                    f"after arity {cell['arity']}", span)
        return cell


class _Parser:
    def __init__(self, text):
        self.tokens = _tokenize(text)
        self.pos = 0
        self.names = _NameTable()

    # -- token plumbing

    def peek(self):
        return self.tokens[self.pos]

    def next(self):
        t = self.tokens[self.pos]
        self.pos += 1
        return t

    def expect(self, text):
        t = self.next()
        if t.text != text:
            raise ParseError(f"expected {text!r}, found {t.text or 'end of input'!r}",
                             t.span)
        return t

    def at(self, text):
        return self.peek().text == text

    def eat(self, text):
        if self.at(text):
            return self.next()
        return None

    # -- names

    def loc(self, allow_root=True):
        t = self.next()
        if t.kind != "ident":
            raise ParseError(f"expected a location name, found {t.text or 'end of input'!r}", t.span)
        if t.text == "$root":
            if not allow_root:
                raise ParseError("$root not allowed here", t.span)
            return ROOT
        cell = self.names.use(t.text, t.span, kind=LOC)
        return ("name", t.text, cell)

    def value(self):
        t = self.next()
        if t.kind == "int":
            v = int(t.text)
            if v < 0:
                self.names.warnings.append(
                    f"{t.span}: negative incarnation literal {v} in value position")
            return v
        if t.kind == "ident":
            if t.text == "$root":
                return ROOT
            cell = self.names.use(t.text, t.span)
            return ("name", t.text, cell)
        raise ParseError(f"expected a value, found {t.text or 'end of input'!r}", t.span)

    # -- system

    def system(self):
        restricted = []
        if self.at("new"):
            self.next()
            self.expect("(")
            while True:
                t = self.next()
                if t.kind != "ident" or t.text == "$root":
                    raise ParseError("restriction binders are plain names", t.span)
                if any(t.text == r[1] for r in restricted):
                    raise ParseError(f"duplicate restriction binder {t.text}", t.span)
                restricted.append(("name", t.text, self.names.use(t.text, t.span)))
                if not self.eat(","):
                    break
            self.expect(")")
        self.expect("net")
        self.expect("{")
        net = self.netbody()
        self.expect("}")
        self.expect("|>")
        cfg = self.config()
        t = self.next()
        if t.kind != "eof":
            raise ParseError(f"trailing input {t.text!r}", t.span)
        return restricted, net, cfg

    def netbody(self):
        alive, links, views = [], [], []
        if self.eat("alive"):
            self.expect(":")
            while self.peek().kind == "ident":
                n = self.loc()
                self.expect("@")
                t = self.next()
                if t.kind != "int":
                    raise ParseError("expected an incarnation number", t.span)
                alive.append((n, int(t.text)))
                if not self.eat(","):
                    break
        if self.eat(";"):
            self.expect("links")
            self.expect(":")
            while self.peek().kind == "ident":
                a = self.loc()
                self.expect("<->")
                b = self.loc()
                links.append((a, b))
                if not self.eat(","):
                    break
        if self.eat(";"):
            self.expect("views")
            self.expect(":")
            while self.peek().kind == "ident":
                n = self.loc()
                self.expect(":")
                self.expect("{")
                row = []
                while self.peek().kind == "ident":
                    m = self.loc()
                    self.expect(":")
                    t = self.next()
                    if t.kind != "int":
                        raise ParseError("expected a belief (non-negative int)", t.span)
                    if int(t.text) < 0:
                        raise ParseError("beliefs must be non-negative", t.span)
                    row.append((m, int(t.text)))
                    if not self.eat(","):
                        break
                self.expect("}")
                views.append((n, row))
                if not self.eat(","):
                    break
        return alive, links, views

    def config(self):
        if self.peek().kind == "int" and self.peek().text == "0":
            self.next()
            return []
        items = [self.item()]
        while self.eat("||"):
            items.append(self.item())
        return items

    def item(self):
        if self.at("spawnmsg"):
            t0 = self.next()
            self.expect("(")
            target = self.loc()
            self.expect(",")
            t = self.next()
            if t.kind != "int" or int(t.text) < 0:
                raise ParseError("message target incarnation must be >= 0", t.span)
            tinc = int(t.text)
            self.expect(")")
            self.expect("[")
            p = self.proc_par()
            self.expect("]")
            self.expect("@")
            src = self.loc()
            self.expect(":")
            t = self.next()
            if t.kind != "int" or int(t.text) < 1:
                raise ParseError("message source incarnation must be positive", t.span)
            return ("msgitem", target, tinc, p, src, int(t.text), t0.span)
        t0 = self.expect("[")
        p = self.proc_par()
        self.expect("]")
        self.expect("@")
        loc = self.loc()
        self.expect(":")
        t = self.next()
        if t.kind != "int" or int(t.text) < 1:
            raise ParseError("located incarnation must be positive", t.span)
        return ("locitem", p, loc, int(t.text), t0.span)

    # -- processes

    def proc_par(self):
        p = self.proc_prefix()
        while self.eat("|"):
            q = self.proc_prefix()
            p = ("rpar", p, q)
        return p

    def proc_prefix(self):
        t = self.peek()
        if t.text == "0" and t.kind == "int":
            self.next()
            return ("rnil",)
        if t.text == "(":
            self.next()
            p = self.proc_par()
            self.expect(")")
            return p
        if t.text == "kill":
            self.next()
            return ("rkill",)
        if t.text == "out":
            self.next()
            vals = []
            ch_name = self.next()
            if ch_name.kind != "ident" or ch_name.text == "$root":
                raise ParseError("expected a channel after out", ch_name.span)
            self.expect("<")
            if not self.at(">"):
                vals.append(self.value())
                while self.eat(","):
                    vals.append(self.value())
            self.expect(">")
            cell = self.names.use(ch_name.text, ch_name.span, kind=CHAN,
                                  arity=len(vals))
            cont = self.opt_cont()
            return ("rout", ("name", ch_name.text, cell), vals, cont)
        if t.text == "new":
            self.next()
            b = self.next()
            if b.kind != "ident" or b.text == "$root":
                raise ParseError("expected a binder after new", b.span)
            self.expect(".")
            frame = self.names.push([(b.text, b.span)])
            body = self.proc_prefix()
            self.names.pop()
            return ("rres", (b.text, frame[b.text]), body)
        if t.text == "if":
            self.next()
            l = self.value()
            self.expect("=")
            r = self.value()
            self.expect("then")
            then = self.proc_prefix()
            self.expect("else")
            els = self.proc_prefix()
            return ("rif", l, r, then, els)
        if t.text == "node":
            self.next()
            self.expect("(")
            lv = self.next()
            if lv.kind != "ident" or lv.text == "$root":
                raise ParseError("expected a location binder", lv.span)
            self.expect(",")
            iv = self.next()
            if iv.kind != "ident" or iv.text == "$root":
                raise ParseError("expected an incarnation binder", iv.span)
            self.expect(")")
            self.expect(".")
            frame = self.names.push([(lv.text, lv.span), (iv.text, iv.span)])
            frame[lv.text]["kind"] = LOC
            frame[iv.text]["kind"] = IVAR
            body = self.proc_prefix()
            self.names.pop()
            return ("rnode", (lv.text, frame[lv.text]), (iv.text, frame[iv.text]), body)
        if t.text == "forget":
            self.next()
            n = self.loc()
            self.expect(".")
            return ("rforget", n, self.proc_prefix())
        if t.text in ("spawn", "go", "create"):
            self.next()
            n = self.loc(allow_root=(t.text != "create"))
            self.expect("{")
            body = self.proc_par()
            self.expect("}")
            return ("r" + t.text, n, body)
        if t.text in ("link", "unlink"):
            self.next()
            n = self.loc()
            cont = self.opt_cont()
            return ("r" + t.text, n, cont)
        if t.text == "!":
            self.next()
            return self.input_proc(bang=True)
        if t.kind == "ident" and t.text != "$root":
            return self.input_proc(bang=False)
        raise ParseError(f"expected a process, found {t.text or 'end of input'!r}", t.span)

    def input_proc(self, bang):
        ch = self.next()
        if ch.kind != "ident" or ch.text == "$root":
            raise ParseError("expected a channel", ch.span)
        self.expect("(")
        binders = []
        if not self.at(")"):
            while True:
                b = self.next()
                if b.kind != "ident" or b.text == "$root":
                    raise ParseError("expected a binder", b.span)
                if any(b.text == x[0] for x in binders):
                    raise ParseError(f"duplicate binder {b.text}", b.span)
                binders.append((b.text, b.span))
                if not self.eat(","):
                    break
        self.expect(")")
        self.expect(".")
        cell = self.names.use(ch.text, ch.span, kind=CHAN, arity=len(binders))
        frame = self.names.push(binders)
        body = self.proc_prefix()
        self.names.pop()
        tag = "rbang" if bang else "rin"
        return (tag, ("name", ch.text, cell),
                tuple((b, frame[b]) for b, _ in binders), body)

    def opt_cont(self):
        if self.eat("."):
            return self.proc_prefix()
        return ("rnil",)


def _resolve_name(raw):
    if isinstance(raw, Name):
        return raw
    _, ident, cell = raw
    kind = cell.get("kind") or CHAN
    return Name(kind, ident)


def _resolve_proc(p):
    tag = p[0]
    if tag == "rnil":
        return NIL
    if tag == "rkill":
        return KILL
    if tag == "rout":
        return ("out", _resolve_name(p[1]),
                tuple(v if isinstance(v, (int, Name)) else _resolve_name(v)
                      for v in p[2]),
                _resolve_proc(p[3]))
    if tag in ("rin", "rbang"):
        return (tag[1:], _resolve_name(p[1]),
                tuple(Name(cell.get("kind") or CHAN, b) for b, cell in p[2]),
                _resolve_proc(p[3]))
    if tag == "rres":
        ident, cell = p[1]
        return ("res", Name(cell.get("kind") or CHAN, ident), _resolve_proc(p[2]))
    if tag == "rif":
        conv = lambda v: v if isinstance(v, (int, Name)) else _resolve_name(v)
        return ("if", conv(p[1]), conv(p[2]), _resolve_proc(p[3]), _resolve_proc(p[4]))
    if tag == "rpar":
        return ("par", _resolve_proc(p[1]), _resolve_proc(p[2]))
    if tag == "rnode":
        lv, ic = p[1], p[2]
        return ("node", Name(LOC, lv[0]), Name(IVAR, ic[0]), _resolve_proc(p[3]))
    if tag in ("rforget", "rspawn", "rgo", "rcreate", "rlink", "runlink"):
        return (tag[1:], _resolve_name(p[1]), _resolve_proc(p[2]))
    raise ValueError(tag)


def parse_system(text: str):
    """Parse a .dpi source into a System.

    Returns (system, warnings).  Raises ParseError / SortError with spans.
    """
    parser = _Parser(text)
    raw_restricted, raw_net, raw_cfg = parser.system()

    restricted = tuple(_resolve_name(r) for r in raw_restricted)
    alive = {}
    for n, inc in raw_net[0]:
        name = _resolve_name(n)
        if name == ROOT:
            if inc != 1:
                raise ParseError("$root is always alive at incarnation 1",
                                 SourceSpan(0, 0, 0, 0))
            continue
        if name in alive:
            raise ParseError(f"duplicate alive entry for {name.ident}",
                             SourceSpan(0, 0, 0, 0))
        alive[name] = inc
    links = [( _resolve_name(a), _resolve_name(b)) for a, b in raw_net[1]]
    views = {}
    for n, row in raw_net[2]:
        views[_resolve_name(n)] = {_resolve_name(m): k for m, k in row}
    try:
        net = networkmod.make_network(alive, links, views)
    except ValueError as e:
        raise ParseError(str(e), SourceSpan(0, 0, 0, 0))

    items = []
    for it in raw_cfg:
        if it[0] == "locitem":
            _, p, loc, inc, span = it
            items.append(("proc", _resolve_proc(p), _resolve_name(loc), inc))
        else:
            _, target, tinc, p, src, sinc, span = it
            items.append(("msg", _resolve_name(target), tinc,
                          _resolve_proc(p), _resolve_name(src), sinc))

    for r in restricted:
        if r == ROOT:
            raise ParseError("$root cannot be restricted", SourceSpan(0, 0, 0, 0))

    return System(restricted, net, tuple(items)), parser.names.warnings


# ---------------------------------------------------------------------------
# printing


def _print_value(v):
    if isinstance(v, Name):
        return v.ident
    return str(v)


_PAR, _PREFIX = 0, 1


def _print_proc(p, level=_PAR):
    tag = p[0]
    if tag == "nil":
        return "0"
    if tag == "kill":
        return "kill"
    if tag == "par":
        s = f"{_print_proc(p[1], _PREFIX)} | {_print_proc(p[2], _PAR)}"
        return f"({s})" if level == _PREFIX else s
    if tag == "out":
        vals = ",".join(_print_value(v) for v in p[2])
        cont = "" if p[3] == NIL else f".{_print_proc(p[3], _PREFIX)}"
        return f"out {p[1].ident}<{vals}>{cont}"
    if tag in ("in", "bang"):
        binders = ",".join(b.ident for b in p[2])
        head = "!" if tag == "bang" else ""
        return f"{head}{p[1].ident}({binders}).{_print_proc(p[3], _PREFIX)}"
    if tag == "res":
        return f"new {p[1].ident}.{_print_proc(p[2], _PREFIX)}"
    if tag == "if":
        return (f"if {_print_value(p[1])} = {_print_value(p[2])} "
                f"then {_print_proc(p[3], _PREFIX)} else {_print_proc(p[4], _PREFIX)}")
    if tag == "node":
        return f"node({p[1].ident},{p[2].ident}).{_print_proc(p[3], _PREFIX)}"
    if tag == "forget":
        return f"forget {p[1].ident}.{_print_proc(p[2], _PREFIX)}"
    if tag in ("spawn", "go", "create"):
        return f"{tag} {p[1].ident} {{{_print_proc(p[2], _PAR)}}}"
    if tag in ("link", "unlink"):
        cont = "" if p[2] == NIL else f".{_print_proc(p[2], _PREFIX)}"
        return f"{tag} {p[1].ident}{cont}"
    raise ValueError(tag)


def print_network(net: Network) -> str:
    def sec(label, body):
        return f"{label}: {body}" if body else f"{label}:"

    alive = ", ".join(f"{n.ident}@{i}" for n, i in net.alive)
    links = ", ".join(f"{a.ident}<->{b.ident}" for a, b in net.links)
    views = ", ".join(
        f"{n.ident}:{{{', '.join(f'{m.ident}:{k}' for m, k in row)}}}"
        for n, row in net.views)
    body = "; ".join((sec("alive", alive), sec("links", links), sec("views", views)))
    return f"net {{ {body} }}"


def _print_item(item):
    if item[0] == "proc":
        _, p, loc, inc = item
        return f"[{_print_proc(p)}]@{loc.ident}:{inc}"
    _, target, tinc, p, src, sinc = item
    return f"spawnmsg({target.ident},{tinc})[{_print_proc(p)}]@{src.ident}:{sinc}"


def print_system(s: System) -> str:
    parts = []
    if s.restricted:
        parts.append(f"new ({', '.join(n.ident for n in s.restricted)})")
    parts.append(print_network(s.net))
    parts.append("|>")
    if not s.cfg:
        parts.append("0")
    else:
        parts.append(" || ".join(_print_item(it) for it in s.cfg))
    return " ".join(parts)


def load_system(path):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_system(fh.read())
