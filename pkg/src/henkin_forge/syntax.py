"""First-order terms, formulas and signatures.

Formulas are immutable dataclasses.  Every formula has a canonical
serialization (prefix notation, prefix-free) and sentences are totally
ordered by ``(depth, canonical serialization)``.  The enumeration
functions at the bottom of this module produce formulas lazily in that
order, which is what the Lindenbaum and Henkin constructions iterate over.
"""
from __future__ import annotations

import heapq
import re
from dataclasses import dataclass, field
from functools import cached_property
from itertools import product
from operator import itemgetter
from typing import Iterable, Iterator, Mapping, Optional, Union

NAME_RE = re.compile(r"[A-Za-z_'][A-Za-z0-9_']*\Z")
WITNESS_RE = re.compile(r"w\$\d+\$\d+\Z")
RESERVED_PREFIX = "w$"


class SyntaxError_(ValueError):
    """Lexical/grammatical/signature error with a source position."""

    def __init__(self, message: str, line: int = 0, column: int = 0):
        self.message = message
        self.line = line
        self.column = column
        where = f"{line}:{column}: " if line else ""
        super().__init__(f"{where}{message}")


ParseError = SyntaxError_


# ---------------------------------------------------------------- signatures


def _valid_name(name: str, allow_witness: bool) -> bool:
    if NAME_RE.match(name):
        return True
    return allow_witness and bool(WITNESS_RE.match(name))


@dataclass(frozen=True)
class Signature:
    functions: tuple = ()
    relations: tuple = ()

    def __post_init__(self):
        fns = tuple(sorted(dict(self.functions).items()))
        rels = tuple(sorted(dict(self.relations).items()))
        if len(fns) != len(tuple(self.functions)) or len(rels) != len(tuple(self.relations)):
            raise SyntaxError_("duplicate symbol in signature")
        for name, arity in fns + rels:
            if not _valid_name(name, allow_witness=True):
                raise SyntaxError_(f"invalid symbol name {name!r}")
            if not isinstance(arity, int) or arity < 0:
                raise SyntaxError_(f"invalid arity {arity!r} for {name}")
        clash = set(dict(fns)) & set(dict(rels))
        if clash:
            raise SyntaxError_(f"symbol used as function and relation: {sorted(clash)[0]}")
        object.__setattr__(self, "functions", fns)
        object.__setattr__(self, "relations", rels)

    @classmethod
    def of(cls, functions: Mapping[str, int] | None = None,
           relations: Mapping[str, int] | None = None) -> "Signature":
        return cls(tuple((functions or {}).items()), tuple((relations or {}).items()))

    @cached_property
    def fn_arity(self) -> dict:
        return dict(self.functions)

    @cached_property
    def rel_arity(self) -> dict:
        return dict(self.relations)

    @cached_property
    def constants(self) -> tuple:
        return tuple(n for n, a in self.functions if a == 0)

    @property
    def is_user(self) -> bool:
        return not any(n.startswith(RESERVED_PREFIX) for n, _ in self.functions + self.relations)

    def extend(self, functions: Mapping[str, int] = (), relations: Mapping[str, int] = ()) -> "Signature":
        fns = dict(self.functions)
        rels = dict(self.relations)
        for k, v in dict(functions).items():
            if k in fns or k in rels:
                raise SyntaxError_(f"duplicate symbol {k}")
            fns[k] = v
        for k, v in dict(relations).items():
            if k in fns or k in rels:
                raise SyntaxError_(f"duplicate symbol {k}")
            rels[k] = v
        return Signature.of(fns, rels)

    def __str__(self):
        parts = [f"{n}/{a}" for n, a in self.functions]
        parts += [f"{n}/{a}" for n, a in self.relations]
        return "{" + ", ".join(parts) + "}"


# --------------------------------------------------------------------- terms


@dataclass(frozen=True)
class Var:
    name: str

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class App:
    fn: str
    args: tuple = ()

    def __str__(self):
        if not self.args:
            return self.fn
        return f"{self.fn}({', '.join(map(str, self.args))})"


Term = Union[Var, App]


def const(name: str) -> App:
    return App(name, ())


def app(fn: str, *args: Term) -> App:
    return App(fn, tuple(args))


def term_depth(t: Term) -> int:
    if isinstance(t, Var) or not t.args:
        return 0
    return 1 + max(term_depth(a) for a in t.args)


def term_vars(t: Term) -> frozenset:
    if isinstance(t, Var):
        return frozenset((t.name,))
    out = frozenset()
    for a in t.args:
        out |= term_vars(a)
    return out


def term_symbols(t: Term) -> set:
    if isinstance(t, Var):
        return set()
    out = {t.fn}
    for a in t.args:
        out |= term_symbols(a)
    return out


def subst_term(t: Term, var: str, s: Term) -> Term:
    if isinstance(t, Var):
        return s if t.name == var else t
    if not t.args:
        return t
    return App(t.fn, tuple(subst_term(a, var, s) for a in t.args))


def ser_term(t: Term) -> str:
    if isinstance(t, Var):
        return "%" + t.name + ";"
    return "@" + t.fn + "(" + "".join(ser_term(a) for a in t.args) + ")"


def term_key(t: Term) -> tuple:
    """Sort key for terms: (depth, canonical serialization)."""
    return (term_depth(t), ser_term(t))


# ------------------------------------------------------------------ formulas


class Formula:
    __slots__ = ()


@dataclass(frozen=True)
class Top(Formula):
    def __str__(self):
        return "true"


@dataclass(frozen=True)
class Bot(Formula):
    def __str__(self):
        return "false"


TRUE = Top()
FALSE = Bot()


@dataclass(frozen=True)
class Eq(Formula):
    left: Term
    right: Term

    def __str__(self):
        return print_formula(self)


@dataclass(frozen=True)
class Rel(Formula):
    name: str
    args: tuple = ()

    def __str__(self):
        return print_formula(self)


@dataclass(frozen=True)
class Not(Formula):
    body: Formula

    def __str__(self):
        return print_formula(self)


@dataclass(frozen=True)
class And(Formula):
    left: Formula
    right: Formula

    def __str__(self):
        return print_formula(self)


@dataclass(frozen=True)
class Or(Formula):
    left: Formula
    right: Formula

    def __str__(self):
        return print_formula(self)


@dataclass(frozen=True)
class Implies(Formula):
    left: Formula
    right: Formula

    def __str__(self):
        return print_formula(self)


@dataclass(frozen=True)
class Forall(Formula):
    var: str
    body: Formula

    def __str__(self):
        return print_formula(self)


@dataclass(frozen=True)
class Exists(Formula):
    var: str
    body: Formula

    def __str__(self):
        return print_formula(self)


BINARY = (And, Or, Implies)
QUANT = (Forall, Exists)
_BIN_TAG = {And: "&", Or: "|", Implies: ">"}
_BIN_OP = {And: "&", Or: "|", Implies: "->"}


def rel(name: str, *args: Term) -> Rel:
    return Rel(name, tuple(args))


def depth(phi: Formula) -> int:
    """Atoms have depth 0; every connective and quantifier adds one level."""
    if isinstance(phi, (Eq, Rel, Top, Bot)):
        return 0
    if isinstance(phi, Not):
        return 1 + depth(phi.body)
    if isinstance(phi, BINARY):
        return 1 + max(depth(phi.left), depth(phi.right))
    return 1 + depth(phi.body)


def quantifier_rank(phi: Formula) -> int:
    if isinstance(phi, (Eq, Rel, Top, Bot)):
        return 0
    if isinstance(phi, Not):
        return quantifier_rank(phi.body)
    if isinstance(phi, BINARY):
        return max(quantifier_rank(phi.left), quantifier_rank(phi.right))
    return 1 + quantifier_rank(phi.body)


def free_vars(phi: Formula) -> frozenset:
    if isinstance(phi, Eq):
        return term_vars(phi.left) | term_vars(phi.right)
    if isinstance(phi, Rel):
        out = frozenset()
        for a in phi.args:
            out |= term_vars(a)
        return out
    if isinstance(phi, (Top, Bot)):
        return frozenset()
    if isinstance(phi, Not):
        return free_vars(phi.body)
    if isinstance(phi, BINARY):
        return free_vars(phi.left) | free_vars(phi.right)
    return free_vars(phi.body) - {phi.var}


def is_sentence(phi: Formula) -> bool:
    return not free_vars(phi)


def _all_vars(phi: Formula) -> set:
    if isinstance(phi, (Eq, Rel)):
        return set(free_vars(phi))
    if isinstance(phi, (Top, Bot)):
        return set()
    if isinstance(phi, Not):
        return _all_vars(phi.body)
    if isinstance(phi, BINARY):
        return _all_vars(phi.left) | _all_vars(phi.right)
    return _all_vars(phi.body) | {phi.var}


def symbols(phi: Formula) -> tuple[set, set]:
    """Function symbols and relation symbols occurring in ``phi``."""
    if isinstance(phi, Eq):
        return term_symbols(phi.left) | term_symbols(phi.right), set()
    if isinstance(phi, Rel):
        fs = set()
        for a in phi.args:
            fs |= term_symbols(a)
        return fs, {phi.name}
    if isinstance(phi, (Top, Bot)):
        return set(), set()
    if isinstance(phi, Not):
        return symbols(phi.body)
    if isinstance(phi, BINARY):
        f1, r1 = symbols(phi.left)
        f2, r2 = symbols(phi.right)
        return f1 | f2, r1 | r2
    return symbols(phi.body)


def _fresh(base: str, avoid: set) -> str:
    i = 0
    while f"{base}{i}" in avoid:
        i += 1
    return f"{base}{i}"


def substitute(phi: Formula, var: str, t: Term) -> Formula:
    """Replace free occurrences of ``var`` by ``t``, renaming binders that would capture."""
    tv = term_vars(t)

    def go(f: Formula) -> Formula:
        if isinstance(f, Eq):
            return Eq(subst_term(f.left, var, t), subst_term(f.right, var, t))
        if isinstance(f, Rel):
            return Rel(f.name, tuple(subst_term(a, var, t) for a in f.args))
        if isinstance(f, (Top, Bot)):
            return f
        if isinstance(f, Not):
            return Not(go(f.body))
        if isinstance(f, BINARY):
            return type(f)(go(f.left), go(f.right))
        if f.var == var or var not in free_vars(f.body):
            return f
        if f.var in tv:
            new = _fresh(f.var, _all_vars(f.body) | tv | {var})
            body = substitute(f.body, f.var, Var(new))
            return type(f)(new, go(body))
        return type(f)(f.var, go(f.body))

    return go(phi)


# ------------------------------------------------------- canonical ordering


def serialize(phi: Formula) -> str:
    """Prefix-free serialization of ``phi`` with its variable names as given."""
    if isinstance(phi, Eq):
        return "=" + ser_term(phi.left) + ser_term(phi.right)
    if isinstance(phi, Rel):
        return "R" + phi.name + "(" + "".join(ser_term(a) for a in phi.args) + ")"
    if isinstance(phi, Top):
        return "T"
    if isinstance(phi, Bot):
        return "F"
    if isinstance(phi, Not):
        return "~" + serialize(phi.body)
    if isinstance(phi, BINARY):
        return _BIN_TAG[type(phi)] + serialize(phi.left) + serialize(phi.right)
    tag = "A" if isinstance(phi, Forall) else "E"
    return tag + "%" + phi.var + ";" + serialize(phi.body)


def canonicalize(phi: Formula, free: tuple = ()) -> Formula:
    """Alpha-rename: the listed free variables become v0..vk-1, a binder at
    nesting level j (counting enclosing binders) binds v(k+j)."""
    k = len(free)

    def rt(t: Term, env: dict) -> Term:
        if isinstance(t, Var):
            return Var(env.get(t.name, t.name))
        if not t.args:
            return t
        return App(t.fn, tuple(rt(a, env) for a in t.args))

    def go(f: Formula, env: dict, level: int) -> Formula:
        if isinstance(f, Eq):
            return Eq(rt(f.left, env), rt(f.right, env))
        if isinstance(f, Rel):
            return Rel(f.name, tuple(rt(a, env) for a in f.args))
        if isinstance(f, (Top, Bot)):
            return f
        if isinstance(f, Not):
            return Not(go(f.body, env, level))
        if isinstance(f, BINARY):
            return type(f)(go(f.left, env, level), go(f.right, env, level))
        name = f"v{k + level}"
        return type(f)(name, go(f.body, {**env, f.var: name}, level + 1))

    return go(phi, {v: f"v{i}" for i, v in enumerate(free)}, 0)


def canonical_key(phi: Formula, free: tuple = ()) -> str:
    return serialize(canonicalize(phi, free))


def sentence_key(phi: Formula) -> tuple:
    """Position of a sentence in the sentence order."""
    return (depth(phi), canonical_key(phi))


# ------------------------------------------------------------------ printing


def print_term(t: Term) -> str:
    return str(t)


def _operand(phi: Formula) -> str:
    s = print_formula(phi)
    return f"({s})" if isinstance(phi, QUANT) else s


def print_formula(phi: Formula) -> str:
    if isinstance(phi, Eq):
        return f"{phi.left} = {phi.right}"
    if isinstance(phi, Rel):
        if not phi.args:
            return phi.name
        return f"{phi.name}({', '.join(map(str, phi.args))})"
    if isinstance(phi, Top):
        return "true"
    if isinstance(phi, Bot):
        return "false"
    if isinstance(phi, Not):
        b = phi.body
        if isinstance(b, (Rel, Top, Bot, Not)) or isinstance(b, BINARY):
            return "~" + print_formula(b)
        return "~(" + print_formula(b) + ")"
    if isinstance(phi, BINARY):
        return f"({_operand(phi.left)} {_BIN_OP[type(phi)]} {_operand(phi.right)})"
    kw = "forall" if isinstance(phi, Forall) else "exists"
    return f"{kw} {phi.var}. {print_formula(phi.body)}"


# ------------------------------------------------------------------- parsing

_TOKEN_RE = re.compile(
    r"(?P<ws>[ \t\r]+)|(?P<nl>\n)|(?P<comment>\#[^\n]*)"
    r"|(?P<arrow>->)|(?P<num>\d+)|(?P<ident>[A-Za-z_'$][A-Za-z0-9_'$]*)"
    r"|(?P<str>\"[^\"\n]*\")"
    r"|(?P<punct>[(),.;=~&|/\[\]{}:])"
)
KEYWORDS = {"forall", "exists", "true", "false", "fn", "rel", "axiom", "witness", "henkin"}


@dataclass
class Token:
    kind: str
    value: str
    line: int
    col: int


def tokenize(text: str) -> list[Token]:
    out: list[Token] = []
    line, col, pos = 1, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise SyntaxError_(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        val = m.group()
        if kind == "nl":
            line, col = line + 1, 1
        else:
            if kind not in ("ws", "comment"):
                if kind == "ident" and val in KEYWORDS:
                    kind = "kw"
                out.append(Token(kind, val, line, col))
            col += len(val)
        pos = m.end()
    out.append(Token("eof", "", line, col))
    return out


class Parser:
    """Recursive-descent parser over a token list.

    Precedence, loosest first: ``->`` (right associative), ``|``, ``&``,
    ``~``; quantifier bodies extend as far right as possible.
    """

    def __init__(self, tokens: list[Token], sig: Signature, allow_free: bool = False):
        self.toks = tokens
        self.i = 0
        self.sig = sig
        self.allow_free = allow_free

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def error(self, msg: str, tok: Token | None = None):
        tok = tok or self.tok
        raise SyntaxError_(msg, tok.line, tok.col)

    def accept(self, value: str) -> bool:
        if self.tok.value == value and self.tok.kind in ("punct", "kw", "arrow"):
            self.i += 1
            return True
        return False

    def expect(self, value: str) -> Token:
        if not self.accept(value):
            shown = self.tok.value or "end of input"
            self.error(f"expected {value!r}, found {shown!r}")
        return self.toks[self.i - 1]

    def ident(self) -> Token:
        if self.tok.kind != "ident":
            self.error(f"expected identifier, found {self.tok.value or 'end of input'!r}")
        self.i += 1
        return self.toks[self.i - 1]

    # formula := implication
    def formula(self, scope: tuple = ()) -> Formula:
        left = self.disjunction(scope)
        if self.accept("->"):
            return Implies(left, self.formula(scope))
        return left

    def disjunction(self, scope):
        left = self.conjunction(scope)
        while self.accept("|"):
            left = Or(left, self.conjunction(scope))
        return left

    def conjunction(self, scope):
        left = self.unary(scope)
        while self.accept("&"):
            left = And(left, self.unary(scope))
        return left

    def unary(self, scope):
        if self.accept("~"):
            return Not(self.unary(scope))
        if self.tok.kind == "kw" and self.tok.value in ("forall", "exists"):
            kw = self.tok.value
            self.i += 1
            v = self.ident()
            if v.value in self.sig.fn_arity or v.value in self.sig.rel_arity:
                self.error(f"bound variable {v.value} clashes with a symbol", v)
            self.expect(".")
            body = self.formula(scope + (v.value,))
            return (Forall if kw == "forall" else Exists)(v.value, body)
        return self.primary(scope)

    def primary(self, scope):
        tok = self.tok
        if self.accept("("):
            f = self.formula(scope)
            self.expect(")")
            return f
        if self.accept("true"):
            return TRUE
        if self.accept("false"):
            return FALSE
        if tok.kind != "ident":
            self.error(f"expected formula, found {tok.value or 'end of input'!r}")
        name = tok.value
        if name in self.sig.rel_arity and name not in scope:
            self.i += 1
            args = self.arglist(scope) if self.tok.value == "(" and self.tok.kind == "punct" else ()
            if len(args) != self.sig.rel_arity[name]:
                self.error(f"arity mismatch for {name}: expected {self.sig.rel_arity[name]}, got {len(args)}", tok)
            return Rel(name, args)
        if name not in scope and name not in self.sig.fn_arity and not self._term_then_eq():
            self.error(f"unknown relation {name}", tok)
        left = self.term(scope)
        self.expect("=")
        return Eq(left, self.term(scope))

    def _term_then_eq(self) -> bool:
        # scan past an identifier and its balanced argument list
        j = self.i + 1
        if self.toks[j].value == "(":
            depth_ = 0
            while self.toks[j].kind != "eof":
                if self.toks[j].value == "(":
                    depth_ += 1
                elif self.toks[j].value == ")":
                    depth_ -= 1
                    if depth_ == 0:
                        break
                j += 1
            j += 1
        return self.toks[j].value == "="

    def arglist(self, scope) -> tuple:
        self.expect("(")
        args = [self.term(scope)]
        while self.accept(","):
            args.append(self.term(scope))
        self.expect(")")
        return tuple(args)

    def term(self, scope) -> Term:
        tok = self.ident()
        name = tok.value
        has_args = self.tok.value == "(" and self.tok.kind == "punct"
        if name in scope and not has_args:
            return Var(name)
        if name in self.sig.fn_arity:
            args = self.arglist(scope) if has_args else ()
            if len(args) != self.sig.fn_arity[name]:
                self.error(f"arity mismatch for {name}: expected {self.sig.fn_arity[name]}, got {len(args)}", tok)
            return App(name, args)
        if name in self.sig.rel_arity:
            self.error(f"relation {name} used as a term", tok)
        if has_args:
            self.error(f"unknown function {name}", tok)
        if self.allow_free:
            return Var(name)
        self.error(f"unbound variable {name}", tok)


def parse_formula(text: str, sig: Signature, allow_free: bool = False) -> Formula:
    p = Parser(tokenize(text), sig, allow_free)
    f = p.formula()
    if p.tok.kind != "eof":
        p.error(f"unexpected {p.tok.value!r}")
    return f


def parse_term(text: str, sig: Signature, allow_free: bool = False) -> Term:
    p = Parser(tokenize(text), sig, allow_free)
    t = p.term(())
    if p.tok.kind != "eof":
        p.error(f"unexpected {p.tok.value!r}")
    return t


@dataclass
class TheoryDocument:
    """Everything a theory file declares.  ``witnesses`` and ``henkin``
    are only present in files written by ``henkinize``."""

    sig: Signature
    axioms: list = field(default_factory=list)
    witnesses: list = field(default_factory=list)
    henkin: list = field(default_factory=list)


def parse_theory_document(text: Union[str, bytes]) -> TheoryDocument:
    if isinstance(text, bytes):
        try:
            text = text.decode("utf-8")
        except UnicodeDecodeError as e:
            raise SyntaxError_(f"input is not UTF-8: {e}") from None
    toks = tokenize(text)
    fns: dict = {}
    rels: dict = {}
    witnesses: list = []
    pending: list = []  # (kind, start index)
    i = 0

    def declare(table, name_tok, arity):
        name = name_tok.value
        if name in fns or name in rels:
            raise SyntaxError_(f"duplicate symbol {name}", name_tok.line, name_tok.col)
        table[name] = arity

    # first pass: declarations; axiom bodies are parsed once the signature is known
    while toks[i].kind != "eof":
        t = toks[i]
        if t.kind == "punct" and t.value == ";":
            i += 1
            continue
        if t.kind != "kw" or t.value not in ("fn", "rel", "axiom", "witness", "henkin"):
            raise SyntaxError_(f"expected declaration, found {t.value!r}", t.line, t.col)
        if t.value in ("fn", "rel"):
            name = toks[i + 1]
            if name.kind != "ident" or not NAME_RE.match(name.value):
                if name.kind == "ident" and name.value.startswith(RESERVED_PREFIX):
                    raise SyntaxError_(f"reserved symbol name {name.value}", name.line, name.col)
                raise SyntaxError_(f"invalid symbol name {name.value!r}", name.line, name.col)
            if toks[i + 2].value != "/" or toks[i + 3].kind != "num":
                tk = toks[i + 2]
                raise SyntaxError_("expected NAME/ARITY", tk.line, tk.col)
            declare(fns if t.value == "fn" else rels, name, int(toks[i + 3].value))
            i += 4
        elif t.value == "witness":
            name = toks[i + 1]
            if name.kind != "ident" or not WITNESS_RE.match(name.value):
                raise SyntaxError_(f"invalid witness name {name.value!r}", name.line, name.col)
            declare(fns, name, 0)
            witnesses.append(name.value)
            i += 2
        else:
            start = i + 1
            j = start
            while toks[j].kind != "eof" and not (toks[j].kind == "punct" and toks[j].value == ";") \
                    and not (toks[j].kind == "kw" and toks[j].value in ("fn", "rel", "axiom", "witness", "henkin")):
                j += 1
            if j == start:
                raise SyntaxError_("empty axiom", t.line, t.col)
            pending.append((t.value, toks[start:j]))
            i = j
    try:
        sig = Signature.of(fns, rels)
    except SyntaxError_ as e:
        raise SyntaxError_(e.message, toks[0].line, toks[0].col) from None
    axioms, henkin = [], []
    for kind, body in pending:
        eof = Token("eof", "", body[-1].line, body[-1].col + len(body[-1].value))
        p = Parser(body + [eof], sig)
        f = p.formula()
        if p.tok.kind != "eof":
            p.error(f"unexpected {p.tok.value!r}")
        (axioms if kind == "axiom" else henkin).append(f)
    return TheoryDocument(sig, axioms, witnesses, henkin)


def parse_theory_file(text: Union[str, bytes]) -> tuple[Signature, list]:
    doc = parse_theory_document(text)
    return doc.sig, doc.axioms + doc.henkin


def print_theory_file(sig: Signature, axioms: Iterable[Formula],
                      witnesses: Iterable[str] = (), henkin: Iterable[Formula] = ()) -> str:
    wit = set(witnesses)
    lines = []
    for n, a in sig.functions:
        if n not in wit:
            lines.append(f"fn {n}/{a};")
    for n, a in sig.relations:
        lines.append(f"rel {n}/{a};")
    for n in witnesses:
        lines.append(f"witness {n};")
    for f in axioms:
        lines.append(f"axiom {print_formula(f)};")
    for f in henkin:
        lines.append(f"henkin {print_formula(f)};")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------- enumeration


def enumerate_terms(sig: Signature, nvars: int, max_depth: int) -> list:
    """All terms over ``sig`` and variables v0..v(nvars-1) up to ``max_depth``,
    sorted by serialization."""
    layers = [[Var(f"v{i}") for i in range(nvars)] + [App(c, ()) for c in sig.constants]]
    allt = list(layers[0])
    fns = [(n, a) for n, a in sig.functions if a > 0]
    for d in range(1, max_depth + 1):
        new = []
        prev = set(layers[-1])
        for n, a in fns:
            for args in product(allt, repeat=a):
                if any(x in prev for x in args):
                    new.append(App(n, args))
        layers.append(new)
        allt = allt + new
    return sorted(allt, key=ser_term)


class SentenceEnumerator:
    """Lazy generator of formulas in canonical order.

    ``exact(d, k)`` yields ``(ser, depth, formula)`` for formulas of depth
    exactly ``d`` whose free variables lie in v0..v(k-1), sorted by
    serialization.  Serializations are prefix-free, so the lexicographic order
    of ``op + ser(a) + ser(b)`` is the order of the pair ``(ser(a), ser(b))``;
    the generators below exploit that to avoid materializing whole levels.
    """

    def __init__(self, sig: Signature, term_depth: int = 1):
        self.sig = sig
        self.term_depth = term_depth
        self._terms: dict = {}

    def terms(self, k: int) -> list:
        if k not in self._terms:
            ts = enumerate_terms(self.sig, k, self.term_depth)
            self._terms[k] = [(ser_term(t), t) for t in ts]
        return self._terms[k]

    def atoms(self, k: int) -> Iterator[tuple]:
        ts = self.terms(k)
        for s1, t1 in ts:
            for s2, t2 in ts:
                yield ("=" + s1 + s2, 0, Eq(t1, t2))
        yield ("F", 0, FALSE)
        rels = sorted(self.sig.relations, key=lambda r: "R" + r[0] + "(")
        for name, a in rels:
            head = "R" + name + "("
            for combo in product(ts, repeat=a):
                yield (head + "".join(c[0] for c in combo) + ")", 0,
                       Rel(name, tuple(c[1] for c in combo)))
        yield ("T", 0, TRUE)

    def exact(self, d: int, k: int, rank: Optional[int] = None) -> Iterator[tuple]:
        if d == 0:
            yield from self.atoms(k)
            return
        # constructor tags in byte order: & > A E | ~
        yield from self._binary("&", And, d, k, rank)
        yield from self._binary(">", Implies, d, k, rank)
        if rank is None or rank > 0:
            inner = None if rank is None else rank - 1
            v = f"v{k}"
            for tag, cls in (("A", Forall), ("E", Exists)):
                head = tag + "%" + v + ";"
                for s, _, f in self.exact(d - 1, k + 1, inner):
                    yield (head + s, d, cls(v, f))
        yield from self._binary("|", Or, d, k, rank)
        for s, _, f in self.exact(d - 1, k, rank):
            yield ("~" + s, d, Not(f))

    def upto(self, d: int, k: int, rank: Optional[int] = None) -> Iterator[tuple]:
        if d == 0:
            return self.atoms(k)
        return heapq.merge(*(self.exact(i, k, rank) for i in range(d + 1)), key=itemgetter(0))

    def _binary(self, tag, cls, d, k, rank):
        for s1, d1, f1 in self.upto(d - 1, k, rank):
            rest = self.upto(d - 1, k, rank) if d1 == d - 1 else self.exact(d - 1, k, rank)
            for s2, _, f2 in rest:
                yield (tag + s1 + s2, d, cls(f1, f2))

    def sentences(self, depth_bound: int, rank: Optional[int] = None) -> Iterator[tuple]:
        for d in range(depth_bound + 1):
            yield from self.exact(d, 0, rank)


def enumerate_sentences(sig: Signature, depth_bound: int, count_bound: int, *,
                        term_depth: int = 1, rank_bound: Optional[int] = None,
                        lead: Iterable[Formula] = ()) -> Iterator[Formula]:
    """Sentences over ``sig`` in sentence order, at most ``count_bound`` of them.

    ``lead`` sentences are emitted first (the rest of the order is unchanged,
    duplicates are skipped); this is how callers bias a Lindenbaum run.
    """
    if depth_bound < 0 or count_bound < 0:
        raise ValueError("bounds must be nonnegative")
    seen = set()
    n = 0
    for f in lead:
        if n >= count_bound:
            return
        key = canonical_key(f)
        if key in seen:
            continue
        seen.add(key)
        n += 1
        yield canonicalize(f)
    if n >= count_bound:
        return
    for s, _, f in SentenceEnumerator(sig, term_depth).sentences(depth_bound, rank_bound):
        if s in seen:
            continue
        yield f
        n += 1
        if n >= count_bound:
            return


def enumerate_unary_formulas(sig: Signature, depth_bound: int, *, term_depth: int = 1,
                             rank_bound: Optional[int] = None) -> Iterator[Formula]:
    """Formulas whose only free variable is exactly v0, in canonical order."""
    en = SentenceEnumerator(sig, term_depth)
    for d in range(depth_bound + 1):
        for _, _, f in en.exact(d, 1, rank_bound):
            if "v0" in free_vars(f):
                yield f
