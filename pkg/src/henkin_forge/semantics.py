"""Finite structures, Tarskian satisfaction, model search, homomorphisms, reducts."""
from __future__ import annotations

import json
import re
from dataclasses import dataclass
from functools import lru_cache
from itertools import permutations, product
from typing import Iterable, Iterator, Optional

from .syntax import (
    And, App, Bot, Eq, Exists, Forall, Formula, Implies, Not, Or, Rel, Signature,
    SyntaxError_, Term, Top, Var, enumerate_sentences, symbols,
)
from .theory import ResourceError, SignatureMorphism, Theory

SEARCH_CAP = 10**7
HOM_CAP = 10**6


class UnboundVariable(KeyError):
    pass


class SearchBudgetExceeded(RuntimeError):
    pass


def _index(args: tuple, n: int) -> int:
    i = 0
    for a in args:
        i = i * n + a
    return i


@dataclass(frozen=True, eq=False)
class FiniteStructure:
    """A Σ-structure with universe {0, ..., size-1}.

    Function tables are flat tuples in argument-lex order; relation tables are
    frozensets of argument tuples (an arity-0 relation holds iff it contains ``()``).
    """

    sig: Signature
    size: int
    fn_tables: dict
    rel_tables: dict

    def __post_init__(self):
        if self.size < 1:
            raise ValueError("structures are nonempty")
        n = self.size
        fns = {}
        for name, arity in self.sig.functions:
            if name not in self.fn_tables:
                raise ValueError(f"missing table for function {name}")
            tab = self.fn_tables[name]
            tab = (tab,) if isinstance(tab, int) else tuple(tab)
            if len(tab) != n ** arity or any(not 0 <= v < n for v in tab):
                raise ValueError(f"table for {name} is not total and in range")
            fns[name] = tab
        rels = {}
        for name, arity in self.sig.relations:
            tab = self.rel_tables.get(name, frozenset())
            if isinstance(tab, bool):
                tab = frozenset({()}) if tab else frozenset()
            tab = frozenset(tuple(x) for x in tab)
            if any(len(x) != arity or any(not 0 <= v < n for v in x) for x in tab):
                raise ValueError(f"table for {name} has out-of-range tuples")
            rels[name] = tab
        if set(self.fn_tables) - set(fns) or set(self.rel_tables) - set(rels):
            raise ValueError("tables for symbols outside the signature")
        object.__setattr__(self, "fn_tables", fns)
        object.__setattr__(self, "rel_tables", rels)

    def key(self) -> tuple:
        return (self.sig, self.size, tuple(sorted(self.fn_tables.items())),
                tuple(sorted((k, tuple(sorted(v))) for k, v in self.rel_tables.items())))

    def __eq__(self, other):
        return isinstance(other, FiniteStructure) and self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    def apply(self, fn: str, args: tuple) -> int:
        return self.fn_tables[fn][_index(args, self.size)]

    def holds(self, rel: str, args: tuple) -> bool:
        return tuple(args) in self.rel_tables[rel]

    def value(self, const: str) -> int:
        return self.fn_tables[const][0]

    def __repr__(self):
        return f"FiniteStructure(size={self.size}, fns={self.fn_tables}, rels={ {k: sorted(v) for k, v in self.rel_tables.items()} })"


def structure(sig: Signature, size: int, fns: dict | None = None, rels: dict | None = None) -> FiniteStructure:
    return FiniteStructure(sig, size, dict(fns or {}), dict(rels or {}))


# --------------------------------------------------------------- evaluation


def eval_term(m, t: Term, env: dict | None = None) -> int:
    if isinstance(t, Var):
        try:
            return env[t.name]
        except (KeyError, TypeError):
            raise UnboundVariable(t.name) from None
    tab = m.fn_tables[t.fn]
    if not t.args:
        return tab[0]
    n = m.size
    i = 0
    for a in t.args:
        i = i * n + eval_term(m, a, env)
    return tab[i]


def satisfies(m, phi: Formula, env: dict | None = None) -> bool:
    """Tarskian satisfaction; quantifiers range over ``range(m.size)``."""
    env = dict(env or {})
    return _sat(m, phi, env)


def _sat(m, f, env) -> bool:
    t = type(f)
    if t is Eq:
        return eval_term(m, f.left, env) == eval_term(m, f.right, env)
    if t is Rel:
        return tuple(eval_term(m, a, env) for a in f.args) in m.rel_tables[f.name]
    if t is Not:
        return not _sat(m, f.body, env)
    if t is And:
        return _sat(m, f.left, env) and _sat(m, f.right, env)
    if t is Or:
        return _sat(m, f.left, env) or _sat(m, f.right, env)
    if t is Implies:
        return (not _sat(m, f.left, env)) or _sat(m, f.right, env)
    if t is Top:
        return True
    if t is Bot:
        return False
    v = f.var
    saved = env.get(v, _MISSING)
    want = t is Exists
    result = not want
    for e in range(m.size):
        env[v] = e
        if _sat(m, f.body, env) == want:
            result = want
            break
    if saved is _MISSING:
        env.pop(v, None)
    else:
        env[v] = saved
    return result


_MISSING = object()


def satisfying_elements(m, phi: Formula, var: str) -> list:
    return [e for e in range(m.size) if _sat(m, phi, {var: e})]


# ------------------------------------------------------------- model search


class _Partial:
    """Mutable interpretation used while searching."""

    def __init__(self, sig: Signature, n: int):
        self.size = n
        self.fn_tables = {name: [0] * (n ** a) for name, a in sig.functions}
        self.rel_tables = {name: set() for name, _ in sig.relations}


def search_space_size(sig: Signature, max_size: int) -> int:
    total = 0
    for n in range(1, max_size + 1):
        cells = sum(n ** a for _, a in sig.functions)
        rcells = sum(n ** a for _, a in sig.relations)
        total += n ** cells * 2 ** rcells
    return total


@lru_cache(maxsize=1 << 16)
def _symbols(ax: Formula) -> tuple:
    return symbols(ax)


def iter_models(sig: Signature, axioms: Iterable[Formula], size: int,
                node_budget: Optional[int] = None) -> Iterator[FiniteStructure]:
    """All models of ``axioms`` with universe size ``size``, in table-lex order.

    Cells are assigned in order (function tables by symbol name, argument-lex
    within a table, then relation tables); each axiom is checked as soon as
    every cell of every symbol it mentions is assigned.  Pruning never
    reorders survivors, so the output order is the plain enumeration order.
    """
    n = size
    cells = []  # (kind, name, index, args)
    last_cell = {}
    for name, a in sig.functions:
        for i, args in enumerate(product(range(n), repeat=a)):
            cells.append(("f", name, i, args))
        last_cell[name] = len(cells) - 1
    for name, a in sig.relations:
        for i, args in enumerate(product(range(n), repeat=a)):
            cells.append(("r", name, i, args))
        last_cell[name] = len(cells) - 1
    checks: dict = {}
    for ax in axioms:
        fs, rs = _symbols(ax)
        ready = max((last_cell[s] for s in fs | rs), default=-1)
        checks.setdefault(ready, []).append(ax)
    part = _Partial(sig, n)
    if not all(_sat(part, ax, {}) for ax in checks.get(-1, ())):
        return
    ncells = len(cells)
    if ncells == 0:
        yield _freeze(sig, part)
        return
    nvals = [n if c[0] == "f" else 2 for c in cells]
    vals = [-1] * ncells
    pos = 0
    nodes = 0
    while pos >= 0:
        kind, name, idx, args = cells[pos]
        v = vals[pos] + 1
        if kind == "r" and vals[pos] == 1:
            part.rel_tables[name].discard(args)
        if v >= nvals[pos]:
            vals[pos] = -1
            pos -= 1
            continue
        vals[pos] = v
        if kind == "f":
            part.fn_tables[name][idx] = v
        elif v == 1:
            part.rel_tables[name].add(args)
        nodes += 1
        if node_budget is not None and nodes > node_budget:
            raise SearchBudgetExceeded(f"model search exceeded {node_budget} nodes at size {n}")
        if all(_sat(part, ax, {}) for ax in checks.get(pos, ())):
            if pos == ncells - 1:
                yield _freeze(sig, part)
            else:
                pos += 1


def _freeze(sig: Signature, part: _Partial) -> FiniteStructure:
    return FiniteStructure(sig, part.size, {k: tuple(v) for k, v in part.fn_tables.items()},
                           {k: frozenset(v) for k, v in part.rel_tables.items()})


def find_models(t: Theory, max_size: int, limit: Optional[int] = None, *, min_size: int = 1,
                cap: int = SEARCH_CAP, mod_iso: bool = False,
                node_budget: Optional[int] = None) -> list:
    """Models of ``t`` of sizes ``min_size..max_size`` in enumeration order.

    Exhaustive within the bounds: an empty result means there is no model of
    size <= ``max_size``.
    """
    if max_size < 1:
        raise ValueError("max_size must be >= 1")
    if limit is None and search_space_size(t.sig, max_size) > cap:
        raise ResourceError(f"search space exceeds cap {cap}; pass a limit or lower max_size")
    out = []
    seen = set()
    for n in range(min_size, max_size + 1):
        for m in iter_models(t.sig, t.axioms, n, node_budget):
            if mod_iso:
                k = iso_canonical(m)
                if k in seen:
                    continue
                seen.add(k)
            out.append(m)
            if limit is not None and len(out) >= limit:
                return out
    return out


def permute(m: FiniteStructure, perm: tuple) -> FiniteStructure:
    """Image of ``m`` under the bijection ``e -> perm[e]``."""
    n = m.size
    inv = [0] * n
    for i, p in enumerate(perm):
        inv[p] = i
    fns = {}
    for name, a in m.sig.functions:
        tab = m.fn_tables[name]
        fns[name] = tuple(perm[tab[_index(tuple(inv[x] for x in args), n)]]
                          for args in product(range(n), repeat=a))
    rels = {name: frozenset(tuple(perm[x] for x in tup) for tup in tab)
            for name, tab in m.rel_tables.items()}
    return FiniteStructure(m.sig, n, fns, rels)


def iso_canonical(m: FiniteStructure) -> tuple:
    return min(permute(m, p).key()[1:] for p in permutations(range(m.size)))


def is_isomorphic(m1: FiniteStructure, m2: FiniteStructure) -> bool:
    return m1.sig == m2.sig and m1.size == m2.size and iso_canonical(m1) == iso_canonical(m2)


# ------------------------------------------------------------ homomorphisms


@dataclass(frozen=True, eq=False)
class Homomorphism:
    source: FiniteStructure
    target: FiniteStructure
    map: tuple

    def __eq__(self, other):
        return (isinstance(other, Homomorphism) and self.map == other.map
                and self.source == other.source and self.target == other.target)

    def __hash__(self):
        return hash(self.map)

    def __call__(self, e: int) -> int:
        return self.map[e]

    def compose(self, first: "Homomorphism") -> "Homomorphism":
        """``self ∘ first``."""
        return Homomorphism(first.source, self.target, tuple(self.map[x] for x in first.map))


def hom_violation(m1: FiniteStructure, m2: FiniteStructure, h: tuple) -> Optional[str]:
    """None if ``h`` preserves every symbol, else a description of a failure."""
    n = m1.size
    for name, a in m1.sig.functions:
        t1, t2 = m1.fn_tables[name], m2.fn_tables[name]
        for args in product(range(n), repeat=a):
            lhs = h[t1[_index(args, n)]]
            rhs = t2[_index(tuple(h[x] for x in args), m2.size)]
            if lhs != rhs:
                return f"{name}{args}: h(f(a))={lhs} != f(h(a))={rhs}"
    for name, tab in m1.rel_tables.items():
        tab2 = m2.rel_tables[name]
        for tup in tab:
            if tuple(h[x] for x in tup) not in tab2:
                return f"{name}{tup} not preserved"
    return None


def is_homomorphism(m1: FiniteStructure, m2: FiniteStructure, h: tuple) -> bool:
    return m1.sig == m2.sig and len(h) == m1.size and hom_violation(m1, m2, h) is None


def enumerate_homs(m1: FiniteStructure, m2: FiniteStructure, cap: int = HOM_CAP) -> list:
    """Every homomorphism m1 -> m2, by exhaustive search over element maps."""
    if m1.sig != m2.sig:
        raise ValueError("homomorphisms need a common signature")
    if m2.size ** m1.size > cap:
        raise ResourceError(f"{m2.size}^{m1.size} maps exceed cap {cap}")
    return [Homomorphism(m1, m2, h) for h in product(range(m2.size), repeat=m1.size)
            if hom_violation(m1, m2, h) is None]


def identity_hom(m: FiniteStructure) -> Homomorphism:
    return Homomorphism(m, m, tuple(range(m.size)))


# ------------------------------------------------------------------ reducts


def reduct(sigma: SignatureMorphism, m: FiniteStructure) -> FiniteStructure:
    """Read ``m`` (over sigma.target) as a sigma.source-structure."""
    if m.sig != sigma.target:
        raise ValueError("structure is not over the morphism's target signature")
    fm, rm = sigma.fmap, sigma.rmap
    return FiniteStructure(sigma.source, m.size,
                           {s: m.fn_tables[fm[s]] for s, _ in sigma.source.functions},
                           {s: m.rel_tables[rm[s]] for s, _ in sigma.source.relations})


def reduct_hom(sigma: SignatureMorphism, h: Homomorphism) -> Homomorphism:
    """Reducts act as the identity on underlying maps."""
    return Homomorphism(reduct(sigma, h.source), reduct(sigma, h.target), h.map)


# ---------------------------------------------------- elementary equivalence


@dataclass(frozen=True)
class EquivalenceResult:
    equivalent: bool
    witness: Optional[Formula]
    checked: int
    rank: int
    depth: int

    def __bool__(self):
        return self.equivalent


def elementarily_equivalent_upto(m1: FiniteStructure, m2: FiniteStructure, rank: int, depth: int,
                                 *, count_cap: int = 200_000, term_depth: int = 1) -> EquivalenceResult:
    """Compare ``m1`` and ``m2`` on every sentence of quantifier rank <= ``rank``
    and depth <= ``depth`` (at most ``count_cap`` of them), in sentence order."""
    if m1.sig != m2.sig:
        raise ValueError("structures must share a signature")
    n = 0
    for phi in enumerate_sentences(m1.sig, depth, count_cap, term_depth=term_depth, rank_bound=rank):
        n += 1
        if _sat(m1, phi, {}) != _sat(m2, phi, {}):
            return EquivalenceResult(False, phi, n, rank, depth)
    return EquivalenceResult(True, None, n, rank, depth)


# ------------------------------------------------------------- file formats

_ENTRY_RE = re.compile(r"^(fn|rel)\s+([A-Za-z_'$][A-Za-z0-9_'$]*)(?:/(\d+))?\s*=\s*(.*)$", re.S)


def _arity_from_len(length: int, n: int) -> Optional[int]:
    a = 0
    while n ** a < length:
        a += 1
    return a if n ** a == length else None


def parse_structure_file(text, sig: Optional[Signature] = None) -> FiniteStructure:
    """Parse ``size N; fn a = 0; fn s = [1,0]; rel R = {(0),(1,0)};``.

    Arities come from ``sig`` when given, else from ``NAME/ARITY`` or the
    shape of the table.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    text = "\n".join(line.split("#", 1)[0] for line in text.splitlines())
    stmts = [s.strip() for s in text.split(";") if s.strip()]
    size = None
    fns, rels, fa, ra = {}, {}, {}, {}
    for st in stmts:
        if st.startswith("size"):
            size = int(st.split()[1])
            continue
        m = _ENTRY_RE.match(st)
        if not m:
            raise SyntaxError_(f"cannot parse structure entry {st!r}")
        kind, name, arity, body = m.groups()
        body = body.strip()
        if kind == "fn":
            if body.startswith("["):
                vals = json.loads(body)
            else:
                vals = [int(body)]
            fns[name] = tuple(vals)
            if arity is not None:
                fa[name] = int(arity)
        else:
            if body in ("true", "false"):
                tups = [()] if body == "true" else []
            else:
                inner = body.strip()
                if not (inner.startswith("{") and inner.endswith("}")):
                    raise SyntaxError_(f"relation table must be {{...}}: {body!r}")
                inner = inner[1:-1].strip()
                tups = []
                for grp in re.findall(r"\(([^)]*)\)", inner):
                    grp = grp.strip()
                    tups.append(tuple(int(x) for x in grp.split(",")) if grp else ())
            rels[name] = frozenset(tups)
            if arity is not None:
                ra[name] = int(arity)
            elif tups:
                ra[name] = len(tups[0])
    if size is None:
        raise SyntaxError_("structure file lacks 'size N;'")
    if sig is None:
        for name, vals in fns.items():
            if name not in fa:
                a = _arity_from_len(len(vals), size)
                if a is None:
                    raise SyntaxError_(f"table length of {name} fits no arity")
                if size == 1 and a == 0 and len(vals) == 1:
                    a = 0
                fa[name] = a
        for name in rels:
            if name not in ra:
                raise SyntaxError_(f"arity of empty relation {name} is ambiguous; write {name}/ARITY")
        sig = Signature.of(fa, ra)
    return FiniteStructure(sig, size, fns, rels)


def print_structure_file(m: FiniteStructure) -> str:
    lines = [f"size {m.size};"]
    for name, a in m.sig.functions:
        tab = m.fn_tables[name]
        body = str(tab[0]) if a == 0 else "[" + ",".join(map(str, tab)) + "]"
        lines.append(f"fn {name}/{a} = {body};")
    for name, a in m.sig.relations:
        tups = sorted(m.rel_tables[name])
        body = "{" + ",".join("(" + ",".join(map(str, t)) + ")" for t in tups) + "}"
        lines.append(f"rel {name}/{a} = {body};")
    return "\n".join(lines) + "\n"


def structure_to_json(m: FiniteStructure) -> dict:
    return {
        "size": m.size,
        "functions": {n: {"arity": a, "table": list(m.fn_tables[n])} for n, a in m.sig.functions},
        "relations": {n: {"arity": a, "tuples": [list(t) for t in sorted(m.rel_tables[n])]}
                      for n, a in m.sig.relations},
    }


def structure_from_json(d: dict) -> FiniteStructure:
    sig = Signature.of({n: v["arity"] for n, v in d["functions"].items()},
                       {n: v["arity"] for n, v in d["relations"].items()})
    return FiniteStructure(sig, d["size"], {n: tuple(v["table"]) for n, v in d["functions"].items()},
                           {n: frozenset(tuple(t) for t in v["tuples"]) for n, v in d["relations"].items()})
