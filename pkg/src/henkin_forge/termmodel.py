"""Term models, evaluation homomorphisms and the verification harness.

Two builders produce a :class:`TermModel`:

* syntactic (mode A): closed terms up to a depth bound, quotiented by the
  equalities a :class:`DecidedFragment` marks true;
* semantic (mode B): the part of a Henkin-expanded finite model reachable
  from the constants, each element named by its least generating term.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from itertools import combinations, product
from typing import Iterable, Optional, Sequence

from .congruence import CongruenceClosure, congruence_close
from .decision import DecidedFragment
from .semantics import (
    FiniteStructure, Homomorphism, _sat, enumerate_homs, eval_term, hom_violation,
    reduct, structure_from_json, structure_to_json,
)
from .syntax import (
    And, App, Bot, Eq, Exists, Forall, Formula, Implies, Not, Or, Rel, Signature, Term, Top,
    canonical_key, enumerate_sentences, enumerate_terms, parse_term, print_formula,
    quantifier_rank, ser_term, substitute, term_depth, term_key,
)
from .theory import HenkinExtension, Theory, TheoryMorphism, translate_term

__all__ = [
    "CongruenceClosure", "congruence_close", "TermModel", "HenkinModelExpansion",
    "MissingAtom", "TruncationError", "PreconditionFailed", "UniquenessFailure", "IllFormed",
    "expand_model_henkin", "expansion_from_structure", "build_term_model_syntactic",
    "build_term_model_semantic", "evaluation_hom", "verify_initiality", "verify_soundness",
    "verify_naturality", "verify_functoriality", "verify_completeness", "induced_map",
    "positive_diagram",
]


class MissingAtom(LookupError):
    def __init__(self, atom: Formula):
        super().__init__(f"fragment does not decide {print_formula(atom)}")
        self.atom = atom


class TruncationError(RuntimeError):
    def __init__(self, term: Term, bound: int):
        super().__init__(f"{term} has no representative within term depth {bound}; raise the bound")
        self.term = term
        self.bound = bound


class PreconditionFailed(ValueError):
    def __init__(self, sentence: Optional[Formula], message: str = ""):
        text = message or f"model violates {print_formula(sentence)}"
        super().__init__(text)
        self.sentence = sentence


class UniquenessFailure(AssertionError):
    def __init__(self, model: FiniteStructure, homs: list, expected: Homomorphism):
        super().__init__(f"{len(homs)} homomorphisms into a model of size {model.size}; expected exactly one")
        self.model = model
        self.homs = homs
        self.expected = expected


class IllFormed(ValueError):
    def __init__(self, term: Term):
        super().__init__(f"translated term {term} is outside the target term model")
        self.term = term


def _hash_json(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()


# --------------------------------------------------------------- expansion


@dataclass(frozen=True)
class HenkinModelExpansion:
    base_model: FiniteStructure
    expansion: FiniteStructure
    witness_choices: dict
    henkin: HenkinExtension
    policy: str = "least"


class _Interp:
    def __init__(self, m: FiniteStructure):
        self.size = m.size
        self.fn_tables = dict(m.fn_tables)
        self.rel_tables = m.rel_tables


def expand_model_henkin(m: FiniteStructure, h: HenkinExtension, policy: str = "least") -> HenkinModelExpansion:
    """Interpret every witness constant, lowest level first: the least (or
    greatest) element satisfying its formula, element 0 when none does."""
    if policy not in ("least", "greatest"):
        raise ValueError(f"unknown witness policy {policy!r}")
    if m.sig != h.base.sig:
        raise ValueError("model is not over the Henkin extension's base signature")
    part = _Interp(m)
    choices = {}
    for name in h.names_by_level():
        phi = h.formulas[name]
        order = range(m.size) if policy == "least" else range(m.size - 1, -1, -1)
        pick = next((e for e in order if _sat(part, phi, {"v0": e})), 0)
        part.fn_tables[name] = (pick,)
        choices[name] = pick
    exp = FiniteStructure(h.star_sig, m.size, part.fn_tables, dict(m.rel_tables))
    bad = [ax for ax in h.henkin_axioms if not _sat(exp, ax, {})]
    if bad:
        raise AssertionError(f"internal error: expansion violates {print_formula(bad[0])}")
    return HenkinModelExpansion(m, exp, choices, h, policy)


def expansion_from_structure(mstar: FiniteStructure, h: HenkinExtension) -> HenkinModelExpansion:
    """Wrap an existing Σ*-structure that satisfies the Henkin axioms."""
    if mstar.sig != h.star_sig:
        raise ValueError("structure is not over the extended signature")
    bad = [ax for ax in h.henkin_axioms if not _sat(mstar, ax, {})]
    if bad:
        raise PreconditionFailed(bad[0])
    base = FiniteStructure(h.base.sig, mstar.size,
                           {n: mstar.fn_tables[n] for n, _ in h.base.sig.functions},
                           {n: mstar.rel_tables[n] for n, _ in h.base.sig.relations})
    choices = {n: mstar.value(n) for n in h.names_by_level()}
    return HenkinModelExpansion(base, mstar, choices, h, "given")


# -------------------------------------------------------------- term model


@dataclass
class TermModel:
    """Finite quotient of closed terms.

    ``classes[i]`` lists the stored member terms of class ``i``, least first;
    the first member is the canonical representative.  Tables are indexed by
    class number in argument-lex order, as in :class:`FiniteStructure`.
    """

    star_sig: Signature
    classes: list
    fn_tables: dict
    rel_tables: dict
    mode: str                                   # syntactic | semantic
    source: dict
    term_depth_bound: Optional[int] = None
    fragment: Optional[DecidedFragment] = None
    expansion: Optional[HenkinModelExpansion] = None
    elements: Optional[tuple] = None            # mode B: class -> backing element
    _members: dict = field(default_factory=dict, repr=False)
    _struct: Optional[FiniteStructure] = field(default=None, repr=False)

    def __post_init__(self):
        self._members = {t: i for i, cls in enumerate(self.classes) for t in cls}

    @property
    def size(self) -> int:
        return len(self.classes)

    @property
    def reps(self) -> list:
        return [c[0] for c in self.classes]

    def members(self) -> dict:
        return dict(self._members)

    def as_structure(self) -> FiniteStructure:
        if self._struct is None:
            self._struct = FiniteStructure(self.star_sig, self.size, self.fn_tables, self.rel_tables)
        return self._struct

    def class_of(self, t: Term) -> int:
        """Class of any closed term: stored members directly, others by
        evaluating through the function tables."""
        i = self._members.get(t)
        if i is not None:
            return i
        try:
            return eval_term(self.as_structure(), t, {})
        except KeyError:
            raise IllFormed(t) from None

    def to_json(self) -> dict:
        d = {
            "mode": self.mode,
            "signature": {"functions": dict(self.star_sig.functions),
                          "relations": dict(self.star_sig.relations)},
            "universe": [str(c[0]) for c in self.classes],
            "members": [[str(t) for t in c] for c in self.classes],
            "functions": {n: list(self.fn_tables[n]) for n, _ in self.star_sig.functions},
            "relations": {n: [list(x) for x in sorted(self.rel_tables[n])] for n, _ in self.star_sig.relations},
            "source": self.source,
            "term_depth_bound": self.term_depth_bound,
        }
        if self.expansion is not None:
            d["expansion"] = structure_to_json(self.expansion.expansion)
            d["elements"] = list(self.elements)
        return d

    @classmethod
    def from_json(cls, d: dict) -> "TermModel":
        sig = Signature.of(d["signature"]["functions"], d["signature"]["relations"])
        classes = [[parse_term(s, sig) for s in c] for c in d["members"]]
        tm = cls(sig, classes, {n: tuple(v) for n, v in d["functions"].items()},
                 {n: frozenset(tuple(x) for x in v) for n, v in d["relations"].items()},
                 d["mode"], d["source"], d.get("term_depth_bound"))
        if "expansion" in d:
            tm.elements = tuple(d["elements"])
            tm._loaded_expansion = structure_from_json(d["expansion"])
        return tm

    def backing_structure(self) -> Optional[FiniteStructure]:
        if self.expansion is not None:
            return self.expansion.expansion
        return getattr(self, "_loaded_expansion", None)


def _closed_terms(f: Formula) -> list:
    if isinstance(f, Eq):
        return [f.left, f.right]
    if isinstance(f, Rel):
        return list(f.args)
    return []


def build_term_model_syntactic(frag: DecidedFragment, term_depth_bound: int) -> TermModel:
    sig = frag.base.sig
    if not sig.constants:
        raise ValueError("signature has no constants; the term universe would be empty")
    universe = sorted(enumerate_terms(sig, 0, term_depth_bound), key=term_key)

    def lookup(atom, *alts):
        for a in (atom,) + alts:
            v = frag.value(a)
            if v is not None:
                return v
        raise MissingAtom(atom)

    cc = CongruenceClosure(universe)
    for s, t in combinations(universe, 2):
        if lookup(Eq(s, t), Eq(t, s)):
            cc.merge(s, t)
    classes = cc.classes(universe)
    index = {t: i for i, c in enumerate(classes) for t in c}
    n = len(classes)
    fns = {}
    for name, a in sig.functions:
        tab = []
        for idx in product(range(n), repeat=a):
            cand = App(name, tuple(classes[i][0] for i in idx))
            if cand not in index:
                cand = next((App(name, args) for args in product(*(classes[i] for i in idx))
                             if App(name, args) in index), None)
                if cand is None:
                    raise TruncationError(App(name, tuple(classes[i][0] for i in idx)), term_depth_bound)
            tab.append(index[cand])
        fns[name] = tuple(tab)
    rels = {}
    for name, a in sig.relations:
        tups = set()
        for idx in product(range(n), repeat=a):
            if lookup(Rel(name, tuple(classes[i][0] for i in idx))):
                tups.add(idx)
        rels[name] = frozenset(tups)
    source = {"kind": "fragment", "hash": frag.digest(), "decided": len(frag.decided)}
    return TermModel(sig, [list(c) for c in classes], fns, rels, "syntactic", source,
                     term_depth_bound, fragment=frag)


def _least_terms(m: FiniteStructure) -> dict:
    """element -> least (depth, serialization) closed term denoting it, for
    every element reachable from the constants."""
    sig = m.sig
    best_le: dict = {}
    for c in sig.constants:
        e = m.value(c)
        t = App(c, ())
        if e not in best_le or ser_term(t) < ser_term(best_le[e]):
            best_le[e] = t
    rep = dict(best_le)
    best_eq = dict(best_le)
    fns = [(n, a) for n, a in sig.functions if a > 0]
    while True:
        new_eq: dict = {}
        for name, a in fns:
            # terms of depth exactly d+1 take every argument at depth <= d and
            # at least one at depth exactly d; prefix-free serializations make
            # the lex-least concatenation the componentwise least choice
            for args in product(sorted(best_le), repeat=a):
                e = m.apply(name, args)
                for k in range(1, a + 1):
                    for exact in combinations(range(a), k):
                        if any(args[i] not in best_eq for i in exact):
                            continue
                        t = App(name, tuple(best_eq[x] if i in exact else best_le[x]
                                            for i, x in enumerate(args)))
                        if e not in new_eq or ser_term(t) < ser_term(new_eq[e]):
                            new_eq[e] = t
        grew = False
        for e, t in new_eq.items():
            if e not in rep:
                rep[e] = t
                grew = True
        if not grew:
            return rep
        for e, t in new_eq.items():
            if e not in best_le or ser_term(t) < ser_term(best_le[e]):
                best_le[e] = t
        best_eq = new_eq


def build_term_model_semantic(exp: HenkinModelExpansion) -> TermModel:
    m = exp.expansion
    sig = m.sig
    rep = _least_terms(m)
    elements = tuple(sorted(rep, key=lambda e: term_key(rep[e])))
    idx = {e: i for i, e in enumerate(elements)}
    n = len(elements)
    members = [{rep[e]} for e in elements]
    for c in sig.constants:
        members[idx[m.value(c)]].add(App(c, ()))
    fns = {}
    for name, a in sig.functions:
        tab = []
        for args in product(range(n), repeat=a):
            e = m.apply(name, tuple(elements[i] for i in args))
            tab.append(idx[e])
            if a:
                members[idx[e]].add(App(name, tuple(rep[elements[i]] for i in args)))
        fns[name] = tuple(tab)
    rels = {}
    for name, a in sig.relations:
        rels[name] = frozenset(tuple(idx[x] for x in tup) for tup in m.rel_tables[name]
                               if all(x in idx for x in tup))
    classes = [sorted(ms, key=term_key) for ms in members]
    for e, c in zip(elements, classes):
        assert c[0] == rep[e]
    source = {"kind": "model", "hash": _hash_json(structure_to_json(m)), "policy": exp.policy}
    return TermModel(sig, classes, fns, rels, "semantic", source, None,
                     expansion=exp, elements=elements)


# ------------------------------------------------------------ homomorphisms


def positive_diagram(tm: TermModel) -> list:
    """The sentences a model must satisfy for [t] -> t^M to be a well-defined
    homomorphism, restricted to the stored member terms."""
    out = []
    if tm.mode == "syntactic" and tm.fragment is not None:
        members = tm.members()
        for phi in tm.fragment.sentences.values():
            if isinstance(phi, (Eq, Rel)) and tm.fragment.value(phi) \
                    and all(t in members for t in _closed_terms(phi)):
                out.append(phi)
        return out
    for c in tm.classes:
        out.extend(Eq(t, c[0]) for t in c[1:])
    s = tm.as_structure()
    for name, a in tm.star_sig.functions:
        if a == 0:
            continue
        for args in product(range(tm.size), repeat=a):
            t = App(name, tuple(tm.classes[i][0] for i in args))
            r = tm.classes[s.apply(name, args)][0]
            if t != r:
                out.append(Eq(t, r))
    for name, _ in tm.star_sig.relations:
        for tup in sorted(tm.rel_tables[name]):
            out.append(Rel(name, tuple(tm.classes[i][0] for i in tup)))
    seen, uniq = set(), []
    for f in out:
        if f not in seen:
            seen.add(f)
            uniq.append(f)
    return uniq


def evaluation_hom(tm: TermModel, m: FiniteStructure) -> Homomorphism:
    if m.sig != tm.star_sig:
        raise PreconditionFailed(None, "model signature differs from the term model's")
    for phi in positive_diagram(tm):
        if not _sat(m, phi, {}):
            raise PreconditionFailed(phi)
    h = tuple(eval_term(m, c[0], {}) for c in tm.classes)
    for i, c in enumerate(tm.classes):
        for t in c:
            if eval_term(m, t, {}) != h[i]:
                raise PreconditionFailed(Eq(t, c[0]), f"class of {c[0]} is not well defined in the model ({t})")
    src = tm.as_structure()
    bad = hom_violation(src, m, h)
    if bad is not None:
        raise PreconditionFailed(None, f"evaluation map is not a homomorphism: {bad}")
    return Homomorphism(src, m, h)


def verify_initiality(tm: TermModel, models: Iterable[FiniteStructure]) -> dict:
    rows = []
    for m in models:
        e = evaluation_hom(tm, m)
        homs = enumerate_homs(tm.as_structure(), m)
        if len(homs) != 1 or homs[0].map != e.map:
            raise UniquenessFailure(m, homs, e)
        rows.append({"model_size": m.size, "homs": len(homs), "evaluation": list(e.map)})
    return {"check": "initiality", "ok": True, "models": rows}


# ----------------------------------------------------------------- soundness


class _Coverage:
    """Sentences on which a mode-B term model is guaranteed to agree with its
    backing expansion: every quantifier step must be backed by a witness
    constant, recursively over all class representatives."""

    def __init__(self, tm: TermModel, h: HenkinExtension):
        self.h = h
        self.reps = tm.reps
        self.memo: dict = {}

    def __call__(self, f: Formula) -> bool:
        if isinstance(f, (Eq, Rel, Top, Bot)):
            return True
        if isinstance(f, Not):
            return self(f.body)
        if isinstance(f, (And, Or, Implies)):
            return self(f.left) and self(f.right)
        key = canonical_key(f)
        if key in self.memo:
            return self.memo[key]
        target = f.body if isinstance(f, Exists) else Not(f.body)
        ok = self.h.witness_for(target, f.var) is not None and \
            all(self(substitute(f.body, f.var, r)) for r in self.reps)
        self.memo[key] = ok
        return ok


def verify_soundness(tm: TermModel, rank_bound: int, depth_bound: int, *, count_cap: int = 5000,
                     term_depth: int = 1, henkin: Optional[HenkinExtension] = None,
                     extra: Sequence[Formula] = ()) -> dict:
    """Compare the term model against its source on enumerated sentences.

    Mode B compares with the backing expansion; a disagreement counts against
    the warranty only if the sentence is covered by witnesses.  Mode A
    compares with the fragment's decisions; only quantifier-free sentences
    over stored terms are warranted there.
    """
    s = tm.as_structure()
    agree, in_w, out_w, checked = 0, [], [], 0
    sentences = list(extra) + list(enumerate_sentences(tm.star_sig, depth_bound, count_cap,
                                                       term_depth=term_depth, rank_bound=rank_bound))
    if tm.mode == "semantic":
        backing = tm.backing_structure()
        h = henkin or (tm.expansion.henkin if tm.expansion else None)
        covered = _Coverage(tm, h) if h is not None else (lambda f: quantifier_rank(f) == 0)
        for phi in sentences:
            checked += 1
            if _sat(s, phi, {}) == _sat(backing, phi, {}):
                agree += 1
            elif covered(phi):
                in_w.append(print_formula(phi))
            else:
                out_w.append(print_formula(phi))
        covered_count = sum(1 for phi in sentences if covered(phi))
    else:
        frag = tm.fragment
        members = tm.members()
        covered_count = 0
        for phi in frag.sentences.values():
            if quantifier_rank(phi) > rank_bound:
                continue
            checked += 1
            want = frag.value(phi)
            warranted = quantifier_rank(phi) == 0 and _terms_within(phi, members)
            covered_count += warranted
            if _sat(s, phi, {}) == want:
                agree += 1
            elif warranted:
                in_w.append(print_formula(phi))
            else:
                out_w.append(print_formula(phi))
    return {"check": "soundness", "mode": tm.mode, "rank_bound": rank_bound, "depth_bound": depth_bound,
            "checked": checked, "agreements": agree, "covered": covered_count,
            "in_warranty_disagreements": in_w, "out_of_warranty_disagreements": out_w,
            "ok": not in_w}


def _terms_within(f: Formula, members: dict) -> bool:
    if isinstance(f, (Eq, Rel)):
        return all(t in members for t in _closed_terms(f))
    if isinstance(f, Not):
        return _terms_within(f.body, members)
    if isinstance(f, (And, Or, Implies)):
        return _terms_within(f.left, members) and _terms_within(f.right, members)
    return isinstance(f, (Top, Bot))


# ------------------------------------------------------ naturality, functors


def _refuse_flagged(m: TheoryMorphism, allow_unknown: bool) -> None:
    if m.flagged and not allow_unknown:
        raise PreconditionFailed(None, "morphism has axioms the oracle could not confirm; "
                                       "pass allow_unknown to use it anyway")


def induced_map(fstar: TheoryMorphism, tm1: TermModel, tm2: TermModel) -> tuple:
    """F(f*): [t] -> [f*(t)] on class indices."""
    if fstar.sigma.source != tm1.star_sig or fstar.sigma.target != tm2.star_sig:
        raise PreconditionFailed(None, "morphism does not connect the term models' signatures")
    return tuple(tm2.class_of(translate_term(fstar.sigma, c[0])) for c in tm1.classes)


def verify_naturality(fstar: TheoryMorphism, tm1: TermModel, tm2: TermModel, m: FiniteStructure,
                      *, allow_unknown: bool = False) -> dict:
    _refuse_flagged(fstar, allow_unknown)
    sigma = fstar.sigma
    e2 = evaluation_hom(tm2, m)
    m_red = reduct(sigma, m)
    e1 = evaluation_hom(tm1, m_red)
    F = induced_map(fstar, tm1, tm2)
    target = reduct(sigma, tm2.as_structure())
    bad = hom_violation(tm1.as_structure(), target, F)
    rows, ok = [], bad is None
    for i, c in enumerate(tm1.classes):
        t = c[0]
        left = e2.map[F[i]]
        right = e1.map[i]
        chain = eval_term(m, translate_term(sigma, t), {}) == eval_term(m_red, t, {})
        row_ok = left == right and chain
        ok &= row_ok
        rows.append({"class": str(t), "image": str(tm2.classes[F[i]][0]), "via_square": left,
                     "direct": right, "chain": chain, "ok": row_ok})
    return {"check": "naturality", "ok": ok, "induced_is_hom": bad is None, "hom_violation": bad,
            "classes": rows}


def verify_functoriality(f: TheoryMorphism, g: TheoryMorphism, tms: Sequence[TermModel],
                         gf: Optional[TheoryMorphism] = None, *, allow_unknown: bool = False) -> dict:
    """Identity law on each term model; composition law on the first.

    ``gf`` defaults to the composite of ``f`` and ``g``; when the composite
    was extended to the Henkin signatures separately, passing it also checks
    that it coincides with ``g ∘ f`` symbol by symbol.
    """
    from .theory import SignatureMorphism, compose_morphisms

    for mor in (f, g, gf):
        if mor is not None:
            _refuse_flagged(mor, allow_unknown)
    tm1, tm2, tm3 = tms
    identity = []
    for tm in tms:
        ident = TheoryMorphism(SignatureMorphism.identity(tm.star_sig), Theory(tm.star_sig, ()),
                               Theory(tm.star_sig, ()))
        identity.append(induced_map(ident, tm, tm) == tuple(range(tm.size)))
    composite = compose_morphisms(g, f)
    symbols_ok = True
    if gf is not None:
        symbols_ok = gf.sigma.fmap == composite.sigma.fmap and gf.sigma.rmap == composite.sigma.rmap
    else:
        gf = composite
    Ff = induced_map(f, tm1, tm2)
    Fg = induced_map(g, tm2, tm3)
    Fgf = induced_map(gf, tm1, tm3)
    comp = [Fgf[i] == Fg[Ff[i]] for i in range(tm1.size)]
    return {"check": "functoriality", "identity": identity, "composition": comp,
            "composite_symbols_agree": symbols_ok,
            "ok": all(identity) and all(comp) and symbols_ok}


def verify_completeness(tm: TermModel, t: Theory) -> dict:
    s = tm.as_structure()
    members = tm.members()
    rows, ok = [], True
    for ax in t.axioms:
        holds = _sat(s, ax, {})
        if tm.mode == "semantic" or (quantifier_rank(ax) == 0 and _terms_within(ax, members)):
            status = "satisfied" if holds else "failed"
            ok &= holds
        else:
            status = "satisfied" if holds else "unverified"
        rows.append({"axiom": print_formula(ax), "status": status})
    return {"check": "completeness", "mode": tm.mode, "ok": ok, "axioms": rows}
