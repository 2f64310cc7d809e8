"""Theories, signature and theory morphisms, and the Henkin extension builder."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional

from .syntax import (
    App, BINARY, Bot, Eq, Exists, Formula, Implies, Not, QUANT, Rel, Signature,
    SyntaxError_, Term, Top, Var, canonical_key, canonicalize, enumerate_unary_formulas,
    free_vars, is_sentence, substitute, symbols,
)

log = logging.getLogger(__name__)

WITNESS_CAP = 10_000


class MorphismError(ValueError):
    pass


class ResourceError(RuntimeError):
    """A configured size cap would be exceeded."""


@dataclass(frozen=True)
class Theory:
    sig: Signature
    axioms: tuple = ()

    def __post_init__(self):
        axioms = tuple(self.axioms)
        object.__setattr__(self, "axioms", axioms)
        for a in axioms:
            if not is_sentence(a):
                raise SyntaxError_(f"axiom is not a sentence: {a}")
            fs, rs = symbols(a)
            for f in fs:
                if f not in self.sig.fn_arity:
                    raise SyntaxError_(f"unknown function {f} in axiom {a}")
            for r in rs:
                if r not in self.sig.rel_arity:
                    raise SyntaxError_(f"unknown relation {r} in axiom {a}")

    @property
    def axiom_keys(self) -> frozenset:
        return frozenset(canonical_key(a) for a in self.axioms)


# ---------------------------------------------------------------- morphisms


@dataclass(frozen=True)
class SignatureMorphism:
    source: Signature
    target: Signature
    fn_map: tuple = ()
    rel_map: tuple = ()

    def __post_init__(self):
        fm = dict(self.fn_map)
        rm = dict(self.rel_map)
        for name, arity in self.source.functions:
            if name not in fm:
                raise MorphismError(f"function {name} not mapped")
            img = fm[name]
            if self.target.fn_arity.get(img) != arity:
                raise MorphismError(f"{name}/{arity} -> {img} does not preserve arity or kind")
        for name, arity in self.source.relations:
            if name not in rm:
                raise MorphismError(f"relation {name} not mapped")
            img = rm[name]
            if self.target.rel_arity.get(img) != arity:
                raise MorphismError(f"{name}/{arity} -> {img} does not preserve arity or kind")
        if set(fm) - set(self.source.fn_arity) or set(rm) - set(self.source.rel_arity):
            raise MorphismError("morphism maps symbols outside its source")
        object.__setattr__(self, "fn_map", tuple(sorted(fm.items())))
        object.__setattr__(self, "rel_map", tuple(sorted(rm.items())))

    @classmethod
    def of(cls, source: Signature, target: Signature, fn_map: Mapping[str, str] | None = None,
           rel_map: Mapping[str, str] | None = None) -> "SignatureMorphism":
        """Unlisted symbols map to the same-named target symbol."""
        fm = {n: n for n, _ in source.functions}
        rm = {n: n for n, _ in source.relations}
        fm.update(fn_map or {})
        rm.update(rel_map or {})
        return cls(source, target, tuple(fm.items()), tuple(rm.items()))

    @classmethod
    def identity(cls, sig: Signature) -> "SignatureMorphism":
        return cls.of(sig, sig)

    @property
    def fmap(self) -> dict:
        return dict(self.fn_map)

    @property
    def rmap(self) -> dict:
        return dict(self.rel_map)

    def then(self, other: "SignatureMorphism") -> "SignatureMorphism":
        """``other ∘ self``."""
        if other.source != self.target:
            raise MorphismError("signature morphisms are not composable")
        of, orr = other.fmap, other.rmap
        return SignatureMorphism(self.source, other.target,
                                 tuple((k, of[v]) for k, v in self.fn_map),
                                 tuple((k, orr[v]) for k, v in self.rel_map))


def translate_term(sigma: SignatureMorphism, t: Term) -> Term:
    fm = sigma.fmap

    def go(t):
        if isinstance(t, Var):
            return t
        if t.fn not in fm:
            raise MorphismError(f"symbol {t.fn} not in morphism domain")
        return App(fm[t.fn], tuple(go(a) for a in t.args))

    return go(t)


def translate(sigma: SignatureMorphism, phi: Formula) -> Formula:
    return translate_with(sigma.fmap, sigma.rmap, phi)


def translate_with(fm: dict, rm: dict, phi: Formula) -> Formula:
    def tt(t):
        if isinstance(t, Var):
            return t
        if t.fn not in fm:
            raise MorphismError(f"symbol {t.fn} not in morphism domain")
        return App(fm[t.fn], tuple(tt(a) for a in t.args))

    def go(f):
        if isinstance(f, Eq):
            return Eq(tt(f.left), tt(f.right))
        if isinstance(f, Rel):
            if f.name not in rm:
                raise MorphismError(f"symbol {f.name} not in morphism domain")
            return Rel(rm[f.name], tuple(tt(a) for a in f.args))
        if isinstance(f, (Top, Bot)):
            return f
        if isinstance(f, Not):
            return Not(go(f.body))
        if isinstance(f, BINARY):
            return type(f)(go(f.left), go(f.right))
        return type(f)(f.var, go(f.body))

    return go(phi)


@dataclass(frozen=True)
class TheoryMorphism:
    """A signature morphism that carries every source axiom into a
    consequence of the target.  ``verdicts`` records, per source axiom, how
    that was established; ``flagged`` is set when any verdict is unknown."""

    sigma: SignatureMorphism
    source: Theory
    target: Theory
    verdicts: tuple = ()
    flagged: bool = False

    def __post_init__(self):
        if self.sigma.source != self.source.sig or self.sigma.target != self.target.sig:
            raise MorphismError("signature morphism does not match theory signatures")


Oracle = Callable[[tuple, Formula], str]


def _default_oracle(axioms: tuple, phi: Formula) -> str:
    from .decision import entails
    return entails(axioms, phi).kind


def theory_morphism(sigma: SignatureMorphism, source: Theory, target: Theory,
                    oracle: Optional[Oracle] = None) -> TheoryMorphism:
    """Check axiom preservation: membership first, then the decision oracle.

    Oracle verdict kinds follow ``decision``: ``inconsistent`` on
    ``target ∪ {¬φ}`` means entailed, ``consistent`` means refuted.
    """
    oracle = oracle or _default_oracle
    keys = target.axiom_keys
    verdicts = []
    flagged = False
    for ax in source.axioms:
        img = translate(sigma, ax)
        if canonical_key(img) in keys:
            verdicts.append(("member", str(img)))
            continue
        kind = oracle(target.axioms, img)
        if kind == "inconsistent":
            verdicts.append(("entailed", str(img)))
        elif kind == "consistent":
            raise MorphismError(f"target does not entail translated axiom {img}")
        else:
            verdicts.append(("unknown", str(img)))
            flagged = True
    return TheoryMorphism(sigma, source, target, tuple(verdicts), flagged)


def identity_morphism(t: Theory) -> TheoryMorphism:
    return TheoryMorphism(SignatureMorphism.identity(t.sig), t, t,
                          tuple(("member", str(a)) for a in t.axioms), False)


def compose_morphisms(g: TheoryMorphism, f: TheoryMorphism) -> TheoryMorphism:
    """``g ∘ f``; axiom preservation is inherited from the factors."""
    if f.target != g.source:
        raise MorphismError("endpoint mismatch: f.target != g.source")
    sigma = f.sigma.then(g.sigma)
    verdicts = tuple(("composed", str(translate(sigma, a))) for a in f.source.axioms)
    return TheoryMorphism(sigma, f.source, g.target, verdicts, f.flagged or g.flagged)


# ------------------------------------------------------------ Henkin theory


def witness_name(level: int, index: int) -> str:
    return f"w${level}${index}"


def witness_level(name: str) -> int:
    return int(name.split("$")[1])


def level_depth_bound(formula_depth_bound: int, level: int) -> int:
    """Depth bound for level-``level`` witness formulas.

    A witness at level k only has to serve quantifiers nested k-1 deep
    inside a level-1 formula, so the bound shrinks by one per level.
    """
    return max(formula_depth_bound - (level - 1), 0)


@dataclass
class HenkinExtension:
    base: Theory
    star_sig: Signature
    witnesses: dict            # canonical key of φ(v0) -> witness name
    formulas: dict             # witness name -> canonical φ with free v0
    henkin_axioms: list
    levels: int
    formula_depth_bound: int
    term_depth: int = 1

    @property
    def theory(self) -> Theory:
        """H(T): base axioms plus Henkin axioms over Σ*."""
        return Theory(self.star_sig, self.base.axioms + tuple(self.henkin_axioms))

    def level_of(self, name: str) -> int:
        return witness_level(name) if name in self.formulas else 0

    def names_by_level(self) -> list:
        return sorted(self.formulas, key=lambda n: tuple(int(x) for x in n.split("$")[1:]))

    def counts_per_level(self) -> dict:
        out: dict = {}
        for n in self.formulas:
            out[witness_level(n)] = out.get(witness_level(n), 0) + 1
        return out

    def witness_for(self, phi: Formula, var: str) -> Optional[str]:
        return self.witnesses.get(canonical_key(phi, (var,)))


def henkin_axiom(phi: Formula, c: str) -> Formula:
    """∃v0 φ(v0) → φ(c) for a canonical φ with free variable v0."""
    return Implies(Exists("v0", phi), substitute(phi, "v0", App(c, ())))


def henkinize(t: Theory, levels: int, formula_depth_bound: int, *, term_depth: int = 1,
              cap: int = WITNESS_CAP) -> HenkinExtension:
    """Add witness constants level by level.

    Level k ranges over formulas with exactly the free variable v0, over Σ
    plus the witnesses of levels < k, of depth at most
    ``level_depth_bound(formula_depth_bound, k)``; formulas already witnessed
    at a lower level keep their constant.
    """
    if levels < 1 or formula_depth_bound < 1:
        raise ValueError("levels and formula_depth_bound must be >= 1")
    if not t.sig.is_user:
        raise ValueError("base signature already contains witness constants")
    witnesses: dict = {}
    formulas: dict = {}
    axioms: list = []
    sig = t.sig
    prev_level: set = set()
    for level in range(1, levels + 1):
        new: dict = {}
        bound = level_depth_bound(formula_depth_bound, level)
        for phi in enumerate_unary_formulas(sig, bound, term_depth=term_depth):
            if level > 1 and not (symbols(phi)[0] & prev_level):
                continue
            key = canonical_key(phi, ("v0",))
            if key in witnesses:
                continue
            name = witness_name(level, len(new))
            if len(witnesses) + 1 > cap:
                raise ResourceError(f"witness count exceeds cap {cap} at level {level}")
            witnesses[key] = name
            formulas[name] = phi
            new[name] = 0
            axioms.append(henkin_axiom(phi, name))
        log.debug("henkin level %d: %d witnesses", level, len(new))
        sig = sig.extend(functions=new)
        prev_level = set(new)
    return HenkinExtension(t, sig, witnesses, formulas, axioms, levels, formula_depth_bound, term_depth)


def henkin_from_document(base: Theory, star_sig: Signature, witnesses: Iterable[str],
                         henkin_axioms: Iterable[Formula], formula_depth_bound: int,
                         term_depth: int = 1) -> HenkinExtension:
    """Rebuild a HenkinExtension from a file written by ``henkinize``."""
    wit: dict = {}
    forms: dict = {}
    axioms = list(henkin_axioms)
    names = set(witnesses)
    for ax in axioms:
        if not (isinstance(ax, Implies) and isinstance(ax.left, Exists)):
            raise ValueError(f"not a Henkin axiom: {ax}")
        v = ax.left.var
        phi = canonicalize(ax.left.body, (v,))
        target = canonicalize(ax.right)
        fresh = (symbols(ax.right)[0] - symbols(ax.left)[0]) & names
        match = [n for n in sorted(fresh) if canonicalize(substitute(phi, "v0", App(n, ()))) == target]
        if len(match) != 1:
            raise ValueError(f"cannot identify the witness of {ax}")
        wit[canonical_key(phi, ("v0",))] = match[0]
        forms[match[0]] = phi
    levels = max((witness_level(n) for n in names), default=0)
    return HenkinExtension(base, star_sig, wit, forms, axioms, levels, formula_depth_bound, term_depth)


def extend_morphism_to_henkin(f: TheoryMorphism, h1: HenkinExtension,
                              h2: HenkinExtension) -> TheoryMorphism:
    """Extend ``f`` to Σ1* -> Σ2* by sending c_φ to c_{f(φ)}, level by level."""
    if h1.base != f.source or h2.base != f.target:
        raise MorphismError("Henkin extensions do not sit over the morphism's theories")
    if h2.levels < h1.levels or h2.formula_depth_bound < h1.formula_depth_bound \
            or h2.term_depth < h1.term_depth:
        raise MorphismError("target Henkin bounds are smaller than the source's")
    fm = dict(f.sigma.fn_map)
    rm = dict(f.sigma.rel_map)
    for name in h1.names_by_level():
        img = translate_with(fm, rm, h1.formulas[name])
        key = canonical_key(img, ("v0",))
        if key not in h2.witnesses:
            raise MorphismError(f"missing target witness for {img} (image of {name}); "
                                "Henkin bounds are not aligned")
        fm[name] = h2.witnesses[key]
    sigma = SignatureMorphism(h1.star_sig, h2.star_sig, tuple(fm.items()), tuple(rm.items()))
    t1, t2 = h1.theory, h2.theory
    keys = t2.axiom_keys
    verdicts = list(f.verdicts)
    for ax in h1.henkin_axioms:
        img = translate(sigma, ax)
        if canonical_key(img) not in keys:
            raise MorphismError(f"translated Henkin axiom {img} is not a Henkin axiom of the target")
        verdicts.append(("member", str(img)))
    return TheoryMorphism(sigma, t1, t2, tuple(verdicts), f.flagged)
