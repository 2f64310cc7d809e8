"""Three-valued consistency oracle and the Lindenbaum completion.

The oracle combines bounded finite-model search (sound for "consistent")
with a bounded analytic tableau (sound for "inconsistent").  Anything it
cannot settle within budget is reported as unknown, never guessed.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
from itertools import product
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, Optional, Union

from .congruence import CongruenceClosure
from .semantics import (
    FiniteStructure, SearchBudgetExceeded, _sat, iter_models, structure_to_json,
)
from .syntax import (
    And, App, Bot, Eq, Exists, Forall, Formula, Implies, Not, Or, Rel, Signature, Top,
    canonical_key, enumerate_sentences, enumerate_terms, print_formula, substitute,
    symbols, term_key,
)
from .theory import HenkinExtension, Theory

log = logging.getLogger(__name__)

BUDGET_SCALE_ENV = "HENKIN_FORGE_BUDGET_SCALE"


@dataclass(frozen=True)
class Budgets:
    model_size: int = 4
    proof_steps: int = 20_000
    term_depth: int = 3
    search_nodes: int = 200_000

    def scaled(self, factor: float) -> "Budgets":
        return Budgets(self.model_size, max(1, int(self.proof_steps * factor)), self.term_depth,
                       max(1, int(self.search_nodes * factor)))

    @classmethod
    def from_env(cls, **kw) -> "Budgets":
        b = cls(**kw)
        factor = float(os.environ.get(BUDGET_SCALE_ENV, "1") or 1)
        return b.scaled(factor) if factor != 1 else b


class BudgetExceeded(RuntimeError):
    pass


class InconsistentInput(ValueError):
    def __init__(self, message: str, verdict: "OracleVerdict"):
        super().__init__(message)
        self.verdict = verdict


class OracleStuck(RuntimeError):
    def __init__(self, sentence: Optional[Formula], fragment: Optional["DecidedFragment"], detail: dict):
        where = print_formula(sentence) if sentence is not None else "base theory"
        super().__init__(f"oracle cannot decide consistency of {where} within budget")
        self.sentence = sentence
        self.fragment = fragment
        self.detail = detail


# -------------------------------------------------------------------- NNF


def nnf(phi: Formula, positive: bool = True) -> Formula:
    """Negation normal form; implications are eliminated."""
    if isinstance(phi, (Eq, Rel)):
        return phi if positive else Not(phi)
    if isinstance(phi, Top):
        return phi if positive else Bot()
    if isinstance(phi, Bot):
        return phi if positive else Top()
    if isinstance(phi, Not):
        return nnf(phi.body, not positive)
    if isinstance(phi, And):
        l, r = nnf(phi.left, positive), nnf(phi.right, positive)
        return And(l, r) if positive else Or(l, r)
    if isinstance(phi, Or):
        l, r = nnf(phi.left, positive), nnf(phi.right, positive)
        return Or(l, r) if positive else And(l, r)
    if isinstance(phi, Implies):
        l, r = nnf(phi.left, not positive), nnf(phi.right, positive)
        return Or(l, r) if positive else And(l, r)
    body = nnf(phi.body, positive)
    if isinstance(phi, Forall):
        return Forall(phi.var, body) if positive else Exists(phi.var, body)
    return Exists(phi.var, body) if positive else Forall(phi.var, body)


def _is_literal(f: Formula) -> bool:
    return isinstance(f, (Eq, Rel)) or (isinstance(f, Not) and isinstance(f.body, (Eq, Rel)))


def _constants_and_functions(f: Formula) -> tuple[set, dict]:
    consts, funcs = set(), {}

    def walk_t(t):
        if isinstance(t, App):
            if t.args:
                funcs[t.fn] = len(t.args)
            else:
                consts.add(t.fn)
            for a in t.args:
                walk_t(a)

    def walk(g):
        if isinstance(g, Eq):
            walk_t(g.left)
            walk_t(g.right)
        elif isinstance(g, Rel):
            for a in g.args:
                walk_t(a)
        elif isinstance(g, Not):
            walk(g.body)
        elif isinstance(g, (And, Or, Implies)):
            walk(g.left)
            walk(g.right)
        elif isinstance(g, (Forall, Exists)):
            walk(g.body)

    walk(f)
    return consts, funcs


def find_clash(literals: Iterable[Formula]) -> Optional[dict]:
    """A closing contradiction among ground literals, using congruence closure."""
    pos_eq, neg_eq, pos_rel, neg_rel = [], [], [], []
    for lit in literals:
        if isinstance(lit, Bot):
            return {"kind": "false", "literals": [lit]}
        if isinstance(lit, Eq):
            pos_eq.append(lit)
        elif isinstance(lit, Rel):
            pos_rel.append(lit)
        elif isinstance(lit, Not) and isinstance(lit.body, Eq):
            neg_eq.append(lit)
        elif isinstance(lit, Not) and isinstance(lit.body, Rel):
            neg_rel.append(lit)
    cc = CongruenceClosure()
    for lit in neg_eq:
        cc.add(lit.body.left)
        cc.add(lit.body.right)
    for lit in pos_rel + [n.body for n in neg_rel]:
        for a in lit.args:
            cc.add(a)
    for e in pos_eq:
        cc.merge(e.left, e.right)
    for n in neg_eq:
        if cc.equivalent(n.body.left, n.body.right):
            return {"kind": "equality", "literals": pos_eq + [n]}
    by_name: dict = {}
    for p in pos_rel:
        by_name.setdefault(p.name, []).append(p)
    for n in neg_rel:
        for p in by_name.get(n.body.name, ()):
            if all(cc.equivalent(a, b) for a, b in zip(p.args, n.body.args)):
                return {"kind": "relation", "literals": pos_eq + [p, n]}
    return None


# ---------------------------------------------------------------- tableau


class _Branch:
    def __init__(self):
        self.formulas: set = set()
        self.alpha: list = []
        self.beta: list = []
        self.universals: list = []
        self.literals: list = []
        self.used: set = set()
        self.consts: set = set()
        self.funcs: dict = {}
        self.terms: Optional[list] = None

    def copy(self) -> "_Branch":
        b = _Branch()
        b.formulas = set(self.formulas)
        b.alpha = list(self.alpha)
        b.beta = list(self.beta)
        b.universals = list(self.universals)
        b.literals = list(self.literals)
        b.used = set(self.used)
        b.consts = set(self.consts)
        b.funcs = dict(self.funcs)
        return b

    def add(self, f: Formula) -> None:
        if f in self.formulas:
            return
        self.formulas.add(f)
        c, fn = _constants_and_functions(f)
        if not c <= self.consts or fn.keys() - self.funcs.keys():
            self.consts |= c
            self.funcs.update(fn)
            self.terms = None
        if _is_literal(f) or isinstance(f, (Top, Bot)):
            self.literals.append(f)
        elif isinstance(f, Or):
            self.beta.append(f)
        elif isinstance(f, Forall):
            self.universals.append(f)
        else:
            self.alpha.append(f)


def _ground_terms(consts, funcs: dict, max_depth: int) -> list:
    allt = [App(c, ()) for c in sorted(consts)]
    prev = set(allt)
    for _ in range(max_depth):
        new = [App(f, args) for f, a in sorted(funcs.items())
               for args in product(allt, repeat=a) if any(x in prev for x in args)]
        allt += new
        prev = set(new)
    return sorted(allt, key=term_key)


class Tableau:
    """Bounded analytic tableau for ground-instantiated FOL with equality.

    Rule priority: alpha/delta, then beta, then gamma instantiation with
    ground terms up to ``term_depth`` built from the branch's symbols.
    Branches close on ``false``, on ``¬(t = s)`` with ``t ~ s``, or on
    ``R(t̄)`` / ``¬R(s̄)`` with congruent arguments.
    """

    def __init__(self, step_budget: int = 20_000, term_depth: int = 3):
        self.step_budget = step_budget
        self.term_depth = term_depth
        self.steps = 0
        self.fresh = 0

    def _fresh_const(self, br: _Branch) -> str:
        while True:
            name = f"k${self.fresh}"
            self.fresh += 1
            if name not in br.consts:
                return name

    def _tick(self):
        self.steps += 1
        if self.steps > self.step_budget:
            raise BudgetExceeded(f"tableau exceeded {self.step_budget} steps")

    def refute(self, sentences: Iterable[Formula]) -> tuple[bool, list]:
        """Returns (closed, trace)."""
        br = _Branch()
        for s in sentences:
            br.add(nnf(s))
        trace: list = []
        closed = self._expand(br, trace)
        return closed, trace

    def _ground_terms(self, br: _Branch, trace: list) -> list:
        if br.terms is None:
            if not br.consts:
                c = self._fresh_const(br)
                br.consts.add(c)
                trace.append({"rule": "domain", "constant": c})
            br.terms = _ground_terms(br.consts, br.funcs, self.term_depth)
        return br.terms

    def _expand(self, br: _Branch, trace: list) -> bool:
        checked = -1
        while True:
            if len(br.literals) != checked:
                checked = len(br.literals)
                clash = find_clash(br.literals)
                if clash is not None:
                    trace.append({"rule": "close", **clash})
                    return True
            self._tick()
            if br.alpha:
                f = br.alpha.pop(0)
                if isinstance(f, And):
                    trace.append({"rule": "alpha", "formula": f, "added": [f.left, f.right]})
                    br.add(f.left)
                    br.add(f.right)
                elif isinstance(f, Exists):
                    c = self._fresh_const(br)
                    inst = substitute(f.body, f.var, App(c, ()))
                    trace.append({"rule": "delta", "formula": f, "constant": c, "added": [inst]})
                    br.add(inst)
                continue
            f = self._pick_beta(br)
            if f is not None:
                sub = []
                for part in (f.left, f.right):
                    child = br.copy()
                    child.add(part)
                    seq: list = []
                    sub.append(seq)
                    if not self._expand(child, seq):
                        trace.append({"rule": "beta", "formula": f, "branches": sub})
                        return False
                trace.append({"rule": "beta", "formula": f, "branches": sub})
                return True
            inst = self._next_gamma(br, trace)
            if inst is None:
                return False
            u, t = inst
            body = substitute(u.body, u.var, t)
            br.used.add((u, t))
            trace.append({"rule": "gamma", "formula": u, "term": t, "added": [body]})
            br.add(body)

    def _pick_beta(self, br: _Branch):
        """Drop disjunctions already satisfied on the branch, then prefer one
        with a side that closes at once."""
        def complement(g):
            return g.body if isinstance(g, Not) else Not(g)

        keep = [f for f in br.beta
                if not any(isinstance(g, Top) or g in br.formulas for g in (f.left, f.right))]
        br.beta = keep
        if not keep:
            return None
        for i, f in enumerate(keep):
            if any(isinstance(g, Bot) or (_is_literal(g) and complement(g) in br.formulas)
                   for g in (f.left, f.right)):
                return keep.pop(i)
        return keep.pop(0)

    def _next_gamma(self, br: _Branch, trace: list):
        if not br.universals:
            return None
        terms = self._ground_terms(br, trace)
        for t in terms:
            for u in br.universals:
                if (u, t) not in br.used:
                    return u, t
        return None


def _closed_term(t) -> bool:
    from .syntax import term_vars
    return not term_vars(t)


def replay_refutation(sentences: Iterable[Formula], trace: list) -> bool:
    """Independently re-check a tableau trace: every rule application must be
    licensed by a formula on its branch and every leaf must close."""

    def occurs(c: str, branch: set) -> bool:
        return any(c in _constants_and_functions(f)[0] for f in branch)

    def run(branch: set, seq: list) -> bool:
        branch = set(branch)
        for i, step in enumerate(seq):
            rule = step["rule"]
            if rule == "domain":
                continue
            if rule == "close":
                if i != len(seq) - 1:
                    return False
                lits = step["literals"]
                if not all(l in branch for l in lits):
                    return False
                return find_clash(lits) is not None
            f = step["formula"]
            if f not in branch:
                return False
            if rule == "alpha":
                if not isinstance(f, And) or step["added"] != [f.left, f.right]:
                    return False
            elif rule == "delta":
                c = step["constant"]
                if not isinstance(f, Exists) or occurs(c, branch):
                    return False
                if step["added"] != [substitute(f.body, f.var, App(c, ()))]:
                    return False
            elif rule == "gamma":
                t = step["term"]
                if not isinstance(f, Forall) or not _closed_term(t):
                    return False
                if step["added"] != [substitute(f.body, f.var, t)]:
                    return False
            elif rule == "beta":
                if not isinstance(f, Or) or i != len(seq) - 1 or len(step["branches"]) != 2:
                    return False
                return (run(branch | {f.left}, step["branches"][0])
                        and run(branch | {f.right}, step["branches"][1]))
            else:
                return False
            branch.update(step["added"])
        return False

    return run({nnf(s) for s in sentences}, trace)


def trace_to_json(trace: list) -> list:
    out = []
    for step in trace:
        d = {}
        for k, v in step.items():
            if k == "branches":
                d[k] = [trace_to_json(b) for b in v]
            elif k in ("added", "literals"):
                d[k] = [print_formula(x) for x in v]
            elif k == "formula":
                d[k] = print_formula(v)
            elif k == "term":
                d[k] = str(v)
            else:
                d[k] = v
        out.append(d)
    return out


def trace_size(trace: list) -> int:
    return sum(1 + sum(trace_size(b) for b in s.get("branches", ())) for s in trace)


# ------------------------------------------------------------------ oracle


@dataclass
class OracleVerdict:
    kind: str                        # consistent | inconsistent | unknown
    model: Optional[FiniteStructure] = None
    refutation: Optional[list] = None
    record: dict = field(default_factory=dict)

    @property
    def entailed(self) -> bool:
        """For a verdict on axioms ∪ {¬φ}: true iff φ is entailed."""
        return self.kind == "inconsistent"

    def to_json(self) -> dict:
        d = {"kind": self.kind, "record": self.record}
        if self.model is not None:
            d["model"] = structure_to_json(self.model)
        if self.refutation is not None:
            d["refutation_steps"] = trace_size(self.refutation)
        return d


def signature_of(sentences: Iterable[Formula]) -> Signature:
    fns, rels = {}, {}

    def walk_t(t):
        if isinstance(t, App):
            fns[t.fn] = len(t.args)
            for a in t.args:
                walk_t(a)

    def walk(g):
        if isinstance(g, Eq):
            walk_t(g.left)
            walk_t(g.right)
        elif isinstance(g, Rel):
            rels[g.name] = len(g.args)
            for a in g.args:
                walk_t(a)
        elif isinstance(g, Not):
            walk(g.body)
        elif isinstance(g, (And, Or, Implies)):
            walk(g.left)
            walk(g.right)
        elif isinstance(g, (Forall, Exists)):
            walk(g.body)

    for s in sentences:
        walk(s)
    return Signature.of(fns, rels)


def check_consistency(axioms: Iterable[Formula], model_size_bound: int = 4, proof_budget: int = 20_000,
                      *, sig: Optional[Signature] = None, term_depth: int = 3,
                      search_nodes: int = 200_000) -> OracleVerdict:
    """Consistent if a model of size <= bound is found; Inconsistent if the
    tableau closes within budget; Unknown otherwise."""
    axioms = list(axioms)
    sig = sig or signature_of(axioms)
    record = {"model_size_bound": model_size_bound, "proof_budget": proof_budget,
              "term_depth": term_depth, "search_nodes": search_nodes}
    exhausted = []
    for n in range(1, model_size_bound + 1):
        try:
            for m in iter_models(sig, axioms, n, search_nodes):
                assert all(_sat(m, a, {}) for a in axioms)
                return OracleVerdict("consistent", model=m, record={**record, "model_size": n})
        except SearchBudgetExceeded:
            exhausted.append(n)
    tab = Tableau(proof_budget, term_depth)
    try:
        closed, trace = tab.refute(axioms)
    except BudgetExceeded:
        return OracleVerdict("unknown", record={**record, "proof_steps": tab.steps,
                                                "search_incomplete_sizes": exhausted,
                                                "reason": "tableau budget exhausted"})
    if closed:
        return OracleVerdict("inconsistent", refutation=trace, record={**record, "proof_steps": tab.steps})
    return OracleVerdict("unknown", record={**record, "proof_steps": tab.steps,
                                            "search_incomplete_sizes": exhausted,
                                            "reason": "open saturated branch within term-depth bound"})


def entails(axioms: Iterable[Formula], phi: Formula, budgets: Optional[Budgets] = None,
            sig: Optional[Signature] = None) -> OracleVerdict:
    b = budgets or Budgets()
    axioms = list(axioms)
    return check_consistency(axioms + [Not(phi)], b.model_size, b.proof_steps, sig=sig,
                             term_depth=b.term_depth, search_nodes=b.search_nodes)


# --------------------------------------------------------------- Lindenbaum


@dataclass
class DecidedFragment:
    """Finite stand-in for a maximal consistent theory: the first N sentences
    of the enumeration, each marked true or false (false meaning its negation
    was added)."""

    base: Theory
    decided: dict              # canonical key -> bool, in decision order
    sentences: dict            # canonical key -> sentence
    order: dict
    provenance: list
    model: Optional[FiniteStructure] = None
    stuck: Optional[dict] = None

    def value(self, phi: Formula) -> Optional[bool]:
        return self.decided.get(canonical_key(phi))

    def true_sentences(self) -> list:
        return [self.sentences[k] if v else Not(self.sentences[k]) for k, v in self.decided.items()]

    def polarities(self) -> list:
        return list(self.decided.values())

    def to_json(self) -> dict:
        return {
            "order": self.order,
            "signature": {"functions": dict(self.base.sig.functions),
                          "relations": dict(self.base.sig.relations)},
            "base_axioms": [print_formula(a) for a in self.base.axioms],
            "decided": [{"sentence": print_formula(self.sentences[k]), "value": v}
                        for k, v in self.decided.items()],
            "provenance": self.provenance,
            "stuck": self.stuck,
        }

    @classmethod
    def from_json(cls, d: dict) -> "DecidedFragment":
        from .syntax import parse_formula
        sig = Signature.of(d["signature"]["functions"], d["signature"]["relations"])
        base = Theory(sig, tuple(parse_formula(a, sig) for a in d["base_axioms"]))
        frag = cls(base, {}, {}, d["order"], d["provenance"], None, d.get("stuck"))
        for row in d["decided"]:
            phi = parse_formula(row["sentence"], sig)
            key = canonical_key(phi)
            frag.decided[key] = row["value"]
            frag.sentences[key] = phi
        return frag

    def digest(self) -> str:
        blob = json.dumps(self.to_json(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def lindenbaum_complete(h: Union[HenkinExtension, Theory], depth_bound: int, count_bound: int,
                        budgets: Optional[Budgets] = None, *, term_depth: int = 1,
                        rank_bound: Optional[int] = None, lead: Iterable[Formula] = ()) -> DecidedFragment:
    """Decide ψ_0, ψ_1, ... in sentence order: add ψ_n when the current set
    plus ψ_n is consistent, otherwise add ¬ψ_n.

    Consistency of ``current ∪ {ψ}`` is first tried on the model witnessing
    the current set (a model of it that satisfies ψ settles the question),
    then by a closure check of ψ against the ground literals decided so far
    (refuting a subset refutes the whole set), then by the full oracle.  When the oracle cannot show ``current ∪ {ψ}``
    consistent or inconsistent, the run stops with :class:`OracleStuck`.
    """
    b = budgets or Budgets()
    base = h.theory if isinstance(h, HenkinExtension) else h
    sig = base.sig
    order = {"depth_bound": depth_bound, "count_bound": count_bound, "term_depth": term_depth,
             "rank_bound": rank_bound, "lead": [print_formula(f) for f in lead],
             "budgets": asdict(b)}
    start = check_consistency(base.axioms, b.model_size, b.proof_steps, sig=sig,
                              term_depth=b.term_depth, search_nodes=b.search_nodes)
    if start.kind == "inconsistent":
        raise InconsistentInput("base axioms are refuted", start)
    if start.kind == "unknown":
        raise OracleStuck(None, None, start.record)
    model = start.model
    current = list(base.axioms)
    literals = [f for f in map(nnf, current) if _is_literal(f)]
    frag = DecidedFragment(base, {}, {}, order, [], model)
    for step, psi in enumerate(enumerate_sentences(sig, depth_bound, count_bound, term_depth=term_depth,
                                                   rank_bound=rank_bound, lead=lead)):
        key = canonical_key(psi)
        if key in frag.decided:
            continue
        if _sat(model, psi, {}):
            polarity, kind, detail = True, "consistent", {"model_size": model.size, "via": "current model"}
        elif _is_literal(nnf(psi)) and find_clash(literals + [nnf(psi)]) is not None:
            polarity, kind = False, "inconsistent"
            detail = {"proof_steps": 1, "model_size": model.size, "via": "literal closure"}
        else:
            v = check_consistency(current + [psi], b.model_size, b.proof_steps, sig=sig,
                                  term_depth=b.term_depth, search_nodes=b.search_nodes)
            if v.kind == "consistent":
                model = v.model
                polarity, kind, detail = True, "consistent", {"model_size": model.size, "via": "model search"}
            elif v.kind == "inconsistent":
                # the current model satisfies ¬ψ, which verifies the negative branch
                polarity, kind = False, "inconsistent"
                detail = {"proof_steps": v.record["proof_steps"], "model_size": model.size}
            else:
                neg = check_consistency(current + [Not(psi)], b.model_size, b.proof_steps, sig=sig,
                                        term_depth=b.term_depth, search_nodes=b.search_nodes)
                if neg.kind == "inconsistent":
                    polarity, kind = True, "entailed"
                    detail = {"proof_steps": neg.record["proof_steps"]}
                else:
                    frag.stuck = {"step": step, "sentence": print_formula(psi),
                                  "positive": v.record, "negative": neg.kind}
                    frag.model = model
                    raise OracleStuck(psi, frag, frag.stuck)
        frag.decided[key] = polarity
        frag.sentences[key] = psi
        current.append(psi if polarity else Not(psi))
        lit = nnf(current[-1])
        if _is_literal(lit):
            literals.append(lit)
        frag.provenance.append({"step": step, "sentence": print_formula(psi), "polarity": polarity,
                                "verdict": kind, "budget": asdict(b), **detail})
    frag.model = model
    return frag


def fragment_from_values(base: Theory, values: Iterable[tuple], order: Optional[dict] = None) -> DecidedFragment:
    """A fragment with given (sentence, truth value) decisions, in order; no
    oracle is consulted.  Useful for hand-built fragments."""
    frag = DecidedFragment(base, {}, {}, dict(order or {"source": "given"}), [])
    for phi, v in values:
        key = canonical_key(phi)
        frag.decided[key] = bool(v)
        frag.sentences[key] = phi
        frag.provenance.append({"sentence": print_formula(phi), "polarity": bool(v), "verdict": "given"})
    return frag
