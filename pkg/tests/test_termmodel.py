import itertools
from functools import lru_cache

import pytest

from henkin_forge.decision import fragment_from_values
from henkin_forge.semantics import (
    enumerate_homs, eval_term, find_models, iter_models, reduct, satisfies, structure,
)
from henkin_forge.syntax import App, Eq, Exists, Forall, Not, Rel, Signature, Top, Var, const, parse_formula
from henkin_forge.termmodel import (
    MissingAtom, PreconditionFailed, TermModel, TruncationError, build_term_model_semantic,
    build_term_model_syntactic, evaluation_hom, expand_model_henkin, expansion_from_structure,
    induced_map, positive_diagram, verify_completeness, verify_functoriality, verify_initiality,
    verify_naturality, verify_soundness,
)
from henkin_forge.theory import (
    SignatureMorphism, Theory, compose_morphisms, extend_morphism_to_henkin, henkinize,
    identity_morphism, theory_morphism,
)

LOOP = Signature.of({"a": 0, "s": 1})
LOOP_R = Signature.of({"a": 0, "r": 1})
a, b = const("a"), const("b")
x = Var("x")
AX = Forall("x", Eq(App("s", (App("s", (x,)),)), x))


def s(t):
    return App("s", (t,))


Z2 = structure(LOOP, 2, {"a": 0, "s": (1, 0)})


@lru_cache(maxsize=None)
def loop_henkin(levels=1):
    return henkinize(Theory(LOOP, (AX,)), levels, 1)


def _pairs(terms, true_pairs):
    return [(Eq(p, q), (p, q) in true_pairs or p == q) for p, q in itertools.combinations_with_replacement(terms, 2)]


# ---------------------------------------------------------------- mode A


def test_mode_a_single_constant():
    sig = Signature.of({"a": 0})
    tm = build_term_model_syntactic(fragment_from_values(Theory(sig, ()), [(Eq(a, a), True)]), 0)
    assert tm.size == 1 and tm.reps == [a]


def test_mode_a_collapse():
    sig = Signature.of({"a": 0, "b": 0})
    frag = fragment_from_values(Theory(sig, ()), [(Eq(a, b), True)])
    tm = build_term_model_syntactic(frag, 0)
    assert tm.size == 1 and tm.classes[0] == [a, b]


def _loop_fragment():
    terms = [a, s(a), s(s(a))]
    return fragment_from_values(Theory(LOOP, ()), _pairs(terms, {(a, s(s(a)))}))


def test_mode_a_loop_cycles():
    tm = build_term_model_syntactic(_loop_fragment(), 2)
    assert tm.reps == [a, s(a)]
    assert tm.fn_tables["s"] == (1, 0)
    assert tm.class_of(s(s(s(a)))) == 1


def test_mode_a_truncation_and_missing_atom():
    frag = fragment_from_values(Theory(LOOP, ()), [(Eq(a, s(a)), False)])
    with pytest.raises(TruncationError):
        build_term_model_syntactic(frag, 1)
    with pytest.raises(MissingAtom):
        build_term_model_syntactic(fragment_from_values(Theory(LOOP, ()), []), 1)


# -------------------------------------------------------------- expansion


def test_expansion_witness_choices():
    h = loop_henkin()
    exp = expand_model_henkin(Z2, h)
    assert exp.witness_choices[h.witness_for(Eq(s(x), x), "x")] == 0
    assert exp.witness_choices[h.witness_for(Eq(x, a), "x")] == 0
    assert exp.witness_choices[h.witness_for(Not(Eq(x, a)), "x")] == 1
    assert all(satisfies(exp.expansion, ax) for ax in h.henkin_axioms)
    assert reduct(SignatureMorphism.of(LOOP, h.star_sig), exp.expansion) == Z2
    greatest = expand_model_henkin(Z2, h, "greatest")
    assert greatest.witness_choices[h.witness_for(Eq(x, x), "x")] == 1


def test_expansion_from_structure_round_trip():
    h = loop_henkin()
    exp = expand_model_henkin(Z2, h)
    again = expansion_from_structure(exp.expansion, h)
    assert again.witness_choices == exp.witness_choices and again.base_model == Z2


# ---------------------------------------------------------------- mode B


def test_mode_b_z2():
    tm = build_term_model_semantic(expand_model_henkin(Z2, loop_henkin()))
    # witness constants have depth 0, so they beat s(a) as representatives
    assert tm.size == 2 and tm.reps[0] == a and tm.reps[1].args == ()
    assert tm.class_of(s(a)) == 1 and s(a) in tm.classes[1]
    assert tm.fn_tables["s"] == (1, 0)
    assert reduct(SignatureMorphism.of(LOOP, tm.star_sig), tm.as_structure()) == Z2


def test_mode_b_drops_unreachable_elements():
    # element 2 is never a witness here: no depth-1 formula singles it out
    m = structure(LOOP, 3, {"a": 0, "s": (1, 0, 1)})
    h = henkinize(Theory(LOOP, ()), 1, 1)
    exp = expand_model_henkin(m, h)
    assert 2 not in exp.witness_choices.values()
    tm = build_term_model_semantic(exp)
    assert tm.size == 2 and tm.elements == (0, 1)


def test_mode_b_reachable_count_matches_closure():
    h = loop_henkin()
    for m in find_models(Theory(LOOP, (AX,)), 3):
        exp = expand_model_henkin(m, h)
        reach = {eval_term(exp.expansion, App(c, ())) for c in h.star_sig.constants}
        while True:
            more = reach | {exp.expansion.apply("s", (e,)) for e in reach}
            if more == reach:
                break
            reach = more
        assert build_term_model_semantic(exp).size == len(reach)


def test_empty_relations_stay_empty():
    sig = Signature.of({"a": 0}, {"P": 1})
    h = henkinize(Theory(sig, ()), 1, 1)
    tm = build_term_model_semantic(expand_model_henkin(structure(sig, 2, {"a": 0}), h))
    assert tm.rel_tables["P"] == frozenset()


def test_term_model_json_round_trip():
    tm = build_term_model_semantic(expand_model_henkin(Z2, loop_henkin()))
    back = TermModel.from_json(tm.to_json())
    assert back.as_structure() == tm.as_structure() and back.classes == tm.classes
    assert back.backing_structure() == tm.backing_structure()


# ------------------------------------------------------- evaluation hom


def test_evaluation_hom_identity_on_own_structure():
    tm = build_term_model_semantic(expand_model_henkin(Z2, loop_henkin()))
    assert evaluation_hom(tm, tm.as_structure()).map == (0, 1)


def test_evaluation_hom_precondition_on_z4():
    tm = build_term_model_syntactic(_loop_fragment(), 2)
    z4 = structure(LOOP, 4, {"a": 0, "s": (1, 2, 3, 0)})
    assert eval_term(z4, s(s(a))) == 2
    with pytest.raises(PreconditionFailed) as e:
        evaluation_hom(tm, z4)
    assert e.value.sentence in (Eq(a, s(s(a))), Eq(s(s(a)), a))


def test_evaluation_hom_into_disjoint_extension():
    tm = build_term_model_syntactic(_loop_fragment(), 2)
    m = structure(LOOP, 3, {"a": 0, "s": (1, 0, 2)})
    assert evaluation_hom(tm, m).map == (0, 1)


def test_evaluation_is_representative_independent():
    tm = build_term_model_semantic(expand_model_henkin(Z2, loop_henkin()))
    m = tm.backing_structure()
    e = evaluation_hom(tm, m)
    for i, c in enumerate(tm.classes):
        assert {eval_term(m, t) for t in c} == {e.map[i]}


# ------------------------------------------------------------ initiality


def test_initiality_mode_a():
    tm = build_term_model_syntactic(_loop_fragment(), 2)
    models = find_models(Theory(LOOP, tuple(positive_diagram(tm)) + (AX,)), 2)
    assert len(models) == 5
    r = verify_initiality(tm, models)
    assert r["ok"] and [row["homs"] for row in r["models"]] == [1] * 5
    assert verify_initiality(tm, [])["models"] == []


def test_initiality_mode_b():
    tm = build_term_model_semantic(expand_model_henkin(Z2, loop_henkin()))
    models = [m for n in (1, 2) for m in iter_models(tm.star_sig, positive_diagram(tm), n, 200_000)]
    assert models
    r = verify_initiality(tm, models + [tm.as_structure()])
    assert r["ok"] and all(row["homs"] == 1 for row in r["models"])
    # brute force: exactly one map is a hom into each model
    for m in models:
        assert len(enumerate_homs(tm.as_structure(), m)) == 1


# ------------------------------------------------------------- soundness


def test_soundness_mode_b_rank_one():
    tm = build_term_model_semantic(expand_model_henkin(Z2, loop_henkin()))
    r = verify_soundness(tm, 1, 1, count_cap=3000, extra=[Top()])
    assert r["ok"] and r["checked"] == r["agreements"] + len(r["out_of_warranty_disagreements"])
    assert r["agreements"] > 0


def test_soundness_out_of_warranty_is_recorded_not_failed():
    # one witness level cannot cover rank-2 sentences about the unreachable element
    m = structure(LOOP, 3, {"a": 0, "s": (1, 0, 1)})
    h = henkinize(Theory(LOOP, ()), 1, 1)
    tm = build_term_model_semantic(expand_model_henkin(m, h))
    r = verify_soundness(tm, 2, 3, count_cap=3000,
                         extra=[parse_formula("exists x. forall y. ~s(y) = x", LOOP)])
    assert r["ok"]
    assert r["out_of_warranty_disagreements"]


def test_soundness_mode_a():
    tm = build_term_model_syntactic(_loop_fragment(), 2)
    r = verify_soundness(tm, 0, 0)
    assert r["ok"] and r["checked"] == r["agreements"] == 6


# ----------------------------------------------------- naturality, functors


def _renamed_pair():
    h1 = loop_henkin()
    t2 = Theory(LOOP_R, (Forall("x", Eq(App("r", (App("r", (x,)),)), x)),))
    h2 = henkinize(t2, 1, 1)
    f = theory_morphism(SignatureMorphism.of(LOOP, LOOP_R, {"s": "r"}), h1.base, t2)
    fstar = extend_morphism_to_henkin(f, h1, h2)
    return h1, h2, fstar


def test_naturality_rename():
    h1, h2, fstar = _renamed_pair()
    z2r = structure(LOOP_R, 2, {"a": 0, "r": (1, 0)})
    exp2 = expand_model_henkin(z2r, h2)
    tm2 = build_term_model_semantic(exp2)
    tm1 = build_term_model_semantic(expansion_from_structure(reduct(fstar.sigma, exp2.expansion), h1))
    r = verify_naturality(fstar, tm1, tm2, exp2.expansion)
    assert r["ok"] and len(r["classes"]) == 2


def test_naturality_identity():
    tm = build_term_model_semantic(expand_model_henkin(Z2, loop_henkin()))
    ident = extend_morphism_to_henkin(identity_morphism(loop_henkin().base), loop_henkin(), loop_henkin())
    r = verify_naturality(ident, tm, tm, tm.backing_structure())
    assert r["ok"] and induced_map(ident, tm, tm) == (0, 1)


def test_naturality_precondition_failure():
    tm1 = build_term_model_syntactic(_loop_fragment(), 2)
    terms = [a, App("r", (a,)), App("r", (App("r", (a,)),))]
    tm2 = build_term_model_syntactic(
        fragment_from_values(Theory(LOOP_R, ()), _pairs(terms, {(terms[0], terms[2])})), 2)
    f = theory_morphism(SignatureMorphism.of(LOOP, LOOP_R, {"s": "r"}), Theory(LOOP, ()), Theory(LOOP_R, ()))
    z4 = structure(LOOP_R, 4, {"a": 0, "r": (1, 2, 3, 0)})
    with pytest.raises(PreconditionFailed):
        verify_naturality(f, tm1, tm2, z4)


def _prop_chain():
    sigs = [Signature.of({"a": 0}, {n: 1}) for n in "PQR"]
    ts = [Theory(sg, (Rel(n, (a,)),)) for sg, n in zip(sigs, "PQR")]
    hs = [henkinize(t, 1, 1) for t in ts]
    f = theory_morphism(SignatureMorphism.of(sigs[0], sigs[1], rel_map={"P": "Q"}), ts[0], ts[1])
    g = theory_morphism(SignatureMorphism.of(sigs[1], sigs[2], rel_map={"Q": "R"}), ts[1], ts[2])
    fs = extend_morphism_to_henkin(f, hs[0], hs[1])
    gs = extend_morphism_to_henkin(g, hs[1], hs[2])
    gfs = extend_morphism_to_henkin(compose_morphisms(g, f), hs[0], hs[2])
    tms = [build_term_model_semantic(expand_model_henkin(structure(sg, 1, {"a": 0}, {n: {(0,)}}), h))
           for sg, n, h in zip(sigs, "PQR", hs)]
    return fs, gs, gfs, tms


def test_functoriality_rename_chain():
    fs, gs, gfs, tms = _prop_chain()
    r = verify_functoriality(fs, gs, tms, gfs)
    assert r["ok"] and r["composition"] == [True] and r["identity"] == [True] * 3


def test_functoriality_identities():
    h = loop_henkin()
    tm = build_term_model_semantic(expand_model_henkin(Z2, h))
    ident = extend_morphism_to_henkin(identity_morphism(h.base), h, h)
    assert verify_functoriality(ident, ident, [tm, tm, tm])["ok"]


def test_flagged_morphism_refused():
    fs, gs, gfs, tms = _prop_chain()
    flagged = type(fs)(fs.sigma, fs.source, fs.target, fs.verdicts, True)
    with pytest.raises(PreconditionFailed):
        verify_functoriality(flagged, gs, tms)
    assert verify_functoriality(flagged, gs, tms, allow_unknown=True)["ok"]


# ----------------------------------------------------------- completeness


def test_completeness_mode_b():
    tm = build_term_model_semantic(expand_model_henkin(Z2, loop_henkin()))
    r = verify_completeness(tm, Theory(LOOP, (AX,)))
    assert r["ok"] and [row["status"] for row in r["axioms"]] == ["satisfied"]
    assert verify_completeness(tm, Theory(LOOP, ()))["ok"]


def test_completeness_mode_a_beyond_warranty():
    sig = Signature.of({"a": 0}, {"P": 1})
    frag = fragment_from_values(Theory(sig, ()), [(Eq(a, a), True), (Rel("P", (a,)), True)])
    tm = build_term_model_syntactic(frag, 0)
    r = verify_completeness(tm, Theory(sig, (Exists("x", Not(Rel("P", (x,)))), Rel("P", (a,)))))
    assert r["ok"] and [row["status"] for row in r["axioms"]] == ["unverified", "satisfied"]
