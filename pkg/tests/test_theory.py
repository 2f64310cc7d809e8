import pytest

from henkin_forge.syntax import (
    App, Eq, Exists, Forall, Implies, Not, Rel, Signature, Var, canonical_key, const, free_vars,
    parse_formula, print_formula, substitute, symbols,
)
from henkin_forge.theory import (
    HenkinExtension, MorphismError, ResourceError, SignatureMorphism, Theory, compose_morphisms,
    extend_morphism_to_henkin, henkinize, identity_morphism, theory_morphism, translate,
    translate_term, witness_level,
)

x = Var("x")
v0 = Var("v0")


def P(t):
    return Rel("P", (t,))


def test_translate_examples():
    s1 = Signature.of({"f": 1})
    s2 = Signature.of({"g": 1})
    sigma = SignatureMorphism.of(s1, s2, {"f": "g"})
    phi = Forall("x", Eq(App("f", (x,)), x))
    assert translate(sigma, phi) == Forall("x", Eq(App("g", (x,)), x))
    assert translate(SignatureMorphism.identity(s1), phi) == phi
    r = SignatureMorphism.of(Signature.of({}, {"P": 1}), Signature.of({}, {"Q": 1}), rel_map={"P": "Q"})
    assert translate(r, Exists("x", P(x))) == Exists("x", Rel("Q", (x,)))


def test_signature_morphism_validation():
    s1 = Signature.of({"f": 1})
    with pytest.raises(MorphismError):
        SignatureMorphism.of(s1, Signature.of({"g": 2}), {"f": "g"})
    with pytest.raises(MorphismError):
        SignatureMorphism.of(s1, Signature.of({}, {"f": 1}))


def test_translate_commutes_with_substitution():
    s1 = Signature.of({"a": 0, "f": 1}, {"P": 1})
    s2 = Signature.of({"b": 0, "g": 1}, {"Q": 1})
    sigma = SignatureMorphism.of(s1, s2, {"a": "b", "f": "g"}, {"P": "Q"})
    phi = parse_formula("exists y. P(f(x)) & ~(x = y)", s1, allow_free=True)
    t = App("f", (const("a"),))
    lhs = translate(sigma, substitute(phi, "x", t))
    rhs = substitute(translate(sigma, phi), "x", translate_term(sigma, t))
    assert lhs == rhs


def _rename_chain():
    sigs = [Signature.of({"a": 0}, {n: 1}) for n in "PQRS"]
    ts = [Theory(s, (Rel(n, (const("a"),)),)) for s, n in zip(sigs, "PQRS")]
    ms = [theory_morphism(SignatureMorphism.of(sigs[i], sigs[i + 1], rel_map={"PQRS"[i]: "PQRS"[i + 1]}),
                          ts[i], ts[i + 1]) for i in range(3)]
    return ts, ms


def test_composition_laws():
    ts, (f, g, h) = _rename_chain()
    assert compose_morphisms(identity_morphism(ts[1]), f).sigma == f.sigma
    assert compose_morphisms(f, identity_morphism(ts[0])).sigma == f.sigma
    left = compose_morphisms(h, compose_morphisms(g, f))
    right = compose_morphisms(compose_morphisms(h, g), f)
    assert left.sigma == right.sigma
    assert left.sigma.rmap == {"P": "S"}
    with pytest.raises(MorphismError):
        compose_morphisms(f, g)


def test_theory_morphism_checks_axioms():
    sig = Signature.of({"a": 0}, {"P": 1})
    strong = Theory(sig, (Forall("x", P(x)),))
    weak = Theory(sig, (P(const("a")),))
    sigma = SignatureMorphism.identity(sig)
    m = theory_morphism(sigma, weak, strong)
    assert m.verdicts[0][0] == "entailed" and not m.flagged
    with pytest.raises(MorphismError):
        theory_morphism(sigma, strong, weak)


def test_henkinize_relation_signature():
    sig = Signature.of({"a": 0}, {"P": 1})
    h = henkinize(Theory(sig, ()), 1, 1)
    c = h.witness_for(P(x), "x")
    assert c is not None and c.startswith("w$1$")
    ax = Implies(Exists("v0", P(v0)), P(const(c)))
    assert ax in h.henkin_axioms
    assert h.counts_per_level() == {1: 164}


def test_henkinize_empty_signature():
    h = henkinize(Theory(Signature.of(), ()), 1, 1)
    c = h.witness_for(Eq(x, x), "x")
    assert Implies(Exists("v0", Eq(v0, v0)), Eq(const(c), const(c))) in h.henkin_axioms
    for phi in h.formulas.values():
        fs, rs = symbols(phi)
        assert not fs and not rs


def test_henkin_axiom_shape_and_reparse():
    sig = Signature.of({"a": 0, "s": 1})
    h = henkinize(Theory(sig, ()), 1, 1)
    for name, phi in h.formulas.items():
        assert free_vars(phi) == {"v0"}
    for ax in h.henkin_axioms:
        assert isinstance(ax, Implies) and isinstance(ax.left, Exists)
        assert parse_formula(print_formula(ax), h.star_sig) == ax
    names = list(h.formulas)
    assert len(set(names)) == len(names)


def test_second_level_mentions_first_level():
    h = henkinize(Theory(Signature.of({}, {"P": 1}), ()), 2, 1)
    assert h.counts_per_level() == {1: 48, 2: 96}
    level2 = [n for n in h.formulas if witness_level(n) == 2]
    assert level2
    for n in level2:
        fs, _ = symbols(h.formulas[n])
        assert any(witness_level(c) == 1 for c in fs)


def test_henkinize_is_deterministic():
    t = Theory(Signature.of({"a": 0}, {"P": 1}), ())
    h1, h2 = henkinize(t, 2, 1), henkinize(t, 2, 1)
    assert h1.witnesses == h2.witnesses and h1.henkin_axioms == h2.henkin_axioms


def test_witness_cap():
    with pytest.raises(ResourceError):
        henkinize(Theory(Signature.of({"a": 0}, {"P": 1}), ()), 1, 1, cap=100)


def test_extend_identity_is_identity():
    t = Theory(Signature.of({"a": 0}, {"P": 1}), ())
    h = henkinize(t, 1, 1)
    fs = extend_morphism_to_henkin(identity_morphism(t), h, h)
    assert all(k == v for k, v in fs.sigma.fn_map) and all(k == v for k, v in fs.sigma.rel_map)


def test_extend_rename_maps_witnesses():
    s1, s2 = Signature.of({"a": 0}, {"P": 1}), Signature.of({"a": 0}, {"Q": 1})
    t1, t2 = Theory(s1, ()), Theory(s2, ())
    f = theory_morphism(SignatureMorphism.of(s1, s2, rel_map={"P": "Q"}), t1, t2)
    h1, h2 = henkinize(t1, 1, 1), henkinize(t2, 1, 1)
    fs = extend_morphism_to_henkin(f, h1, h2)
    assert fs.sigma.fmap[h1.witness_for(P(x), "x")] == h2.witness_for(Rel("Q", (x,)), "x")


def test_extend_rejects_smaller_target_bounds():
    e = Theory(Signature.of(), ())
    with pytest.raises(MorphismError):
        extend_morphism_to_henkin(identity_morphism(e), henkinize(e, 1, 2), henkinize(e, 1, 1))
    t = Theory(Signature.of({"a": 0}, {"P": 1}), ())
    with pytest.raises(MorphismError):
        extend_morphism_to_henkin(identity_morphism(t), henkinize(t, 2, 1), henkinize(t, 1, 1))


def test_extension_respects_composition():
    ts, (f, g, _) = _rename_chain()
    hs = [henkinize(t, 1, 1) for t in ts[:3]]
    fs = extend_morphism_to_henkin(f, hs[0], hs[1])
    gs = extend_morphism_to_henkin(g, hs[1], hs[2])
    gfs = extend_morphism_to_henkin(compose_morphisms(g, f), hs[0], hs[2])
    assert gfs.sigma.fmap == fs.sigma.then(gs.sigma).fmap
    assert gfs.sigma.rmap == fs.sigma.then(gs.sigma).rmap


def test_inclusion_extends_across_levels():
    s1 = Signature.of({"a": 0}, {"P": 1})
    s2 = Signature.of({"a": 0, "b": 0}, {"P": 1})
    t1, t2 = Theory(s1, ()), Theory(s2, ())
    f = theory_morphism(SignatureMorphism.of(s1, s2), t1, t2)
    fs = extend_morphism_to_henkin(f, henkinize(t1, 2, 1), henkinize(t2, 2, 1))
    assert all(witness_level(fs.sigma.fmap[n]) == witness_level(n)
               for n, _ in fs.sigma.source.functions if n.startswith("w$"))
