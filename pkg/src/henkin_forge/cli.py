"""Command-line front end: ``henkin-forge <command> ...``.

Exit codes: 0 pass, 1 usage or parse error, 2 precondition failure,
3 theorem-check failure, 4 resource or budget exhaustion.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import re
import sys
from dataclasses import asdict
from itertools import combinations
from pathlib import Path
from typing import Optional

from . import __version__
from .decision import (
    BudgetExceeded, Budgets, DecidedFragment, InconsistentInput, OracleStuck,
    lindenbaum_complete,
)
from .semantics import (
    FiniteStructure, SearchBudgetExceeded, _sat, elementarily_equivalent_upto, find_models,
    iter_models, parse_structure_file,
)
from .syntax import (
    Exists, Formula, Not, Rel, Signature, SyntaxError_, And, Eq, Var, const,
    parse_theory_document, print_formula, print_theory_file,
)
from .termmodel import (
    IllFormed, MissingAtom, PreconditionFailed, TermModel, TruncationError, UniquenessFailure,
    build_term_model_semantic, build_term_model_syntactic, expand_model_henkin,
    expansion_from_structure, positive_diagram, verify_completeness, verify_functoriality,
    verify_initiality, verify_naturality, verify_soundness,
)
from .theory import (
    HenkinExtension, MorphismError, ResourceError, SignatureMorphism, Theory, TheoryMorphism,
    extend_morphism_to_henkin, henkin_from_document, henkinize, identity_morphism, theory_morphism,
)

SCHEMA = "henkin-forge.report/1"

EXIT_OK, EXIT_USAGE, EXIT_PRECONDITION, EXIT_THEOREM, EXIT_RESOURCE = 0, 1, 2, 3, 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ------------------------------------------------------------------ inputs


class Inputs:
    """Reads input files and remembers their hashes for the report."""

    def __init__(self):
        self.hashes: dict = {}

    def read(self, path: str) -> bytes:
        try:
            data = Path(path).read_bytes()
        except OSError as e:
            raise UsageError(f"cannot read {path}: {e.strerror}") from None
        self.hashes[path] = hashlib.sha256(data).hexdigest()
        return data

    def theory_doc(self, path: str):
        return parse_theory_document(self.read(path))

    def json(self, path: str) -> dict:
        try:
            return json.loads(self.read(path))
        except json.JSONDecodeError as e:
            raise SyntaxError_(f"{path}: invalid JSON: {e.msg}", e.lineno, e.colno) from None

    def structure(self, path: str, sig: Optional[Signature] = None) -> FiniteStructure:
        return parse_structure_file(self.read(path), sig)


def base_theory(doc) -> Theory:
    wit = set(doc.witnesses)
    sig = Signature.of({n: a for n, a in doc.sig.functions if n not in wit}, dict(doc.sig.relations))
    return Theory(sig, tuple(doc.axioms))


def henkin_for(doc, args) -> HenkinExtension:
    """The Henkin extension a theory file describes: read back when the file
    was written by ``henkinize``, rebuilt from the bounds otherwise."""
    base = base_theory(doc)
    if doc.witnesses:
        return henkin_from_document(base, doc.sig, doc.witnesses, doc.henkin,
                                    args.formula_depth, args.term_depth)
    return henkinize(base, args.levels, args.formula_depth, term_depth=args.term_depth)


def budgets_of(args) -> Budgets:
    return Budgets.from_env(model_size=args.model_size, proof_steps=args.proof_budget,
                            term_depth=max(args.term_depth, Budgets().term_depth))


def config_of(args) -> dict:
    keys = ("levels", "formula_depth", "term_depth", "sentence_depth", "sentence_count",
            "model_size", "proof_budget", "witness_policy", "mode", "allow_unknown", "mod_iso")
    cfg = {k: getattr(args, k) for k in keys if hasattr(args, k)}
    cfg["budgets"] = asdict(budgets_of(args))
    return cfg


_MAP_RE = re.compile(r"^map\s+(fn|rel)\s+(\S+)\s*->\s*(\S+)$")
_END_RE = re.compile(r'^(source|target)\s+"([^"]*)"$')


def parse_morphism_file(text: str) -> dict:
    """``source "path"; target "path"; map fn f -> g; map rel P -> Q;``
    Symbols without a ``map`` line go to the symbol of the same name."""
    out = {"source": None, "target": None, "fn": {}, "rel": {}}
    body = "\n".join(line.split("#", 1)[0] for line in text.splitlines())
    for stmt in filter(None, (s.strip() for s in body.split(";"))):
        stmt = " ".join(stmt.split())
        m = _END_RE.match(stmt)
        if m:
            out[m.group(1)] = m.group(2)
            continue
        m = _MAP_RE.match(stmt)
        if not m:
            raise SyntaxError_(f"bad morphism statement {stmt!r}")
        if m.group(2) in out[m.group(1)]:
            raise SyntaxError_(f"symbol {m.group(2)} mapped twice")
        out[m.group(1)][m.group(2)] = m.group(3)
    if out["source"] is None or out["target"] is None:
        raise SyntaxError_("morphism file needs source and target")
    return out


# ----------------------------------------------------------------- reports


def _emit(args, report: dict, lines: list) -> int:
    code = report["exit_code"]
    if args.json:
        sys.stdout.write(json.dumps(report, sort_keys=True, indent=2) + "\n")
    else:
        for line in lines:
            print(line)
        print(f"verdict: {report['verdict']}")
    return code


def _report(command: str, args, inputs: Inputs, results: dict, code: int) -> dict:
    verdict = {EXIT_OK: "pass", EXIT_PRECONDITION: "precondition-failed", EXIT_THEOREM: "fail",
               EXIT_RESOURCE: "resource-exhausted", EXIT_USAGE: "error"}[code]
    return {"schema": SCHEMA, "version": __version__, "command": command, "config": config_of(args),
            "inputs": dict(sorted(inputs.hashes.items())), "results": results,
            "verdict": verdict, "exit_code": code}


def _write(path: Optional[str], text: str) -> None:
    if path:
        Path(path).write_text(text)


# ---------------------------------------------------------------- commands


def cmd_parse(args, inputs: Inputs):
    doc = inputs.theory_doc(args.file)
    res = {"signature": str(doc.sig), "axioms": [print_formula(a) for a in doc.axioms],
           "witnesses": len(doc.witnesses), "henkin_axioms": len(doc.henkin)}
    lines = [f"signature {res['signature']}", f"{len(doc.axioms)} axioms"]
    lines += [f"  {a}" for a in res["axioms"]]
    return res, EXIT_OK, lines


def cmd_henkinize(args, inputs: Inputs):
    doc = inputs.theory_doc(args.file)
    if doc.witnesses:
        raise UsageError("input already declares witness constants")
    base = base_theory(doc)
    h = henkinize(base, args.levels, args.formula_depth, term_depth=args.term_depth)
    names = h.names_by_level()
    text = print_theory_file(h.star_sig, base.axioms, names, h.henkin_axioms)
    _write(args.output, text)
    counts = {str(k): v for k, v in sorted(h.counts_per_level().items())}
    res = {"witnesses_per_level": counts, "witness_total": len(names),
           "henkin_axioms": [print_formula(a) for a in h.henkin_axioms], "output": args.output}
    lines = [f"level {k}: {v} witnesses" for k, v in counts.items()]
    shown = res["henkin_axioms"][:args.show]
    lines += [f"  henkin {a}" for a in shown]
    if len(res["henkin_axioms"]) > len(shown):
        lines.append(f"  ... {len(res['henkin_axioms']) - len(shown)} more")
    return res, EXIT_OK, lines


def cmd_complete(args, inputs: Inputs):
    doc = inputs.theory_doc(args.file)
    theory = Theory(doc.sig, tuple(doc.axioms) + tuple(doc.henkin))
    b = budgets_of(args)
    try:
        frag = lindenbaum_complete(theory, args.sentence_depth, args.sentence_count, b,
                                   term_depth=args.term_depth)
    except OracleStuck as e:
        res = {"stuck": e.detail, "sentence": print_formula(e.sentence) if e.sentence else None}
        if e.fragment is not None:
            res["decided_before_stuck"] = len(e.fragment.decided)
            if args.allow_unknown:
                _write(args.output, json.dumps(e.fragment.to_json(), sort_keys=True, indent=1) + "\n")
        lines = [f"oracle stuck on {res['sentence'] or 'the base theory'}"]
        return res, (EXIT_OK if args.allow_unknown and e.fragment is not None else EXIT_RESOURCE), lines
    except InconsistentInput as e:
        steps = e.verdict.record.get("proof_steps")
        return ({"error": "inconsistent input", "refutation_steps": steps},
                EXIT_PRECONDITION, [f"input theory is inconsistent (refutation in {steps} steps)"])
    _write(args.output, json.dumps(frag.to_json(), sort_keys=True, indent=1) + "\n")
    rows = [{"sentence": print_formula(frag.sentences[k]), "value": v} for k, v in frag.decided.items()]
    res = {"decided": len(rows), "true": sum(v for v in frag.decided.values()), "digest": frag.digest(),
           "sentences": rows[:args.show], "output": args.output}
    lines = [f"decided {len(rows)} sentences ({res['true']} true)"]
    lines += [f"  {'T' if r['value'] else 'F'}  {r['sentence']}" for r in rows[:args.show]]
    return res, EXIT_OK, lines


def _semantic_model(args, inputs, doc):
    h = henkin_for(doc, args)
    raw = inputs.read(args.input)
    try:
        m = parse_structure_file(raw, h.star_sig)
        return h, expansion_from_structure(m, h)
    except (SyntaxError_, ValueError):
        m = parse_structure_file(raw, h.base.sig)
    bad = [a for a in h.base.axioms if not _sat(m, a, {})]
    if bad:
        raise PreconditionFailed(bad[0])
    return h, expand_model_henkin(m, h, args.witness_policy)


def cmd_build(args, inputs: Inputs):
    if args.mode == "syntactic":
        frag = DecidedFragment.from_json(inputs.json(args.input))
        try:
            tm = build_term_model_syntactic(frag, args.term_depth)
        except (MissingAtom, TruncationError) as e:
            return ({"error": str(e), "hint": "raise --term-depth or --sentence-count"},
                    EXIT_PRECONDITION, [str(e), "hint: raise --term-depth or --sentence-count"])
    else:
        if not args.theory:
            raise UsageError("--mode semantic needs --theory")
        _, exp = _semantic_model(args, inputs, inputs.theory_doc(args.theory))
        tm = build_term_model_semantic(exp)
    data = tm.to_json()
    _write(args.output, json.dumps(data, sort_keys=True, indent=1) + "\n")
    res = {"mode": tm.mode, "size": tm.size, "universe": data["universe"], "output": args.output}
    lines = [f"{tm.mode} term model with {tm.size} classes"] + [f"  [{r}]" for r in data["universe"]]
    return res, EXIT_OK, lines


def _diagram_models(tm: TermModel, max_size: int, budget: int) -> list:
    diagram = positive_diagram(tm)
    out = []
    for n in range(1, max_size + 1):
        out.extend(iter_models(tm.star_sig, diagram, n, budget))
    return out


def cmd_verify(args, inputs: Inputs):
    tm = TermModel.from_json(inputs.json(args.term_model))
    doc = inputs.theory_doc(args.theory) if args.theory else None
    h = henkin_for(doc, args) if doc is not None else None
    if h is not None and h.star_sig != tm.star_sig:
        raise PreconditionFailed(None, "theory and term model signatures differ")
    if args.fragment:
        tm.fragment = DecidedFragment.from_json(inputs.json(args.fragment))
    models = []
    for path in args.model:
        raw = inputs.read(path)
        try:
            models.append(parse_structure_file(raw, tm.star_sig))
        except (SyntaxError_, ValueError):
            if h is None:
                raise
            models.append(expand_model_henkin(parse_structure_file(raw, h.base.sig), h,
                                              args.witness_policy).expansion)
    if not args.model:
        models = _diagram_models(tm, min(args.model_size, 3), budgets_of(args).search_nodes)
    checks = args.check or ["initiality", "soundness", "completeness", "naturality", "functoriality"]
    results, lines, ok = {}, [], True
    if "initiality" in checks:
        r = verify_initiality(tm, models)
        results["initiality"] = r
        lines.append(f"initiality: {len(r['models'])} models, hom counts "
                     f"{sorted({x['homs'] for x in r['models']})}")
    if "soundness" in checks:
        if tm.mode == "semantic" and tm.backing_structure() is None or tm.mode == "syntactic" and tm.fragment is None:
            results["soundness"] = {"skipped": "no backing expansion or fragment"}
            lines.append("soundness: skipped (no backing expansion or fragment)")
        else:
            r = verify_soundness(tm, args.rank, args.sentence_depth, count_cap=args.sentence_count,
                                 term_depth=1, henkin=h)
            results["soundness"] = r
            ok &= r["ok"]
            lines.append(f"soundness: {r['agreements']}/{r['checked']} agree, "
                         f"{len(r['in_warranty_disagreements'])} in-warranty and "
                         f"{len(r['out_of_warranty_disagreements'])} out-of-warranty disagreements")
    if "completeness" in checks:
        if h is None:
            results["completeness"] = {"skipped": "no --theory"}
        else:
            r = verify_completeness(tm, h.base)
            results["completeness"] = r
            ok &= r["ok"]
            lines.append(f"completeness: {sum(x['status'] == 'satisfied' for x in r['axioms'])}"
                         f"/{len(r['axioms'])} axioms satisfied")
    fstar, tm1 = None, None
    if args.morphism:
        mfile = parse_morphism_file(inputs.read(args.morphism).decode())
        d1, d2 = inputs.theory_doc(mfile["source"]), inputs.theory_doc(mfile["target"])
        h1, h2 = henkin_for(d1, args), henkin_for(d2, args)
        sigma = SignatureMorphism.of(h1.base.sig, h2.base.sig, mfile["fn"], mfile["rel"])
        f = theory_morphism(sigma, h1.base, h2.base)
        fstar = extend_morphism_to_henkin(f, h1, h2)
        if not args.source_term_model:
            raise UsageError("--morphism needs --source-term-model")
        tm1 = TermModel.from_json(inputs.json(args.source_term_model))
    ident = TheoryMorphism(SignatureMorphism.identity(tm.star_sig), Theory(tm.star_sig, ()),
                           Theory(tm.star_sig, ()))
    if "naturality" in checks:
        rows = []
        for m in models:
            rows.append(verify_naturality(ident, tm, tm, m))
            if fstar is not None:
                rows.append(verify_naturality(fstar, tm1, tm, m, allow_unknown=args.allow_unknown))
        good = all(r["ok"] for r in rows)
        ok &= good
        results["naturality"] = {"ok": good, "squares": rows}
        lines.append(f"naturality: {sum(r['ok'] for r in rows)}/{len(rows)} squares commute")
    if "functoriality" in checks:
        rows = [verify_functoriality(ident, ident, (tm, tm, tm))]
        if fstar is not None:
            id1, id2 = identity_morphism(fstar.source), identity_morphism(fstar.target)
            rows.append(verify_functoriality(id1, fstar, (tm1, tm1, tm), allow_unknown=args.allow_unknown))
            rows.append(verify_functoriality(fstar, id2, (tm1, tm, tm), allow_unknown=args.allow_unknown))
        good = all(r["ok"] for r in rows)
        ok &= good
        results["functoriality"] = {"ok": good, "chains": rows}
        lines.append(f"functoriality: {sum(r['ok'] for r in rows)}/{len(rows)} chains satisfy both laws")
    return results, (EXIT_OK if ok else EXIT_THEOREM), lines


# ------------------------------------------------------------------- demos


def demo_incomplete_theory(args) -> tuple:
    """Two Lindenbaum completions of the empty theory over {a, P} that
    disagree on P(a), and their term models."""
    sig = Signature.of({"a": 0}, {"P": 1})
    h = henkinize(Theory(sig, ()), 1, 1)
    n = len(h.star_sig.constants)
    count = n * n + 1 + n + 1          # every depth-0 sentence over Σ*
    b = budgets_of(args)
    pa = Rel("P", (const("a"),))
    frags = [lindenbaum_complete(h, 0, count, b), lindenbaum_complete(h, 0, count, b, lead=[Not(pa)])]
    tms = [build_term_model_syntactic(f, 0) for f in frags]
    structs = [tm.as_structure() for tm in tms]
    eq = elementarily_equivalent_upto(structs[0], structs[1], 0, 0)
    diff = [frags[0].sentences[k] for k in frags[0].decided
            if frags[1].decided.get(k) is not None and frags[0].decided[k] != frags[1].decided[k]]
    a_cls = [tm.class_of(const("a")) for tm in tms]
    p_at_a = [(a_cls[i],) in tms[i].rel_tables["P"] for i in range(2)]
    ok = (not eq.equivalent and eq.witness == pa and frags[0].value(pa) != frags[1].value(pa)
          and p_at_a[0] != p_at_a[1])
    res = {
        "witnesses": n - 1, "sentences_decided": [len(f.decided) for f in frags],
        "P(a)": [frags[0].value(pa), frags[1].value(pa)],
        "differing_sentences": len(diff), "first_differences": [print_formula(x) for x in diff[:5]],
        "term_model_sizes": [tm.size for tm in tms], "P_at_class_of_a": p_at_a,
        "elementarily_equivalent": eq.equivalent,
        "distinguishing_sentence": print_formula(eq.witness) if eq.witness is not None else None,
        "fragment_digests": [f.digest() for f in frags], "ok": ok,
    }
    lines = [
        f"Σ = {{a/0, P/1}}, T = ∅, {n - 1} witness constants",
        f"completion 1 decides P(a) = {res['P(a)'][0]}; completion 2 decides P(a) = {res['P(a)'][1]}",
        f"the completions differ on {len(diff)} of {len(frags[0].decided)} sentences",
        f"term models: {res['term_model_sizes'][0]} and {res['term_model_sizes'][1]} classes; "
        f"P holds at [a]: {p_at_a[0]} vs {p_at_a[1]}",
        f"elementarily equivalent up to rank 0: {eq.equivalent}; distinguishing sentence: "
        f"{res['distinguishing_sentence']}",
    ]
    return res, ok, lines


def at_least(n: int) -> Formula:
    """There are at least n distinct elements."""
    xs = [Var(f"x{i}") for i in range(n)]
    body: Optional[Formula] = None
    for i, j in combinations(range(n), 2):
        lit = Not(Eq(xs[i], xs[j]))
        body = lit if body is None else And(body, lit)
    if body is None:
        body = Eq(xs[0], xs[0])
    for x in reversed(xs):
        body = Exists(x.name, body)
    return body


def demo_compactness(args) -> tuple:
    bound = 3
    family = [at_least(n) for n in range(1, bound + 1)]
    sig = Signature.of()
    rows, ok = [], True
    for k in range(0, len(family) + 1):
        for subset in combinations(range(len(family)), k):
            axioms = tuple(family[i] for i in subset)
            models = find_models(Theory(sig, axioms), bound, limit=1)
            size = models[0].size if models else None
            ok &= size is not None
            rows.append({"subset": [f"at least {i + 1}" for i in subset], "model_size": size})
    note = ("no canonical model choice is made: each subset is paired with whichever model "
            "the search reaches first, and nothing ties the models of different subsets together")
    res = {"family": [print_formula(f) for f in family], "size_bound": bound, "subsets": rows,
           "all_satisfiable": ok, "canonical_choice": False, "note": note, "ok": ok}
    lines = [f"family: {len(family)} sentences 'at least n elements', n <= {bound}"]
    lines += [f"  {{{', '.join(r['subset'])}}}: model of size {r['model_size']}" for r in rows]
    lines.append(note)
    return res, ok, lines


DEMOS = {"incomplete-theory": demo_incomplete_theory, "compactness-subsets": demo_compactness}


def cmd_demo(args, inputs: Inputs):
    res, ok, lines = DEMOS[args.name](args)
    return res, (EXIT_OK if ok else EXIT_THEOREM), lines


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--json", action="store_true", help="print the report as JSON")
    common.add_argument("--levels", type=int, default=1, help="Henkin levels (default 1)")
    common.add_argument("--formula-depth", type=int, default=1, help="witness formula depth (default 1)")
    common.add_argument("--term-depth", type=int, default=1, help="term nesting bound (default 1)")
    common.add_argument("--sentence-depth", type=int, default=1, help="enumeration depth (default 1)")
    common.add_argument("--sentence-count", type=int, default=200, help="enumeration length (default 200)")
    common.add_argument("--model-size", type=int, default=4, help="model search bound (default 4)")
    common.add_argument("--proof-budget", type=int, default=20_000, help="tableau steps (default 20000)")
    common.add_argument("--witness-policy", choices=["least", "greatest"], default="least")
    common.add_argument("--mode", choices=["syntactic", "semantic"], default="semantic")
    common.add_argument("--allow-unknown", action="store_true",
                        help="keep the partial fragment when the oracle gets stuck")
    common.add_argument("--mod-iso", action="store_true", help="report models up to isomorphism")
    common.add_argument("-o", "--output", help="output file")
    common.add_argument("--show", type=int, default=10, help="lines of detail in text output")

    p = _Parser(prog="henkin-forge", description="Henkin term models at desk scale.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    s = sub.add_parser("parse", parents=[common], help="syntax-check a theory file")
    s.add_argument("file")
    s = sub.add_parser("henkinize", parents=[common], help="add witness constants and Henkin axioms")
    s.add_argument("file")
    s = sub.add_parser("complete", parents=[common], help="Lindenbaum completion to a decided fragment")
    s.add_argument("file")
    s = sub.add_parser("build", parents=[common], help="build a term model")
    s.add_argument("input", help="fragment JSON (syntactic) or structure file (semantic)")
    s.add_argument("--theory", help="theory file (semantic mode)")
    s = sub.add_parser("verify", parents=[common], help="check theorems on a term model")
    s.add_argument("term_model")
    s.add_argument("--theory")
    s.add_argument("--fragment", help="fragment JSON for syntactic soundness")
    s.add_argument("--model", action="append", default=[], help="structure file (repeatable)")
    s.add_argument("--check", action="append",
                   choices=["initiality", "soundness", "completeness", "naturality", "functoriality"])
    s.add_argument("--rank", type=int, default=2, help="quantifier rank for soundness (default 2)")
    s.add_argument("--morphism", help="morphism file into this term model's theory")
    s.add_argument("--source-term-model", help="term model of the morphism's source")
    s = sub.add_parser("demo", parents=[common], help="built-in demonstrations")
    s.add_argument("name", choices=sorted(DEMOS))
    return p


COMMANDS = {"parse": cmd_parse, "henkinize": cmd_henkinize, "complete": cmd_complete,
            "build": cmd_build, "verify": cmd_verify, "demo": cmd_demo}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    for k in ("levels", "formula_depth", "term_depth", "sentence_depth", "sentence_count",
              "model_size", "proof_budget"):
        if getattr(args, k) < 0:
            print(f"henkin-forge: --{k.replace('_', '-')} must be nonnegative", file=sys.stderr)
            return EXIT_USAGE
    inputs = Inputs()
    try:
        results, code, lines = COMMANDS[args.command](args, inputs)
    except (UsageError, SyntaxError_, MorphismError) as e:
        results, code, lines = {"error": str(e)}, EXIT_USAGE, [f"error: {e}"]
        if isinstance(e, MorphismError):
            code = EXIT_PRECONDITION
    except (PreconditionFailed, MissingAtom, TruncationError, IllFormed, InconsistentInput) as e:
        results, code, lines = {"error": str(e)}, EXIT_PRECONDITION, [f"precondition failed: {e}"]
    except UniquenessFailure as e:
        results, code, lines = {"error": str(e)}, EXIT_THEOREM, [f"THEOREM CHECK FAILED: {e}"]
    except (ResourceError, OracleStuck, SearchBudgetExceeded, BudgetExceeded) as e:
        results, code, lines = {"error": str(e)}, EXIT_RESOURCE, [f"resource limit: {e}"]
    report = _report(args.command, args, inputs, results, code)
    if code not in (EXIT_OK, EXIT_THEOREM) and not args.json:
        for line in lines:
            print(line, file=sys.stderr)
        return code
    return _emit(args, report, lines)


if __name__ == "__main__":
    sys.exit(main())
