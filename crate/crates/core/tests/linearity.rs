//! Mutation testing of the linearity check: duplicating or deleting a use
//! of a channel variable must always be rejected.

mod common;

use priority_sesh::pgv::gen::{well_typed, GenConfig};
use priority_sesh::pgv::{
    parse, typecheck_with, CheckOptions, ConstK, PgvType, Span, Term, TermKind, TypeError, Typed, TypedKind,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn unchecked() -> CheckOptions {
    CheckOptions { enforce_priorities: false }
}

/// Positions and types of every use of a channel-typed variable.
fn channel_uses(t: &Typed) -> Vec<(Span, PgvType)> {
    let mut out = Vec::new();
    t.visit(&mut |n| {
        if matches!(n.kind, TypedKind::Var(_)) && n.ty.is_session() {
            out.push((n.span, n.ty.clone()));
        }
    });
    out
}

/// Replaces the variable occurrence at `span`.
fn replace(t: &Term, span: Span, f: &dyn Fn(&Term) -> Term) -> Term {
    if t.span == span && matches!(t.kind, TermKind::Var(_)) {
        return f(t);
    }
    let r = |x: &Term| Box::new(replace(x, span, f));
    let kind = match &t.kind {
        TermKind::Lam(x, ty, b) => TermKind::Lam(x.clone(), ty.clone(), r(b)),
        TermKind::App(a, b) => TermKind::App(r(a), r(b)),
        TermKind::LetUnit(a, b) => TermKind::LetUnit(r(a), r(b)),
        TermKind::Pair(a, b) => TermKind::Pair(r(a), r(b)),
        TermKind::Add(a, b) => TermKind::Add(r(a), r(b)),
        TermKind::Mul(a, b) => TermKind::Mul(r(a), r(b)),
        TermKind::LetPair(x, y, m, n) => TermKind::LetPair(x.clone(), y.clone(), r(m), r(n)),
        TermKind::Inl(m) => TermKind::Inl(r(m)),
        TermKind::Inr(m) => TermKind::Inr(r(m)),
        TermKind::Absurd(m) => TermKind::Absurd(r(m)),
        TermKind::Case(l, x, m, y, n) => TermKind::Case(r(l), x.clone(), r(m), y.clone(), r(n)),
        other => other.clone(),
    };
    Term::new(kind, t.span)
}

fn syn(kind: TermKind) -> Box<Term> {
    Box::new(Term::synth(kind))
}

fn var(x: &str) -> Box<Term> {
    syn(TermKind::Var(x.into()))
}

/// A fresh value of session type `s` that uses no existing variable:
/// `(\p: S * ~S. let (a, b) = p in let () = cancel b in a) (new[S] ())`.
fn fresh_channel(s: &PgvType) -> Term {
    let d = s.dual().unwrap();
    let body = TermKind::LetPair(
        "mut#a".into(),
        "mut#b".into(),
        var("mut#p"),
        syn(TermKind::LetUnit(syn(TermKind::App(syn(TermKind::Const(ConstK::Cancel)), var("mut#b"))), var("mut#a"))),
    );
    let lam = TermKind::Lam("mut#p".into(), PgvType::prod(s.clone(), d), syn(body));
    let new = TermKind::App(syn(TermKind::Const(ConstK::New(s.clone()))), syn(TermKind::Unit));
    Term::synth(TermKind::App(syn(lam), syn(new)))
}

/// Checks every duplicate and delete mutant of `t`; returns how many.
fn mutate_all(label: &str, t: &Term) -> usize {
    let original = typecheck_with(t, &[], unchecked()).unwrap_or_else(|e| panic!("{label}: {e}"));
    let uses = channel_uses(&original.typed);
    assert!(!uses.is_empty(), "{label} has no channel variables");
    let mut mutants = 0;
    for (span, ty) in uses {
        let dup = replace(t, span, &|v| Term::synth(TermKind::Pair(Box::new(v.clone()), Box::new(v.clone()))));
        let del = replace(t, span, &|_| fresh_channel(&ty));
        for (kind, m) in [("duplicate", dup), ("delete", del)] {
            assert_ne!(&m, t, "{label}: mutation at {span} did not apply");
            match typecheck_with(&m, &[], unchecked()) {
                Err(TypeError::Linearity { .. }) => mutants += 1,
                other => panic!("{label}: {kind} at {span} gave {other:?}"),
            }
        }
    }
    mutants
}

#[test]
fn every_corpus_mutant_is_rejected() {
    let mut total = 0;
    for name in common::CORPUS {
        total += mutate_all(name, &common::corpus_term(name));
    }
    assert!(total > 100, "only {total} mutants");
}

#[test]
fn generated_program_mutants_are_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(88);
    for i in 0..40 {
        let g = well_typed(&mut rng, GenConfig::default());
        mutate_all(&format!("program {i}"), &parse(&g.source).unwrap());
    }
}

#[test]
fn deleting_is_otherwise_type_correct() {
    let t = parse("\\c: end 3. close c").unwrap();
    let del = replace(&t, Span { line: 1, col: 18 }, &|_| fresh_channel(&PgvType::End(3)));
    match typecheck_with(&del, &[], unchecked()) {
        Err(TypeError::Linearity { message, .. }) => assert!(message.contains("never used"), "{message}"),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn case_branches_must_consume_the_same_variables() {
    let src = "\\s: Unit + Unit. \\c: end 1. case s of { inl u -> let () = u in close c; inr u -> u }";
    assert!(matches!(typecheck_with(&parse(src).unwrap(), &[], unchecked()), Err(TypeError::Linearity { .. })));
}
