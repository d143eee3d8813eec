//! Communication graphs: acyclic exactly when some priority assignment
//! passes the checker, on small programs searched exhaustively.

mod common;

use priority_sesh::graded::{DeadlockPolicy, RunError};
use priority_sesh::pgv::gen::{arbitrary, assignments, render, well_typed, GenConfig, Prio};
use priority_sesh::pgv::{comm_graph, eval, parse, typecheck, typecheck_with, CheckOptions, CommGraph, EvalError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn graph_of(src: &str) -> CommGraph {
    let c = typecheck_with(&parse(src).unwrap(), &[], CheckOptions { enforce_priorities: false }).unwrap();
    comm_graph(&c.typed)
}

#[test]
fn corpus_graphs() {
    let expect = [
        ("mul", 8, 4, false),
        ("sum", 14, 7, false),
        ("woops", 4, 2, true),
        ("totally_fine", 4, 2, false),
        ("sched", 16, 8, false),
        ("unit_end", 2, 1, false),
    ];
    for (name, nodes, pairs, cyclic) in expect {
        let g = graph_of(&common::corpus_source(name));
        assert_eq!(g.nodes.len(), nodes, "{name}");
        assert_eq!(g.pairs.len(), pairs, "{name}");
        assert_eq!(g.is_cyclic(), cyclic, "{name}");
    }
}

#[test]
fn totally_fine_graph_shape() {
    let g = graph_of(&common::corpus_source("totally_fine"));
    let labels: Vec<String> = g.nodes.iter().map(|n| n.to_string()).collect();
    assert_eq!(labels, ["recv@0", "send@1", "send@0", "recv@1"]);
    assert_eq!(g.edges, [(0, 1), (2, 3)]);
    assert_eq!(g.pairs, [(0, 2), (1, 3)]);
}

/// Whether the skeleton typechecks under any assignment from `0..levels`.
fn some_assignment_passes(skeleton: &priority_sesh::pgv::gen::Skeleton, levels: u64) -> bool {
    assignments(skeleton.channels.len(), levels).any(|p| typecheck(&parse(&render(skeleton, &p)).unwrap()).is_ok())
}

#[test]
fn acyclic_iff_some_assignment_passes() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut acyclic, mut cyclic) = (0, 0);
    for _ in 0..300 {
        let threads = rng.gen_range(2..=3);
        let channels = rng.gen_range(1..=3);
        let s = arbitrary(&mut rng, threads, channels);
        let zero: Vec<Prio> = (0..channels).map(|_| Prio { message: 0, end: 9 }).collect();
        let src = render(&s, &zero);
        let g = graph_of(&src);
        assert!(g.nodes.len() <= 6);
        assert_eq!(!g.is_cyclic(), some_assignment_passes(&s, 4), "{src}");
        if g.is_cyclic() {
            cyclic += 1;
        } else {
            acyclic += 1;
        }
    }
    assert!(acyclic > 20 && cyclic > 20, "{acyclic} acyclic, {cyclic} cyclic");
}

#[test]
fn generated_programs_have_acyclic_graphs() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..200 {
        let g = well_typed(&mut rng, GenConfig::default());
        let graph = graph_of(&g.source);
        assert!(!graph.is_cyclic(), "{}", g.source);
        let actions: usize = g.skeleton.order.iter().map(Vec::len).sum();
        assert_eq!(graph.nodes.len(), actions);
    }
}

/// A receive followed by forking the thread that would send: the fork is
/// pure, so the ordering rules accept the program, but main blocks before
/// the sender exists. The graph records the fork as ordering the child's
/// actions after the receive and so shows the cycle.
#[test]
fn forking_after_a_receive_is_not_ordered_by_the_checker() {
    let src = "let (s, r) = new[!0 Unit.end 1] () in \
               let (x, r) = recv r in let () = x in let () = cancel r in \
               fork (\\u: Unit. let () = u in cancel (send ((), s)))";
    let t = parse(src).unwrap();
    assert!(typecheck(&t).is_ok());
    assert!(graph_of(src).is_cyclic());
    let r = eval(&t, DeadlockPolicy::default(), true);
    assert!(matches!(r, Err(EvalError::Run(RunError::Deadlock(_)))), "{r:?}");
}
