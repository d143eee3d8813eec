#![allow(dead_code)]

use std::path::PathBuf;

use priority_sesh::pgv::{parse, Term};

pub const CORPUS: [&str; 6] = ["mul", "sum", "woops", "totally_fine", "sched", "unit_end"];

pub fn corpus_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("corpus").join(format!("{name}.pgv"))
}

pub fn corpus_source(name: &str) -> String {
    std::fs::read_to_string(corpus_path(name)).unwrap()
}

pub fn corpus_term(name: &str) -> Term {
    parse(&corpus_source(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}
