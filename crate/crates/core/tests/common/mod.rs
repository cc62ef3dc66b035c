//! Helpers shared by the integration test targets: the running TFTP example
//! and generators for small random instances.

#![allow(dead_code)]

use std::path::{Path, PathBuf};

use pcsampling::expr::Expr;
use pcsampling::transform::{to_pc, RawCondition, DEFAULT_CLAUSE_CAP};
use pcsampling::{Clause, FeatureModel, Literal, PresenceCondition};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const TFTP_NAMES: [&str; 5] = [
    "TFTP",
    "TFTP_GET",
    "TFTP_PUT",
    "TFTP_DEBUG",
    "TFTP_BLOCKSIZE",
];

pub fn fixture(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(rel)
}

pub fn tftp_model() -> FeatureModel {
    FeatureModel::unconstrained(TFTP_NAMES).unwrap()
}

/// Expands the single-letter shorthand T, G, P, D, B used in the examples.
pub fn tftp_formula(short: &str) -> Expr {
    let mut text = String::new();
    for c in short.chars() {
        match c {
            'T' => text.push_str("TFTP"),
            'G' => text.push_str("TFTP_GET"),
            'P' => text.push_str("TFTP_PUT"),
            'D' => text.push_str("TFTP_DEBUG"),
            'B' => text.push_str("TFTP_BLOCKSIZE"),
            other => text.push(other),
        }
    }
    Expr::parse(&text).unwrap()
}

pub fn tftp_pc(short: &str) -> PresenceCondition {
    to_pc(&tftp_formula(short), &tftp_model(), DEFAULT_CLAUSE_CAP).unwrap()
}

pub fn raw(formula: Expr) -> RawCondition {
    RawCondition {
        formula,
        origin: None,
    }
}

/// The raw conditions of the running example's source listing.
pub fn tftp_raw() -> Vec<RawCondition> {
    [
        "1",
        "G || P",
        "(G || P) && T",
        "(G || P) && T && B",
        "(G || P) && T && D",
    ]
    .iter()
    .map(|s| raw(tftp_formula(s)))
    .collect()
}

/// The preprocessed universe of the running example, in order.
pub const TFTP_UNIVERSE: [&str; 8] = [
    "G || P",
    "(G && T) || (P && T)",
    "(G && T && B) || (P && T && B)",
    "(G && T && D) || (P && T && D)",
    "!G && !P",
    "(!G && !P) || !T",
    "(!G && !P) || !T || !B",
    "(!G && !P) || !T || !D",
];

pub fn var_name(i: usize) -> String {
    format!("f{i}")
}

/// Random formula over `n` features.
pub fn random_expr(rng: &mut ChaCha8Rng, n: usize, depth: u32) -> Expr {
    if depth == 0 || rng.gen_bool(0.3) {
        let v = Expr::var(var_name(rng.gen_range(0..n)));
        return if rng.gen_bool(0.4) { Expr::not(v) } else { v };
    }
    let arity = rng.gen_range(2..=3);
    let ops: Vec<Expr> = (0..arity).map(|_| random_expr(rng, n, depth - 1)).collect();
    match rng.gen_range(0..5) {
        0 => Expr::not(Expr::and(ops)),
        1 | 2 => Expr::and(ops),
        _ => Expr::or(ops),
    }
}

/// Random DNF with at most `clauses` clauses of at most `width` literals.
pub fn random_dnf(
    rng: &mut ChaCha8Rng,
    n: usize,
    clauses: usize,
    width: usize,
) -> PresenceCondition {
    let count = rng.gen_range(1..=clauses);
    PresenceCondition::new((0..count).map(|_| {
        let w = rng.gen_range(1..=width);
        Clause::new((0..w).map(|_| {
            let f = rng.gen_range(1..=n) as i32;
            Literal::from_dimacs(if rng.gen_bool(0.5) { f } else { -f })
        }))
    }))
}

pub fn assignments(n: usize) -> impl Iterator<Item = Vec<bool>> {
    (0..1u64 << n).map(move |bits| (0..n).map(|i| bits >> i & 1 == 1).collect())
}

/// Random satisfiable CNF model over `n` features.
pub fn random_model(rng: &mut ChaCha8Rng, n: usize) -> FeatureModel {
    loop {
        let names: Vec<String> = (0..n).map(var_name).collect();
        let count = rng.gen_range(0..=n);
        let clauses: Vec<Clause> = (0..count)
            .map(|_| {
                let w = rng.gen_range(1..=3);
                Clause::new((0..w).map(|_| {
                    let f = rng.gen_range(1..=n) as i32;
                    Literal::from_dimacs(if rng.gen_bool(0.5) { f } else { -f })
                }))
            })
            .collect();
        let model = FeatureModel::new(names, clauses).unwrap();
        if assignments(n).any(|a| model.satisfied_by(&a)) {
            return model;
        }
    }
}

/// Every satisfiable pair of literals over distinct features is contained
/// in some configuration.
pub fn pairwise_feature_coverage(model: &FeatureModel, rows: &[Vec<bool>]) -> bool {
    let n = model.len();
    let valid: Vec<Vec<bool>> = assignments(n).filter(|a| model.satisfied_by(a)).collect();
    for i in 0..n {
        for j in i + 1..n {
            for (vi, vj) in [(true, true), (true, false), (false, true), (false, false)] {
                let holds = |a: &Vec<bool>| a[i] == vi && a[j] == vj;
                if valid.iter().any(holds) && !rows.iter().any(holds) {
                    return false;
                }
            }
        }
    }
    true
}
