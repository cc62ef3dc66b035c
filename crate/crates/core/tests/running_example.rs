//! Golden values for the TFTP running example: extraction, preprocessing,
//! sampling and coverage.

mod common;

use std::collections::BTreeSet;
use std::fs::File;

use common::*;
use pcsampling::coverage::{coverage, fault_covered, CoverageOptions, FaultSpec};
use pcsampling::formats::read_sample_csv;
use pcsampling::sampler::{sample, SamplerOptions, SamplerState, StepOutcome};
use pcsampling::transform::{conjoin, negate, preprocess, Grouping, UniverseMode};
use pcsampling::{complete, extract_file, Configuration, Literal, SampleMode};

fn universe() -> pcsampling::PcUniverse {
    preprocess(&tftp_raw(), &tftp_model(), UniverseMode::Pc, Grouping::None).unwrap()
}

fn config(short: &str) -> Configuration {
    // "GT!D" style: letters with optional leading '!'
    let m = tftp_model();
    let mut lits = Vec::new();
    let mut neg = false;
    for c in short.chars() {
        if c == '!' {
            neg = true;
            continue;
        }
        let name = TFTP_NAMES["TGPDB".find(c).unwrap()];
        lits.push(Literal::new(m.feature(name).unwrap(), !neg));
        neg = false;
    }
    Configuration::from_literals(lits).unwrap()
}

#[test]
fn listing_extracts_five_distinct_conditions() {
    let (records, warnings) = extract_file(&fixture("listing1/tftp.c")).unwrap();
    assert!(warnings.is_empty());
    assert_eq!(records.len(), 20);
    let got: BTreeSet<String> = records.iter().map(|r| r.formula.to_string()).collect();
    let want: BTreeSet<String> = tftp_raw().iter().map(|r| r.formula.to_string()).collect();
    assert_eq!(got, want);
    // the closing #endif of the outer block is back at the top level
    assert!(records[19].formula.is_true());
    assert_eq!(records[3].formula, tftp_formula("(G || P) && T"));
}

#[test]
fn preprocessing_yields_eight_entries_in_order() {
    let u = universe();
    let want: Vec<_> = TFTP_UNIVERSE.iter().map(|s| tftp_pc(s)).collect();
    assert_eq!(u.entries(), want.as_slice());
}

#[test]
fn complement_of_blocksize_condition() {
    assert_eq!(
        negate(&tftp_pc("(G && T && B) || (P && T && B)")).unwrap(),
        tftp_pc("(!G && !P) || !T || !B")
    );
}

#[test]
fn combined_condition_of_fault_pair() {
    let combined = conjoin(&[
        tftp_pc("(!G && !P) || !T || !B"),
        tftp_pc("(G && T && D) || (P && T && D)"),
    ])
    .unwrap();
    assert_eq!(
        combined,
        tftp_pc("(!B && G && T && D) || (!B && P && T && D)")
    );
}

#[test]
fn four_step_trace() {
    let m = tftp_model();
    let u = universe();
    let e = u.entries();
    let mut state = SamplerState::new(&m, SamplerOptions::default());
    let steps = [
        ([0, 4], StepOutcome::Unsatisfiable, vec![]),
        ([0, 1], StepOutcome::Added(0), vec!["GT"]),
        ([0, 3], StepOutcome::Attached(0), vec!["GTD"]),
        ([1, 7], StepOutcome::Added(1), vec!["GTD", "GT!D"]),
    ];
    for (pair, outcome, configs) in steps {
        assert_eq!(state.step(&[&e[pair[0]], &e[pair[1]]]).unwrap(), outcome);
        let want: Vec<Configuration> = configs.iter().map(|c| config(c)).collect();
        assert_eq!(state.configurations(), want.as_slice(), "after {pair:?}");
    }
}

#[test]
fn full_run_is_small_and_complete() {
    let m = tftp_model();
    let u = universe();
    let s = sample(&u, &m, 2, &SamplerOptions::default()).unwrap();
    assert!(s.len() <= 6, "{} configurations", s.len());
    assert!(s.configurations.iter().all(|c| complete(c, &m)));
    let r = coverage(&s, &u, &m, 2, &CoverageOptions::default()).unwrap();
    assert_eq!(r.ratio(), 1.0);
    // deterministic for a fixed seed
    assert_eq!(s, sample(&u, &m, 2, &SamplerOptions::default()).unwrap());
}

fn load(name: &str) -> pcsampling::Sample {
    let mut f = File::open(fixture(name)).unwrap();
    read_sample_csv(&mut f, &tftp_model(), 2, SampleMode::Pc, name).unwrap()
}

#[test]
fn incling_sample_misses_two_interactions() {
    let m = tftp_model();
    let r = coverage(
        &load("incling.csv"),
        &universe(),
        &m,
        2,
        &CoverageOptions::default(),
    )
    .unwrap();
    let got: Vec<_> = r.uncovered.iter().map(|u| u.combined.clone()).collect();
    assert_eq!(
        got,
        vec![
            tftp_pc("(G && T && B && !D) || (P && T && B && !D)"),
            tftp_pc("(G && T && !B && D) || (P && T && !B && D)"),
        ]
    );
    // distinct-pair convention: 19 satisfiable pairs, 17 covered
    assert_eq!(
        (r.covered_interactions, r.total_valid_interactions),
        (17, 19)
    );
}

#[test]
fn planted_fault() {
    let m = tftp_model();
    let fault = FaultSpec::new(
        "fault",
        tftp_pc("(!B && G && T && D) || (!B && P && T && D)"),
    )
    .unwrap();
    assert_eq!(fault.degree, 4);
    assert!(fault_covered(&load("presice.csv"), &fault));
    assert!(!fault_covered(&load("incling.csv"), &fault));
    let own = sample(&universe(), &m, 2, &SamplerOptions::default()).unwrap();
    assert!(fault_covered(&own, &fault));
}
