//! Measuring how much of a universe's t-wise interaction space a sample
//! covers, checking fault conditions, and a naive enumeration oracle.
//!
//! Interactions here are size-t sets of distinct universe entries. An
//! interaction counts towards the total when its combined condition is
//! satisfiable together with the model, and as covered when some sample
//! configuration activates it.

use std::fmt::Write as _;
use std::time::Duration;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::logic::{active, FeatureModel, PresenceCondition, Sample};
use crate::sampler::InteractionCursor;
use crate::sat::{SatContext, DEFAULT_TIMEOUT};
use crate::transform::{
    conjoin_capped, equivalent, simplify, PcUniverse, UniverseMode, DEFAULT_CLAUSE_CAP,
};

#[derive(Clone, Debug)]
pub struct CoverageOptions {
    /// Maximum number of uncovered interactions kept in the report.
    pub uncovered_cap: usize,
    pub clause_cap: usize,
    pub timeout: Duration,
}

impl Default for CoverageOptions {
    fn default() -> Self {
        CoverageOptions {
            uncovered_cap: 100,
            clause_cap: DEFAULT_CLAUSE_CAP,
            timeout: DEFAULT_TIMEOUT,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct UncoveredInteraction {
    /// Universe indices of the members, ascending.
    pub entries: Vec<usize>,
    pub combined: PresenceCondition,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CoverageReport {
    pub t: usize,
    pub mode: UniverseMode,
    pub total_valid_interactions: u64,
    pub covered_interactions: u64,
    /// The first uncovered interactions in enumeration order, capped.
    pub uncovered: Vec<UncoveredInteraction>,
}

#[derive(Serialize)]
struct JsonReport<'a> {
    t: usize,
    mode: &'a str,
    total_valid_interactions: u64,
    covered_interactions: u64,
    ratio: f64,
    uncovered: Vec<String>,
}

impl CoverageReport {
    /// covered / total, or 1 for an empty interaction space.
    pub fn ratio(&self) -> f64 {
        if self.total_valid_interactions == 0 {
            1.0
        } else {
            self.covered_interactions as f64 / self.total_valid_interactions as f64
        }
    }

    pub fn uncovered_count(&self) -> u64 {
        self.total_valid_interactions - self.covered_interactions
    }

    /// Line-oriented `key value` rendering.
    pub fn to_text(&self, model: &FeatureModel) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "t {}", self.t);
        let _ = writeln!(out, "mode {}", self.mode.as_str());
        let _ = writeln!(
            out,
            "total_valid_interactions {}",
            self.total_valid_interactions
        );
        let _ = writeln!(out, "covered_interactions {}", self.covered_interactions);
        let _ = writeln!(out, "ratio {:.6}", self.ratio());
        let _ = writeln!(out, "uncovered_interactions {}", self.uncovered_count());
        for u in &self.uncovered {
            let _ = writeln!(out, "uncovered {}", u.combined.display(model));
        }
        out
    }

    pub fn to_json(&self, model: &FeatureModel) -> String {
        let report = JsonReport {
            t: self.t,
            mode: self.mode.as_str(),
            total_valid_interactions: self.total_valid_interactions,
            covered_interactions: self.covered_interactions,
            ratio: self.ratio(),
            uncovered: self
                .uncovered
                .iter()
                .map(|u| u.combined.display(model).to_string())
                .collect(),
        };
        serde_json::to_string_pretty(&report).expect("report serializes")
    }
}

/// Assignment vectors of the sample, rejecting incomplete or invalid rows.
fn sample_assignments(sample: &Sample, model: &FeatureModel) -> Result<Vec<Vec<bool>>> {
    sample
        .configurations
        .iter()
        .map(|c| match c.assignment(model) {
            Some(a) if c.len() == model.len() && model.satisfied_by(&a) => Ok(a),
            _ => Err(Error::InvalidConfiguration),
        })
        .collect()
}

/// Per entry, the set of sample rows that activate it, as a bitset.
fn activation_bits(entries: &[PresenceCondition], rows: &[Vec<bool>]) -> Vec<Vec<u64>> {
    let words = rows.len().div_ceil(64);
    entries
        .iter()
        .map(|e| {
            let mut bits = vec![0u64; words];
            for (r, row) in rows.iter().enumerate() {
                if e.eval(row) {
                    bits[r / 64] |= 1 << (r % 64);
                }
            }
            bits
        })
        .collect()
}

fn intersects(sets: &[&[u64]]) -> bool {
    let words = sets.first().map_or(0, |s| s.len());
    (0..words).any(|w| sets.iter().fold(u64::MAX, |acc, s| acc & s[w]) != 0)
}

#[derive(Default)]
struct Tally {
    total: u64,
    covered: u64,
    uncovered: Vec<UncoveredInteraction>,
}

impl Tally {
    fn merge(&mut self, other: Tally, cap: usize) {
        self.total += other.total;
        self.covered += other.covered;
        for u in other.uncovered {
            if self.uncovered.len() < cap {
                self.uncovered.push(u);
            }
        }
    }
}

/// Evaluates the subsets of `local` (indices into `universe`) that start with
/// `local[first]`. `skip` lets grouped coverage drop interactions already
/// counted in an earlier group.
#[allow(clippy::too_many_arguments)]
fn tally_from(
    first: usize,
    local: &[usize],
    entries: &[PresenceCondition],
    bits: &[Vec<u64>],
    t: usize,
    sat: &mut SatContext,
    options: &CoverageOptions,
    skip: &dyn Fn(&[usize]) -> bool,
) -> Result<Tally> {
    let mut tally = Tally::default();
    let rest = &local[first + 1..];
    let mut global = Vec::with_capacity(t);
    let mut visit = |tail: &[usize]| -> Result<()> {
        global.clear();
        global.push(local[first]);
        global.extend(tail.iter().map(|&i| rest[i]));
        if skip(&global) {
            return Ok(());
        }
        let sets: Vec<&[u64]> = global.iter().map(|&g| bits[g].as_slice()).collect();
        if intersects(&sets) {
            tally.total += 1;
            tally.covered += 1;
            return Ok(());
        }
        let members: Vec<PresenceCondition> = global.iter().map(|&g| entries[g].clone()).collect();
        let combined = conjoin_capped(&members, options.clause_cap)?;
        let mut satisfiable = false;
        for clause in combined.clauses() {
            if sat.valid_literals(clause.literals())? {
                satisfiable = true;
                break;
            }
        }
        if satisfiable {
            tally.total += 1;
            if tally.uncovered.len() < options.uncovered_cap {
                tally.uncovered.push(UncoveredInteraction {
                    entries: global.clone(),
                    combined,
                });
            }
        }
        Ok(())
    };
    if t == 1 {
        visit(&[])?;
    } else {
        let mut cursor = InteractionCursor::subsets(rest.len(), t - 1);
        while let Some(tail) = cursor.advance() {
            visit(tail)?;
        }
    }
    Ok(tally)
}

fn tally_group(
    local: &[usize],
    entries: &[PresenceCondition],
    bits: &[Vec<u64>],
    model: &FeatureModel,
    t: usize,
    options: &CoverageOptions,
    skip: &(dyn Fn(&[usize]) -> bool + Sync),
) -> Result<Tally> {
    let parts: Vec<Result<Tally>> = (0..local.len())
        .into_par_iter()
        .map_init(
            || SatContext::with_timeout(model, options.timeout),
            |sat, first| tally_from(first, local, entries, bits, t, sat, options, skip),
        )
        .collect();
    let mut tally = Tally::default();
    for part in parts {
        tally.merge(part?, options.uncovered_cap);
    }
    Ok(tally)
}

/// t-wise coverage of `sample` over the whole universe.
pub fn coverage(
    sample: &Sample,
    universe: &PcUniverse,
    model: &FeatureModel,
    t: usize,
    options: &CoverageOptions,
) -> Result<CoverageReport> {
    assert!(t >= 1, "t must be positive");
    let rows = sample_assignments(sample, model)?;
    let bits = activation_bits(universe.entries(), &rows);
    let all: Vec<usize> = (0..universe.len()).collect();
    let tally = tally_group(&all, universe.entries(), &bits, model, t, options, &|_| {
        false
    })?;
    Ok(report(t, universe.mode(), tally))
}

/// Coverage restricted to interactions inside each group. An interaction
/// whose members all belong to several groups is counted once.
pub fn coverage_grouped(
    sample: &Sample,
    universe: &PcUniverse,
    model: &FeatureModel,
    t: usize,
    options: &CoverageOptions,
) -> Result<CoverageReport> {
    let Some(groups) = universe.groups() else {
        return coverage(sample, universe, model, t, options);
    };
    assert!(t >= 1, "t must be positive");
    let rows = sample_assignments(sample, model)?;
    let bits = activation_bits(universe.entries(), &rows);
    let mut membership: Vec<Vec<usize>> = vec![Vec::new(); universe.len()];
    for (g, group) in groups.iter().enumerate() {
        for &e in &group.entries {
            membership[e].push(g);
        }
    }
    let mut tally = Tally::default();
    for (g, group) in groups.iter().enumerate() {
        let mut local = group.entries.clone();
        local.sort_unstable();
        let earlier = |members: &[usize]| {
            membership[members[0]]
                .iter()
                .take_while(|&&h| h < g)
                .any(|&h| members.iter().all(|&m| membership[m].contains(&h)))
        };
        let part = tally_group(
            &local,
            universe.entries(),
            &bits,
            model,
            t,
            options,
            &earlier,
        )?;
        tally.merge(part, options.uncovered_cap);
    }
    Ok(report(t, universe.mode(), tally))
}

fn report(t: usize, mode: UniverseMode, tally: Tally) -> CoverageReport {
    CoverageReport {
        t,
        mode,
        total_valid_interactions: tally.total,
        covered_interactions: tally.covered,
        uncovered: tally.uncovered,
    }
}

/// Largest feature count the enumeration oracle accepts.
pub const BRUTE_FORCE_MAX_FEATURES: usize = 20;
/// Largest interaction count the enumeration oracle accepts.
pub const BRUTE_FORCE_MAX_INTERACTIONS: u128 = 1_000_000;

/// The same contract as [`coverage`], computed by enumerating every complete
/// assignment of the model and every interaction, with no shortcuts.
pub fn brute_force_coverage(
    sample: &Sample,
    universe: &PcUniverse,
    model: &FeatureModel,
    t: usize,
) -> Result<CoverageReport> {
    assert!(t >= 1, "t must be positive");
    let n = model.len();
    if n > BRUTE_FORCE_MAX_FEATURES {
        return Err(Error::TooLarge(format!(
            "{n} features, at most {BRUTE_FORCE_MAX_FEATURES} supported"
        )));
    }
    let count = InteractionCursor::total(universe.len(), t, false);
    if count > BRUTE_FORCE_MAX_INTERACTIONS {
        return Err(Error::TooLarge(format!("{count} interactions")));
    }
    let rows = sample_assignments(sample, model)?;
    let valid: Vec<Vec<bool>> = (0..1u64 << n)
        .map(|bits| (0..n).map(|i| bits >> i & 1 == 1).collect::<Vec<bool>>())
        .filter(|a| model.satisfied_by(a))
        .collect();
    let entries = universe.entries();
    let mut tally = Tally::default();
    let mut cursor = InteractionCursor::subsets(entries.len(), t);
    while let Some(combo) = cursor.advance() {
        let holds = |a: &Vec<bool>| combo.iter().all(|&i| entries[i].eval(a));
        if !valid.iter().any(holds) {
            continue;
        }
        tally.total += 1;
        if rows.iter().any(holds) {
            tally.covered += 1;
        } else if tally.uncovered.len() < CoverageOptions::default().uncovered_cap {
            let members: Vec<PresenceCondition> =
                combo.iter().map(|&i| entries[i].clone()).collect();
            tally.uncovered.push(UncoveredInteraction {
                entries: combo.to_vec(),
                combined: conjoin_capped(&members, DEFAULT_CLAUSE_CAP)?,
            });
        }
    }
    Ok(report(t, universe.mode(), tally))
}

/// A presence condition that guards a known fault.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FaultSpec {
    pub id: String,
    pub condition: PresenceCondition,
    /// Number of literals in the smallest clause.
    pub degree: usize,
}

impl FaultSpec {
    /// Rejects conditions that are constantly true or false.
    pub fn new(id: impl Into<String>, condition: PresenceCondition) -> Result<Self> {
        let id = id.into();
        let condition = simplify(&condition);
        if condition.is_contradiction() || equivalent(&condition, &PresenceCondition::tautology())?
        {
            return Err(Error::parse(
                id,
                "fault condition must be neither a tautology nor a contradiction",
            ));
        }
        let degree = condition.min_clause_len().unwrap_or(0);
        Ok(FaultSpec {
            id,
            condition,
            degree,
        })
    }
}

/// True iff some configuration of the sample activates the fault condition.
pub fn fault_covered(sample: &Sample, fault: &FaultSpec) -> bool {
    sample
        .configurations
        .iter()
        .any(|c| active(&fault.condition, c))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use crate::logic::{Configuration, Literal, SampleMode};
    use crate::transform::{preprocess, to_pc, Grouping};

    fn pc(model: &FeatureModel, text: &str) -> PresenceCondition {
        to_pc(&Expr::parse(text).unwrap(), model, DEFAULT_CLAUSE_CAP).unwrap()
    }

    fn rows(model: &FeatureModel, rows: &[&[i32]]) -> Sample {
        let configs = rows
            .iter()
            .map(|r| {
                Configuration::from_literals(r.iter().map(|&d| Literal::from_dimacs(d))).unwrap()
            })
            .collect();
        Sample::new(model, 2, SampleMode::Pc, configs)
    }

    #[test]
    fn two_feature_full_factorial() {
        let m = FeatureModel::unconstrained(["A", "B"]).unwrap();
        let u = preprocess(&[], &m, UniverseMode::Fm, Grouping::None).unwrap();
        let full = rows(&m, &[&[1, 2], &[-1, -2], &[1, -2], &[-1, 2]]);
        let r = coverage(&full, &u, &m, 2, &CoverageOptions::default()).unwrap();
        assert_eq!(r.ratio(), 1.0);
        assert_eq!(r, brute_force_coverage(&full, &u, &m, 2).unwrap());

        // A ∧ ¬A style pairs are unsatisfiable, leaving the 4 cross pairs
        let one = rows(&m, &[&[1, 2]]);
        let r = coverage(&one, &u, &m, 2, &CoverageOptions::default()).unwrap();
        assert_eq!((r.covered_interactions, r.total_valid_interactions), (1, 4));
        assert_eq!(r, brute_force_coverage(&one, &u, &m, 2).unwrap());
    }

    #[test]
    fn empty_sample_and_empty_universe() {
        let m = FeatureModel::unconstrained(["A", "B"]).unwrap();
        let u = preprocess(&[], &m, UniverseMode::Fm, Grouping::None).unwrap();
        let empty = Sample::new(&m, 2, SampleMode::Pc, vec![]);
        let r = coverage(&empty, &u, &m, 2, &CoverageOptions::default()).unwrap();
        assert_eq!(r.ratio(), 0.0);
        assert_eq!(r.uncovered.len(), 4);

        let none = PcUniverse::from_entries(vec![], UniverseMode::Pc);
        let r = coverage(&empty, &none, &m, 2, &CoverageOptions::default()).unwrap();
        assert_eq!(r.total_valid_interactions, 0);
        assert_eq!(r.ratio(), 1.0);
    }

    #[test]
    fn incomplete_sample_is_rejected() {
        let m = FeatureModel::unconstrained(["A", "B"]).unwrap();
        let u = preprocess(&[], &m, UniverseMode::Fm, Grouping::None).unwrap();
        let partial = rows(&m, &[&[1]]);
        assert!(matches!(
            coverage(&partial, &u, &m, 2, &CoverageOptions::default()),
            Err(Error::InvalidConfiguration)
        ));
    }

    #[test]
    fn uncovered_cap_limits_listing_only() {
        let m = FeatureModel::unconstrained(["A", "B", "C"]).unwrap();
        let u = preprocess(&[], &m, UniverseMode::Fm, Grouping::None).unwrap();
        let empty = Sample::new(&m, 2, SampleMode::Pc, vec![]);
        let opts = CoverageOptions {
            uncovered_cap: 2,
            ..CoverageOptions::default()
        };
        let r = coverage(&empty, &u, &m, 2, &opts).unwrap();
        assert_eq!(r.total_valid_interactions, 12);
        assert_eq!(r.uncovered.len(), 2);
        assert_eq!(r.uncovered[0].entries, vec![0, 1]);
    }

    #[test]
    fn faults() {
        let m = FeatureModel::unconstrained(["X", "Y"]).unwrap();
        let f = FaultSpec::new("f1", pc(&m, "!X")).unwrap();
        assert_eq!(f.degree, 1);
        assert!(fault_covered(&rows(&m, &[&[1, 2], &[-1, 2]]), &f));
        assert!(!fault_covered(&rows(&m, &[&[1, 2]]), &f));
        assert!(FaultSpec::new("t", pc(&m, "X || !X")).is_err());
        assert!(FaultSpec::new("c", pc(&m, "X && !X")).is_err());
        let g = FaultSpec::new("g", pc(&m, "(X && Y) || (!X && Y && X)")).unwrap();
        assert_eq!(g.degree, 2);
    }

    #[test]
    fn text_report_shape() {
        let m = FeatureModel::unconstrained(["A", "B"]).unwrap();
        let u = preprocess(&[], &m, UniverseMode::Fm, Grouping::None).unwrap();
        let one = rows(&m, &[&[1, 2]]);
        let r = coverage(&one, &u, &m, 2, &CoverageOptions::default()).unwrap();
        let text = r.to_text(&m);
        assert!(text.contains("ratio 0.250000\n"));
        assert!(text.contains("uncovered A && !B\n"));
        let json: serde_json::Value = serde_json::from_str(&r.to_json(&m)).unwrap();
        assert_eq!(json["covered_interactions"], 1);
    }
}
