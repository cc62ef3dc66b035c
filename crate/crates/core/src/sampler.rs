//! Greedy construction of a configuration sample that covers every
//! satisfiable t-wise interaction of a presence-condition universe, plus the
//! random baseline.
//!
//! Interactions are the size-t multisets of universe entries, enumerated in
//! lexicographic index order. For each one the combined condition is the
//! conjunction of its entries. An interaction that no configuration already
//! activates is attached, clause by clause, to the oldest configuration that
//! stays valid with the clause's literals; failing that, the smallest valid
//! clause (first on ties) starts a new configuration. Partial configurations
//! are completed with the SAT backend at the end.

use std::collections::HashMap;
use std::time::Duration;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::logic::{
    active, Clause, Configuration, FeatureModel, PresenceCondition, Sample, SampleMode,
};
use crate::sat::{SatContext, DEFAULT_TIMEOUT};
use crate::transform::{conjoin_capped, PcUniverse, UniverseMode, DEFAULT_CLAUSE_CAP};

/// Default bound on the number of enumerated interactions.
pub const DEFAULT_INTERACTION_CAP: u128 = 1 << 31;

/// Enumerates size-t combinations of `0..k` in lexicographic order, either
/// with repetition (multisets) or without (subsets).
#[derive(Clone, Debug)]
pub struct InteractionCursor {
    k: usize,
    t: usize,
    repetition: bool,
    current: Vec<usize>,
    started: bool,
    done: bool,
}

impl InteractionCursor {
    pub fn multisets(k: usize, t: usize) -> Self {
        Self::new(k, t, true)
    }

    pub fn subsets(k: usize, t: usize) -> Self {
        Self::new(k, t, false)
    }

    fn new(k: usize, t: usize, repetition: bool) -> Self {
        assert!(t >= 1, "interaction size must be positive");
        let done = k == 0 || (!repetition && t > k);
        let current = if repetition {
            vec![0; t]
        } else {
            (0..t).collect()
        };
        InteractionCursor {
            k,
            t,
            repetition,
            current,
            started: false,
            done,
        }
    }

    /// Number of combinations the cursor yields in total.
    pub fn total(k: usize, t: usize, repetition: bool) -> u128 {
        if repetition {
            binomial((k + t).saturating_sub(1) as u128, t as u128)
        } else {
            binomial(k as u128, t as u128)
        }
    }

    pub fn advance(&mut self) -> Option<&[usize]> {
        if self.done {
            return None;
        }
        if !self.started {
            self.started = true;
            return Some(&self.current);
        }
        let t = self.t;
        let k = self.k;
        let pos = (0..t).rev().find(|&i| {
            if self.repetition {
                self.current[i] < k - 1
            } else {
                self.current[i] < k - t + i
            }
        });
        match pos {
            None => {
                self.done = true;
                None
            }
            Some(i) => {
                self.current[i] += 1;
                for j in i + 1..t {
                    self.current[j] = if self.repetition {
                        self.current[i]
                    } else {
                        self.current[j - 1] + 1
                    };
                }
                Some(&self.current)
            }
        }
    }
}

/// `n choose r`, saturating at `u128::MAX`.
pub fn binomial(n: u128, r: u128) -> u128 {
    if r > n {
        return 0;
    }
    let r = r.min(n - r);
    let mut acc: u128 = 1;
    for i in 0..r {
        acc = match acc.checked_mul(n - i) {
            Some(v) => v / (i + 1),
            None => return u128::MAX,
        };
    }
    acc
}

#[derive(Clone, Debug)]
pub struct SamplerOptions {
    pub seed: u64,
    /// Shuffle the universe with `seed` before enumerating interactions.
    pub shuffle_universe: bool,
    pub interaction_cap: u128,
    pub clause_cap: usize,
    pub timeout: Duration,
}

impl Default for SamplerOptions {
    fn default() -> Self {
        SamplerOptions {
            seed: 0,
            shuffle_universe: false,
            interaction_cap: DEFAULT_INTERACTION_CAP,
            clause_cap: DEFAULT_CLAUSE_CAP,
            timeout: DEFAULT_TIMEOUT,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SamplerStats {
    pub interactions: u64,
    pub already_covered: u64,
    pub newly_covered: u64,
    pub unsatisfiable: u64,
}

/// What one interaction did to the sample.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepOutcome {
    AlreadyCovered,
    /// A clause was merged into the configuration at this index.
    Attached(usize),
    /// A new configuration was appended at this index.
    Added(usize),
    /// No clause of the combined condition is valid.
    Unsatisfiable,
}

/// The sample under construction.
pub struct SamplerState<'m> {
    model: &'m FeatureModel,
    sat: SatContext,
    configurations: Vec<Configuration>,
    stats: SamplerStats,
    clause_validity: HashMap<Clause, bool>,
    options: SamplerOptions,
}

impl<'m> SamplerState<'m> {
    pub fn new(model: &'m FeatureModel, options: SamplerOptions) -> Self {
        SamplerState {
            model,
            sat: SatContext::with_timeout(model, options.timeout),
            configurations: Vec::new(),
            stats: SamplerStats::default(),
            clause_validity: HashMap::new(),
            options,
        }
    }

    pub fn configurations(&self) -> &[Configuration] {
        &self.configurations
    }

    pub fn stats(&self) -> &SamplerStats {
        &self.stats
    }

    fn clause_valid(&mut self, clause: &Clause) -> Result<bool> {
        if let Some(&v) = self.clause_validity.get(clause) {
            return Ok(v);
        }
        let v = self.sat.valid_literals(clause.literals())?;
        self.clause_validity.insert(clause.clone(), v);
        Ok(v)
    }

    /// Processes one interaction given by its member conditions.
    pub fn step(&mut self, members: &[&PresenceCondition]) -> Result<StepOutcome> {
        let owned: Vec<PresenceCondition> = members.iter().map(|&p| p.clone()).collect();
        let combined = conjoin_capped(&owned, self.options.clause_cap)?;
        self.step_combined(&combined)
    }

    /// Processes one interaction given by its combined condition.
    pub fn step_combined(&mut self, combined: &PresenceCondition) -> Result<StepOutcome> {
        self.stats.interactions += 1;
        if self.configurations.iter().any(|c| active(combined, c)) {
            self.stats.already_covered += 1;
            return Ok(StepOutcome::AlreadyCovered);
        }
        let mut valid_clauses: Vec<&Clause> = Vec::new();
        for clause in combined.clauses() {
            if !self.clause_valid(clause)? {
                continue;
            }
            for i in 0..self.configurations.len() {
                let config = &self.configurations[i];
                if !config.compatible_with(clause) {
                    continue;
                }
                let mut merged: Vec<_> = config.literals().collect();
                merged.extend_from_slice(clause.literals());
                if self.sat.valid_literals(&merged)? {
                    self.configurations[i].extend_with(clause)?;
                    self.stats.newly_covered += 1;
                    return Ok(StepOutcome::Attached(i));
                }
            }
            valid_clauses.push(clause);
        }
        // min_by_key keeps the first of equally small clauses
        match valid_clauses.iter().min_by_key(|c| c.len()) {
            Some(smallest) => {
                self.configurations.push(Configuration::from_literals(
                    smallest.literals().iter().copied(),
                )?);
                self.stats.newly_covered += 1;
                Ok(StepOutcome::Added(self.configurations.len() - 1))
            }
            None => {
                self.stats.unsatisfiable += 1;
                Ok(StepOutcome::Unsatisfiable)
            }
        }
    }

    /// Runs every size-t multiset of the universe through [`Self::step`].
    pub fn cover(&mut self, universe: &PcUniverse, t: usize) -> Result<()> {
        check_interaction_count(universe.len(), t, self.options.interaction_cap)?;
        let entries = universe.entries();
        let mut cursor = InteractionCursor::multisets(entries.len(), t);
        let mut members: Vec<PresenceCondition> = Vec::with_capacity(t);
        while let Some(combo) = cursor.advance() {
            members.clear();
            let mut last = usize::MAX;
            for &i in combo {
                // a repeated entry conjoins to itself
                if i != last {
                    members.push(entries[i].clone());
                    last = i;
                }
            }
            let combined = conjoin_capped(&members, self.options.clause_cap)?;
            self.step_combined(&combined)?;
        }
        Ok(())
    }

    /// Completes every configuration and returns the sample.
    pub fn finish(mut self, t: usize, mode: SampleMode) -> Result<Sample> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.options.seed);
        let partial = std::mem::take(&mut self.configurations);
        let mut complete = Vec::with_capacity(partial.len());
        for config in &partial {
            let seed: u64 = rng.gen();
            complete.push(self.sat.extend_to_complete(config, seed)?);
        }
        Ok(Sample::new(self.model, t, mode, complete))
    }
}

fn check_interaction_count(k: usize, t: usize, cap: u128) -> Result<()> {
    let count = InteractionCursor::total(k, t, true);
    if count > cap {
        return Err(Error::InteractionCap { count, cap });
    }
    Ok(())
}

fn sample_mode(mode: UniverseMode) -> SampleMode {
    match mode {
        UniverseMode::Pc => SampleMode::Pc,
        UniverseMode::Fm => SampleMode::Fm,
        UniverseMode::Concrete => SampleMode::Concrete,
    }
}

fn ordered(universe: &PcUniverse, options: &SamplerOptions) -> PcUniverse {
    if !options.shuffle_universe {
        return universe.clone();
    }
    let mut order: Vec<usize> = (0..universe.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(options.seed));
    universe.restrict(&order)
}

/// Samples the whole universe, ignoring any grouping.
pub fn sample(
    universe: &PcUniverse,
    model: &FeatureModel,
    t: usize,
    options: &SamplerOptions,
) -> Result<Sample> {
    assert!(t >= 1, "t must be positive");
    let mut state = SamplerState::new(model, options.clone());
    if !state.sat.is_satisfiable()? {
        return Err(Error::UnsatisfiableModel);
    }
    state.cover(&ordered(universe, options), t)?;
    state.finish(t, sample_mode(universe.mode()))
}

/// Samples group by group, extending one shared configuration list. Falls
/// back to [`sample`] when the universe has no groups.
pub fn sample_grouped(
    universe: &PcUniverse,
    model: &FeatureModel,
    t: usize,
    options: &SamplerOptions,
) -> Result<Sample> {
    let Some(groups) = universe.groups() else {
        return sample(universe, model, t, options);
    };
    assert!(t >= 1, "t must be positive");
    for group in groups {
        check_interaction_count(group.entries.len(), t, options.interaction_cap)?;
    }
    let mut state = SamplerState::new(model, options.clone());
    if !state.sat.is_satisfiable()? {
        return Err(Error::UnsatisfiableModel);
    }
    for group in groups {
        let sub = universe.restrict(&group.entries);
        state.cover(&ordered(&sub, options), t)?;
    }
    state.finish(t, sample_mode(universe.mode()))
}

/// `n` complete valid configurations, each the first model found under its
/// own shuffled branching order. Duplicates are possible.
pub fn random_sample(model: &FeatureModel, n: usize, seed: u64) -> Result<Sample> {
    let mut ctx = SatContext::new(model);
    if !ctx.is_satisfiable()? {
        return Err(Error::UnsatisfiableModel);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let empty = Configuration::new();
    let configurations = (0..n)
        .map(|_| ctx.extend_to_complete(&empty, rng.gen()))
        .collect::<Result<Vec<_>>>()?;
    Ok(Sample::new(model, 1, SampleMode::Random, configurations))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Expr;
    use crate::logic::{complete, Literal};
    use crate::transform::{preprocess, to_pc, Grouping, RawCondition};

    fn tftp() -> FeatureModel {
        FeatureModel::unconstrained(["T", "G", "P", "D", "B"]).unwrap()
    }

    fn pc(model: &FeatureModel, text: &str) -> PresenceCondition {
        to_pc(&Expr::parse(text).unwrap(), model, DEFAULT_CLAUSE_CAP).unwrap()
    }

    #[test]
    fn cursor_enumerates_multisets_in_order() {
        let mut c = InteractionCursor::multisets(3, 2);
        let mut all = Vec::new();
        while let Some(x) = c.advance() {
            all.push(x.to_vec());
        }
        assert_eq!(
            all,
            vec![
                vec![0, 0],
                vec![0, 1],
                vec![0, 2],
                vec![1, 1],
                vec![1, 2],
                vec![2, 2]
            ]
        );
        assert_eq!(InteractionCursor::total(3, 2, true), 6);
    }

    #[test]
    fn cursor_counts_match_binomials() {
        for k in 0..7 {
            for t in 1..4 {
                for rep in [true, false] {
                    let mut c = InteractionCursor::new(k, t, rep);
                    let mut n = 0u128;
                    let mut prev: Option<Vec<usize>> = None;
                    while let Some(x) = c.advance() {
                        if let Some(p) = &prev {
                            assert!(p.as_slice() < x);
                        }
                        prev = Some(x.to_vec());
                        n += 1;
                    }
                    assert_eq!(
                        n,
                        InteractionCursor::total(k, t, rep),
                        "k={k} t={t} rep={rep}"
                    );
                }
            }
        }
        assert_eq!(binomial(10, 3), 120);
        assert_eq!(binomial(3, 5), 0);
    }

    #[test]
    fn grouping_shrinks_interaction_count() {
        // k entries in g equal groups: C(k+1,2) -> g * C(k/g+1,2) at t = 2
        let (k, g) = (12usize, 3usize);
        let whole = InteractionCursor::total(k, 2, true);
        let grouped = g as u128 * InteractionCursor::total(k / g, 2, true);
        assert_eq!(whole, binomial(k as u128 + 1, 2));
        assert_eq!(grouped, 3 * binomial(5, 2));
        assert!(grouped < whole);
    }

    #[test]
    fn single_entry_t1() {
        let m = tftp();
        let u = PcUniverse::from_entries(vec![pc(&m, "G && !T")], UniverseMode::Pc);
        let s = sample(&u, &m, 1, &SamplerOptions::default()).unwrap();
        assert_eq!(s.len(), 1);
        assert!(active(&u.entries()[0], &s.configurations[0]));
        assert!(complete(&s.configurations[0], &m));
    }

    #[test]
    fn mutually_exclusive_entries() {
        // A, B, C pairwise exclusive: only self-pairs are satisfiable
        let m = FeatureModel::new(
            ["A", "B", "C"],
            [
                Clause::new([Literal::from_dimacs(-1), Literal::from_dimacs(-2)]),
                Clause::new([Literal::from_dimacs(-1), Literal::from_dimacs(-3)]),
                Clause::new([Literal::from_dimacs(-2), Literal::from_dimacs(-3)]),
            ],
        )
        .unwrap();
        let u = PcUniverse::from_entries(
            vec![pc(&m, "A"), pc(&m, "B"), pc(&m, "C")],
            UniverseMode::Pc,
        );
        let s = sample(&u, &m, 2, &SamplerOptions::default()).unwrap();
        // brute force: each entry needs its own configuration, and 3 suffice
        assert_eq!(s.len(), 3);
        for e in u.entries() {
            assert!(s.configurations.iter().any(|c| active(e, c)));
        }
    }

    #[test]
    fn cap_is_enforced() {
        let m = tftp();
        let u = preprocess(&[], &m, UniverseMode::Fm, Grouping::None).unwrap();
        let opts = SamplerOptions {
            interaction_cap: 10,
            ..SamplerOptions::default()
        };
        assert!(matches!(
            sample(&u, &m, 2, &opts),
            Err(Error::InteractionCap { count: 55, cap: 10 })
        ));
    }

    #[test]
    fn unsatisfiable_model_is_rejected() {
        let m = FeatureModel::new(
            ["A"],
            [
                Clause::new([Literal::from_dimacs(1)]),
                Clause::new([Literal::from_dimacs(-1)]),
            ],
        )
        .unwrap();
        let u = PcUniverse::from_entries(vec![pc(&m, "A")], UniverseMode::Pc);
        assert!(matches!(
            sample(&u, &m, 1, &SamplerOptions::default()),
            Err(Error::UnsatisfiableModel)
        ));
        assert!(matches!(
            random_sample(&m, 3, 0),
            Err(Error::UnsatisfiableModel)
        ));
    }

    #[test]
    fn random_sample_properties() {
        let m = tftp();
        assert!(random_sample(&m, 0, 1).unwrap().is_empty());
        let s = random_sample(&m, 1000, 9).unwrap();
        assert_eq!(s.len(), 1000);
        assert!(s.configurations.iter().all(|c| complete(c, &m)));
        assert_eq!(s, random_sample(&m, 1000, 9).unwrap());

        // P=1 TD=2 BB=3 with ¬P ∨ TD, ¬TD ∨ BB
        let bb = FeatureModel::new(
            ["P", "TD", "BB"],
            [
                Clause::new([Literal::from_dimacs(-1), Literal::from_dimacs(2)]),
                Clause::new([Literal::from_dimacs(-2), Literal::from_dimacs(3)]),
            ],
        )
        .unwrap();
        let s = random_sample(&bb, 200, 4).unwrap();
        let with_p: Vec<_> = s
            .configurations
            .iter()
            .filter(|c| c.contains(Literal::from_dimacs(1)))
            .collect();
        assert!(!with_p.is_empty());
        for c in with_p {
            assert!(c.contains(Literal::from_dimacs(2)) && c.contains(Literal::from_dimacs(3)));
        }
    }

    #[test]
    fn grouped_single_group_equals_plain() {
        let m = tftp();
        let raws: Vec<RawCondition> = ["G || P", "(G || P) && T", "T && !D"]
            .iter()
            .map(|t| RawCondition {
                formula: Expr::parse(t).unwrap(),
                origin: Some(crate::logic::Origin {
                    path: "a.c".into(),
                    first_line: 1,
                    last_line: 1,
                }),
            })
            .collect();
        let grouped = preprocess(&raws, &m, UniverseMode::Pc, Grouping::File).unwrap();
        let plain = preprocess(&raws, &m, UniverseMode::Pc, Grouping::None).unwrap();
        let opts = SamplerOptions::default();
        assert_eq!(
            sample_grouped(&grouped, &m, 2, &opts).unwrap(),
            sample(&plain, &m, 2, &opts).unwrap()
        );
    }

    #[test]
    fn shuffled_order_is_seeded() {
        let m = tftp();
        let u = preprocess(&[], &m, UniverseMode::Fm, Grouping::None).unwrap();
        let opts = SamplerOptions {
            seed: 5,
            shuffle_universe: true,
            ..SamplerOptions::default()
        };
        let a = sample(&u, &m, 2, &opts).unwrap();
        assert_eq!(a, sample(&u, &m, 2, &opts).unwrap());
    }
}
