//! Propositional foundation: features, literals, clauses, DNF presence
//! conditions, CNF feature models and (partial) configurations.
//!
//! Features are interned to dense 1-based indices when a model is built, and
//! every formula refers to features by index only. Literals pack the feature
//! index and polarity into one integer so that sorting a clause orders it by
//! `(feature index, polarity)` with the positive literal first.

use std::collections::HashMap;
use std::fmt;
use std::path::PathBuf;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Dense 1-based feature index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FeatureId(u32);

impl FeatureId {
    pub fn new(index: u32) -> Self {
        assert!(index > 0, "feature indices are 1-based");
        FeatureId(index)
    }

    pub fn index(self) -> u32 {
        self.0
    }

    /// Zero-based position, for indexing into per-feature vectors.
    pub fn slot(self) -> usize {
        self.0 as usize - 1
    }
}

impl fmt::Display for FeatureId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Literal(u32);

impl Literal {
    pub fn new(feature: FeatureId, positive: bool) -> Self {
        Literal(feature.0 << 1 | u32::from(!positive))
    }

    pub fn positive(feature: FeatureId) -> Self {
        Self::new(feature, true)
    }

    pub fn negative(feature: FeatureId) -> Self {
        Self::new(feature, false)
    }

    /// Builds a literal from a signed DIMACS-style integer.
    pub fn from_dimacs(value: i32) -> Self {
        assert!(value != 0, "0 is not a literal");
        Self::new(FeatureId::new(value.unsigned_abs()), value > 0)
    }

    pub fn to_dimacs(self) -> i32 {
        let index = self.feature().0 as i32;
        if self.is_positive() {
            index
        } else {
            -index
        }
    }

    pub fn feature(self) -> FeatureId {
        FeatureId(self.0 >> 1)
    }

    pub fn is_positive(self) -> bool {
        self.0 & 1 == 0
    }

    pub fn complement(self) -> Self {
        Literal(self.0 ^ 1)
    }

    pub(crate) fn code(self) -> u32 {
        self.0
    }
}

impl fmt::Debug for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_dimacs())
    }
}

/// A set of literals kept sorted by `(feature index, polarity)`.
///
/// Inside a presence condition a clause is a conjunction; inside a feature
/// model it is a disjunction. The empty clause only appears as the single
/// clause of a tautological presence condition (or as an unsatisfiable model
/// dependency).
#[derive(Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Clause(Vec<Literal>);

impl Clause {
    pub fn new(literals: impl IntoIterator<Item = Literal>) -> Self {
        let mut literals: Vec<Literal> = literals.into_iter().collect();
        literals.sort_unstable();
        literals.dedup();
        Clause(literals)
    }

    pub fn literals(&self) -> &[Literal] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, literal: Literal) -> bool {
        self.0.binary_search(&literal).is_ok()
    }

    /// True when the clause holds both a literal and its complement.
    pub fn is_contradictory(&self) -> bool {
        // complementary literals are adjacent after sorting
        self.0
            .windows(2)
            .any(|pair| pair[0].feature() == pair[1].feature())
    }

    pub fn is_subset_of(&self, other: &Clause) -> bool {
        if self.0.len() > other.0.len() {
            return false;
        }
        let mut rest = other.0.iter();
        'outer: for lit in &self.0 {
            for candidate in rest.by_ref() {
                if candidate == lit {
                    continue 'outer;
                }
                if candidate > lit {
                    return false;
                }
            }
            return false;
        }
        true
    }

    pub fn union(&self, other: &Clause) -> Clause {
        let mut merged = Vec::with_capacity(self.0.len() + other.0.len());
        let (mut i, mut j) = (0, 0);
        while i < self.0.len() && j < other.0.len() {
            match self.0[i].cmp(&other.0[j]) {
                std::cmp::Ordering::Less => {
                    merged.push(self.0[i]);
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    merged.push(other.0[j]);
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    merged.push(self.0[i]);
                    i += 1;
                    j += 1;
                }
            }
        }
        merged.extend_from_slice(&self.0[i..]);
        merged.extend_from_slice(&other.0[j..]);
        Clause(merged)
    }

    pub fn max_feature(&self) -> Option<FeatureId> {
        self.0.iter().map(|l| l.feature()).max()
    }
}

impl fmt::Debug for Clause {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(&self.0).finish()
    }
}

impl FromIterator<Literal> for Clause {
    fn from_iter<I: IntoIterator<Item = Literal>>(iter: I) -> Self {
        Clause::new(iter)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PcKind {
    Tautology,
    Contradiction,
    Proper,
}

/// Where a presence condition came from: a file and a line range.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Origin {
    pub path: PathBuf,
    pub first_line: usize,
    pub last_line: usize,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.first_line == self.last_line {
            write!(f, "{}:{}", self.path.display(), self.first_line)
        } else {
            write!(
                f,
                "{}:{}-{}",
                self.path.display(),
                self.first_line,
                self.last_line
            )
        }
    }
}

/// A presence condition in disjunctive normal form.
///
/// The constants are encoded by clause shape: no clauses is the
/// contradiction, a single empty clause is the tautology. Equality compares
/// clauses only; the origin is informational.
#[derive(Clone, Default)]
pub struct PresenceCondition {
    clauses: Vec<Clause>,
    origin: Option<Origin>,
}

impl PresenceCondition {
    /// Builds a canonical DNF from arbitrary clauses (sorted, deduplicated,
    /// collapsed to the tautology if an empty clause is present).
    pub fn new(clauses: impl IntoIterator<Item = Clause>) -> Self {
        canonicalize(&PresenceCondition {
            clauses: clauses.into_iter().collect(),
            origin: None,
        })
    }

    pub fn tautology() -> Self {
        PresenceCondition {
            clauses: vec![Clause::default()],
            origin: None,
        }
    }

    pub fn contradiction() -> Self {
        PresenceCondition::default()
    }

    pub fn literal(literal: Literal) -> Self {
        PresenceCondition {
            clauses: vec![Clause(vec![literal])],
            origin: None,
        }
    }

    pub fn clauses(&self) -> &[Clause] {
        &self.clauses
    }

    pub fn kind(&self) -> PcKind {
        if self.clauses.is_empty() {
            PcKind::Contradiction
        } else if self.clauses.iter().any(Clause::is_empty) {
            PcKind::Tautology
        } else {
            PcKind::Proper
        }
    }

    pub fn is_tautology(&self) -> bool {
        self.kind() == PcKind::Tautology
    }

    pub fn is_contradiction(&self) -> bool {
        self.kind() == PcKind::Contradiction
    }

    pub fn origin(&self) -> Option<&Origin> {
        self.origin.as_ref()
    }

    pub fn with_origin(mut self, origin: Option<Origin>) -> Self {
        self.origin = origin;
        self
    }

    /// Length of the shortest clause (the interaction degree of a fault).
    pub fn min_clause_len(&self) -> Option<usize> {
        self.clauses.iter().map(Clause::len).min()
    }

    pub fn features(&self) -> Vec<FeatureId> {
        let mut features: Vec<FeatureId> = self
            .clauses
            .iter()
            .flat_map(|c| c.literals().iter().map(|l| l.feature()))
            .collect();
        features.sort_unstable();
        features.dedup();
        features
    }

    pub fn max_feature(&self) -> Option<FeatureId> {
        self.clauses.iter().filter_map(Clause::max_feature).max()
    }

    /// Evaluates the DNF under a complete assignment (`assignment[slot]`).
    pub fn eval(&self, assignment: &[bool]) -> bool {
        self.clauses.iter().any(|clause| {
            clause
                .literals()
                .iter()
                .all(|l| assignment[l.feature().slot()] == l.is_positive())
        })
    }

    /// Renders the condition in the `!`/`&&`/`||` formula grammar.
    pub fn display<'a>(&'a self, model: &'a FeatureModel) -> impl fmt::Display + 'a {
        DisplayPc { pc: self, model }
    }

    pub(crate) fn from_raw(clauses: Vec<Clause>) -> Self {
        PresenceCondition {
            clauses,
            origin: None,
        }
    }
}

impl PartialEq for PresenceCondition {
    fn eq(&self, other: &Self) -> bool {
        self.clauses == other.clauses
    }
}

impl Eq for PresenceCondition {}

impl std::hash::Hash for PresenceCondition {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.clauses.hash(state);
    }
}

impl fmt::Debug for PresenceCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind() {
            PcKind::Tautology => f.write_str("true"),
            PcKind::Contradiction => f.write_str("false"),
            PcKind::Proper => f.debug_list().entries(&self.clauses).finish(),
        }
    }
}

struct DisplayPc<'a> {
    pc: &'a PresenceCondition,
    model: &'a FeatureModel,
}

impl fmt::Display for DisplayPc<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.pc.kind() {
            PcKind::Tautology => return f.write_str("1"),
            PcKind::Contradiction => return f.write_str("0"),
            PcKind::Proper => {}
        }
        let several = self.pc.clauses.len() > 1;
        for (i, clause) in self.pc.clauses.iter().enumerate() {
            if i > 0 {
                f.write_str(" || ")?;
            }
            let paren = several && clause.len() > 1;
            if paren {
                f.write_str("(")?;
            }
            for (j, lit) in clause.literals().iter().enumerate() {
                if j > 0 {
                    f.write_str(" && ")?;
                }
                if !lit.is_positive() {
                    f.write_str("!")?;
                }
                f.write_str(self.model.name(lit.feature()))?;
            }
            if paren {
                f.write_str(")")?;
            }
        }
        Ok(())
    }
}

/// Sorts clauses, merges duplicates and collapses to the tautology when an
/// empty clause is present. Contradictory clauses are kept (see
/// [`crate::transform::simplify`]).
pub fn canonicalize(pc: &PresenceCondition) -> PresenceCondition {
    if pc.clauses.iter().any(Clause::is_empty) {
        return PresenceCondition::tautology().with_origin(pc.origin.clone());
    }
    let mut clauses = pc.clauses.clone();
    clauses.sort_unstable();
    clauses.dedup();
    PresenceCondition {
        clauses,
        origin: pc.origin.clone(),
    }
}

/// Checks that a feature name fits the formula grammar.
pub fn validate_feature_name(name: &str) -> Result<()> {
    let bad = name.is_empty()
        || name == "0"
        || name == "1"
        || name
            .chars()
            .any(|c| c.is_whitespace() || matches!(c, '!' | '&' | '|' | '(' | ')'));
    if bad {
        Err(Error::InvalidFeatureName(name.to_string()))
    } else {
        Ok(())
    }
}

/// Features plus CNF dependencies.
#[derive(Clone, Debug, Default)]
pub struct FeatureModel {
    names: Vec<String>,
    lookup: HashMap<String, FeatureId>,
    dependencies: Vec<Clause>,
}

impl FeatureModel {
    pub fn new(
        names: impl IntoIterator<Item = impl Into<String>>,
        dependencies: impl IntoIterator<Item = Clause>,
    ) -> Result<Self> {
        let mut model = FeatureModel::default();
        for name in names {
            model.add_feature(name.into())?;
        }
        for clause in dependencies {
            model.add_dependency(clause)?;
        }
        Ok(model)
    }

    /// A model without dependencies.
    pub fn unconstrained(names: impl IntoIterator<Item = impl Into<String>>) -> Result<Self> {
        Self::new(names, std::iter::empty())
    }

    pub fn add_feature(&mut self, name: String) -> Result<FeatureId> {
        validate_feature_name(&name)?;
        if self.lookup.contains_key(&name) {
            return Err(Error::DuplicateFeature(name));
        }
        let id = FeatureId::new(self.names.len() as u32 + 1);
        self.lookup.insert(name.clone(), id);
        self.names.push(name);
        Ok(id)
    }

    pub fn add_dependency(&mut self, clause: Clause) -> Result<()> {
        self.check_clause(&clause)?;
        self.dependencies.push(clause);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn features(&self) -> impl ExactSizeIterator<Item = FeatureId> {
        (0..self.names.len() as u32).map(|i| FeatureId(i + 1))
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn name(&self, feature: FeatureId) -> &str {
        &self.names[feature.slot()]
    }

    pub fn feature(&self, name: &str) -> Option<FeatureId> {
        self.lookup.get(name).copied()
    }

    pub fn dependencies(&self) -> &[Clause] {
        &self.dependencies
    }

    pub fn check_feature(&self, feature: FeatureId) -> Result<()> {
        if feature.slot() < self.names.len() {
            Ok(())
        } else {
            Err(Error::FeatureOutOfRange {
                index: feature.0,
                count: self.names.len(),
            })
        }
    }

    pub fn check_clause(&self, clause: &Clause) -> Result<()> {
        match clause.max_feature() {
            Some(f) => self.check_feature(f),
            None => Ok(()),
        }
    }

    pub fn check_pc(&self, pc: &PresenceCondition) -> Result<()> {
        match pc.max_feature() {
            Some(f) => self.check_feature(f),
            None => Ok(()),
        }
    }

    /// SHA-256 over feature names and dependency clauses, hex encoded.
    pub fn checksum(&self) -> String {
        let mut hasher = Sha256::new();
        for name in &self.names {
            hasher.update(name.as_bytes());
            hasher.update([0u8]);
        }
        for clause in &self.dependencies {
            for lit in clause.literals() {
                hasher.update(lit.to_dimacs().to_le_bytes());
            }
            hasher.update(0i32.to_le_bytes());
        }
        hex::encode(hasher.finalize())
    }

    /// True when the complete assignment satisfies every dependency.
    pub fn satisfied_by(&self, assignment: &[bool]) -> bool {
        self.dependencies.iter().all(|clause| {
            clause
                .literals()
                .iter()
                .any(|l| assignment[l.feature().slot()] == l.is_positive())
        })
    }
}

/// A consistent set of literals, stored as a per-feature assignment.
#[derive(Clone, Default)]
pub struct Configuration {
    values: Vec<Option<bool>>,
    assigned: usize,
}

impl Configuration {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_literals(literals: impl IntoIterator<Item = Literal>) -> Result<Self> {
        let mut config = Configuration::new();
        for lit in literals {
            config.insert(lit)?;
        }
        Ok(config)
    }

    /// A complete configuration from a full assignment (`assignment[slot]`).
    pub fn from_assignment(assignment: &[bool]) -> Self {
        Configuration {
            values: assignment.iter().map(|&v| Some(v)).collect(),
            assigned: assignment.len(),
        }
    }

    pub fn value(&self, feature: FeatureId) -> Option<bool> {
        self.values.get(feature.slot()).copied().flatten()
    }

    pub fn contains(&self, literal: Literal) -> bool {
        self.value(literal.feature()) == Some(literal.is_positive())
    }

    /// Adds a literal; rejects it when its complement is present.
    pub fn insert(&mut self, literal: Literal) -> Result<()> {
        let slot = literal.feature().slot();
        if slot >= self.values.len() {
            self.values.resize(slot + 1, None);
        }
        match self.values[slot] {
            Some(v) if v == literal.is_positive() => Ok(()),
            Some(_) => Err(Error::Inconsistent(literal.feature())),
            None => {
                self.values[slot] = Some(literal.is_positive());
                self.assigned += 1;
                Ok(())
            }
        }
    }

    /// True when adding the clause's literals keeps the configuration
    /// consistent.
    pub fn compatible_with(&self, clause: &Clause) -> bool {
        clause
            .literals()
            .iter()
            .all(|&l| self.value(l.feature()) != Some(!l.is_positive()))
    }

    /// Adds every literal of a compatible clause.
    pub fn extend_with(&mut self, clause: &Clause) -> Result<()> {
        if !self.compatible_with(clause) {
            let bad = clause
                .literals()
                .iter()
                .find(|l| self.contains(l.complement()))
                .expect("incompatible clause has a conflicting literal");
            return Err(Error::Inconsistent(bad.feature()));
        }
        for &lit in clause.literals() {
            self.insert(lit)?;
        }
        Ok(())
    }

    pub fn covers(&self, clause: &Clause) -> bool {
        clause.literals().iter().all(|&l| self.contains(l))
    }

    /// Number of assigned features.
    pub fn len(&self) -> usize {
        self.assigned
    }

    pub fn is_empty(&self) -> bool {
        self.assigned == 0
    }

    pub fn literals(&self) -> impl Iterator<Item = Literal> + '_ {
        self.values.iter().enumerate().filter_map(|(slot, v)| {
            v.map(|positive| Literal::new(FeatureId(slot as u32 + 1), positive))
        })
    }

    pub fn to_clause(&self) -> Clause {
        Clause(self.literals().collect())
    }

    /// Full assignment vector, if the configuration is complete for `model`.
    pub fn assignment(&self, model: &FeatureModel) -> Option<Vec<bool>> {
        model.features().map(|f| self.value(f)).collect()
    }

    pub fn display<'a>(&'a self, model: &'a FeatureModel) -> impl fmt::Display + 'a {
        DisplayConfig {
            config: self,
            model,
        }
    }
}

impl PartialEq for Configuration {
    fn eq(&self, other: &Self) -> bool {
        self.assigned == other.assigned && self.literals().eq(other.literals())
    }
}

impl Eq for Configuration {}

impl std::hash::Hash for Configuration {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        for lit in self.literals() {
            lit.hash(state);
        }
    }
}

impl fmt::Debug for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.literals()).finish()
    }
}

struct DisplayConfig<'a> {
    config: &'a Configuration,
    model: &'a FeatureModel,
}

impl fmt::Display for DisplayConfig<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, lit) in self.config.literals().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            if !lit.is_positive() {
                f.write_str("!")?;
            }
            f.write_str(self.model.name(lit.feature()))?;
        }
        f.write_str("}")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SampleMode {
    Pc,
    Fm,
    Concrete,
    Random,
}

impl SampleMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SampleMode::Pc => "pc",
            SampleMode::Fm => "fm",
            SampleMode::Concrete => "concrete",
            SampleMode::Random => "random",
        }
    }
}

/// An ordered list of configurations plus provenance.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sample {
    pub model_hash: String,
    pub t: usize,
    pub mode: SampleMode,
    pub configurations: Vec<Configuration>,
}

impl Sample {
    pub fn new(
        model: &FeatureModel,
        t: usize,
        mode: SampleMode,
        configurations: Vec<Configuration>,
    ) -> Self {
        Sample {
            model_hash: model.checksum(),
            t,
            mode,
            configurations,
        }
    }

    pub fn len(&self) -> usize {
        self.configurations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.configurations.is_empty()
    }
}

/// True iff some clause of `pc` is contained in `config`. On partial
/// configurations this means "definitely active".
pub fn active(pc: &PresenceCondition, config: &Configuration) -> bool {
    pc.clauses.iter().any(|clause| config.covers(clause))
}

/// [`active`] with a range check of the condition against the model.
pub fn active_checked(
    model: &FeatureModel,
    pc: &PresenceCondition,
    config: &Configuration,
) -> Result<bool> {
    model.check_pc(pc)?;
    Ok(active(pc, config))
}

pub fn complete(config: &Configuration, model: &FeatureModel) -> bool {
    config.len() == model.len() && model.features().all(|f| config.value(f).is_some())
}
