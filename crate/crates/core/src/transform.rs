//! DNF algebra (complement, conjunction, simplification) and the
//! preprocessing pipeline that turns raw presence conditions into the
//! sampling universe.

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::logic::{Clause, FeatureModel, Literal, Origin, PcKind, PresenceCondition};

/// Default bound on intermediate clause counts during distribution.
pub const DEFAULT_CLAUSE_CAP: usize = 1_000_000;

fn origin_label(pc: &PresenceCondition) -> String {
    pc.origin()
        .map(|o| o.to_string())
        .unwrap_or_else(|| "<anonymous presence condition>".to_string())
}

/// Drops contradictory and subsumed clauses and canonicalizes.
pub fn simplify(pc: &PresenceCondition) -> PresenceCondition {
    simplify_clauses(pc.clauses().to_vec()).with_origin(pc.origin().cloned())
}

fn simplify_clauses(mut clauses: Vec<Clause>) -> PresenceCondition {
    clauses.retain(|c| !c.is_contradictory());
    if clauses.iter().any(Clause::is_empty) {
        return PresenceCondition::tautology();
    }
    clauses.sort_unstable_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    clauses.dedup();
    let mut kept: Vec<Clause> = Vec::with_capacity(clauses.len());
    for clause in clauses {
        if !kept.iter().any(|k| k.is_subset_of(&clause)) {
            kept.push(clause);
        }
    }
    kept.sort_unstable();
    PresenceCondition::from_raw(kept)
}

/// Complement of a DNF as a DNF (De Morgan, then distribution).
pub fn negate(pc: &PresenceCondition) -> Result<PresenceCondition> {
    negate_capped(pc, DEFAULT_CLAUSE_CAP)
}

pub fn negate_capped(pc: &PresenceCondition, cap: usize) -> Result<PresenceCondition> {
    // each DNF clause becomes a CNF clause of complemented literals
    let mut current: Vec<Clause> = vec![Clause::default()];
    for conj in pc.clauses() {
        let product = current.len().saturating_mul(conj.len());
        if product > cap {
            return Err(Error::BlowUp {
                origin: origin_label(pc),
                cap,
            });
        }
        let mut next = Vec::with_capacity(product);
        for partial in &current {
            for &lit in conj.literals() {
                let neg = lit.complement();
                if partial.contains(lit) {
                    continue;
                }
                next.push(partial.union(&Clause::new([neg])));
            }
        }
        current = simplify_clauses(next).clauses().to_vec();
        if current.is_empty() {
            break;
        }
    }
    Ok(PresenceCondition::from_raw(current).with_origin(pc.origin().cloned()))
}

/// DNF of the conjunction of all operands. An empty list is the tautology.
pub fn conjoin(pcs: &[PresenceCondition]) -> Result<PresenceCondition> {
    conjoin_capped(pcs, DEFAULT_CLAUSE_CAP)
}

pub fn conjoin_capped(pcs: &[PresenceCondition], cap: usize) -> Result<PresenceCondition> {
    let mut current: Vec<Clause> = vec![Clause::default()];
    for pc in pcs {
        let product = current.len().saturating_mul(pc.clauses().len());
        if product > cap {
            return Err(Error::BlowUp {
                origin: origin_label(pc),
                cap,
            });
        }
        let mut next = Vec::with_capacity(product);
        for a in &current {
            for b in pc.clauses() {
                let merged = a.union(b);
                if !merged.is_contradictory() {
                    next.push(merged);
                }
            }
        }
        current = simplify_clauses(next).clauses().to_vec();
        if current.is_empty() {
            break;
        }
    }
    Ok(PresenceCondition::from_raw(current))
}

/// DNF of the disjunction of all operands.
pub fn disjoin_capped(pcs: &[PresenceCondition], cap: usize) -> Result<PresenceCondition> {
    let total: usize = pcs.iter().map(|p| p.clauses().len()).sum();
    if total > cap {
        return Err(Error::BlowUp {
            origin: "<disjunction>".into(),
            cap,
        });
    }
    Ok(simplify_clauses(
        pcs.iter()
            .flat_map(|p| p.clauses().iter().cloned())
            .collect(),
    ))
}

const FINGERPRINT_WORDS: usize = 4;

/// Truth values of a DNF under 256 fixed pseudo-random assignments. Equal
/// fingerprints are necessary for equivalence.
type Fingerprint = [u64; FINGERPRINT_WORDS];

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn literal_word(lit: Literal, word: usize) -> u64 {
    let bits = splitmix64(u64::from(lit.feature().index()) << 8 | word as u64);
    if lit.is_positive() {
        bits
    } else {
        !bits
    }
}

fn fingerprint(pc: &PresenceCondition) -> Fingerprint {
    let mut out = [0u64; FINGERPRINT_WORDS];
    for (w, slot) in out.iter_mut().enumerate() {
        for clause in pc.clauses() {
            *slot |= clause
                .literals()
                .iter()
                .fold(u64::MAX, |acc, &l| acc & literal_word(l, w));
        }
    }
    out
}

/// Propositional equivalence: identical canonical forms, or both
/// `a ∧ ¬b` and `b ∧ ¬a` unsatisfiable.
pub fn equivalent(a: &PresenceCondition, b: &PresenceCondition) -> Result<bool> {
    if a == b {
        return Ok(true);
    }
    if fingerprint(a) != fingerprint(b) {
        return Ok(false);
    }
    equivalent_with_complements(a, &negate(a)?, b, &negate(b)?)
}

fn equivalent_with_complements(
    a: &PresenceCondition,
    not_a: &PresenceCondition,
    b: &PresenceCondition,
    not_b: &PresenceCondition,
) -> Result<bool> {
    // a DNF is satisfiable iff it keeps a non-contradictory clause
    Ok(conjoin(&[a.clone(), not_b.clone()])?.is_contradiction()
        && conjoin(&[b.clone(), not_a.clone()])?.is_contradiction())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum UniverseMode {
    /// Extracted presence conditions and their complements.
    Pc,
    /// Every literal of the model (classic t-wise interaction sampling).
    Fm,
    /// Literals of the features that occur in some presence condition.
    Concrete,
}

impl UniverseMode {
    pub fn as_str(self) -> &'static str {
        match self {
            UniverseMode::Pc => "pc",
            UniverseMode::Fm => "fm",
            UniverseMode::Concrete => "concrete",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Grouping {
    #[default]
    None,
    File,
    Folder,
}

impl Grouping {
    fn key(self, origin: Option<&Origin>) -> PathBuf {
        match (self, origin) {
            (Grouping::None, _) | (_, None) => PathBuf::new(),
            (Grouping::File, Some(o)) => o.path.clone(),
            (Grouping::Folder, Some(o)) => {
                o.path.parent().map(Path::to_path_buf).unwrap_or_default()
            }
        }
    }
}

/// A raw extracted condition with its source location.
#[derive(Clone, Debug)]
pub struct RawCondition {
    pub formula: Expr,
    pub origin: Option<Origin>,
}

#[derive(Clone, Debug)]
pub struct UniverseGroup {
    pub key: PathBuf,
    pub entries: Vec<usize>,
}

/// The deduplicated list of presence conditions that sampling iterates over.
#[derive(Clone, Debug)]
pub struct PcUniverse {
    entries: Vec<PresenceCondition>,
    mode: UniverseMode,
    groups: Option<Vec<UniverseGroup>>,
}

impl PcUniverse {
    /// A universe taken as-is (no deduplication), for callers that already
    /// hold a preprocessed list.
    pub fn from_entries(entries: Vec<PresenceCondition>, mode: UniverseMode) -> Self {
        PcUniverse {
            entries,
            mode,
            groups: None,
        }
    }

    pub fn entries(&self) -> &[PresenceCondition] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn mode(&self) -> UniverseMode {
        self.mode
    }

    pub fn groups(&self) -> Option<&[UniverseGroup]> {
        self.groups.as_deref()
    }

    pub fn with_groups(mut self, groups: Vec<UniverseGroup>) -> Self {
        self.groups = Some(groups);
        self
    }

    /// The sub-universe of one group.
    pub fn restrict(&self, indices: &[usize]) -> PcUniverse {
        PcUniverse {
            entries: indices.iter().map(|&i| self.entries[i].clone()).collect(),
            mode: self.mode,
            groups: None,
        }
    }
}

/// Keeps one representative per equivalence class, in insertion order.
struct Deduper {
    entries: Vec<PresenceCondition>,
    complements: Vec<PresenceCondition>,
    by_form: HashMap<PresenceCondition, usize>,
    by_fingerprint: HashMap<Fingerprint, Vec<usize>>,
    cap: usize,
}

impl Deduper {
    fn new(cap: usize) -> Self {
        Deduper {
            entries: Vec::new(),
            complements: Vec::new(),
            by_form: HashMap::new(),
            by_fingerprint: HashMap::new(),
            cap,
        }
    }

    fn find(
        &self,
        pc: &PresenceCondition,
        complement: &PresenceCondition,
    ) -> Result<Option<usize>> {
        if let Some(&i) = self.by_form.get(pc) {
            return Ok(Some(i));
        }
        if let Some(candidates) = self.by_fingerprint.get(&fingerprint(pc)) {
            for &i in candidates {
                if equivalent_with_complements(
                    pc,
                    complement,
                    &self.entries[i],
                    &self.complements[i],
                )? {
                    return Ok(Some(i));
                }
            }
        }
        Ok(None)
    }

    /// Returns the representative index of `pc`.
    fn insert(
        &mut self,
        pc: PresenceCondition,
        complement: Option<PresenceCondition>,
    ) -> Result<usize> {
        let complement = match complement {
            Some(c) => c,
            None => negate_capped(&pc, self.cap)?,
        };
        if let Some(i) = self.find(&pc, &complement)? {
            return Ok(i);
        }
        let i = self.entries.len();
        self.by_form.insert(pc.clone(), i);
        self.by_fingerprint
            .entry(fingerprint(&pc))
            .or_default()
            .push(i);
        self.entries.push(pc);
        self.complements.push(complement);
        Ok(i)
    }
}

/// Replaces every top-level conjunct that mentions a feature unknown to the
/// model by `true`. Returns the filtered formula and the unknown names.
pub fn filter_unknown(formula: &Expr, model: &FeatureModel) -> (Expr, Vec<String>) {
    let mut unknown = Vec::new();
    let kept: Vec<Expr> = formula
        .conjuncts()
        .iter()
        .filter(|conj| {
            let missing: Vec<&str> = conj
                .atoms()
                .into_iter()
                .filter(|a| model.feature(a).is_none())
                .collect();
            for m in &missing {
                if !unknown.iter().any(|u: &String| u == m) {
                    unknown.push(m.to_string());
                }
            }
            missing.is_empty()
        })
        .cloned()
        .collect();
    (Expr::and(kept), unknown)
}

/// Converts a formula over model feature names to a simplified DNF.
pub fn to_pc(formula: &Expr, model: &FeatureModel, cap: usize) -> Result<PresenceCondition> {
    let resolve = |name: &str| model.feature(name);
    formula.to_dnf(&resolve, cap)
}

/// Builds the sampling universe from raw conditions.
///
/// In `Pc` mode: converts to DNF, drops tautologies and contradictions,
/// keeps the first of every equivalence class, then appends the complements
/// of the kept conditions in the same order (again deduplicated). With a
/// grouping, each group lists the universe indices of its own conditions
/// followed by their complements; groups may share entries.
pub fn preprocess(
    raw: &[RawCondition],
    model: &FeatureModel,
    mode: UniverseMode,
    grouping: Grouping,
) -> Result<PcUniverse> {
    preprocess_capped(raw, model, mode, grouping, DEFAULT_CLAUSE_CAP)
}

pub fn preprocess_capped(
    raw: &[RawCondition],
    model: &FeatureModel,
    mode: UniverseMode,
    grouping: Grouping,
    cap: usize,
) -> Result<PcUniverse> {
    match mode {
        UniverseMode::Fm => {
            let features: Vec<_> = model.features().collect();
            return Ok(PcUniverse::from_entries(literal_universe(&features), mode));
        }
        UniverseMode::Concrete => {
            let mut features = Vec::new();
            for r in raw {
                for atom in r.formula.atoms() {
                    if let Some(f) = model.feature(atom) {
                        features.push(f);
                    }
                }
            }
            features.sort_unstable();
            features.dedup();
            return Ok(PcUniverse::from_entries(literal_universe(&features), mode));
        }
        UniverseMode::Pc => {}
    }

    // duplicate formulas are common (one record per source line)
    let mut first_seen: HashMap<&Expr, usize> = HashMap::new();
    let mut distinct: Vec<&RawCondition> = Vec::new();
    let mut group_of_raw: Vec<(PathBuf, usize)> = Vec::new();
    for r in raw {
        let idx = *first_seen.entry(&r.formula).or_insert_with(|| {
            distinct.push(r);
            distinct.len() - 1
        });
        group_of_raw.push((grouping.key(r.origin.as_ref()), idx));
    }

    let converted: Vec<(PresenceCondition, PresenceCondition)> = distinct
        .par_iter()
        .map(|r| {
            let pc = to_pc(&r.formula, model, cap)?.with_origin(r.origin.clone());
            let pc = simplify(&pc);
            let complement = negate_capped(&pc, cap)?;
            Ok((pc, complement))
        })
        .collect::<Result<_>>()?;

    let mut dedup = Deduper::new(cap);
    // representative of each distinct formula, None for constants
    let mut rep: Vec<Option<usize>> = Vec::with_capacity(converted.len());
    let mut originals: Vec<usize> = Vec::new();
    let mut kept: HashSet<usize> = HashSet::new();
    for (pc, complement) in &converted {
        if pc.kind() != PcKind::Proper {
            rep.push(None);
            continue;
        }
        let i = dedup.insert(pc.clone(), Some(complement.clone()))?;
        if kept.insert(i) {
            originals.push(i);
        }
        rep.push(Some(i));
    }
    let mut complement_of: HashMap<usize, usize> = HashMap::new();
    for &i in &originals {
        let complement = dedup.complements[i].clone();
        let back = dedup.entries[i].clone();
        let j = dedup.insert(complement, Some(back))?;
        complement_of.insert(i, j);
    }

    let entries = dedup.entries;
    let mut universe = PcUniverse::from_entries(entries, mode);

    if grouping != Grouping::None {
        let mut groups: Vec<UniverseGroup> = Vec::new();
        let mut group_index: HashMap<PathBuf, usize> = HashMap::new();
        let mut originals_per_group: Vec<Vec<usize>> = Vec::new();
        let mut seen_per_group: Vec<HashSet<usize>> = Vec::new();
        for (key, idx) in group_of_raw {
            let Some(i) = rep[idx] else { continue };
            let g = *group_index.entry(key.clone()).or_insert_with(|| {
                groups.push(UniverseGroup {
                    key,
                    entries: Vec::new(),
                });
                originals_per_group.push(Vec::new());
                seen_per_group.push(HashSet::new());
                groups.len() - 1
            });
            if seen_per_group[g].insert(i) {
                originals_per_group[g].push(i);
            }
        }
        for (group, originals) in groups.iter_mut().zip(&originals_per_group) {
            group.entries = originals.clone();
            let mut present: HashSet<usize> = originals.iter().copied().collect();
            for i in originals {
                let j = complement_of[i];
                if present.insert(j) {
                    group.entries.push(j);
                }
            }
        }
        universe = universe.with_groups(groups);
    }
    Ok(universe)
}

fn literal_universe(features: &[crate::logic::FeatureId]) -> Vec<PresenceCondition> {
    features
        .iter()
        .map(|&f| PresenceCondition::literal(Literal::positive(f)))
        .chain(
            features
                .iter()
                .map(|&f| PresenceCondition::literal(Literal::negative(f))),
        )
        .collect()
}
