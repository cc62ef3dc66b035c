//! Satisfiability backend for validity queries against a feature model.
//!
//! A small CDCL solver (two watched literals, first-UIP learning, Luby
//! restarts) with assumption literals. Branching follows a static variable
//! order with fixed phases, so a seeded order and phase vector yields a
//! reproducible first model; that is what configuration completion and the
//! random baseline rely on.

use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::logic::{Configuration, FeatureModel, Literal};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

const UNDEF: u8 = 2;
const LEARNT_LIMIT: usize = 20_000;

#[inline]
fn var(lit: u32) -> usize {
    (lit >> 1) as usize
}

#[inline]
fn to_solver(lit: Literal) -> u32 {
    lit.code() - 2
}

#[derive(Clone)]
struct Solver {
    num_vars: usize,
    ok: bool,
    clauses: Vec<Vec<u32>>,
    num_original: usize,
    watches: Vec<Vec<u32>>,
    assigns: Vec<u8>,
    level: Vec<u32>,
    reason: Vec<Option<u32>>,
    trail: Vec<u32>,
    trail_lim: Vec<usize>,
    qhead: usize,
    seen: Vec<bool>,
    order: Vec<u32>,
    order_pos: Vec<usize>,
    next_decision: usize,
    phase: Vec<bool>,
}

enum Outcome {
    Sat(Vec<bool>),
    Unsat,
}

impl Solver {
    fn new(model: &FeatureModel) -> Self {
        let n = model.len();
        let mut solver = Solver {
            num_vars: n,
            ok: true,
            clauses: Vec::new(),
            num_original: 0,
            watches: vec![Vec::new(); 2 * n],
            assigns: vec![UNDEF; n],
            level: vec![0; n],
            reason: vec![None; n],
            trail: Vec::new(),
            trail_lim: Vec::new(),
            qhead: 0,
            seen: vec![false; n],
            order: (0..n as u32).collect(),
            order_pos: (0..n).collect(),
            next_decision: 0,
            phase: vec![false; n],
        };
        for clause in model.dependencies() {
            if clause.is_contradictory() {
                // contains l and ¬l as a disjunction: always satisfied
                continue;
            }
            let lits: Vec<u32> = clause.literals().iter().map(|&l| to_solver(l)).collect();
            solver.add_original(lits);
        }
        if solver.ok && solver.propagate().is_some() {
            solver.ok = false;
        }
        solver.num_original = solver.clauses.len();
        solver
    }

    fn add_original(&mut self, lits: Vec<u32>) {
        if !self.ok {
            return;
        }
        match lits.len() {
            0 => self.ok = false,
            1 => match self.value(lits[0]) {
                1 => {}
                0 => self.ok = false,
                _ => self.enqueue(lits[0], None),
            },
            _ => {
                let cref = self.clauses.len() as u32;
                self.watches[lits[0] as usize].push(cref);
                self.watches[lits[1] as usize].push(cref);
                self.clauses.push(lits);
            }
        }
    }

    /// 1 true, 0 false, 2 unassigned.
    #[inline]
    fn value(&self, lit: u32) -> u8 {
        let a = self.assigns[var(lit)];
        if a == UNDEF {
            UNDEF
        } else {
            a ^ (lit & 1) as u8
        }
    }

    #[inline]
    fn decision_level(&self) -> u32 {
        self.trail_lim.len() as u32
    }

    fn enqueue(&mut self, lit: u32, reason: Option<u32>) {
        let v = var(lit);
        self.assigns[v] = (lit & 1 == 0) as u8;
        self.level[v] = self.decision_level();
        self.reason[v] = reason;
        self.trail.push(lit);
    }

    fn propagate(&mut self) -> Option<u32> {
        while self.qhead < self.trail.len() {
            let p = self.trail[self.qhead];
            self.qhead += 1;
            let false_lit = p ^ 1;
            let watchers = std::mem::take(&mut self.watches[false_lit as usize]);
            let mut kept = Vec::with_capacity(watchers.len());
            let mut conflict = None;
            let mut iter = watchers.into_iter();
            while let Some(cref) = iter.next() {
                let c = &mut self.clauses[cref as usize];
                if c[0] == false_lit {
                    c.swap(0, 1);
                }
                let first = c[0];
                let first_value = {
                    let a = self.assigns[var(first)];
                    if a == UNDEF {
                        UNDEF
                    } else {
                        a ^ (first & 1) as u8
                    }
                };
                if first_value == 1 {
                    kept.push(cref);
                    continue;
                }
                let mut moved = false;
                for k in 2..c.len() {
                    let lit = c[k];
                    let a = self.assigns[var(lit)];
                    if a == UNDEF || a ^ (lit & 1) as u8 == 1 {
                        c.swap(1, k);
                        self.watches[c[1] as usize].push(cref);
                        moved = true;
                        break;
                    }
                }
                if moved {
                    continue;
                }
                kept.push(cref);
                if first_value == 0 {
                    conflict = Some(cref);
                    kept.extend(iter.by_ref());
                    break;
                }
                self.enqueue(first, Some(cref));
            }
            self.watches[false_lit as usize] = kept;
            if conflict.is_some() {
                self.qhead = self.trail.len();
                return conflict;
            }
        }
        None
    }

    fn analyze(&mut self, mut confl: u32) -> (Vec<u32>, u32) {
        let current = self.decision_level();
        let mut learnt: Vec<u32> = vec![0];
        let mut path = 0usize;
        let mut index = self.trail.len();
        let mut implied: Option<u32> = None;
        loop {
            let clause = &self.clauses[confl as usize];
            let skip = usize::from(implied.is_some());
            for &q in &clause[skip..] {
                let v = var(q);
                if !self.seen[v] && self.level[v] > 0 {
                    self.seen[v] = true;
                    if self.level[v] >= current {
                        path += 1;
                    } else {
                        learnt.push(q);
                    }
                }
            }
            loop {
                index -= 1;
                if self.seen[var(self.trail[index])] {
                    break;
                }
            }
            let p = self.trail[index];
            self.seen[var(p)] = false;
            path -= 1;
            implied = Some(p);
            if path == 0 {
                break;
            }
            confl = self.reason[var(p)].expect("implied literal has a reason");
        }
        learnt[0] = implied.unwrap() ^ 1;
        for &q in &learnt[1..] {
            self.seen[var(q)] = false;
        }
        let mut backtrack = 0;
        if learnt.len() > 1 {
            let mut max_i = 1;
            for i in 2..learnt.len() {
                if self.level[var(learnt[i])] > self.level[var(learnt[max_i])] {
                    max_i = i;
                }
            }
            learnt.swap(1, max_i);
            backtrack = self.level[var(learnt[1])];
        }
        (learnt, backtrack)
    }

    fn cancel_until(&mut self, level: u32) {
        if self.decision_level() <= level {
            return;
        }
        let lim = self.trail_lim[level as usize];
        for i in (lim..self.trail.len()).rev() {
            let v = var(self.trail[i]);
            self.assigns[v] = UNDEF;
            self.reason[v] = None;
            self.next_decision = self.next_decision.min(self.order_pos[v]);
        }
        self.trail.truncate(lim);
        self.trail_lim.truncate(level as usize);
        self.qhead = lim;
    }

    fn set_order(&mut self, order: &[u32], phase: &[bool]) {
        self.order.clear();
        self.order.extend_from_slice(order);
        for (pos, &v) in order.iter().enumerate() {
            self.order_pos[v as usize] = pos;
        }
        self.phase.clear();
        self.phase.extend_from_slice(phase);
        self.next_decision = 0;
    }

    fn reduce_learnts(&mut self) {
        if self.clauses.len() - self.num_original <= LEARNT_LIMIT {
            return;
        }
        for v in 0..self.num_vars {
            if self.reason[v].is_some_and(|r| r as usize >= self.num_original) {
                self.reason[v] = None;
            }
        }
        self.clauses.truncate(self.num_original);
        for w in &mut self.watches {
            let limit = self.num_original as u32;
            w.retain(|&c| c < limit);
        }
    }

    fn solve(
        &mut self,
        assumptions: &[u32],
        deadline: Instant,
        timeout: Duration,
    ) -> Result<Outcome> {
        if !self.ok {
            return Ok(Outcome::Unsat);
        }
        self.reduce_learnts();
        let result = self.search(assumptions, deadline, timeout);
        self.cancel_until(0);
        result
    }

    fn search(
        &mut self,
        assumptions: &[u32],
        deadline: Instant,
        timeout: Duration,
    ) -> Result<Outcome> {
        let mut restart_index: u32 = 1;
        let mut restart_budget = 100 * luby(restart_index);
        let mut since_restart: u64 = 0;
        let mut ticks: u64 = 0;
        loop {
            ticks += 1;
            if ticks.is_multiple_of(1024) && Instant::now() > deadline {
                return Err(Error::Indeterminate(timeout));
            }
            if let Some(confl) = self.propagate() {
                since_restart += 1;
                if self.decision_level() == 0 {
                    self.ok = false;
                    return Ok(Outcome::Unsat);
                }
                let (learnt, backtrack) = self.analyze(confl);
                self.cancel_until(backtrack);
                if learnt.len() == 1 {
                    self.enqueue(learnt[0], None);
                } else {
                    let cref = self.clauses.len() as u32;
                    self.watches[learnt[0] as usize].push(cref);
                    self.watches[learnt[1] as usize].push(cref);
                    let asserting = learnt[0];
                    self.clauses.push(learnt);
                    self.enqueue(asserting, Some(cref));
                }
                if since_restart >= restart_budget {
                    since_restart = 0;
                    restart_index += 1;
                    restart_budget = 100 * luby(restart_index);
                    self.cancel_until(0);
                }
                continue;
            }
            let level = self.decision_level() as usize;
            if level < assumptions.len() {
                let a = assumptions[level];
                match self.value(a) {
                    1 => self.trail_lim.push(self.trail.len()),
                    0 => return Ok(Outcome::Unsat),
                    _ => {
                        self.trail_lim.push(self.trail.len());
                        self.enqueue(a, None);
                    }
                }
                continue;
            }
            while self.next_decision < self.order.len()
                && self.assigns[self.order[self.next_decision] as usize] != UNDEF
            {
                self.next_decision += 1;
            }
            if self.next_decision == self.order.len() {
                let model = self.assigns.iter().map(|&a| a == 1).collect();
                return Ok(Outcome::Sat(model));
            }
            let v = self.order[self.next_decision];
            let lit = v << 1 | u32::from(!self.phase[v as usize]);
            self.trail_lim.push(self.trail.len());
            self.enqueue(lit, None);
        }
    }
}

fn luby(mut i: u32) -> u64 {
    // i is 1-based
    loop {
        let mut k = 1u32;
        while (1u64 << k) - 1 < u64::from(i) {
            k += 1;
        }
        if u64::from(i) == (1u64 << k) - 1 {
            return 1u64 << (k - 1);
        }
        i -= (1u32 << (k - 1)) - 1;
    }
}

/// A single-owner query context over one feature model. Learned clauses are
/// implied by the model and persist across validity queries of the same
/// context; completions start from the freshly loaded model so that their
/// result does not depend on earlier queries.
pub struct SatContext {
    solver: Solver,
    pristine: Solver,
    timeout: Duration,
    has_dependencies: bool,
}

impl SatContext {
    pub fn new(model: &FeatureModel) -> Self {
        Self::with_timeout(model, DEFAULT_TIMEOUT)
    }

    pub fn with_timeout(model: &FeatureModel, timeout: Duration) -> Self {
        let solver = Solver::new(model);
        SatContext {
            pristine: solver.clone(),
            solver,
            timeout,
            has_dependencies: !model.dependencies().is_empty(),
        }
    }

    pub fn num_features(&self) -> usize {
        self.solver.num_vars
    }

    pub fn is_satisfiable(&mut self) -> Result<bool> {
        self.valid_literals(&[])
    }

    pub fn valid(&mut self, config: &Configuration) -> Result<bool> {
        let literals: Vec<Literal> = config.literals().collect();
        self.valid_literals(&literals)
    }

    /// True iff the literals are consistent and the model stays satisfiable
    /// when they are added as unit assumptions.
    pub fn valid_literals(&mut self, literals: &[Literal]) -> Result<bool> {
        let assumptions = self.assumptions(literals)?;
        let mut sorted = assumptions.clone();
        sorted.sort_unstable();
        if sorted
            .windows(2)
            .any(|w| var(w[0]) == var(w[1]) && w[0] != w[1])
        {
            return Ok(false);
        }
        if !self.has_dependencies {
            return Ok(self.solver.ok);
        }
        let n = self.solver.num_vars as u32;
        let order: Vec<u32> = (0..n).collect();
        let phase = vec![false; n as usize];
        self.solver.set_order(&order, &phase);
        Ok(matches!(self.run(&assumptions)?, Outcome::Sat(_)))
    }

    /// A complete valid superset of `config`: the first model found under a
    /// seed-shuffled branching order with seeded phases.
    pub fn extend_to_complete(
        &mut self,
        config: &Configuration,
        seed: u64,
    ) -> Result<Configuration> {
        let literals: Vec<Literal> = config.literals().collect();
        let assumptions = self.assumptions(&literals)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.solver.num_vars;
        let mut order: Vec<u32> = (0..n as u32).collect();
        order.shuffle(&mut rng);
        let phase: Vec<bool> = (0..n).map(|_| rng.gen()).collect();
        let mut solver = self.pristine.clone();
        solver.set_order(&order, &phase);
        let deadline = Instant::now() + self.timeout;
        match solver.solve(&assumptions, deadline, self.timeout)? {
            Outcome::Sat(model) => Ok(Configuration::from_assignment(&model)),
            Outcome::Unsat => Err(Error::InvalidConfiguration),
        }
    }

    fn assumptions(&self, literals: &[Literal]) -> Result<Vec<u32>> {
        literals
            .iter()
            .map(|&l| {
                if l.feature().slot() >= self.solver.num_vars {
                    Err(Error::FeatureOutOfRange {
                        index: l.feature().index(),
                        count: self.solver.num_vars,
                    })
                } else {
                    Ok(to_solver(l))
                }
            })
            .collect()
    }

    fn run(&mut self, assumptions: &[u32]) -> Result<Outcome> {
        let deadline = Instant::now() + self.timeout;
        self.solver.solve(assumptions, deadline, self.timeout)
    }
}

/// One-shot validity query.
pub fn valid(config: &Configuration, model: &FeatureModel) -> Result<bool> {
    SatContext::new(model).valid(config)
}

/// One-shot completion; fails with [`Error::InvalidConfiguration`] when
/// `config` is not valid.
pub fn extend_to_complete(
    config: &Configuration,
    model: &FeatureModel,
    seed: u64,
) -> Result<Configuration> {
    SatContext::new(model).extend_to_complete(config, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::logic::{complete, Clause, FeatureModel};
    use proptest::prelude::*;

    fn lits(values: &[i32]) -> Vec<Literal> {
        values.iter().map(|&v| Literal::from_dimacs(v)).collect()
    }

    fn cfg(values: &[i32]) -> Configuration {
        Configuration::from_literals(lits(values)).unwrap()
    }

    fn busybox() -> FeatureModel {
        // P=1 TD=2 BB=3: ¬P ∨ TD, ¬TD ∨ BB
        FeatureModel::new(
            ["P", "TD", "BB"],
            [Clause::new(lits(&[-1, 2])), Clause::new(lits(&[-2, 3]))],
        )
        .unwrap()
    }

    #[test]
    fn luby_sequence() {
        let seq: Vec<u64> = (1..=15).map(luby).collect();
        assert_eq!(seq, vec![1, 1, 2, 1, 1, 2, 4, 1, 1, 2, 1, 1, 2, 4, 8]);
    }

    #[test]
    fn validity_examples() {
        let m = busybox();
        assert!(!valid(&cfg(&[1, -3]), &m).unwrap());
        assert!(valid(&Configuration::new(), &m).unwrap());
        assert!(valid(&cfg(&[1]), &m).unwrap());
        let free = FeatureModel::unconstrained(["T", "G", "P", "D", "B"]).unwrap();
        assert!(valid(&cfg(&[2, 1, -5]), &free).unwrap());
    }

    #[test]
    fn inconsistent_literals_are_invalid() {
        let m = busybox();
        let mut ctx = SatContext::new(&m);
        assert!(!ctx.valid_literals(&lits(&[1, -1])).unwrap());
        let free = FeatureModel::unconstrained(["A"]).unwrap();
        assert!(!SatContext::new(&free)
            .valid_literals(&lits(&[1, -1]))
            .unwrap());
    }

    #[test]
    fn out_of_range_literal() {
        let m = busybox();
        assert!(matches!(
            SatContext::new(&m).valid_literals(&lits(&[4])),
            Err(Error::FeatureOutOfRange { index: 4, .. })
        ));
    }

    #[test]
    fn unsatisfiable_models() {
        let m =
            FeatureModel::new(["A"], [Clause::new(lits(&[1])), Clause::new(lits(&[-1]))]).unwrap();
        assert!(!SatContext::new(&m).is_satisfiable().unwrap());
        let empty = FeatureModel::new(["A"], [Clause::default()]).unwrap();
        assert!(!SatContext::new(&empty).is_satisfiable().unwrap());
    }

    #[test]
    fn completion_examples() {
        let free = FeatureModel::unconstrained(["T", "G", "P", "D", "B"]).unwrap();
        let c = extend_to_complete(&cfg(&[2, 1]), &free, 7).unwrap();
        assert!(complete(&c, &free));
        assert!(c.contains(Literal::from_dimacs(2)) && c.contains(Literal::from_dimacs(1)));

        let full = cfg(&[1, -2, 3, -4, 5]);
        assert_eq!(extend_to_complete(&full, &free, 99).unwrap(), full);

        let m = busybox();
        let c = extend_to_complete(&cfg(&[1]), &m, 3).unwrap();
        assert!(c.contains(Literal::from_dimacs(2)) && c.contains(Literal::from_dimacs(3)));

        assert!(matches!(
            extend_to_complete(&cfg(&[1, -3]), &m, 0),
            Err(Error::InvalidConfiguration)
        ));
    }

    #[test]
    fn completion_is_deterministic_per_seed() {
        let free = FeatureModel::unconstrained((0..12).map(|i| format!("F{i}"))).unwrap();
        let a = extend_to_complete(&Configuration::new(), &free, 42).unwrap();
        let b = extend_to_complete(&Configuration::new(), &free, 42).unwrap();
        assert_eq!(a, b);
        let distinct: std::collections::HashSet<_> = (0..20)
            .map(|s| extend_to_complete(&Configuration::new(), &free, s).unwrap())
            .collect();
        assert!(distinct.len() > 1);
    }

    #[test]
    fn timeout_is_reported() {
        // pigeonhole 9 -> 8 is hard enough for a zero timeout to trip
        let holes = 8;
        let pigeons = holes + 1;
        let v = |p: usize, h: usize| (p * holes + h + 1) as i32;
        let mut clauses = Vec::new();
        for p in 0..pigeons {
            clauses.push(Clause::new(lits(
                &(0..holes).map(|h| v(p, h)).collect::<Vec<_>>(),
            )));
        }
        for h in 0..holes {
            for p in 0..pigeons {
                for q in p + 1..pigeons {
                    clauses.push(Clause::new(lits(&[-v(p, h), -v(q, h)])));
                }
            }
        }
        let names: Vec<String> = (0..pigeons * holes).map(|i| format!("x{i}")).collect();
        let m = FeatureModel::new(names, clauses).unwrap();
        let mut ctx = SatContext::with_timeout(&m, Duration::ZERO);
        assert!(matches!(ctx.is_satisfiable(), Err(Error::Indeterminate(_))));
    }

    fn brute_force_valid(model: &FeatureModel, config: &[Literal]) -> bool {
        let n = model.len();
        (0u32..1 << n).any(|bits| {
            let a: Vec<bool> = (0..n).map(|i| bits >> i & 1 == 1).collect();
            model.satisfied_by(&a)
                && config
                    .iter()
                    .all(|l| a[l.feature().slot()] == l.is_positive())
        })
    }

    fn arb_instance() -> impl Strategy<Value = (FeatureModel, Vec<i32>)> {
        (1usize..=10).prop_flat_map(|n| {
            let lit = (1..=n as i32, any::<bool>()).prop_map(|(v, s)| if s { v } else { -v });
            let clause = prop::collection::vec(lit.clone(), 1..=3);
            (
                Just(n),
                prop::collection::vec(clause, 0..=3 * n),
                prop::collection::vec(lit, 0..=4),
            )
                .prop_map(|(n, clauses, config)| {
                    let names: Vec<String> = (0..n).map(|i| format!("F{i}")).collect();
                    let model =
                        FeatureModel::new(names, clauses.iter().map(|c| Clause::new(lits(c))))
                            .unwrap();
                    (model, config)
                })
        })
    }

    proptest! {
        #[test]
        fn valid_agrees_with_enumeration((model, config) in arb_instance()) {
            let literals = lits(&config);
            let mut ctx = SatContext::new(&model);
            prop_assert_eq!(ctx.valid_literals(&literals).unwrap(), brute_force_valid(&model, &literals));
        }

        #[test]
        fn completion_extends_validly((model, config) in arb_instance(), seed in any::<u64>()) {
            let literals = lits(&config);
            let mut ctx = SatContext::new(&model);
            if ctx.valid_literals(&literals).unwrap() {
                let partial = Configuration::from_literals(literals.iter().copied()).unwrap();
                let full = ctx.extend_to_complete(&partial, seed).unwrap();
                prop_assert!(complete(&full, &model));
                prop_assert!(literals.iter().all(|&l| full.contains(l)));
                prop_assert!(model.satisfied_by(&full.assignment(&model).unwrap()));
                let again = SatContext::new(&model).extend_to_complete(&partial, seed).unwrap();
                prop_assert_eq!(full, again);
            }
        }

        #[test]
        fn validity_is_monotone((model, config) in arb_instance()) {
            let literals = lits(&config);
            let mut ctx = SatContext::new(&model);
            if ctx.valid_literals(&literals).unwrap() {
                for k in 0..literals.len() {
                    prop_assert!(ctx.valid_literals(&literals[..k]).unwrap());
                }
            }
        }
    }
}
