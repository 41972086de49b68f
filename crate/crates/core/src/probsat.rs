//! probSAT, break-only polynomial variant.
//!
//! Starting from a uniformly random assignment, each step picks an unsatisfied
//! clause uniformly at random and flips one of its variables `v` with
//! probability proportional to `make(v)^cm / (1 + break(v))^cb`. Break values
//! are maintained incrementally from per-clause true-literal counts and the
//! xor of the true literals' variables ("critical variable" trick).

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cnf::{Assignment, Formula, Lit};
use crate::rng;

pub const DEFAULT_CB: f64 = 2.3;
pub const DEFAULT_CM: f64 = 0.0;
/// Consecutive non-improving flips that mark the first local minimum of a probe.
pub const STALL_WINDOW: u64 = 50;

#[derive(Debug, Error, PartialEq)]
pub enum SolverError {
    #[error("break exponent must be positive, got {0}")]
    InvalidBreakExponent(f64),
    #[error("make exponent must be non-negative, got {0}")]
    InvalidMakeExponent(f64),
    #[error("max_flips must be at least 1")]
    ZeroFlipBudget,
    #[error("no candidate literals")]
    EmptyCandidates,
    #[error("break and make lists differ in length ({breaks} vs {makes})")]
    LengthMismatch { breaks: usize, makes: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub cb: f64,
    pub cm: f64,
    pub max_flips: u64,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            cb: DEFAULT_CB,
            cm: DEFAULT_CM,
            max_flips: u64::MAX,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn with_seed(self, seed: u64) -> Self {
        SolverConfig { seed, ..self }
    }

    pub fn with_max_flips(self, max_flips: u64) -> Self {
        SolverConfig { max_flips, ..self }
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.cb > 0.0) {
            return Err(SolverError::InvalidBreakExponent(self.cb));
        }
        if !(self.cm >= 0.0) {
            return Err(SolverError::InvalidMakeExponent(self.cm));
        }
        if self.max_flips == 0 {
            return Err(SolverError::ZeroFlipBudget);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub solved: bool,
    pub flips: u64,
    /// Present iff `solved`.
    pub assignment: Option<Assignment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeTrace {
    /// `(flip index, best unsatisfied count so far)`, one entry per improvement,
    /// starting with the initial assignment at flip 0.
    pub best_unsat_trajectory: Vec<(u64, usize)>,
    pub first_local_min_step: u64,
    pub best_solution_unsat: usize,
    pub initial_unsat: usize,
    /// Flip index at which `best_solution_unsat` was first reached.
    pub best_step: u64,
    pub flips: u64,
}

impl ProbeTrace {
    /// Mean unsatisfied-count reduction per flip on the way to the best assignment.
    pub fn best_avg_improvement(&self) -> f64 {
        (self.initial_unsat - self.best_solution_unsat) as f64 / self.best_step.max(1) as f64
    }
}

fn score(make: u32, brk: u32, cfg: &SolverConfig) -> f64 {
    let m = if cfg.cm == 0.0 {
        1.0
    } else {
        (make as f64).powf(cfg.cm)
    };
    m / (1.0 + brk as f64).powf(cfg.cb)
}

/// Selection probabilities over the literals of one clause. With `cm == 0`
/// the make values are ignored (0^0 = 1) and may be passed empty.
pub fn flip_probabilities(
    breaks: &[u32],
    makes: &[u32],
    cfg: &SolverConfig,
) -> Result<Vec<f64>, SolverError> {
    if breaks.is_empty() {
        return Err(SolverError::EmptyCandidates);
    }
    let ignore_makes = cfg.cm == 0.0 && makes.is_empty();
    if !ignore_makes && makes.len() != breaks.len() {
        return Err(SolverError::LengthMismatch {
            breaks: breaks.len(),
            makes: makes.len(),
        });
    }
    let f: Vec<f64> = breaks
        .iter()
        .enumerate()
        .map(|(i, &b)| score(if ignore_makes { 0 } else { makes[i] }, b, cfg))
        .collect();
    let total: f64 = f.iter().sum();
    if total > 0.0 {
        Ok(f.into_iter().map(|x| x / total).collect())
    } else {
        // every make is 0 with cm > 0
        Ok(vec![1.0 / breaks.len() as f64; breaks.len()])
    }
}

/// Reusable solver state for one formula. Construct once, run many seeds.
pub struct ProbSat<'f> {
    f: &'f Formula,
    occ: Vec<Vec<u32>>,
    value: Vec<bool>,
    num_true: Vec<u32>,
    crit: Vec<u32>,
    breaks: Vec<u32>,
    unsat: Vec<u32>,
    unsat_pos: Vec<u32>,
    poly: Vec<f64>,
    cfg_cb: f64,
    weights: Vec<f64>,
}

const NOT_UNSAT: u32 = u32::MAX;

impl<'f> ProbSat<'f> {
    pub fn new(f: &'f Formula) -> Self {
        let n = f.num_vars() as usize;
        let m = f.num_clauses();
        let occ = f.occurrences();
        let max_occ = occ.iter().map(|o| o.len()).max().unwrap_or(0);
        ProbSat {
            f,
            occ,
            value: vec![false; n + 1],
            num_true: vec![0; m],
            crit: vec![0; m],
            breaks: vec![0; n + 1],
            unsat: Vec::with_capacity(m),
            unsat_pos: vec![NOT_UNSAT; m],
            poly: Vec::with_capacity(max_occ + 1),
            cfg_cb: f64::NAN,
            weights: Vec::new(),
        }
    }

    fn ensure_poly(&mut self, cb: f64) {
        let len = self.occ.iter().map(|o| o.len()).max().unwrap_or(0) + 1;
        if self.cfg_cb.to_bits() != cb.to_bits() || self.poly.len() != len {
            self.poly = (0..len).map(|b| (1.0 + b as f64).powf(-cb)).collect();
            self.cfg_cb = cb;
        }
    }

    fn push_unsat(&mut self, c: usize) {
        self.unsat_pos[c] = self.unsat.len() as u32;
        self.unsat.push(c as u32);
    }

    fn remove_unsat(&mut self, c: usize) {
        let pos = self.unsat_pos[c] as usize;
        let last = self.unsat.pop().unwrap();
        if pos < self.unsat.len() {
            self.unsat[pos] = last;
            self.unsat_pos[last as usize] = pos as u32;
        }
        self.unsat_pos[c] = NOT_UNSAT;
    }

    fn lit_true(&self, l: Lit) -> bool {
        l.eval(self.value[l.var() as usize])
    }

    fn init<R: Rng>(&mut self, rng: &mut R) {
        for v in self.value.iter_mut().skip(1) {
            *v = rng.random_bool(0.5);
        }
        self.breaks.iter_mut().for_each(|b| *b = 0);
        self.unsat.clear();
        self.unsat_pos.iter_mut().for_each(|p| *p = NOT_UNSAT);
        for ci in 0..self.f.num_clauses() {
            let mut nt = 0;
            let mut x = 0u32;
            for &l in self.f.clauses()[ci].lits() {
                if self.lit_true(l) {
                    nt += 1;
                    x ^= l.var();
                }
            }
            self.num_true[ci] = nt;
            self.crit[ci] = x;
            match nt {
                0 => self.push_unsat(ci),
                1 => self.breaks[x as usize] += 1,
                _ => {}
            }
        }
    }

    fn flip(&mut self, var: u32) {
        let v = var as usize;
        self.value[v] = !self.value[v];
        let became_true = Lit::new(var, !self.value[v]);
        let became_false = !became_true;
        for i in 0..self.occ[became_true.code()].len() {
            let ci = self.occ[became_true.code()][i] as usize;
            self.num_true[ci] += 1;
            match self.num_true[ci] {
                1 => {
                    self.remove_unsat(ci);
                    self.breaks[v] += 1;
                }
                2 => self.breaks[self.crit[ci] as usize] -= 1,
                _ => {}
            }
            self.crit[ci] ^= var;
        }
        for i in 0..self.occ[became_false.code()].len() {
            let ci = self.occ[became_false.code()][i] as usize;
            self.num_true[ci] -= 1;
            self.crit[ci] ^= var;
            match self.num_true[ci] {
                0 => {
                    self.push_unsat(ci);
                    self.breaks[v] -= 1;
                }
                1 => self.breaks[self.crit[ci] as usize] += 1,
                _ => {}
            }
        }
    }

    fn make_value(&self, var: u32) -> u32 {
        let v = var as usize;
        // clauses that would become satisfied: unsatisfied ones containing the literal flipped true
        let l = Lit::new(var, self.value[v]);
        self.occ[l.code()]
            .iter()
            .filter(|&&ci| self.num_true[ci as usize] == 0)
            .count() as u32
    }

    fn pick<R: Rng>(&mut self, rng: &mut R, cfg: &SolverConfig) -> u32 {
        let ci = self.unsat[rng.random_range(0..self.unsat.len())] as usize;
        let lits = self.f.clauses()[ci].lits();
        self.weights.clear();
        let mut total = 0.0;
        for &l in lits {
            let b = self.breaks[l.var() as usize];
            let w = if cfg.cm == 0.0 {
                self.poly[b as usize]
            } else {
                score(self.make_value(l.var()), b, cfg)
            };
            total += w;
            self.weights.push(w);
        }
        if !(total > 0.0) {
            return lits[rng.random_range(0..lits.len())].var();
        }
        let mut r = rng.random::<f64>() * total;
        for (i, &w) in self.weights.iter().enumerate() {
            if r < w {
                return lits[i].var();
            }
            r -= w;
        }
        lits[lits.len() - 1].var()
    }

    fn assignment(&self) -> Assignment {
        Assignment(self.value[1..].to_vec())
    }

    /// One independent try. `observe` sees `(flip index, unsatisfied count)`
    /// once for the initial assignment (index 0) and after every flip.
    pub fn run_observed<F: FnMut(u64, usize)>(
        &mut self,
        cfg: &SolverConfig,
        mut observe: F,
    ) -> RunOutcome {
        self.ensure_poly(cfg.cb);
        let mut rng = rng::stream(cfg.seed, 0);
        self.init(&mut rng);
        observe(0, self.unsat.len());
        let mut flips = 0u64;
        while !self.unsat.is_empty() && flips < cfg.max_flips {
            let var = self.pick(&mut rng, cfg);
            self.flip(var);
            flips += 1;
            observe(flips, self.unsat.len());
        }
        let solved = self.unsat.is_empty();
        RunOutcome {
            solved,
            flips,
            assignment: solved.then(|| self.assignment()),
        }
    }

    pub fn run(&mut self, cfg: &SolverConfig) -> RunOutcome {
        self.run_observed(cfg, |_, _| {})
    }

    #[cfg(test)]
    fn check_invariants(&self) {
        for (ci, c) in self.f.clauses().iter().enumerate() {
            let nt = c.lits().iter().filter(|&&l| self.lit_true(l)).count() as u32;
            assert_eq!(nt, self.num_true[ci]);
            assert_eq!(nt == 0, self.unsat_pos[ci] != NOT_UNSAT);
        }
        for v in 1..=self.f.num_vars() {
            let brk = self.occ[Lit::new(v, !self.value[v as usize]).code()]
                .iter()
                .filter(|&&ci| self.num_true[ci as usize] == 1)
                .count() as u32;
            assert_eq!(brk, self.breaks[v as usize], "break of {v}");
        }
    }
}

/// Runs probSAT once from the assignment drawn from `cfg.seed`.
pub fn solve_once(f: &Formula, cfg: &SolverConfig) -> RunOutcome {
    ProbSat::new(f).run(cfg)
}

/// Runs `probe_flips` flips (or until solved) and records the best-so-far
/// trajectory and the first local minimum, defined as the last improvement
/// before the first stretch of [`STALL_WINDOW`] non-improving flips.
pub fn probe_run(f: &Formula, cfg: &SolverConfig, probe_flips: u64) -> ProbeTrace {
    let cfg = cfg.with_max_flips(probe_flips.max(1));
    let mut trajectory: Vec<(u64, usize)> = Vec::new();
    let mut best = usize::MAX;
    let mut best_step = 0;
    let mut first_local_min: Option<u64> = None;
    let mut initial = 0;
    let out = ProbSat::new(f).run_observed(&cfg, |step, unsat| {
        if step == 0 {
            initial = unsat;
        }
        if unsat < best {
            best = unsat;
            best_step = step;
            trajectory.push((step, unsat));
        } else if first_local_min.is_none() && step - best_step >= STALL_WINDOW {
            first_local_min = Some(best_step);
        }
    });
    ProbeTrace {
        best_unsat_trajectory: trajectory,
        first_local_min_step: first_local_min.unwrap_or(best_step),
        best_solution_unsat: best,
        initial_unsat: initial,
        best_step,
        flips: out.flips,
    }
}
